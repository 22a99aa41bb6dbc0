"""Offline configuration profiling and online content-difficulty tracking.

The profile table aggregates the first 20 seconds of a video's processing
records into per-(config, gop_length) reference accuracy, delays, and
sizes. A pruning pass picks the single (frame rate, resolution) pair to
stream with, so the online optimizer only chooses bitrates. The gamma
scalar corrects the profiled accuracy for content drift using the
uncertainty of a compact detector's output, and the detection-matching
oracle (IoU + greedy F1) recomputes accuracy from raw detection files.

The profile table is immutable after build; gamma state has a single
writer (the controller decision loop); the detection oracle is pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

from .errors import TraceValidationError
from .traces import Detection, EncodingConfig, VideoTraceSet

PROFILE_SPAN_S = 20
GAMMA_MIN = 1.0 / 3.0
GAMMA_MAX = 3.0
GAMMA_UPDATE_PERIOD_S = 30.0
GAMMA_PROBE_LENGTH_S = 5.0
UNCERTAINTY_FLOOR = 0.01
UNCERTAIN_CONFIDENCE = 0.5


@dataclass(frozen=True)
class ProfileEntry:
    """Aggregates of one (config, gop_length) over the profiled span."""

    accuracy: float
    mean_encode_delay: float  # seconds per frame
    mean_decode_delay: float
    mean_inference_delay: float
    mean_frame_bits: float
    uncertainty: float


@dataclass(frozen=True)
class ProfileTable:
    """Reference performance of every candidate, from the first 20 s."""

    video_id: str
    entries: Dict[Tuple[EncodingConfig, int], ProfileEntry]
    profiled_uncertainty: float  # compact-model uncertainty of the span
    span_s: int = PROFILE_SPAN_S

    def entry(self, config: EncodingConfig, gop_length: int) -> ProfileEntry:
        return self.entries[(config, gop_length)]

    def configs(self) -> List[EncodingConfig]:
        return sorted(
            {cfg for (cfg, _l) in self.entries},
            key=lambda c: (c.bitrate_mbps, c.frame_rate, c.resolution),
        )

    def gop_lengths(self) -> List[int]:
        return sorted({length for (_c, length) in self.entries})

    def mean_accuracy(self, config: EncodingConfig) -> float:
        values = [e.accuracy for (c, _l), e in self.entries.items() if c == config]
        return sum(values) / len(values)

    def mean_frame_bits(self, config: EncodingConfig) -> float:
        values = [e.mean_frame_bits for (c, _l), e in self.entries.items() if c == config]
        return sum(values) / len(values)

    def to_json(self) -> dict:
        return {
            "video_id": self.video_id,
            "span_s": self.span_s,
            "profiled_uncertainty": self.profiled_uncertainty,
            "entries": [
                {
                    "bitrate_mbps": cfg.bitrate_mbps,
                    "frame_rate": cfg.frame_rate,
                    "resolution": list(cfg.resolution),
                    "gop_length": length,
                    "accuracy": e.accuracy,
                    "mean_encode_delay": e.mean_encode_delay,
                    "mean_decode_delay": e.mean_decode_delay,
                    "mean_inference_delay": e.mean_inference_delay,
                    "mean_frame_bits": e.mean_frame_bits,
                    "uncertainty": e.uncertainty,
                }
                for (cfg, length), e in sorted(
                    self.entries.items(),
                    key=lambda kv: (
                        kv[0][0].bitrate_mbps,
                        kv[0][0].frame_rate,
                        kv[0][0].resolution,
                        kv[0][1],
                    ),
                )
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ProfileTable":
        entries = {}
        for row in obj["entries"]:
            cfg = EncodingConfig(
                bitrate_mbps=float(row["bitrate_mbps"]),
                frame_rate=int(row["frame_rate"]),
                resolution=tuple(row["resolution"]),
            )
            entries[(cfg, int(row["gop_length"]))] = ProfileEntry(
                accuracy=float(row["accuracy"]),
                mean_encode_delay=float(row["mean_encode_delay"]),
                mean_decode_delay=float(row["mean_decode_delay"]),
                mean_inference_delay=float(row["mean_inference_delay"]),
                mean_frame_bits=float(row["mean_frame_bits"]),
                uncertainty=float(row["uncertainty"]),
            )
        return cls(
            video_id=obj["video_id"],
            entries=entries,
            profiled_uncertainty=float(obj["profiled_uncertainty"]),
            span_s=int(obj.get("span_s", PROFILE_SPAN_S)),
        )


def build_profile(trace_set: VideoTraceSet, span_s: int = PROFILE_SPAN_S) -> ProfileTable:
    """Aggregate every (config, gop_length) over GOPs starting before 20 s."""
    entries: Dict[Tuple[EncodingConfig, int], ProfileEntry] = {}
    missing: List[str] = []
    for config in trace_set.configs():
        for length in trace_set.gop_lengths():
            records = [
                rec
                for rec in trace_set.records_for(config, length)
                if rec.gop_start < span_s
            ]
            covered = sum(rec.gop_length for rec in records)
            if not records or covered < min(span_s, trace_set.duration_s):
                missing.append(f"{config.key} gop_length={length}")
                continue
            frames = sum(rec.frame_count for rec in records)
            entries[(config, length)] = ProfileEntry(
                accuracy=sum(rec.accuracy for rec in records) / len(records),
                mean_encode_delay=sum(sum(rec.encode_delays) for rec in records) / frames,
                mean_decode_delay=sum(sum(rec.decode_delays) for rec in records) / frames,
                mean_inference_delay=sum(sum(rec.inference_delays) for rec in records)
                / frames,
                mean_frame_bits=sum(rec.total_bits for rec in records) / frames,
                uncertainty=sum(rec.mean_confidence_uncertainty for rec in records)
                / len(records),
            )
    if missing:
        raise TraceValidationError(
            f"video {trace_set.video_id!r}: profiled span incomplete for: "
            + ", ".join(missing)
        )
    if trace_set.compact_detections is not None:
        u_p = compute_uncertainty(
            trace_set.compact_detections.in_content_window(0.0, float(span_s))
        )
    else:
        u_p = sum(e.uncertainty for e in entries.values()) / len(entries)
    return ProfileTable(
        video_id=trace_set.video_id,
        entries=entries,
        profiled_uncertainty=u_p,
        span_s=span_s,
    )


def prune_configs(
    table: ProfileTable,
    bitrate_candidates: Sequence[float],
) -> Tuple[int, Tuple[int, int]]:
    """Pick the (frame rate, resolution) pair to stream with.

    For each candidate bitrate, pairs are ranked by profiled accuracy
    (averaged over GOP lengths); the pair appearing most often in the
    top 3 wins. Ties go to the higher overall mean accuracy, then to the
    lower mean frame size. The result does not depend on the order the
    bitrates are iterated.
    """
    configs = table.configs()
    pairs = sorted({(c.frame_rate, tuple(c.resolution)) for c in configs})
    counts = {pair: 0 for pair in pairs}
    for bitrate in bitrate_candidates:
        ranked = sorted(
            (c for c in configs if c.bitrate_mbps == bitrate),
            key=lambda c: (-table.mean_accuracy(c), c.frame_rate, c.resolution),
        )
        for c in ranked[:3]:
            counts[(c.frame_rate, tuple(c.resolution))] += 1

    def overall(pair):
        frs, res = pair
        members = [c for c in configs if c.frame_rate == frs and tuple(c.resolution) == res]
        acc = sum(table.mean_accuracy(c) for c in members) / len(members)
        bits = sum(table.mean_frame_bits(c) for c in members) / len(members)
        return acc, bits

    best = None
    best_key = None
    for pair in pairs:
        acc, bits = overall(pair)
        key = (counts[pair], acc, -bits)
        if best_key is None or key > best_key:
            best_key = key
            best = pair
    assert best is not None
    return best


@dataclass
class GammaState:
    """Relative content analysis difficulty, updated by periodic probes."""

    gamma: float = 1.0
    last_update_time: float = 0.0
    update_period_s: float = GAMMA_UPDATE_PERIOD_S
    probe_length_s: float = GAMMA_PROBE_LENGTH_S
    gamma_min: float = GAMMA_MIN
    gamma_max: float = GAMMA_MAX

    def due(self, now: float) -> bool:
        return now - self.last_update_time >= self.update_period_s


def compute_uncertainty(detections: Iterable[Detection]) -> float:
    """Fraction of detections below the confidence threshold.

    An empty probe window carries no evidence of difficulty and scores 0.
    """
    total = 0
    uncertain = 0
    for det in detections:
        total += 1
        if det.confidence < UNCERTAIN_CONFIDENCE:
            uncertain += 1
    return uncertain / total if total else 0.0


def update_gamma(state: GammaState, new_uncertainty: float, profiled_uncertainty: float) -> float:
    """Set gamma to the clamped uncertainty ratio u_new / u_profiled."""
    ratio = new_uncertainty / max(profiled_uncertainty, UNCERTAINTY_FLOOR)
    state.gamma = min(state.gamma_max, max(state.gamma_min, ratio))
    return state.gamma


def estimate_accuracy(gamma: float, profiled_accuracy: float, clamp: bool = True) -> float:
    """Scale profiled accuracy by content difficulty.

    The optimizer ranks configurations on the unclamped product (gamma
    rescales accuracy gaps without reordering); the clamped value is for
    reporting.
    """
    value = gamma * profiled_accuracy
    return min(1.0, value) if clamp else value


def iou(box_a: Sequence[float], box_b: Sequence[float]) -> float:
    """Intersection over union of two (x1, y1, x2, y2) boxes."""
    ax1, ay1, ax2, ay2 = box_a
    bx1, by1, bx2, by2 = box_b
    ix1 = max(ax1, bx1)
    iy1 = max(ay1, by1)
    ix2 = min(ax2, bx2)
    iy2 = min(ay2, by2)
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    if inter <= 0.0:
        return 0.0
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


IOU_MATCH_THRESHOLD = 0.5


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        if self.tp == 0 and self.fp == 0 and self.fn == 0:
            return 1.0
        if self.tp == 0:
            return 0.0
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r)


def match_frame(
    predicted: Sequence[Detection], truth: Sequence[Detection]
) -> MatchCounts:
    """Greedy confidence-ordered matching of one frame.

    Predictions are visited in descending confidence; each may claim the
    unmatched ground-truth box of the same category with the highest IoU,
    provided that IoU is strictly greater than 0.5.
    """
    order = sorted(range(len(predicted)), key=lambda i: -predicted[i].confidence)
    matched = [False] * len(truth)
    tp = 0
    for i in order:
        pred = predicted[i]
        best_j = -1
        best_iou = 0.0
        for j, gt in enumerate(truth):
            if matched[j] or gt.category != pred.category:
                continue
            value = iou(pred.box, gt.box)
            if value > best_iou:
                best_iou = value
                best_j = j
        if best_j >= 0 and best_iou > IOU_MATCH_THRESHOLD:
            matched[best_j] = True
            tp += 1
    fp = len(predicted) - tp
    fn = len(truth) - tp
    return MatchCounts(tp=tp, fp=fp, fn=fn)


def compute_f1(
    predicted_frames: Sequence[Sequence[Detection]],
    truth_frames: Sequence[Sequence[Detection]],
) -> float:
    """F1 between predicted and ground-truth detections over a span.

    TP/FP/FN are aggregated across frames before computing the score.
    """
    if len(predicted_frames) != len(truth_frames):
        raise ValueError(
            f"{len(predicted_frames)} predicted frames vs "
            f"{len(truth_frames)} truth frames"
        )
    tp = fp = fn = 0
    for pred, gt in zip(predicted_frames, truth_frames):
        counts = match_frame(pred, gt)
        tp += counts.tp
        fp += counts.fp
        fn += counts.fn
    return MatchCounts(tp=tp, fp=fp, fn=fn).f1


def save_profile(table: ProfileTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table.to_json(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_profile(path) -> ProfileTable:
    with open(path, "r", encoding="utf-8") as fh:
        return ProfileTable.from_json(json.load(fh))
