"""Network traces and video processing traces.

Everything downstream (predictors, profiler, simulator, controller) is
driven by two kinds of recorded or synthetic data:

* 1 Hz uplink observations (throughput plus TCP connection state), stored
  as CSV with a fixed header;
* per-GOP video processing records (compressed frame sizes, encode /
  decode / inference delays, analytics accuracy), stored as JSON lines,
  one file per (encoding config, GOP length).

Loaded traces are immutable after construction and safe to share across
threads; loading and generation are pure functions of their inputs (and
seed), so suites can be built in parallel.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import AlignmentError, TraceFormatError, TraceValidationError

BITRATE_CANDIDATES_MBPS = (1.5, 3.0, 4.5, 6.0, 7.5, 9.0)
FRAME_RATE_CANDIDATES = (1, 3, 5, 15)
RESOLUTION_CANDIDATES = ((1920, 1080), (1280, 720), (640, 320))
GOP_LENGTH_CANDIDATES = (1, 2, 3, 4, 5)

NATIVE_FRAME_RATE = 15
DEFAULT_DELTA_MBPS = 2.5

NETWORK_CSV_HEADER = (
    "timestamp",
    "wall_clock",
    "throughput_mbps",
    "retransmits",
    "cwnd_bytes",
    "srtt_ms",
    "rtt_var_ms",
)

_EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


def annotate_shifts(throughputs: Sequence[float], delta: float) -> List[int]:
    """Mark the steps where throughput jumps by more than ``delta``.

    ``out[t] = 1`` iff ``|b_t - b_{t-1}| > delta`` (strict, absolute
    difference). The first step has no predecessor and is always 0.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if not throughputs:
        return []
    shifts = [0]
    for prev, cur in zip(throughputs, throughputs[1:]):
        shifts.append(1 if abs(cur - prev) > delta else 0)
    return shifts


@dataclass(frozen=True)
class NetworkSample:
    """One second of uplink observation."""

    timestamp: int
    wall_clock: datetime
    throughput: float  # Mbps
    retransmits: int
    cwnd: int  # bytes
    srtt: float  # ms
    rtt_var: float  # ms
    shift: int = 0

    def __post_init__(self):
        if self.throughput < 0:
            raise TraceValidationError(
                f"throughput must be non-negative, got {self.throughput}"
            )
        if self.shift not in (0, 1):
            raise TraceValidationError(f"shift must be 0 or 1, got {self.shift}")


@dataclass(frozen=True)
class NetworkTrace:
    """An ordered 1 Hz uplink trace with its shift-annotation threshold."""

    trace_id: str
    location_tag: str
    samples: Tuple[NetworkSample, ...]
    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise TraceValidationError(f"delta must be positive, got {self.delta}")
        for prev, cur in zip(self.samples, self.samples[1:]):
            if cur.timestamp != prev.timestamp + 1:
                raise TraceValidationError(
                    f"timestamps must increase by 1, got {prev.timestamp} "
                    f"then {cur.timestamp} in trace {self.trace_id!r}"
                )
        if self.samples and self.samples[0].shift != 0:
            raise TraceValidationError("first sample must have shift 0")

    @property
    def duration_s(self) -> int:
        return len(self.samples)

    def throughputs(self) -> List[float]:
        return [s.throughput for s in self.samples]

    def shifts(self) -> List[int]:
        return [s.shift for s in self.samples]

    def require_length(self, n: int) -> None:
        if len(self.samples) < n:
            raise TraceValidationError(
                f"trace {self.trace_id!r} has {len(self.samples)} samples, "
                f"needs at least {n}"
            )


def _with_shifts(samples: List[NetworkSample], delta: float) -> Tuple[NetworkSample, ...]:
    shifts = annotate_shifts([s.throughput for s in samples], delta)
    return tuple(replace(s, shift=sh) for s, sh in zip(samples, shifts))


def make_network_trace(
    trace_id: str,
    throughputs: Sequence[float],
    delta: float = DEFAULT_DELTA_MBPS,
    location_tag: str = "",
    start_wall_clock: datetime = _EPOCH,
    retransmits: Optional[Sequence[int]] = None,
    cwnd: Optional[Sequence[int]] = None,
    srtt: Optional[Sequence[float]] = None,
    rtt_var: Optional[Sequence[float]] = None,
) -> NetworkTrace:
    """Build a trace from raw series, annotating shifts from ``delta``."""
    n = len(throughputs)
    samples = [
        NetworkSample(
            timestamp=t,
            wall_clock=start_wall_clock + timedelta(seconds=t),
            throughput=float(throughputs[t]),
            retransmits=int(retransmits[t]) if retransmits is not None else 0,
            cwnd=int(cwnd[t]) if cwnd is not None else 0,
            srtt=float(srtt[t]) if srtt is not None else 0.0,
            rtt_var=float(rtt_var[t]) if rtt_var is not None else 0.0,
        )
        for t in range(n)
    ]
    return NetworkTrace(trace_id, location_tag, _with_shifts(samples, delta), delta)


def load_network_trace(path, delta: float, location_tag: str = "") -> NetworkTrace:
    """Load a CSV uplink trace and (re)annotate its shift column.

    The shift column, if present in the file, is ignored: shifts are
    always recomputed from ``delta`` so a trace carries a consistent
    annotation. TCP columns are treated as per-interval snapshots.
    """
    path = os.fspath(path)
    if delta <= 0:
        raise TraceValidationError(f"delta must be positive, got {delta}")
    samples: List[NetworkSample] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        columns = tuple(header.split(",")) if header else ()
        if columns[: len(NETWORK_CSV_HEADER)] != NETWORK_CSV_HEADER:
            raise TraceFormatError(
                f"unexpected header {header!r}", path=path, line=1
            )
        for lineno, raw in enumerate(fh, start=2):
            raw = raw.strip()
            if not raw:
                continue
            parts = raw.split(",")
            if len(parts) < len(NETWORK_CSV_HEADER):
                raise TraceFormatError(
                    f"expected at least {len(NETWORK_CSV_HEADER)} columns, "
                    f"got {len(parts)}",
                    path=path,
                    line=lineno,
                )
            try:
                sample = NetworkSample(
                    timestamp=int(parts[0]),
                    wall_clock=datetime.fromisoformat(parts[1]),
                    throughput=float(parts[2]),
                    retransmits=int(parts[3]),
                    cwnd=int(parts[4]),
                    srtt=float(parts[5]),
                    rtt_var=float(parts[6]),
                )
            except (ValueError, TraceValidationError) as exc:
                raise TraceFormatError(str(exc), path=path, line=lineno) from exc
            samples.append(sample)
    if len(samples) < 2:
        raise TraceValidationError(f"{path}: need at least 2 samples")
    for prev, cur in zip(samples, samples[1:]):
        if cur.timestamp != prev.timestamp + 1:
            raise TraceValidationError(
                f"{path}: non-monotone timestamps "
                f"({prev.timestamp} then {cur.timestamp})"
            )
    trace_id = os.path.splitext(os.path.basename(path))[0]
    return NetworkTrace(trace_id, location_tag, _with_shifts(samples, delta), delta)


def save_network_trace(trace: NetworkTrace, directory) -> str:
    """Write a trace as ``<trace_id>.csv`` with the fixed header."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(os.fspath(directory), f"{trace.trace_id}.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(NETWORK_CSV_HEADER) + "\n")
        for s in trace.samples:
            fh.write(
                f"{s.timestamp},{s.wall_clock.isoformat()},{s.throughput!r},"
                f"{s.retransmits},{s.cwnd},{s.srtt!r},{s.rtt_var!r}\n"
            )
    return path


@dataclass(frozen=True)
class EncodingConfig:
    """One point of the encoding ladder: bitrate, frame rate, resolution."""

    bitrate_mbps: float
    frame_rate: int
    resolution: Tuple[int, int]

    def __post_init__(self):
        if self.bitrate_mbps not in BITRATE_CANDIDATES_MBPS:
            raise TraceValidationError(
                f"bitrate {self.bitrate_mbps} not in {BITRATE_CANDIDATES_MBPS}"
            )
        if self.frame_rate not in FRAME_RATE_CANDIDATES:
            raise TraceValidationError(
                f"frame rate {self.frame_rate} not in {FRAME_RATE_CANDIDATES}"
            )
        if tuple(self.resolution) not in RESOLUTION_CANDIDATES:
            raise TraceValidationError(
                f"resolution {self.resolution} not in {RESOLUTION_CANDIDATES}"
            )

    @property
    def key(self) -> str:
        w, h = self.resolution
        return f"b{self.bitrate_mbps:g}_f{self.frame_rate}_r{w}x{h}"


@dataclass(frozen=True)
class VideoUnitRecord:
    """Recorded processing costs and accuracy of one encoded GOP."""

    video_id: str
    config: EncodingConfig
    gop_start: int  # content seconds
    gop_length: int  # seconds
    frame_sizes: Tuple[float, ...]  # bits per frame, I-frame first
    encode_delays: Tuple[float, ...]  # seconds per frame
    decode_delays: Tuple[float, ...]
    inference_delays: Tuple[float, ...]
    accuracy: float  # F1 against raw-frame ground truth
    mean_confidence_uncertainty: float

    def __post_init__(self):
        if self.gop_length not in GOP_LENGTH_CANDIDATES:
            raise TraceValidationError(
                f"gop_length {self.gop_length} not in {GOP_LENGTH_CANDIDATES}"
            )
        expected = self.gop_length * self.config.frame_rate
        for name in ("frame_sizes", "encode_delays", "decode_delays", "inference_delays"):
            values = getattr(self, name)
            if len(values) != expected:
                raise TraceValidationError(
                    f"{name} has {len(values)} entries, expected {expected} "
                    f"for gop_length={self.gop_length} at "
                    f"{self.config.frame_rate} FPS"
                )
            if any(v < 0 for v in values):
                raise TraceValidationError(f"{name} contains negative entries")
        if not 0.0 <= self.accuracy <= 1.0:
            raise TraceValidationError(f"accuracy {self.accuracy} outside [0, 1]")
        if not 0.0 <= self.mean_confidence_uncertainty <= 1.0:
            raise TraceValidationError(
                f"uncertainty {self.mean_confidence_uncertainty} outside [0, 1]"
            )

    @property
    def frame_count(self) -> int:
        return len(self.frame_sizes)

    @property
    def total_bits(self) -> float:
        return float(sum(self.frame_sizes))

    def to_json(self) -> dict:
        w, h = self.config.resolution
        return {
            "video_id": self.video_id,
            "bitrate_mbps": self.config.bitrate_mbps,
            "frame_rate": self.config.frame_rate,
            "resolution": [w, h],
            "gop_start": self.gop_start,
            "gop_length": self.gop_length,
            "frame_sizes": list(self.frame_sizes),
            "encode_delays": list(self.encode_delays),
            "decode_delays": list(self.decode_delays),
            "inference_delays": list(self.inference_delays),
            "accuracy": self.accuracy,
            "mean_confidence_uncertainty": self.mean_confidence_uncertainty,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VideoUnitRecord":
        config = EncodingConfig(
            bitrate_mbps=float(obj["bitrate_mbps"]),
            frame_rate=int(obj["frame_rate"]),
            resolution=tuple(obj["resolution"]),
        )
        return cls(
            video_id=obj["video_id"],
            config=config,
            gop_start=int(obj["gop_start"]),
            gop_length=int(obj["gop_length"]),
            frame_sizes=tuple(float(v) for v in obj["frame_sizes"]),
            encode_delays=tuple(float(v) for v in obj["encode_delays"]),
            decode_delays=tuple(float(v) for v in obj["decode_delays"]),
            inference_delays=tuple(float(v) for v in obj["inference_delays"]),
            accuracy=float(obj["accuracy"]),
            mean_confidence_uncertainty=float(obj["mean_confidence_uncertainty"]),
        )


@dataclass
class VideoTraceSet:
    """All processing records of one video, indexed for O(1) GOP lookup.

    For every (config, gop_length) the records tile the content timeline
    starting at 0 with no gaps or overlaps. GOPs requested at starts that
    do not fall on a tile boundary are composed by slicing the covering
    tiles per frame (see :meth:`unit_for`).
    """

    video_id: str
    native_frame_rate: int
    records: Dict[Tuple[EncodingConfig, int, int], VideoUnitRecord]
    duration_s: int
    compact_detections: Optional["DetectionTrace"] = None

    def __post_init__(self):
        self._validate_tiling()

    def _validate_tiling(self) -> None:
        by_stream: Dict[Tuple[EncodingConfig, int], List[int]] = {}
        for (config, length, start) in self.records:
            by_stream.setdefault((config, length), []).append(start)
        for (config, length), starts in by_stream.items():
            starts.sort()
            expected = 0
            for start in starts:
                if start > expected:
                    raise AlignmentError(
                        f"video {self.video_id!r} {config.key} gop_length="
                        f"{length}: gap before gop_start={start}"
                    )
                if start < expected:
                    raise AlignmentError(
                        f"video {self.video_id!r} {config.key} gop_length="
                        f"{length}: overlapping record at gop_start={start}"
                    )
                expected = start + length
            if expected != self.duration_s:
                raise AlignmentError(
                    f"video {self.video_id!r} {config.key} gop_length={length}: "
                    f"tiling covers {expected} s of {self.duration_s} s"
                )

    def configs(self) -> List[EncodingConfig]:
        return sorted(
            {cfg for (cfg, _l, _s) in self.records},
            key=lambda c: (c.bitrate_mbps, c.frame_rate, c.resolution),
        )

    def gop_lengths(self) -> List[int]:
        return sorted({length for (_c, length, _s) in self.records})

    def record_at(self, config: EncodingConfig, gop_length: int, gop_start: int) -> VideoUnitRecord:
        try:
            return self.records[(config, gop_length, gop_start)]
        except KeyError:
            raise KeyError(
                f"no record for {config.key} gop_length={gop_length} "
                f"gop_start={gop_start}"
            ) from None

    def records_for(self, config: EncodingConfig, gop_length: int) -> List[VideoUnitRecord]:
        return [
            rec
            for (cfg, length, _s), rec in sorted(
                self.records.items(), key=lambda kv: kv[0][2]
            )
            if cfg == config and length == gop_length
        ]

    def unit_for(self, config: EncodingConfig, gop_length: int, gop_start: int) -> VideoUnitRecord:
        """Return the record for a GOP, composing one if unaligned.

        The composed record slices per-frame values from the covering
        tiles of the same (config, gop_length) stream and substitutes the
        covering tile's I-frame size for the first frame, since a GOP
        starting mid-tile would otherwise begin with a P-frame-sized
        entry. Accuracy and uncertainty are overlap-weighted means.
        """
        length = min(gop_length, self.duration_s - gop_start)
        if length <= 0:
            raise TraceValidationError(
                f"gop_start={gop_start} is at or past content end "
                f"({self.duration_s} s)"
            )
        key = (config, gop_length, gop_start)
        if length == gop_length and key in self.records:
            return self.records[key]

        fr = config.frame_rate
        sizes: List[float] = []
        enc: List[float] = []
        dec: List[float] = []
        inf: List[float] = []
        weights: Dict[int, int] = {}
        for j in range(length * fr):
            content_t = gop_start + j / fr
            tile_start = int(content_t // gop_length) * gop_length
            tile_start = min(tile_start, self.duration_s - gop_length)
            tile = self.record_at(config, gop_length, tile_start)
            offset = round((content_t - tile_start) * fr)
            if j == 0:
                sizes.append(tile.frame_sizes[0])
            else:
                sizes.append(tile.frame_sizes[offset])
            enc.append(tile.encode_delays[offset])
            dec.append(tile.decode_delays[offset])
            inf.append(tile.inference_delays[offset])
            weights[tile_start] = weights.get(tile_start, 0) + 1
        total = sum(weights.values())
        acc = 0.0
        unc = 0.0
        for tile_start, w in weights.items():
            tile = self.record_at(config, gop_length, tile_start)
            acc += tile.accuracy * w / total
            unc += tile.mean_confidence_uncertainty * w / total
        # Composed GOPs may be truncated at content end; bypass the
        # candidate-set check on gop_length by reporting actual length.
        return VideoUnitRecord(
            video_id=self.video_id,
            config=config,
            gop_start=gop_start,
            gop_length=length,
            frame_sizes=tuple(sizes),
            encode_delays=tuple(enc),
            decode_delays=tuple(dec),
            inference_delays=tuple(inf),
            accuracy=min(1.0, acc),
            mean_confidence_uncertainty=min(1.0, unc),
        )


@dataclass(frozen=True)
class Detection:
    """One detected object: pixel box, class label, confidence."""

    box: Tuple[float, float, float, float]  # x1, y1, x2, y2
    category: str
    confidence: float

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if x2 <= x1 or y2 <= y1:
            raise TraceValidationError(f"degenerate box {self.box}")
        if not 0.0 <= self.confidence <= 1.0:
            raise TraceValidationError(
                f"confidence {self.confidence} outside [0, 1]"
            )


@dataclass
class DetectionTrace:
    """Per-frame detection lists at the native frame rate."""

    frame_rate: int
    frames: Dict[int, Tuple[Detection, ...]] = field(default_factory=dict)

    def in_content_window(self, start_s: float, end_s: float) -> List[Detection]:
        lo = math.ceil(start_s * self.frame_rate)
        hi = math.ceil(end_s * self.frame_rate)
        out: List[Detection] = []
        for idx in range(lo, hi):
            out.extend(self.frames.get(idx, ()))
        return out


def load_detection_file(path, frame_rate: int = NATIVE_FRAME_RATE) -> DetectionTrace:
    """Read a JSON-lines detection file (one line per frame)."""
    trace = DetectionTrace(frame_rate=frame_rate)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
                dets = tuple(
                    Detection(
                        box=tuple(float(v) for v in d["box"]),
                        category=str(d["category"]),
                        confidence=float(d["confidence"]),
                    )
                    for d in obj["detections"]
                )
                trace.frames[int(obj["frame_idx"])] = dets
            except (KeyError, ValueError, TypeError, TraceValidationError) as exc:
                raise TraceFormatError(str(exc), path=os.fspath(path), line=lineno) from exc
    return trace


def save_detection_trace(trace: DetectionTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for idx in sorted(trace.frames):
            fh.write(
                json.dumps(
                    {
                        "frame_idx": idx,
                        "detections": [
                            {
                                "box": list(d.box),
                                "category": d.category,
                                "confidence": d.confidence,
                            }
                            for d in trace.frames[idx]
                        ],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


DETECTIONS_FILENAME = "detections.jsonl"
VIDEO_META_FILENAME = "meta.json"


def load_video_trace_set(directory) -> VideoTraceSet:
    """Load all per-(config, gop_length) record files of one video.

    Verifies the tiling invariant and builds the GOP index. A
    ``detections.jsonl`` file, if present, is attached as the
    compact-model detection trace.
    """
    directory = os.fspath(directory)
    meta_path = os.path.join(directory, VIDEO_META_FILENAME)
    native = NATIVE_FRAME_RATE
    video_id = os.path.basename(os.path.normpath(directory))
    duration: Optional[int] = None
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        video_id = meta.get("video_id", video_id)
        native = int(meta.get("native_frame_rate", native))
        if "duration_s" in meta:
            duration = int(meta["duration_s"])

    records: Dict[Tuple[EncodingConfig, int, int], VideoUnitRecord] = {}
    names = sorted(os.listdir(directory))
    record_files = [
        n
        for n in names
        if n.endswith(".jsonl") and n != DETECTIONS_FILENAME
    ]
    if not record_files:
        raise TraceValidationError(f"{directory}: no record files found")
    for name in record_files:
        path = os.path.join(directory, name)
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    rec = VideoUnitRecord.from_json(json.loads(raw))
                except (KeyError, ValueError, TypeError, TraceValidationError) as exc:
                    raise TraceFormatError(str(exc), path=path, line=lineno) from exc
                key = (rec.config, rec.gop_length, rec.gop_start)
                if key in records:
                    raise AlignmentError(
                        f"{path}:{lineno}: duplicate record at "
                        f"gop_start={rec.gop_start}"
                    )
                records[key] = rec
    if duration is None:
        duration = max(start + length for (_c, length, start) in records)

    detections = None
    det_path = os.path.join(directory, DETECTIONS_FILENAME)
    if os.path.exists(det_path):
        detections = load_detection_file(det_path, frame_rate=native)

    return VideoTraceSet(
        video_id=video_id,
        native_frame_rate=native,
        records=records,
        duration_s=duration,
        compact_detections=detections,
    )


def save_video_trace_set(trace_set: VideoTraceSet, directory) -> str:
    """Write a trace set as one JSONL per (config, gop_length) plus meta."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    grouped: Dict[Tuple[EncodingConfig, int], List[VideoUnitRecord]] = {}
    for (config, length, _start), rec in sorted(
        trace_set.records.items(), key=lambda kv: kv[0][2]
    ):
        grouped.setdefault((config, length), []).append(rec)
    for (config, length), recs in grouped.items():
        path = os.path.join(directory, f"records_{config.key}_g{length}.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            for rec in recs:
                fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
    with open(os.path.join(directory, VIDEO_META_FILENAME), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "video_id": trace_set.video_id,
                "native_frame_rate": trace_set.native_frame_rate,
                "duration_s": trace_set.duration_s,
            },
            fh,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")
    if trace_set.compact_detections is not None:
        save_detection_trace(
            trace_set.compact_detections,
            os.path.join(directory, DETECTIONS_FILENAME),
        )
    return directory


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test partition of trace ids."""

    train: Tuple[str, ...]
    validation: Tuple[str, ...]
    test: Tuple[str, ...]

    def __post_init__(self):
        all_ids = list(self.train) + list(self.validation) + list(self.test)
        if len(set(all_ids)) != len(all_ids):
            raise TraceValidationError("split partitions overlap")


def split_dataset(trace_ids: Sequence[str], seed: int) -> DatasetSplit:
    """Random 70/10/20 split; floor sizes, remainder goes to test."""
    ids = list(trace_ids)
    if len(ids) < 10:
        raise TraceValidationError(
            f"need at least 10 traces to split, got {len(ids)}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_train = int(math.floor(0.7 * len(ids)))
    n_val = int(math.floor(0.1 * len(ids)))
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        validation=tuple(shuffled[n_train : n_train + n_val]),
        test=tuple(shuffled[n_train + n_val :]),
    )


@dataclass(frozen=True)
class SyntheticNetworkParams:
    """Knobs of the synthetic uplink generator.

    The throughput level comes from (in priority order) an explicit
    ``level_schedule``, a 15 s-grid square wave, or a two-state Markov
    process; truncated Gaussian noise is added on top and the result is
    clipped at 0.
    """

    good_mbps: float = 12.0
    degraded_mbps: float = 3.0
    p_good_to_degraded: float = 0.03
    p_degraded_to_good: float = 0.15
    noise_sigma: float = 0.6
    square_wave: Optional[Tuple[float, float]] = None  # (high, low)
    square_wave_period_s: int = 15
    level_schedule: Optional[Tuple[Tuple[int, float], ...]] = None  # (start_s, mbps)
    base_srtt_ms: float = 42.0
    start_wall_clock: datetime = _EPOCH

    def level_at(self, t: int, markov_levels: Optional[np.ndarray] = None) -> float:
        if self.level_schedule is not None:
            level = self.level_schedule[0][1]
            for start, mbps in self.level_schedule:
                if t >= start:
                    level = mbps
            return level
        if self.square_wave is not None:
            high, low = self.square_wave
            return high if (t // self.square_wave_period_s) % 2 == 0 else low
        assert markov_levels is not None
        return float(markov_levels[t])


def gen_synthetic_network_trace(
    seed: int,
    duration_s: int,
    params: SyntheticNetworkParams = SyntheticNetworkParams(),
    trace_id: Optional[str] = None,
    location_tag: str = "synthetic",
    delta: float = DEFAULT_DELTA_MBPS,
) -> NetworkTrace:
    """Generate a deterministic synthetic uplink trace."""
    if duration_s < 2:
        raise TraceValidationError("duration must be at least 2 s")
    rng = np.random.default_rng(seed)

    markov_levels = None
    if params.level_schedule is None and params.square_wave is None:
        states = np.empty(duration_s)
        good = True
        for t in range(duration_s):
            states[t] = params.good_mbps if good else params.degraded_mbps
            u = rng.random()
            if good and u < params.p_good_to_degraded:
                good = False
            elif not good and u < params.p_degraded_to_good:
                good = True
        markov_levels = states

    sigma = params.noise_sigma
    noise = np.clip(rng.normal(0.0, sigma, size=duration_s), -5 * sigma, 5 * sigma)
    throughputs = []
    srtts = []
    rtt_vars = []
    retransmits = []
    cwnds = []
    worst = max(
        params.good_mbps,
        params.degraded_mbps,
        *(mbps for _s, mbps in (params.level_schedule or ())),
        *(params.square_wave or ()),
    )
    for t in range(duration_s):
        level = params.level_at(t, markov_levels)
        tp = max(0.0, level + noise[t])
        throughputs.append(tp)
        congestion = 1.0 - min(1.0, tp / max(worst, 1e-9))
        srtt = params.base_srtt_ms * (1.0 + 0.6 * congestion) + float(
            np.clip(rng.normal(0.0, 3.0), -15.0, 15.0)
        )
        srtts.append(max(1.0, srtt))
        rtt_vars.append(max(0.1, srtt * 0.15 + float(rng.normal(0.0, 1.0))))
        retransmits.append(int(rng.poisson(2.0 * congestion)))
        cwnds.append(int(max(1448, tp * 1e6 / 8 * srtt / 1000 * (0.8 + 0.4 * rng.random()))))

    return make_network_trace(
        trace_id=trace_id or f"synthetic-{seed}",
        throughputs=throughputs,
        delta=delta,
        location_tag=location_tag,
        start_wall_clock=params.start_wall_clock,
        retransmits=retransmits,
        cwnd=cwnds,
        srtt=srtts,
        rtt_var=rtt_vars,
    )


@dataclass(frozen=True)
class SyntheticVideoParams:
    """Knobs of the synthetic video processing trace generator.

    Accuracy is generated monotone non-decreasing in bitrate (for fixed
    frame rate, resolution, and gop_start) and in GOP length (for fixed
    config); frame sizes are CBR within +-8%; the first frame of every
    GOP is the largest.
    """

    max_accuracy: float = 0.92
    accuracy_drop: float = 0.35
    accuracy_decay_mbps: float = 2.2
    gop_length_bonus: float = 0.012
    content_period_s: float = 150.0
    content_amplitude: float = 0.045
    encode_delay_s: float = 0.003
    decode_delay_s: float = 0.0008
    inference_delay_s: float = 0.004
    detections_per_frame: int = 5

    def fps_factor(self, fps: int) -> float:
        return {1: 0.88, 3: 0.93, 5: 0.96, 15: 1.0}[fps]

    def res_factor(self, resolution: Tuple[int, int], bitrate: float) -> float:
        w, _h = resolution
        if w >= 1920:
            return 0.96 if bitrate < 4.0 else 1.0
        if w >= 1280:
            return 0.985
        return 0.90


def _content_difficulty(t: float, params: SyntheticVideoParams) -> float:
    return 0.5 + 0.3 * math.sin(2 * math.pi * t / params.content_period_s)


def gen_synthetic_video_trace(
    seed: int,
    duration_s: int = 480,
    native_frame_rate: int = NATIVE_FRAME_RATE,
    config_set: Optional[Sequence[EncodingConfig]] = None,
    gop_set: Sequence[int] = GOP_LENGTH_CANDIDATES,
    params: SyntheticVideoParams = SyntheticVideoParams(),
    video_id: Optional[str] = None,
    with_detections: bool = True,
) -> VideoTraceSet:
    """Generate a deterministic synthetic video trace set."""
    if config_set is None:
        config_set = [
            EncodingConfig(b, 15, (1280, 720)) for b in BITRATE_CANDIDATES_MBPS
        ]
    for length in gop_set:
        if duration_s % length != 0:
            raise TraceValidationError(
                f"duration {duration_s} not divisible by gop_length {length}"
            )
    rng = np.random.default_rng(seed)
    vid = video_id or f"synthvid-{seed}"

    # Per-gop_start effects shared across configs keep the cross-config
    # accuracy ordering intact.
    content_noise = {
        s: float(np.clip(rng.normal(0.0, 0.006), -0.015, 0.015))
        for s in range(duration_s)
    }

    records: Dict[Tuple[EncodingConfig, int, int], VideoUnitRecord] = {}
    for config in config_set:
        base = params.max_accuracy - params.accuracy_drop * math.exp(
            -config.bitrate_mbps / params.accuracy_decay_mbps
        )
        base *= params.fps_factor(config.frame_rate)
        base *= params.res_factor(config.resolution, config.bitrate_mbps)
        pixels = config.resolution[0] * config.resolution[1]
        pix_ratio = pixels / (1920 * 1080)
        enc_base = params.encode_delay_s * (0.55 + 0.45 * pix_ratio) * (
            1.0 + 0.05 * config.bitrate_mbps / 9.0
        )
        dec_base = params.decode_delay_s * (0.55 + 0.45 * pix_ratio)
        inf_base = params.inference_delay_s * (0.45 + 0.55 * pix_ratio)
        for length in gop_set:
            n_frames = length * config.frame_rate
            for start in range(0, duration_s, length):
                total_bits = (
                    config.bitrate_mbps
                    * 1e6
                    * length
                    * (1.0 + float(np.clip(rng.normal(0.0, 0.03), -0.08, 0.08)))
                )
                if n_frames == 1:
                    sizes = [total_bits]
                else:
                    i_share = max(0.3, 1.2 / n_frames)
                    p_weights = rng.uniform(0.9, 1.1, size=n_frames - 1)
                    p_weights = p_weights / p_weights.sum()
                    p_total = total_bits * (1.0 - i_share)
                    sizes = [total_bits * i_share] + list(p_total * p_weights)
                enc = list(
                    np.maximum(0.0, enc_base * rng.uniform(0.85, 1.15, size=n_frames))
                )
                dec = list(
                    np.maximum(0.0, dec_base * rng.uniform(0.85, 1.15, size=n_frames))
                )
                inf = list(
                    np.maximum(0.0, inf_base * rng.uniform(0.85, 1.15, size=n_frames))
                )
                difficulty = _content_difficulty(start + length / 2.0, params)
                wiggle = (
                    -params.content_amplitude * (difficulty - 0.5) * 2.0
                    + content_noise[start]
                )
                accuracy = base + params.gop_length_bonus * (length - 1) + wiggle
                accuracy = min(1.0, max(0.0, accuracy))
                uncertainty = min(
                    1.0,
                    max(
                        0.0,
                        0.22
                        + 0.35 * (difficulty - 0.5) * 2.0
                        + content_noise[start],
                    ),
                )
                rec = VideoUnitRecord(
                    video_id=vid,
                    config=config,
                    gop_start=start,
                    gop_length=length,
                    frame_sizes=tuple(sizes),
                    encode_delays=tuple(enc),
                    decode_delays=tuple(dec),
                    inference_delays=tuple(inf),
                    accuracy=accuracy,
                    mean_confidence_uncertainty=uncertainty,
                )
                records[(config, length, start)] = rec

    detections = None
    if with_detections:
        detections = DetectionTrace(frame_rate=native_frame_rate)
        det_rng = np.random.default_rng(seed + 1)
        for idx in range(duration_s * native_frame_rate):
            t = idx / native_frame_rate
            difficulty = _content_difficulty(t, params)
            dets = []
            for _ in range(params.detections_per_frame):
                x1 = float(det_rng.uniform(0, 1800))
                y1 = float(det_rng.uniform(0, 1000))
                w = float(det_rng.uniform(20, 120))
                h = float(det_rng.uniform(20, 80))
                conf = float(
                    np.clip(
                        det_rng.normal(0.78 - 0.55 * (difficulty - 0.5) * 2.0, 0.13),
                        0.01,
                        0.99,
                    )
                )
                category = "car" if det_rng.random() < 0.7 else "person"
                dets.append(
                    Detection(box=(x1, y1, x1 + w, y1 + h), category=category, confidence=conf)
                )
            detections.frames[idx] = tuple(dets)

    return VideoTraceSet(
        video_id=vid,
        native_frame_rate=native_frame_rate,
        records=records,
        duration_s=duration_s,
        compact_detections=detections,
    )
