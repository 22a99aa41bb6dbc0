"""Trace parsing, feature construction, and window datasets.

Reads the 1 Hz uplink CSV format (fixed header: timestamp, wall_clock,
throughput_mbps, retransmits, cwnd_bytes, srtt_ms, rtt_var_ms), derives
shift labels from the threshold delta, and turns traces into
encoder/decoder feature windows.

Feature layout per time step:

* observable variables (OV): throughput, shift, retransmits, cwnd, srtt,
  rtt_var - standardized with train-set statistics;
* date features: hour of day, day of week (from wall_clock);
* handover feature: epoch second mod 15, the position inside the
  scheduling window;
* position inside the sequence (sinusoidal, added by the model).

Decoder inputs concatenate the last p context rows with n future rows
whose OV block is zeroed but whose date/handover features are filled in
for the future timestamps.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ModelConfig

CSV_HEADER = (
    "timestamp",
    "wall_clock",
    "throughput_mbps",
    "retransmits",
    "cwnd_bytes",
    "srtt_ms",
    "rtt_var_ms",
)

OV_DIM = 6  # throughput, shift, retransmits, cwnd, srtt, rtt_var
TIME_DIM = 3  # hour, day-of-week, handover phase
HANDOVER_PERIOD_S = 15


def shift_labels(throughputs: np.ndarray, delta: float) -> np.ndarray:
    """1 where a step-to-step change exceeds delta; first step is 0."""
    shifts = np.zeros(len(throughputs), dtype=np.float32)
    if len(throughputs) > 1:
        shifts[1:] = (np.abs(np.diff(throughputs)) > delta).astype(np.float32)
    return shifts


@dataclass
class TraceFrame:
    """One parsed trace as flat arrays."""

    trace_id: str
    timestamps: np.ndarray  # int seconds since trace start
    epoch_s: np.ndarray  # int epoch seconds of wall_clock
    ov: np.ndarray  # [T, OV_DIM] float32, raw (unstandardized)
    time_feats: np.ndarray  # [T, TIME_DIM] int64

    def __len__(self) -> int:
        return len(self.timestamps)

    def future_time_feats(self, count: int) -> np.ndarray:
        """Date/handover features for the steps after the trace end."""
        last = int(self.epoch_s[-1])
        return time_features_from_epochs(
            np.arange(last + 1, last + 1 + count, dtype=np.int64)
        )


def time_features_from_epochs(epochs: np.ndarray) -> np.ndarray:
    out = np.empty((len(epochs), TIME_DIM), dtype=np.int64)
    out[:, 0] = (epochs // 3600) % 24
    # epoch day 0 (1970-01-01) was a Thursday
    out[:, 1] = ((epochs // 86400) + 3) % 7
    out[:, 2] = epochs % HANDOVER_PERIOD_S
    return out


def frame_from_rows(trace_id: str, rows: Sequence[dict], delta: float) -> TraceFrame:
    """Build a frame from request-style sample dicts (wire protocol)."""
    timestamps = np.array([int(r["t"]) for r in rows], dtype=np.int64)
    epochs = np.array(
        [int(datetime.fromisoformat(r["wall_clock"]).timestamp()) for r in rows],
        dtype=np.int64,
    )
    throughput = np.array([float(r["throughput"]) for r in rows], dtype=np.float32)
    ov = np.stack(
        [
            throughput,
            np.array([float(r.get("shift", 0)) for r in rows], dtype=np.float32),
            np.array([float(r.get("retransmits", 0)) for r in rows], dtype=np.float32),
            np.array([float(r.get("cwnd", 0)) for r in rows], dtype=np.float32),
            np.array([float(r.get("srtt", 0)) for r in rows], dtype=np.float32),
            np.array([float(r.get("rtt_var", 0)) for r in rows], dtype=np.float32),
        ],
        axis=1,
    )
    # shift column is always recomputed so labels match delta
    ov[:, 1] = shift_labels(throughput, delta)
    return TraceFrame(
        trace_id=trace_id,
        timestamps=timestamps,
        epoch_s=epochs,
        ov=ov,
        time_feats=time_features_from_epochs(epochs),
    )


def read_trace_csv(path, delta: float) -> TraceFrame:
    trace_id = os.path.splitext(os.path.basename(path))[0]
    rows: List[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = tuple(fh.readline().strip().split(","))
        if header[: len(CSV_HEADER)] != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            parts = raw.split(",")
            rows.append(
                {
                    "t": int(parts[0]),
                    "wall_clock": parts[1],
                    "throughput": float(parts[2]),
                    "retransmits": float(parts[3]),
                    "cwnd": float(parts[4]),
                    "srtt": float(parts[5]),
                    "rtt_var": float(parts[6]),
                }
            )
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 samples")
    return frame_from_rows(trace_id, rows, delta)


class Standardizer:
    """Per-column OV standardization fitted on the training set only."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = mean.astype(np.float32)
        self.std = np.maximum(std.astype(np.float32), 1e-6)

    @classmethod
    def fit(cls, frames: Sequence[TraceFrame]) -> "Standardizer":
        stacked = np.concatenate([f.ov for f in frames], axis=0)
        return cls(stacked.mean(axis=0), stacked.std(axis=0))

    def transform(self, ov: np.ndarray) -> np.ndarray:
        return (ov - self.mean) / self.std

    def inverse_throughput(self, standardized: np.ndarray) -> np.ndarray:
        return standardized * self.std[0] + self.mean[0]

    def transform_throughput(self, mbps: np.ndarray) -> np.ndarray:
        return (mbps - self.mean[0]) / self.std[0]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {"mean": self.mean.tolist(), "std": self.std.tolist()},
                fh,
                sort_keys=True,
                indent=2,
            )
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Standardizer":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(np.array(obj["mean"]), np.array(obj["std"]))


@dataclass
class FeatureWindow:
    """Model inputs for one decision timestamp."""

    enc_ov: np.ndarray  # [m, OV_DIM] standardized
    enc_time: np.ndarray  # [m, TIME_DIM]
    dec_ov: np.ndarray  # [p + n, OV_DIM]; future rows zeroed
    dec_time: np.ndarray  # [p + n, TIME_DIM]


def featurize(
    frame: TraceFrame,
    t: int,
    config: ModelConfig,
    scaler: Standardizer,
    n: Optional[int] = None,
) -> FeatureWindow:
    """Window ending at index ``t`` (inclusive), forecasting t+1 .. t+n.

    Training requires the future rows to exist; inference only needs
    enough history, and future date/handover features are extrapolated
    past the trace end when necessary.
    """
    n = n if n is not None else config.n
    m, p = config.m, config.p
    if t < m - 1:
        raise ValueError(f"need at least {m} history rows, have {t + 1}")
    std_ov = scaler.transform(frame.ov[t - m + 1 : t + 1]).astype(np.float32)
    enc_time = frame.time_feats[t - m + 1 : t + 1]

    dec_ov = np.zeros((p + n, OV_DIM), dtype=np.float32)
    dec_ov[:p] = std_ov[m - p :]
    available = min(n, len(frame) - (t + 1))
    if available > 0:
        future_known = frame.time_feats[t + 1 : t + 1 + available]
    else:
        future_known = np.empty((0, TIME_DIM), dtype=np.int64)
    if available < n:
        last_epoch = int(frame.epoch_s[min(t + available, len(frame) - 1)])
        extra = time_features_from_epochs(
            np.arange(last_epoch + 1, last_epoch + 1 + (n - available), dtype=np.int64)
        )
        future_time = np.concatenate([future_known, extra], axis=0)
    else:
        future_time = future_known
    dec_time = np.concatenate([enc_time[m - p :], future_time], axis=0)
    return FeatureWindow(
        enc_ov=std_ov, enc_time=enc_time, dec_ov=dec_ov, dec_time=dec_time
    )


@dataclass
class WindowDataset:
    """All training windows of a set of traces, as stacked arrays."""

    enc_ov: np.ndarray
    enc_time: np.ndarray
    dec_ov: np.ndarray
    dec_time: np.ndarray
    target_tp: np.ndarray  # [N, n] standardized throughput
    target_shift: np.ndarray  # [N, n] binary

    def __len__(self) -> int:
        return len(self.enc_ov)

    @property
    def positive_fraction(self) -> float:
        return float(self.target_shift.mean())


def build_dataset(
    frames: Sequence[TraceFrame], config: ModelConfig, scaler: Standardizer
) -> WindowDataset:
    enc_ov, enc_time, dec_ov, dec_time, tgt_tp, tgt_shift = [], [], [], [], [], []
    for frame in frames:
        std_tp = scaler.transform_throughput(frame.ov[:, 0])
        for t in range(config.m - 1, len(frame) - config.n):
            window = featurize(frame, t, config, scaler)
            enc_ov.append(window.enc_ov)
            enc_time.append(window.enc_time)
            dec_ov.append(window.dec_ov)
            dec_time.append(window.dec_time)
            tgt_tp.append(std_tp[t + 1 : t + 1 + config.n])
            tgt_shift.append(frame.ov[t + 1 : t + 1 + config.n, 1])
    if not enc_ov:
        raise ValueError("no training windows; traces shorter than m + n")
    return WindowDataset(
        enc_ov=np.stack(enc_ov),
        enc_time=np.stack(enc_time),
        dec_ov=np.stack(dec_ov),
        dec_time=np.stack(dec_time),
        target_tp=np.stack(tgt_tp).astype(np.float32),
        target_shift=np.stack(tgt_shift).astype(np.float32),
    )
