"""Batch and stdio inference speaking the prediction wire protocol.

Responses always carry exactly ``n`` non-negative throughputs, ``n``
binary shift indicators (sigmoid >= 0.5), and ``n`` probabilities in
[0, 1], so they validate against the consumer's bridge unchanged.
"""

from __future__ import annotations

import json
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .config import ModelConfig
from .data import (
    Standardizer,
    TraceFrame,
    featurize,
    frame_from_rows,
    read_trace_csv,
)
from .model import ThroughputShiftModel
from .train import load_checkpoint


@torch.no_grad()
def predict_window(
    model: ThroughputShiftModel,
    scaler: Standardizer,
    config: ModelConfig,
    frame: TraceFrame,
    t: int,
    n: Optional[int] = None,
) -> Dict:
    n = n if n is not None else config.n
    window = featurize(frame, t, config, scaler, n=config.n)
    pred_tp, logits = model(
        torch.from_numpy(window.enc_ov).unsqueeze(0),
        torch.from_numpy(window.enc_time).unsqueeze(0),
        torch.from_numpy(window.dec_ov).unsqueeze(0),
        torch.from_numpy(window.dec_time).unsqueeze(0),
    )
    throughputs = scaler.inverse_throughput(pred_tp[0].numpy())[:n]
    probabilities = torch.sigmoid(logits[0]).numpy()[:n]
    return {
        "throughputs": [max(0.0, float(v)) for v in throughputs],
        "shifts": [1 if p >= 0.5 else 0 for p in probabilities],
        "probabilities": [min(1.0, max(0.0, float(p))) for p in probabilities],
    }


@torch.no_grad()
def predict_trace(
    model: ThroughputShiftModel,
    scaler: Standardizer,
    config: ModelConfig,
    frame: TraceFrame,
    timestamps: Optional[Sequence[int]] = None,
    batch_size: int = 512,
) -> List[Dict]:
    """One response per decision timestamp, batched per trace."""
    if timestamps is None:
        timestamps = list(range(config.m - 1, len(frame)))
    windows = [featurize(frame, t, config, scaler) for t in timestamps]
    out: List[Dict] = []
    for start in range(0, len(windows), batch_size):
        chunk = windows[start : start + batch_size]
        pred_tp, logits = model(
            torch.from_numpy(np.stack([w.enc_ov for w in chunk])),
            torch.from_numpy(np.stack([w.enc_time for w in chunk])),
            torch.from_numpy(np.stack([w.dec_ov for w in chunk])),
            torch.from_numpy(np.stack([w.dec_time for w in chunk])),
        )
        mbps = scaler.inverse_throughput(pred_tp.numpy())
        probs = torch.sigmoid(logits).numpy()
        for row_tp, row_p, t in zip(mbps, probs, timestamps[start : start + batch_size]):
            out.append(
                {
                    "trace_id": frame.trace_id,
                    "t": int(frame.timestamps[t]),
                    "throughputs": [max(0.0, float(v)) for v in row_tp],
                    "shifts": [1 if p >= 0.5 else 0 for p in row_p],
                    "probabilities": [min(1.0, max(0.0, float(p))) for p in row_p],
                }
            )
    return out


def predict_batch(checkpoint_dir, trace_paths: Sequence, out_path, delta: Optional[float] = None) -> int:
    """Write a prediction file covering every decision timestamp."""
    model, scaler, config = load_checkpoint(checkpoint_dir)
    delta = delta if delta is not None else config.delta_mbps
    lines = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for path in sorted(str(p) for p in trace_paths):
            frame = read_trace_csv(path, delta)
            for response in predict_trace(model, scaler, config, frame):
                fh.write(json.dumps(response, sort_keys=True) + "\n")
                lines += 1
    return lines


def _handle_request(model, scaler, config, obj: dict) -> dict:
    samples = obj["samples"]
    if not samples:
        raise ValueError("empty samples")
    n = int(obj.get("n", config.n))
    if n < 1 or n > config.n:
        raise ValueError(f"horizon n={n} outside [1, {config.n}]")
    delta = float(obj.get("delta", config.delta_mbps))
    if len(samples) < config.m:
        # cold start: left-pad by repeating the earliest sample
        samples = [samples[0]] * (config.m - len(samples)) + list(samples)
    frame = frame_from_rows("request", samples, delta)
    response = predict_window(model, scaler, config, frame, len(frame) - 1, n=n)
    return response


def serve_stdio(checkpoint_dir, stdin=None, stdout=None) -> int:
    """Answer one JSON request per line until EOF; errors keep serving."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    model, scaler, config = load_checkpoint(checkpoint_dir)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            response = _handle_request(model, scaler, config, obj)
        except Exception as exc:  # malformed input must not kill the loop
            response = {"error": str(exc)}
        stdout.write(json.dumps(response, sort_keys=True) + "\n")
        stdout.flush()
    return 0
