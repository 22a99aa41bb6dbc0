import math
import os
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from informer_predictor import ModelConfig, train
from informer_predictor.train import load_frames

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)
HEADER = "timestamp,wall_clock,throughput_mbps,retransmits,cwnd_bytes,srtt_ms,rtt_var_ms"


def write_trace_csv(path, throughputs, start=EPOCH):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(HEADER + "\n")
        for t, mbps in enumerate(throughputs):
            wall = (start + timedelta(seconds=t)).isoformat()
            fh.write(f"{t},{wall},{mbps!r},1,200000,42.0,5.0\n")
    return path


def square_wave(duration, high=9.0, low=3.0, noise=0.25, seed=0, period=15):
    rng = np.random.default_rng(seed)
    out = []
    for t in range(duration):
        level = high if (t // period) % 2 == 0 else low
        out.append(max(0.0, level + float(rng.normal(0.0, noise))))
    return out


TINY_CONFIG = dict(
    m=20, n=5, p=5, d_model=16, n_heads=2, encoder_layers=1, decoder_layers=1,
    ff_dim=32, dropout=0.0, epochs=2, batch_size=64, seed=1,
)


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A small model trained for two epochs on four short square waves."""
    root = tmp_path_factory.mktemp("tiny")
    traces = root / "traces"
    traces.mkdir()
    for i in range(4):
        write_trace_csv(traces / f"sq-{i}.csv", square_wave(120, seed=i))
    config = ModelConfig(**TINY_CONFIG)
    frames = load_frames(sorted(traces.glob("*.csv")), config.delta_mbps)
    ckpt = root / "ckpt"
    report = train(frames[:3], frames[3:], config, ckpt)
    return {"dir": ckpt, "config": config, "report": report, "traces": traces}


@pytest.fixture(scope="session")
def wire_checkpoint(tmp_path_factory):
    """Small model with the default wire geometry (m=60, n=15, p=15)."""
    root = tmp_path_factory.mktemp("wire")
    traces = root / "traces"
    traces.mkdir()
    for i in range(4):
        write_trace_csv(traces / f"sq-{i}.csv", square_wave(160, seed=10 + i))
    config = ModelConfig(
        d_model=16, n_heads=2, encoder_layers=1, decoder_layers=1, ff_dim=32,
        dropout=0.0, epochs=1, batch_size=64, seed=2,
    )
    frames = load_frames(sorted(traces.glob("*.csv")), config.delta_mbps)
    ckpt = root / "ckpt"
    train(frames[:3], frames[3:], config, ckpt)
    return {"dir": ckpt, "config": config}
