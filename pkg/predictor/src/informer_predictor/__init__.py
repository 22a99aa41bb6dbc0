"""Transformer-based uplink throughput and shift forecaster.

Trains on 1 Hz uplink CSV traces and serves forecasts over the
line-delimited JSON protocol (live on stdin/stdout, or precomputed into
prediction files) consumed by the streaming harness.
"""

from .config import ModelConfig
from .data import (
    FeatureWindow,
    Standardizer,
    TraceFrame,
    featurize,
    frame_from_rows,
    read_trace_csv,
    shift_labels,
)
from .infer import predict_batch, predict_trace, predict_window, serve_stdio
from .model import ThroughputShiftModel
from .train import (
    TrainingDiverged,
    TrainingReport,
    load_checkpoint,
    load_frames,
    save_checkpoint,
    split_frames,
    train,
)

__version__ = "0.1.0"
