"""Model and training configuration."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field


@dataclass
class ModelConfig:
    # window geometry
    m: int = 60  # lookback length fed to the encoder
    n: int = 15  # forecast horizon
    p: int = 15  # decoder context length (p <= m)
    delta_mbps: float = 2.5  # shift threshold used for labels

    # architecture
    d_model: int = 64
    n_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 1
    ff_dim: int = 128
    dropout: float = 0.1
    probsparse: bool = False  # sparse encoder self-attention

    # loss weights
    lambda_tp: float = 1.0
    lambda_shift: float = 1.0

    # training
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 8
    seed: int = 1

    def __post_init__(self):
        if not 1 <= self.p <= self.m:
            raise ValueError(f"need 1 <= p <= m, got p={self.p}, m={self.m}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.lambda_tp <= 0 or self.lambda_shift <= 0:
            raise ValueError("loss weights must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must divide evenly across heads")

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ModelConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(**json.load(fh))
