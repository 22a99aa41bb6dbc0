"""Encoder-decoder forecaster with throughput and shift heads.

The decoder emits all horizon steps in one forward pass (generative
decoding, no step-by-step recursion). Both prediction heads are linear
layers attached directly to the decoder output, so either head can be
ablated without touching the other's graph.

Encoder self-attention is dense by default; the sampled sparse variant
(top queries measured by a max-minus-mean score attend fully, the rest
fall back to the mean value vector) sits behind ``config.probsparse``.
Sequence lengths here are small enough that dense is the sensible
default.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from .config import ModelConfig
from .data import OV_DIM


class PositionalEncoding(nn.Module):
    def __init__(self, d_model: int, max_len: int = 512):
        super().__init__()
        position = torch.arange(max_len).unsqueeze(1)
        div = torch.exp(
            torch.arange(0, d_model, 2) * (-math.log(10000.0) / d_model)
        )
        pe = torch.zeros(max_len, d_model)
        pe[:, 0::2] = torch.sin(position * div)
        pe[:, 1::2] = torch.cos(position * div)
        self.register_buffer("pe", pe)

    def forward(self, length: int) -> torch.Tensor:
        return self.pe[:length]


class InputEmbedding(nn.Module):
    """Sum of OV projection, date/handover embeddings, and position."""

    def __init__(self, d_model: int, dropout: float):
        super().__init__()
        self.ov_proj = nn.Linear(OV_DIM, d_model)
        self.hour = nn.Embedding(24, d_model)
        self.dow = nn.Embedding(7, d_model)
        self.handover = nn.Embedding(15, d_model)
        self.position = PositionalEncoding(d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, ov: torch.Tensor, time_feats: torch.Tensor) -> torch.Tensor:
        x = (
            self.ov_proj(ov)
            + self.hour(time_feats[..., 0])
            + self.dow(time_feats[..., 1])
            + self.handover(time_feats[..., 2])
            + self.position(ov.shape[1])
        )
        return self.dropout(x)


class ProbSparseSelfAttention(nn.Module):
    """Sampled sparse self-attention for the encoder.

    Queries are scored by max(q.K) - mean(q.K) over a sampled key subset;
    the top-u queries attend over all keys, the rest emit the mean of V.
    """

    def __init__(self, d_model: int, n_heads: int, dropout: float, factor: int = 5):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.factor = factor
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, length, _ = x.shape
        h, d = self.n_heads, self.d_head
        q = self.q_proj(x).view(batch, length, h, d).transpose(1, 2)
        k = self.k_proj(x).view(batch, length, h, d).transpose(1, 2)
        v = self.v_proj(x).view(batch, length, h, d).transpose(1, 2)

        u = max(1, min(length, int(self.factor * math.ceil(math.log(length + 1)))))
        sample = max(1, min(length, int(self.factor * math.ceil(math.log(length + 1)))))
        idx = torch.randint(0, length, (sample,), device=x.device)
        k_sample = k[:, :, idx, :]
        scores_sample = q @ k_sample.transpose(-2, -1) / math.sqrt(d)
        sparsity = scores_sample.max(dim=-1).values - scores_sample.mean(dim=-1)
        top = sparsity.topk(u, dim=-1).indices  # [batch, h, u]

        context = v.mean(dim=2, keepdim=True).expand(batch, h, length, d).clone()
        q_top = q.gather(2, top.unsqueeze(-1).expand(batch, h, u, d))
        scores = q_top @ k.transpose(-2, -1) / math.sqrt(d)
        attended = self.dropout(torch.softmax(scores, dim=-1)) @ v
        context.scatter_(2, top.unsqueeze(-1).expand(batch, h, u, d), attended)
        out = context.transpose(1, 2).reshape(batch, length, h * d)
        return self.out_proj(out)


class EncoderLayer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        if config.probsparse:
            self.attn = ProbSparseSelfAttention(
                config.d_model, config.n_heads, config.dropout
            )
            self._dense = False
        else:
            self.attn = nn.MultiheadAttention(
                config.d_model, config.n_heads, dropout=config.dropout,
                batch_first=True,
            )
            self._dense = True
        self.ff = nn.Sequential(
            nn.Linear(config.d_model, config.ff_dim),
            nn.GELU(),
            nn.Dropout(config.dropout),
            nn.Linear(config.ff_dim, config.d_model),
        )
        self.norm1 = nn.LayerNorm(config.d_model)
        self.norm2 = nn.LayerNorm(config.d_model)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self._dense:
            attended, _ = self.attn(x, x, x, need_weights=False)
        else:
            attended = self.attn(x)
        x = self.norm1(x + self.dropout(attended))
        return self.norm2(x + self.dropout(self.ff(x)))


class DecoderLayer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.self_attn = nn.MultiheadAttention(
            config.d_model, config.n_heads, dropout=config.dropout, batch_first=True
        )
        self.cross_attn = nn.MultiheadAttention(
            config.d_model, config.n_heads, dropout=config.dropout, batch_first=True
        )
        self.ff = nn.Sequential(
            nn.Linear(config.d_model, config.ff_dim),
            nn.GELU(),
            nn.Dropout(config.dropout),
            nn.Linear(config.ff_dim, config.d_model),
        )
        self.norm1 = nn.LayerNorm(config.d_model)
        self.norm2 = nn.LayerNorm(config.d_model)
        self.norm3 = nn.LayerNorm(config.d_model)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        length = x.shape[1]
        causal = torch.triu(
            torch.ones(length, length, device=x.device, dtype=torch.bool), diagonal=1
        )
        attended, _ = self.self_attn(x, x, x, attn_mask=causal, need_weights=False)
        x = self.norm1(x + self.dropout(attended))
        crossed, _ = self.cross_attn(x, memory, memory, need_weights=False)
        x = self.norm2(x + self.dropout(crossed))
        return self.norm3(x + self.dropout(self.ff(x)))


class ThroughputShiftModel(nn.Module):
    """Forecasts n throughput values and n shift logits in one pass."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.enc_embed = InputEmbedding(config.d_model, config.dropout)
        self.dec_embed = InputEmbedding(config.d_model, config.dropout)
        self.encoder = nn.ModuleList(
            EncoderLayer(config) for _ in range(config.encoder_layers)
        )
        self.decoder = nn.ModuleList(
            DecoderLayer(config) for _ in range(config.decoder_layers)
        )
        self.throughput_head = nn.Linear(config.d_model, 1)
        self.shift_head = nn.Linear(config.d_model, 1)

    def forward(
        self,
        enc_ov: torch.Tensor,
        enc_time: torch.Tensor,
        dec_ov: torch.Tensor,
        dec_time: torch.Tensor,
        n: int | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        n = n if n is not None else self.config.n
        if n > dec_ov.shape[1] - self.config.p:
            raise ValueError(
                f"requested horizon {n} exceeds decoder input "
                f"({dec_ov.shape[1] - self.config.p})"
            )
        memory = self.enc_embed(enc_ov, enc_time)
        for layer in self.encoder:
            memory = layer(memory)
        x = self.dec_embed(dec_ov, dec_time)
        for layer in self.decoder:
            x = layer(x, memory)
        horizon = x[:, self.config.p : self.config.p + n]
        throughput = self.throughput_head(horizon).squeeze(-1)
        shift_logits = self.shift_head(horizon).squeeze(-1)
        return throughput, shift_logits
