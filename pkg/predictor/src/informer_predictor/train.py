"""Training loop and checkpoint handling.

Loss is ``lambda_tp * MSE(standardized throughput) + lambda_shift *
BCE(shift logits)`` with the positive class weighted by the train-set
negative/positive ratio, countering the rarity of shifts. Normalization
statistics come from the training traces only and are persisted next to
the weights. The checkpoint keeps the best validation loss.
"""

from __future__ import annotations

import math
import os
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .config import ModelConfig
from .data import (
    Standardizer,
    TraceFrame,
    WindowDataset,
    build_dataset,
    read_trace_csv,
)
from .model import ThroughputShiftModel

CONFIG_FILE = "config.json"
SCALER_FILE = "scaler.json"
WEIGHTS_FILE = "weights.pt"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_mae_mbps: float
    val_shift_f1: float


@dataclass
class TrainingReport:
    epochs: List[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    pos_weight: float = 1.0

    def as_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "pos_weight": self.pos_weight,
            "epochs": [vars(e) for e in self.epochs],
        }


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def split_frames(
    frames: Sequence[TraceFrame], seed: int, fractions=(0.7, 0.1, 0.2)
) -> Tuple[List[TraceFrame], List[TraceFrame], List[TraceFrame]]:
    """Shuffled split; floor sizes for train/validation, rest to test."""
    order = np.random.default_rng(seed).permutation(len(frames))
    shuffled = [frames[i] for i in order]
    n_train = int(math.floor(fractions[0] * len(frames)))
    n_val = int(math.floor(fractions[1] * len(frames)))
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


def _batches(dataset: WindowDataset, batch_size: int, generator: torch.Generator):
    order = torch.randperm(len(dataset), generator=generator).numpy()
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        yield (
            torch.from_numpy(dataset.enc_ov[idx]),
            torch.from_numpy(dataset.enc_time[idx]),
            torch.from_numpy(dataset.dec_ov[idx]),
            torch.from_numpy(dataset.dec_time[idx]),
            torch.from_numpy(dataset.target_tp[idx]),
            torch.from_numpy(dataset.target_shift[idx]),
        )


def _loss_terms(model, batch, bce, config):
    enc_ov, enc_time, dec_ov, dec_time, tgt_tp, tgt_shift = batch
    pred_tp, shift_logits = model(enc_ov, enc_time, dec_ov, dec_time)
    mse = torch.mean((pred_tp - tgt_tp) ** 2)
    shift_loss = bce(shift_logits, tgt_shift)
    return config.lambda_tp * mse + config.lambda_shift * shift_loss


@torch.no_grad()
def _evaluate(model, dataset, scaler, bce, config) -> Tuple[float, float, float]:
    model.eval()
    losses = []
    abs_err = []
    tp = fp = fn = 0
    generator = torch.Generator().manual_seed(0)
    for batch in _batches(dataset, config.batch_size, generator):
        enc_ov, enc_time, dec_ov, dec_time, tgt_tp, tgt_shift = batch
        pred_tp, shift_logits = model(enc_ov, enc_time, dec_ov, dec_time)
        mse = torch.mean((pred_tp - tgt_tp) ** 2)
        loss = config.lambda_tp * mse + config.lambda_shift * bce(shift_logits, tgt_shift)
        losses.append(loss.item())
        pred_mbps = scaler.inverse_throughput(pred_tp.numpy())
        true_mbps = scaler.inverse_throughput(tgt_tp.numpy())
        abs_err.append(np.abs(pred_mbps - true_mbps).mean())
        predicted = (torch.sigmoid(shift_logits) >= 0.5).float()
        tp += float(((predicted == 1) & (tgt_shift == 1)).sum())
        fp += float(((predicted == 1) & (tgt_shift == 0)).sum())
        fn += float(((predicted == 0) & (tgt_shift == 1)).sum())
    if tp == 0:
        f1 = 1.0 if fp == 0 and fn == 0 else 0.0
    else:
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        f1 = 2 * precision * recall / (precision + recall)
    model.train()
    return float(np.mean(losses)), float(np.mean(abs_err)), f1


def train(
    train_frames: Sequence[TraceFrame],
    val_frames: Sequence[TraceFrame],
    config: ModelConfig,
    checkpoint_dir,
) -> TrainingReport:
    seed_everything(config.seed)
    scaler = Standardizer.fit(train_frames)
    train_set = build_dataset(train_frames, config, scaler)
    val_set = build_dataset(val_frames, config, scaler)

    positives = float(train_set.target_shift.sum())
    negatives = float(train_set.target_shift.size - positives)
    pos_weight = negatives / max(positives, 1.0)
    bce = torch.nn.BCEWithLogitsLoss(pos_weight=torch.tensor(pos_weight))

    model = ThroughputShiftModel(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    generator = torch.Generator().manual_seed(config.seed)

    report = TrainingReport(pos_weight=pos_weight)
    os.makedirs(checkpoint_dir, exist_ok=True)
    best_val = math.inf
    for epoch in range(config.epochs):
        model.train()
        epoch_losses = []
        for batch in _batches(train_set, config.batch_size, generator):
            optimizer.zero_grad()
            loss = _loss_terms(model, batch, bce, config)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}: "
                    f"{loss.detach().item()!r} "
                    f"(lr={config.lr}, pos_weight={pos_weight:.2f})"
                )
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), 5.0)
            optimizer.step()
            epoch_losses.append(loss.detach().item())
        val_loss, val_mae, val_f1 = _evaluate(model, val_set, scaler, bce, config)
        report.epochs.append(
            EpochStats(
                epoch=epoch,
                train_loss=float(np.mean(epoch_losses)),
                val_loss=val_loss,
                val_mae_mbps=val_mae,
                val_shift_f1=val_f1,
            )
        )
        if val_loss < best_val:
            best_val = val_loss
            report.best_epoch = epoch
            save_checkpoint(checkpoint_dir, model, scaler, config)
    return report


def save_checkpoint(directory, model, scaler, config) -> None:
    config.save(os.path.join(directory, CONFIG_FILE))
    scaler.save(os.path.join(directory, SCALER_FILE))
    torch.save(model.state_dict(), os.path.join(directory, WEIGHTS_FILE))


def load_checkpoint(directory) -> Tuple[ThroughputShiftModel, Standardizer, ModelConfig]:
    config = ModelConfig.load(os.path.join(directory, CONFIG_FILE))
    scaler = Standardizer.load(os.path.join(directory, SCALER_FILE))
    model = ThroughputShiftModel(config)
    state = torch.load(os.path.join(directory, WEIGHTS_FILE), weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model, scaler, config


def load_frames(paths: Sequence, delta: float) -> List[TraceFrame]:
    return [read_trace_csv(path, delta) for path in paths]
