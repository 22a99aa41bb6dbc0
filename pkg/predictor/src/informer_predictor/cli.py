"""Command line: train, predict-batch, serve."""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from typing import List, Optional, Sequence

from .config import ModelConfig
from .infer import predict_batch, serve_stdio
from .train import TrainingDiverged, load_frames, split_frames, train


def _trace_paths(spec: str) -> List[str]:
    if os.path.isdir(spec):
        paths = sorted(glob.glob(os.path.join(spec, "*.csv")))
    else:
        paths = sorted(glob.glob(spec))
    if not paths:
        raise SystemExit(f"error: no traces match {spec!r}")
    return paths


def _config_from_args(args) -> ModelConfig:
    kwargs = {}
    for name in (
        "m", "n", "p", "d_model", "n_heads", "encoder_layers", "decoder_layers",
        "dropout", "lambda_tp", "lambda_shift", "lr", "batch_size", "epochs",
        "seed",
    ):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    if getattr(args, "delta", None) is not None:
        kwargs["delta_mbps"] = args.delta
    if getattr(args, "probsparse", False):
        kwargs["probsparse"] = True
    return ModelConfig(**kwargs)


def cmd_train(args) -> int:
    config = _config_from_args(args)
    paths = _trace_paths(args.traces)
    frames = load_frames(paths, config.delta_mbps)
    if args.split is not None:
        with open(args.split, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        by_id = {f.trace_id: f for f in frames}
        train_frames = [by_id[t] for t in manifest["train"]]
        val_frames = [by_id[t] for t in manifest["validation"]]
    else:
        train_frames, val_frames, _test = split_frames(frames, config.seed)
    if not train_frames or not val_frames:
        raise SystemExit("error: empty train or validation split")
    try:
        report = train(train_frames, val_frames, config, args.checkpoint)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    report_path = os.path.join(args.checkpoint, "training_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    last = report.epochs[-1]
    print(
        f"trained {len(report.epochs)} epochs on {len(train_frames)} traces; "
        f"best epoch {report.best_epoch}; final val MAE "
        f"{last.val_mae_mbps:.3f} Mbps, val shift F1 {last.val_shift_f1:.3f}"
    )
    return 0


def cmd_predict_batch(args) -> int:
    paths = _trace_paths(args.traces)
    lines = predict_batch(args.checkpoint, paths, args.out, delta=args.delta)
    print(f"wrote {lines} predictions for {len(paths)} traces to {args.out}")
    return 0


def cmd_serve(args) -> int:
    return serve_stdio(args.checkpoint)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="informer-predictor",
        description="Throughput and shift forecaster for 1 Hz uplink traces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a model on a trace directory")
    t.add_argument("--traces", required=True, help="trace dir or glob")
    t.add_argument("--checkpoint", required=True, help="output directory")
    t.add_argument("--split", default=None, help="JSON with train/validation ids")
    t.add_argument("--m", type=int, default=None)
    t.add_argument("--n", type=int, default=None)
    t.add_argument("--p", type=int, default=None)
    t.add_argument("--delta", type=float, default=None)
    t.add_argument("--d-model", dest="d_model", type=int, default=None)
    t.add_argument("--n-heads", dest="n_heads", type=int, default=None)
    t.add_argument("--encoder-layers", dest="encoder_layers", type=int, default=None)
    t.add_argument("--decoder-layers", dest="decoder_layers", type=int, default=None)
    t.add_argument("--dropout", type=float, default=None)
    t.add_argument("--lambda-tp", dest="lambda_tp", type=float, default=None)
    t.add_argument("--lambda-shift", dest="lambda_shift", type=float, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--probsparse", action="store_true")
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("predict-batch", help="precompute a prediction file")
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--traces", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--delta", type=float, default=None)
    b.set_defaults(func=cmd_predict_batch)

    s = sub.add_parser("serve", help="answer requests on stdin (one JSON per line)")
    s.add_argument("--checkpoint", required=True)
    s.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
