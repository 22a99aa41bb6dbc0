"""Uplink throughput predictors and the prediction metric suite.

A predictor maps the last ``m`` one-second observations to ``n`` future
throughputs plus a binary shift indicator per step. Two history-based
baselines (harmonic mean, moving average) live here; learned predictors
attach through an external bridge speaking newline-delimited JSON, either
live over a subprocess pipe or replayed from a precomputed prediction
file.

Baseline predictors are pure and thread-safe. The external bridge
serializes requests per endpoint: one in-flight request at a time.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import (
    ExternalPredictorError,
    PredictionCoverageError,
    ProtocolError,
)
from .traces import DEFAULT_DELTA_MBPS, NetworkSample, annotate_shifts

HM_FLOOR_MBPS = 0.01  # harmonic mean is undefined at zero throughput
MAPE_EPSILON_MBPS = 0.1
DEFAULT_WINDOW = 5
DEFAULT_LOOKBACK = 60
DEFAULT_LOOKAHEAD = 15
DEFAULT_CONTEXT = 15
EXTERNAL_TIMEOUT_S = 1.0


@dataclass(frozen=True)
class PredictionRequest:
    """Inputs of one forecast: lookback samples and horizon geometry."""

    lookback: Tuple[NetworkSample, ...]
    n: int = DEFAULT_LOOKAHEAD
    p: int = DEFAULT_CONTEXT
    delta: float = DEFAULT_DELTA_MBPS

    def __post_init__(self):
        if not self.lookback:
            raise ValueError("lookback must be non-empty")
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 1 <= self.p <= self.m:
            raise ValueError(f"need 1 <= p <= m, got p={self.p}, m={self.m}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")

    @property
    def m(self) -> int:
        return len(self.lookback)

    @property
    def last_observed(self) -> float:
        return self.lookback[-1].throughput

    def to_wire(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "p": self.p,
            "delta": self.delta,
            "samples": [
                {
                    "t": s.timestamp,
                    "wall_clock": s.wall_clock.isoformat(),
                    "throughput": s.throughput,
                    "retransmits": s.retransmits,
                    "cwnd": s.cwnd,
                    "srtt": s.srtt,
                    "rtt_var": s.rtt_var,
                    "shift": s.shift,
                }
                for s in self.lookback
            ],
        }


@dataclass(frozen=True)
class PredictionResult:
    """``n`` future throughputs plus per-step binary shift indicators."""

    throughputs: Tuple[float, ...]
    shifts: Tuple[int, ...]
    shift_probabilities: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if len(self.shifts) != len(self.throughputs):
            raise ProtocolError(
                f"{len(self.throughputs)} throughputs but "
                f"{len(self.shifts)} shifts"
            )
        if any(v < 0 for v in self.throughputs):
            raise ProtocolError("negative predicted throughput")
        if any(s not in (0, 1) for s in self.shifts):
            raise ProtocolError("shift indicators must be 0 or 1")
        if self.shift_probabilities is not None:
            if len(self.shift_probabilities) != len(self.throughputs):
                raise ProtocolError("probabilities length mismatch")
            if any(not 0.0 <= v <= 1.0 for v in self.shift_probabilities):
                raise ProtocolError("probabilities outside [0, 1]")


def derive_shifts_from_throughput(
    predicted: Sequence[float], last_observed: float, delta: float
) -> List[int]:
    """Difference a predicted series into shift indicators.

    The first step is compared against the last observation, later steps
    against their predicted predecessor, with the same strict
    ``|difference| > delta`` rule used for trace annotation.
    """
    return annotate_shifts([last_observed, *predicted], delta)[1:]


def _tail(values: Sequence[float], window: int) -> List[float]:
    # Cold start: shorter history than the window uses what is available.
    return list(values[-window:]) if window < len(values) else list(values)


def harmonic_mean(values: Sequence[float]) -> float:
    floored = [max(v, HM_FLOOR_MBPS) for v in values]
    return len(floored) / sum(1.0 / v for v in floored)


def predict_hm(req: PredictionRequest, window: int = DEFAULT_WINDOW) -> PredictionResult:
    """Flat forecast at the harmonic mean of the recent lookback."""
    tail = _tail([s.throughput for s in req.lookback], window)
    value = harmonic_mean(tail)
    throughputs = tuple([value] * req.n)
    shifts = tuple(derive_shifts_from_throughput(throughputs, req.last_observed, req.delta))
    return PredictionResult(throughputs=throughputs, shifts=shifts)


def predict_ma(req: PredictionRequest, window: int = DEFAULT_WINDOW) -> PredictionResult:
    """Flat forecast at the arithmetic mean of the recent lookback."""
    tail = _tail([s.throughput for s in req.lookback], window)
    value = sum(tail) / len(tail)
    throughputs = tuple([value] * req.n)
    shifts = tuple(derive_shifts_from_throughput(throughputs, req.last_observed, req.delta))
    return PredictionResult(throughputs=throughputs, shifts=shifts)


class Predictor:
    """Uniform predictor interface used by the controller and the CLI."""

    name = "predictor"

    def predict(self, req: PredictionRequest) -> PredictionResult:
        raise NotImplementedError

    def bind_trace(self, trace) -> "Predictor":
        """Return a view scoped to one trace (file/oracle backends)."""
        return self

    def close(self) -> None:
        pass


class HarmonicMeanPredictor(Predictor):
    def __init__(self, window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.name = "hm"

    def predict(self, req: PredictionRequest) -> PredictionResult:
        return predict_hm(req, self.window)


class MovingAveragePredictor(Predictor):
    def __init__(self, window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self.name = "ma"

    def predict(self, req: PredictionRequest) -> PredictionResult:
        return predict_ma(req, self.window)


class OraclePredictor(Predictor):
    """Replays the true future of a trace; for evaluation plumbing only."""

    def __init__(self, trace=None):
        self.trace = trace
        self.name = "oracle"

    def bind_trace(self, trace) -> "OraclePredictor":
        return OraclePredictor(trace)

    def predict(self, req: PredictionRequest) -> PredictionResult:
        if self.trace is None:
            raise ExternalPredictorError("oracle predictor is unbound")
        start = req.lookback[-1].timestamp + 1
        future = []
        for i in range(req.n):
            idx = min(start + i, len(self.trace.samples) - 1)
            future.append(self.trace.samples[idx].throughput)
        shifts = derive_shifts_from_throughput(future, req.last_observed, req.delta)
        return PredictionResult(tuple(future), tuple(shifts))


def parse_prediction_payload(obj: dict, n: int) -> PredictionResult:
    """Validate one wire response against the result invariants."""
    if "error" in obj:
        raise ExternalPredictorError(f"endpoint error: {obj['error']}")
    try:
        throughputs = tuple(float(v) for v in obj["throughputs"])
        shifts = tuple(int(v) for v in obj["shifts"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed response: {exc}") from exc
    probabilities = None
    if obj.get("probabilities") is not None:
        try:
            probabilities = tuple(float(v) for v in obj["probabilities"])
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed probabilities: {exc}") from exc
    if len(throughputs) != n:
        raise ProtocolError(
            f"expected {n} predicted steps, got {len(throughputs)}"
        )
    return PredictionResult(throughputs, shifts, probabilities)


class FilePredictor(Predictor):
    """Replays responses precomputed offline into a JSONL prediction file.

    Every line holds one response keyed by the timestamp of the last
    lookback sample: ``{"t": ..., "throughputs": [...], "shifts": [...],
    "probabilities": [...]?, "trace_id": ...?}``.
    """

    def __init__(self, path, trace_id: Optional[str] = None):
        self.path = path
        self.trace_id = trace_id
        self.name = "file"
        self._by_key: Dict[Tuple[Optional[str], int], dict] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    obj = json.loads(raw)
                    key = (obj.get("trace_id"), int(obj["t"]))
                except (KeyError, TypeError, ValueError) as exc:
                    raise ProtocolError(
                        f"{path}:{lineno}: bad prediction line: {exc}"
                    ) from exc
                self._by_key[key] = obj

    def for_trace(self, trace_id: str) -> "FilePredictor":
        clone = object.__new__(FilePredictor)
        clone.path = self.path
        clone.trace_id = trace_id
        clone.name = self.name
        clone._by_key = self._by_key
        return clone

    def bind_trace(self, trace) -> "FilePredictor":
        return self.for_trace(trace.trace_id)

    def predict(self, req: PredictionRequest) -> PredictionResult:
        t = req.lookback[-1].timestamp
        obj = self._by_key.get((self.trace_id, t))
        if obj is None:
            obj = self._by_key.get((None, t))
        if obj is None:
            raise PredictionCoverageError(
                f"{self.path}: no prediction for trace "
                f"{self.trace_id!r} at t={t}"
            )
        return parse_prediction_payload(obj, req.n)


class SubprocessPredictor(Predictor):
    """Live bridge to an external predictor over a line-delimited pipe.

    The child reads one request JSON per line on stdin and answers one
    response JSON per line on stdout. Requests are serialized under a
    lock; a response that does not arrive within the timeout marks the
    endpoint dead and raises, and the caller is expected to fall back to
    the harmonic-mean predictor.
    """

    def __init__(self, command: str, timeout_s: float = EXTERNAL_TIMEOUT_S):
        self.command = command
        self.timeout_s = timeout_s
        self.name = "external"
        self._lock = threading.Lock()
        self._proc: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._reader: Optional[threading.Thread] = None
        # responses that timed out but will still arrive, in order; they
        # must be drained so later requests read their own answers
        self._stale = 0

    def _ensure_started(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            return
        try:
            self._proc = subprocess.Popen(
                shlex.split(self.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ExternalPredictorError(
                f"cannot start endpoint {self.command!r}: {exc}"
            ) from exc
        self._lines = queue.Queue()
        self._stale = 0
        self._reader = threading.Thread(
            target=self._pump, args=(self._proc,), daemon=True
        )
        self._reader.start()

    def _pump(self, proc: subprocess.Popen) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _next_line(self, deadline: float) -> str:
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self._stale += 1
                raise ExternalPredictorError(
                    f"endpoint timed out after {self.timeout_s} s"
                )
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                self._stale += 1
                raise ExternalPredictorError(
                    f"endpoint timed out after {self.timeout_s} s"
                ) from None
            if line is None:
                raise ExternalPredictorError("endpoint closed its output")
            if self._stale:
                self._stale -= 1
                continue
            return line

    def predict(self, req: PredictionRequest) -> PredictionResult:
        with self._lock:
            self._ensure_started()
            assert self._proc is not None and self._proc.stdin is not None
            try:
                self._proc.stdin.write(json.dumps(req.to_wire()) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ExternalPredictorError(f"endpoint pipe broken: {exc}") from exc
            line = self._next_line(time.monotonic() + self.timeout_s)
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"response is not JSON: {exc}") from exc
            return parse_prediction_payload(obj, req.n)

    def close(self) -> None:
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                try:
                    if self._proc.stdin is not None:
                        self._proc.stdin.close()
                    self._proc.wait(timeout=2.0)
                except (OSError, subprocess.TimeoutExpired):
                    self._proc.kill()
            self._proc = None


def make_predictor(spec: str, trace=None, timeout_s: Optional[float] = None) -> Predictor:
    """Build a predictor from a compact spec string.

    Accepted forms: ``hm``, ``hm:8``, ``ma``, ``ma:5``, ``oracle``,
    ``file:path.jsonl``, ``cmd:python -m some.module serve ...``.
    ``timeout_s`` overrides the 1 s response deadline of ``cmd`` bridges
    (useful when the endpoint has a slow interpreter startup).
    """
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "hm":
        return HarmonicMeanPredictor(int(rest) if rest else DEFAULT_WINDOW)
    if kind == "ma":
        return MovingAveragePredictor(int(rest) if rest else DEFAULT_WINDOW)
    if kind == "oracle":
        return OraclePredictor(trace)
    if kind == "file":
        if not rest:
            raise ValueError("file predictor needs a path, e.g. file:preds.jsonl")
        return FilePredictor(rest)
    if kind == "cmd":
        if not rest:
            raise ValueError("cmd predictor needs a command line")
        return SubprocessPredictor(
            rest, timeout_s=timeout_s if timeout_s is not None else EXTERNAL_TIMEOUT_S
        )
    raise ValueError(f"unknown predictor spec {spec!r}")


@dataclass(frozen=True)
class PredictorMetrics:
    """Throughput regression metrics plus shift classification metrics."""

    mae: float
    rmse: float
    mape_pct: float
    r2: float
    shift_accuracy: float
    shift_f1: float
    count: int

    def as_dict(self) -> dict:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "mape_pct": self.mape_pct,
            "r2": self.r2,
            "shift_accuracy": self.shift_accuracy,
            "shift_f1": self.shift_f1,
            "count": self.count,
        }


def eval_predictor(
    pred_series: Sequence[float],
    true_series: Sequence[float],
    pred_shifts: Sequence[int],
    true_shifts: Sequence[int],
) -> PredictorMetrics:
    """Score a predicted series against the truth.

    MAPE floors the denominator at 0.1 Mbps because the measured uplink
    can touch zero. R-squared is NaN when the truth has zero variance.
    Shift F1 treats 1 as the positive class; a window with no positives
    anywhere (TP = FP = FN = 0) scores 1.0.
    """
    if len(pred_series) != len(true_series):
        raise ValueError("series length mismatch")
    if len(pred_shifts) != len(true_shifts):
        raise ValueError("shift length mismatch")
    n = len(true_series)
    if n == 0:
        raise ValueError("empty series")

    abs_err = [abs(p - t) for p, t in zip(pred_series, true_series)]
    sq_err = [(p - t) ** 2 for p, t in zip(pred_series, true_series)]
    mae = sum(abs_err) / n
    rmse = math.sqrt(sum(sq_err) / n)
    mape = (
        sum(e / max(abs(t), MAPE_EPSILON_MBPS) for e, t in zip(abs_err, true_series))
        / n
        * 100.0
    )
    mean_true = sum(true_series) / n
    sst = sum((t - mean_true) ** 2 for t in true_series)
    sse = sum(sq_err)
    r2 = 1.0 - sse / sst if sst > 0 else float("nan")

    tp = fp = fn = correct = 0
    for p, t in zip(pred_shifts, true_shifts):
        if p == t:
            correct += 1
        if p == 1 and t == 1:
            tp += 1
        elif p == 1 and t == 0:
            fp += 1
        elif p == 0 and t == 1:
            fn += 1
    accuracy = correct / len(true_shifts) if true_shifts else 1.0
    if tp == 0 and fp == 0 and fn == 0:
        f1 = 1.0
    elif tp == 0:
        f1 = 0.0
    else:
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        f1 = 2 * precision * recall / (precision + recall)
    return PredictorMetrics(
        mae=mae,
        rmse=rmse,
        mape_pct=mape,
        r2=r2,
        shift_accuracy=accuracy,
        shift_f1=f1,
        count=n,
    )


@dataclass
class SlidingEvalResult:
    predictor: str
    metrics: PredictorMetrics
    windows: int


def evaluate_on_traces(
    predictor: Predictor,
    traces: Sequence,
    m: int = DEFAULT_LOOKBACK,
    n: int = DEFAULT_LOOKAHEAD,
    p: int = DEFAULT_CONTEXT,
    delta: float = DEFAULT_DELTA_MBPS,
) -> SlidingEvalResult:
    """Sliding-window evaluation at every valid decision timestamp.

    Predictions and truths from all windows of all traces are pooled
    before computing the metric suite.
    """
    all_pred: List[float] = []
    all_true: List[float] = []
    all_pred_shift: List[int] = []
    all_true_shift: List[int] = []
    windows = 0
    for trace in traces:
        trace.require_length(m + n)
        backend = predictor.bind_trace(trace)
        samples = trace.samples
        for t in range(m - 1, len(samples) - n):
            lookback = samples[t - m + 1 : t + 1]
            req = PredictionRequest(lookback=tuple(lookback), n=n, p=p, delta=delta)
            result = backend.predict(req)
            future = samples[t + 1 : t + 1 + n]
            all_pred.extend(result.throughputs)
            all_true.extend(s.throughput for s in future)
            all_pred_shift.extend(result.shifts)
            all_true_shift.extend(s.shift for s in future)
            windows += 1
    metrics = eval_predictor(all_pred, all_true, all_pred_shift, all_true_shift)
    return SlidingEvalResult(predictor=predictor.name, metrics=metrics, windows=windows)
