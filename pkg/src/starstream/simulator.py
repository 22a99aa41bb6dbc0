"""Trace-driven replay of the capture-encode-transmit-decode-infer pipeline.

Two fidelity levels share the same client model (sequential per-frame
encode and transmit, waits when the pipeline outruns capture):

* event fidelity transmits every frame against the piecewise-constant
  throughput trace and runs single-server decode and inference queues at
  the recorded per-frame delays;
* analytic fidelity collapses each GOP into the closed recurrence
  ``t_k = t_{k-1} + sum(e_j) + sum(d_j)/mean_rate + wait`` and models the
  server tail with mean per-frame delays. It is the model the optimizer
  uses for lookahead, and is exact against event fidelity on
  constant-rate traces with zero server delays.

A session is a single deterministic event loop; independent sessions
share no mutable state and can run in parallel.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

from .errors import StallError, TraceValidationError
from .traces import EncodingConfig, NetworkTrace, VideoTraceSet, VideoUnitRecord

STALL_CAP_S = 120.0
DEFAULT_STREAM_OFFSET_S = 60
ANALYTIC_FIXED_POINT_ITERS = 25
ANALYTIC_FIXED_POINT_TOL = 1e-9


class ThroughputIntegrator:
    """Piecewise-constant throughput function of a 1 Hz trace.

    Session time 0 maps to trace second ``offset_s``; the final sample's
    rate extends past the trace end. Cumulative-capacity prefix sums make
    both the integral and the transmit-time solution O(log n). Tracks the
    total busy integral for conservation checks.
    """

    def __init__(self, trace: NetworkTrace, offset_s: int = 0, stall_cap_s: float = STALL_CAP_S):
        if not trace.samples:
            raise TraceValidationError("empty trace")
        self._rates = [s.throughput for s in trace.samples]
        self.offset_s = offset_s
        self.stall_cap_s = stall_cap_s
        self.cursor = 0.0
        self.busy_bits = 0.0
        # cum[i] = megabits deliverable over trace seconds [0, i)
        cum = [0.0]
        for rate in self._rates:
            cum.append(cum[-1] + rate)
        self._cum = cum
        # maximal zero-rate runs longer than the stall cap, in trace time
        self._dead_spans: List[Tuple[float, float]] = []
        run_start = None
        for i, rate in enumerate(self._rates):
            if rate <= 0.0 and run_start is None:
                run_start = i
            elif rate > 0.0 and run_start is not None:
                if i - run_start > stall_cap_s:
                    self._dead_spans.append((float(run_start), float(i)))
                run_start = None
        if run_start is not None:
            self._dead_spans.append((float(run_start), math.inf))
        if self._rates[-1] <= 0.0 and not (
            self._dead_spans and math.isinf(self._dead_spans[-1][1])
        ):
            self._dead_spans.append((float(len(self._rates)), math.inf))

    def rate_at(self, session_time: float) -> float:
        idx = int(math.floor(session_time)) + self.offset_s
        if idx < 0:
            idx = 0
        if idx >= len(self._rates):
            idx = len(self._rates) - 1
        return self._rates[idx]

    def _capacity_to(self, trace_time: float) -> float:
        """Megabits deliverable over trace time [0, trace_time)."""
        if trace_time <= 0.0:
            return 0.0
        n = len(self._rates)
        if trace_time >= n:
            return self._cum[n] + (trace_time - n) * self._rates[-1]
        whole = int(math.floor(trace_time))
        return self._cum[whole] + (trace_time - whole) * self._rates[whole]

    def integral(self, start: float, end: float) -> float:
        """Megabits deliverable over [start, end] of session time."""
        if end <= start:
            return 0.0
        return self._capacity_to(end + self.offset_s) - self._capacity_to(
            start + self.offset_s
        )

    def mean_rate(self, start: float, end: float) -> float:
        if end <= start:
            return self.rate_at(start)
        return self.integral(start, end) / (end - start)

    def _solve_capacity(self, target: float) -> float:
        """Earliest trace time where cumulative capacity reaches target."""
        n = len(self._rates)
        if target > self._cum[n]:
            tail_rate = self._rates[-1]
            if tail_rate <= 0.0:
                return math.inf
            return n + (target - self._cum[n]) / (tail_rate * 1.0)
        lo = bisect.bisect_left(self._cum, target)
        idx = max(0, lo - 1)
        if self._cum[idx] >= target:  # zero-rate plateau; earliest point
            return float(idx)
        return idx + (target - self._cum[idx]) / self._rates[idx]

    def transmit(self, start_time: float, bits: float) -> float:
        """Exact finish time of sending ``bits`` starting at ``start_time``."""
        if bits < 0:
            raise ValueError("bits must be non-negative")
        if bits == 0:
            return start_time
        tau0 = max(0.0, start_time + self.offset_s)
        target = self._capacity_to(tau0) + bits / 1e6
        tau1 = self._solve_capacity(target)
        for dead_start, dead_end in self._dead_spans:
            if dead_start >= tau1:
                break
            stalled_for = min(tau1, dead_end) - max(tau0, dead_start)
            if stalled_for > self.stall_cap_s:
                raise StallError(
                    f"no throughput for over {self.stall_cap_s} s "
                    f"(transmission started at t={start_time:.3f})",
                    sim_time=max(tau0, dead_start) - self.offset_s,
                )
        finish = tau1 - self.offset_s
        self.busy_bits += bits
        self.cursor = max(self.cursor, finish)
        return finish


@dataclass
class PipelineState:
    """Client-side recurrence state between GOPs."""

    t: float = 0.0  # wall time the previous GOP finished transmitting
    content_start: float = 0.0  # content seconds already consumed
    q: float = 0.0  # camera buffer backlog, seconds


def simulate_gop_analytic(
    state: PipelineState,
    frame_rate: int,
    gop_length: float,
    encode_delays: Sequence[float],
    frame_sizes_bits: Sequence[float],
    mean_throughput_mbps: float,
) -> Tuple[float, float, float]:
    """One GOP of the analytic recurrence at a constant mean rate.

    Frames are handled in capture order; each becomes ready at
    ``max(pipeline free time, capture time)``, the wait total is the sum
    of the positive gaps, and the camera buffer follows
    ``Q_k = max(0, Q_{k-1} + (t_k - t_{k-1}) - L_k)``.

    Returns ``(t_k, q_k, wait)``.
    """
    if mean_throughput_mbps <= 0:
        raise StallError("mean throughput must be positive", sim_time=state.t)
    free = state.t
    wait = 0.0
    rate_bps = mean_throughput_mbps * 1e6
    for j, (enc, bits) in enumerate(zip(encode_delays, frame_sizes_bits)):
        capture = state.content_start + j / frame_rate
        if capture > free:
            wait += capture - free
            free = capture
        free += enc + bits / rate_bps
    t_k = free
    q_k = max(0.0, state.q + (t_k - state.t) - gop_length)
    return t_k, q_k, wait


def gop_transition_uniform(
    t_prev: float,
    content_start: float,
    q_prev: float,
    n_frames: int,
    frame_rate: int,
    encode_delay: float,
    frame_bits: float,
    mean_throughput_mbps: float,
    gop_length: float,
) -> Tuple[float, float, float]:
    """Closed form of :func:`simulate_gop_analytic` for uniform frames.

    With a constant per-frame service time the recurrence's maximum is
    attained at an endpoint, so the finish time is the max of the
    backlog-limited and capture-limited completion times.
    """
    if mean_throughput_mbps <= 0:
        raise StallError("mean throughput must be positive", sim_time=t_prev)
    service = encode_delay + frame_bits / (mean_throughput_mbps * 1e6)
    busy = n_frames * service
    t_k = max(
        t_prev + busy,
        content_start + busy,
        content_start + (n_frames - 1) / frame_rate + service,
    )
    wait = t_k - t_prev - busy
    q_k = max(0.0, q_prev + (t_k - t_prev) - gop_length)
    return t_k, q_k, wait


@dataclass
class Decision:
    """One committed per-GOP choice."""

    gop_length: int
    bitrate_mbps: float
    predicted_throughput_mbps: float
    objective: float = 0.0
    gamma: float = 1.0
    stalled: bool = False


@dataclass
class DecisionContext:
    """Everything a decision source may look at, at a GOP boundary."""

    now: float  # session wall time
    content_pos: int  # content seconds already consumed
    q: float  # camera buffer backlog, seconds
    trace: NetworkTrace
    offset_s: int
    video: VideoTraceSet
    gop_index: int

    def observed_samples(self) -> Tuple:
        end = self.offset_s + int(math.floor(self.now))
        end = min(end, len(self.trace.samples))
        return self.trace.samples[:end]


class DecisionSource(Protocol):
    def begin_session(self, ctx: DecisionContext) -> None: ...

    def decide(self, ctx: DecisionContext) -> Decision: ...


@dataclass
class FixedSchedule:
    """Open-loop source: a constant choice or an explicit list."""

    gop_length: int = 2
    bitrate_mbps: float = 4.5
    plan: Optional[Sequence[Tuple[int, float]]] = None

    def begin_session(self, ctx: DecisionContext) -> None:
        pass

    def decide(self, ctx: DecisionContext) -> Decision:
        if self.plan is not None:
            length, bitrate = self.plan[min(ctx.gop_index, len(self.plan) - 1)]
        else:
            length, bitrate = self.gop_length, self.bitrate_mbps
        return Decision(
            gop_length=length,
            bitrate_mbps=bitrate,
            predicted_throughput_mbps=0.0,
        )


@dataclass
class GopOutcome:
    """Realized timing, delays, and accuracy of one streamed GOP."""

    index: int
    config: EncodingConfig
    gop_length: int  # actual content seconds covered
    content_start: int
    t_start: float
    t_finish: float  # client finishes transmitting the last frame
    wait: float
    q: float
    offloading_delay: float
    response_delay: float
    accuracy: float
    realized_throughput_mbps: float
    decision: Decision

    def as_row(self) -> dict:
        return {
            "k": self.index,
            "bitrate_mbps": self.config.bitrate_mbps,
            "gop_length": self.gop_length,
            "t_k": self.t_finish,
            "q_k": self.q,
            "offloading_delay": self.offloading_delay,
            "response_delay": self.response_delay,
            "accuracy": self.accuracy,
        }


@dataclass
class SessionResult:
    """Per-GOP outcomes plus the session-level metric aggregates."""

    trace_id: str
    video_id: str
    controller: str
    fidelity: str
    frame_rate: int
    gops: List[GopOutcome]
    frames_analyzed: int
    elapsed_s: float
    stalled: bool = False

    @property
    def normalized_e2e_tp(self) -> float:
        # A session cannot deliver more than one analyzed frame per
        # capture interval; elapsed time is floored at n/f accordingly.
        if self.frames_analyzed == 0:
            return 0.0
        floor = self.frames_analyzed / self.frame_rate
        return self.frames_analyzed / (max(self.elapsed_s, floor) * self.frame_rate)

    def per_second_series(self) -> Dict[str, List[float]]:
        ol: List[float] = []
        resp: List[float] = []
        acc: List[float] = []
        for gop in self.gops:
            for _ in range(int(round(gop.gop_length))):
                ol.append(gop.offloading_delay)
                resp.append(gop.response_delay)
                acc.append(gop.accuracy)
        return {"offloading_delay": ol, "response_delay": resp, "accuracy": acc}

    def summary(self) -> dict:
        metrics = compute_metrics(self)
        return {
            "trace_id": self.trace_id,
            "video_id": self.video_id,
            "controller": self.controller,
            "fidelity": self.fidelity,
            "stalled": self.stalled,
            **metrics,
        }


def compute_metrics(session: SessionResult) -> dict:
    """Session aggregates over per-second attributed delay series."""
    if not session.gops:
        raise TraceValidationError("empty session has no metrics")
    series = session.per_second_series()
    n = len(series["offloading_delay"])
    return {
        "mean_accuracy": sum(series["accuracy"]) / n,
        "mean_offloading_delay": sum(series["offloading_delay"]) / n,
        "mean_response_delay": sum(series["response_delay"]) / n,
        "normalized_e2e_tp": session.normalized_e2e_tp,
        "frames_analyzed": session.frames_analyzed,
        "elapsed_s": session.elapsed_s,
        "gop_count": len(session.gops),
    }


def _realized_mean_rate(
    integrator: ThroughputIntegrator, start: float, end: float
) -> float:
    if end <= start:
        return integrator.rate_at(start)
    return integrator.mean_rate(start, end)


def _analytic_gop_with_trace(
    integrator: ThroughputIntegrator,
    state: PipelineState,
    record: VideoUnitRecord,
) -> Tuple[float, float, float, float]:
    """Analytic recurrence with the realized mean rate over the GOP.

    The mean rate over [t_{k-1}, t_k] depends on t_k itself, so the pair
    is solved by fixed-point iteration; on constant-rate traces the first
    iteration is already exact.
    """
    guess_rate = max(integrator.rate_at(state.t), 1e-6)
    t_k = q_k = wait = 0.0
    for _ in range(ANALYTIC_FIXED_POINT_ITERS):
        t_k, q_k, wait = simulate_gop_analytic(
            state,
            record.config.frame_rate,
            record.gop_length,
            record.encode_delays,
            record.frame_sizes,
            guess_rate,
        )
        realized = _realized_mean_rate(integrator, state.t, t_k)
        if realized <= 0:
            raise StallError("zero realized throughput over GOP", sim_time=state.t)
        if abs(realized - guess_rate) <= ANALYTIC_FIXED_POINT_TOL * max(realized, 1.0):
            guess_rate = realized
            break
        guess_rate = realized
    return t_k, q_k, wait, guess_rate


@dataclass
class FrameEvent:
    capture: float
    encode_start: float
    encode_end: float
    arrival: float
    decode_end: float
    infer_end: float
    bits: float


def simulate_session(
    trace: NetworkTrace,
    source: DecisionSource,
    video: VideoTraceSet,
    fidelity: str = "event",
    frame_rate: Optional[int] = None,
    resolution: Optional[Tuple[int, int]] = None,
    offset_s: int = DEFAULT_STREAM_OFFSET_S,
    duration_s: Optional[int] = None,
    controller_name: str = "",
    stall_cap_s: float = STALL_CAP_S,
    record_frames: bool = False,
    decision_log: Optional[List[dict]] = None,
) -> SessionResult:
    """Replay one (video, trace) pair under a decision source.

    ``offset_s`` seconds of the network trace are treated as pre-stream
    history available to the first decision; session time 0 is the
    capture instant of the first frame.
    """
    if fidelity not in ("event", "analytic"):
        raise ValueError(f"unknown fidelity {fidelity!r}")
    configs = video.configs()
    frame_rate = frame_rate if frame_rate is not None else configs[0].frame_rate
    resolution = tuple(resolution) if resolution is not None else configs[0].resolution
    by_bitrate = {
        c.bitrate_mbps: c
        for c in configs
        if c.frame_rate == frame_rate and tuple(c.resolution) == resolution
    }
    if not by_bitrate:
        raise TraceValidationError(
            f"video {video.video_id!r} has no records at {frame_rate} FPS "
            f"{resolution}"
        )
    total_content = duration_s if duration_s is not None else video.duration_s
    total_content = min(total_content, video.duration_s)

    integrator = ThroughputIntegrator(trace, offset_s=offset_s, stall_cap_s=stall_cap_s)
    state = PipelineState()
    gops: List[GopOutcome] = []
    frame_events: List[FrameEvent] = []
    decode_free = 0.0
    infer_free = 0.0
    last_infer_end = 0.0
    stalled = False
    k = 0

    ctx0 = DecisionContext(
        now=0.0,
        content_pos=0,
        q=0.0,
        trace=trace,
        offset_s=offset_s,
        video=video,
        gop_index=0,
    )
    source.begin_session(ctx0)

    while int(state.content_start) < total_content:
        ctx = DecisionContext(
            now=state.t,
            content_pos=int(state.content_start),
            q=state.q,
            trace=trace,
            offset_s=offset_s,
            video=video,
            gop_index=k,
        )
        decision = source.decide(ctx)
        if decision.bitrate_mbps not in by_bitrate:
            raise TraceValidationError(
                f"GOP {k}: decision bitrate {decision.bitrate_mbps} has no "
                f"records at {frame_rate} FPS {resolution}"
            )
        config = by_bitrate[decision.bitrate_mbps]
        record = video.unit_for(config, decision.gop_length, int(state.content_start))
        length = record.gop_length
        t_prev = state.t

        try:
            if fidelity == "event":
                free = state.t
                wait = 0.0
                first_encode_start = None
                last_decode_end = 0.0
                for j in range(record.frame_count):
                    capture = state.content_start + j / frame_rate
                    if capture > free:
                        wait += capture - free
                        free = capture
                    encode_start = free
                    if first_encode_start is None:
                        first_encode_start = encode_start
                    encode_end = encode_start + record.encode_delays[j]
                    arrival = integrator.transmit(encode_end, record.frame_sizes[j])
                    free = arrival
                    decode_start = max(arrival, decode_free)
                    decode_end = decode_start + record.decode_delays[j]
                    decode_free = decode_end
                    infer_start = max(decode_end, infer_free)
                    infer_end = infer_start + record.inference_delays[j]
                    infer_free = infer_end
                    last_decode_end = decode_end
                    last_infer_end = max(last_infer_end, infer_end)
                    if record_frames:
                        frame_events.append(
                            FrameEvent(
                                capture=capture,
                                encode_start=encode_start,
                                encode_end=encode_end,
                                arrival=arrival,
                                decode_end=decode_end,
                                infer_end=infer_end,
                                bits=record.frame_sizes[j],
                            )
                        )
                t_k = free
                q_k = max(0.0, state.q + (t_k - t_prev) - length)
                ol_delay = last_decode_end - first_encode_start
                resp_delay = last_infer_end - state.content_start
            else:
                t_k, q_k, wait, realized = _analytic_gop_with_trace(
                    integrator, state, record
                )
                mean_dec = sum(record.decode_delays) / record.frame_count
                mean_inf = sum(record.inference_delays) / record.frame_count
                first_encode_start = max(state.t, state.content_start)
                last_decode_end = t_k + mean_dec
                last_infer_end = last_decode_end + mean_inf
                ol_delay = last_decode_end - first_encode_start
                resp_delay = last_infer_end - state.content_start
        except StallError:
            stalled = True
            break

        realized_rate = _realized_mean_rate(integrator, t_prev, t_k)
        outcome = GopOutcome(
            index=k,
            config=config,
            gop_length=length,
            content_start=int(state.content_start),
            t_start=t_prev,
            t_finish=t_k,
            wait=wait,
            q=q_k,
            offloading_delay=ol_delay,
            response_delay=resp_delay,
            accuracy=record.accuracy,
            realized_throughput_mbps=realized_rate,
            decision=decision,
        )
        gops.append(outcome)
        if decision_log is not None:
            decision_log.append(
                {
                    "timestamp": t_prev,
                    "gop_length": decision.gop_length,
                    "bitrate_mbps": decision.bitrate_mbps,
                    "predicted_throughput_mbps": decision.predicted_throughput_mbps,
                    "realized_throughput_mbps": realized_rate,
                    "gamma": decision.gamma,
                    "q": state.q,
                    "objective": decision.objective,
                }
            )
        state = PipelineState(t=t_k, content_start=state.content_start + length, q=q_k)
        k += 1

    frames = sum(g.gop_length for g in gops) * frame_rate
    result = SessionResult(
        trace_id=trace.trace_id,
        video_id=video.video_id,
        controller=controller_name or type(source).__name__,
        fidelity=fidelity,
        frame_rate=frame_rate,
        gops=gops,
        frames_analyzed=int(frames),
        elapsed_s=last_infer_end,
        stalled=stalled,
    )
    if record_frames:
        result.frame_events = frame_events  # type: ignore[attr-defined]
        result.integrator = integrator  # type: ignore[attr-defined]
    return result


def save_session_result(result: SessionResult, path) -> None:
    payload = {
        **result.summary(),
        "gops": [g.as_row() for g in result.gops],
        "per_second": result.per_second_series(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


GOP_LOG_HEADER = (
    "k",
    "bitrate_mbps",
    "gop_length",
    "t_k",
    "q_k",
    "offloading_delay",
    "response_delay",
    "accuracy",
)


def save_gop_log(result: SessionResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(GOP_LOG_HEADER) + "\n")
        for gop in result.gops:
            row = gop.as_row()
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in GOP_LOG_HEADER) + "\n")


DECISION_LOG_HEADER = (
    "timestamp",
    "gop_length",
    "bitrate_mbps",
    "predicted_throughput_mbps",
    "realized_throughput_mbps",
    "gamma",
    "q",
    "objective",
)


def save_decision_log(rows: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(DECISION_LOG_HEADER) + "\n")
        for row in rows:
            fh.write(
                ",".join(
                    repr(row[c]) if isinstance(row[c], float) else str(row[c])
                    for c in DECISION_LOG_HEADER
                )
                + "\n"
            )
