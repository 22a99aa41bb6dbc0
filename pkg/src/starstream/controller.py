"""Shift-guided GOP selection and receding-horizon bitrate optimization.

Each decision cycle queries the throughput predictor, converts the
predicted shift indicators into GOP lengths across the horizon, then
picks the bitrate sequence maximizing

    sum_k  alpha * gamma * A(c_k)  -  beta * Q_k

subject to the analytic pipeline recurrence, by dynamic programming over
(completion time, backlog) states. Only the first decision is executed;
the rest of the horizon is re-planned at the next GOP boundary.

The three baselines (fixed bitrate, pure rate-based, fixed-GOP MPC) live
here too; the MPC baseline is the controller itself with gamma frozen,
GOP length pinned to 2 s, and the harmonic-mean predictor, which keeps
the two decision-identical by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import ExternalPredictorError, StallError
from .predictors import (
    DEFAULT_LOOKAHEAD,
    DEFAULT_LOOKBACK,
    HarmonicMeanPredictor,
    PredictionRequest,
    PredictionResult,
    Predictor,
    predict_hm,
)
from .profiler import (
    GammaState,
    ProfileTable,
    compute_uncertainty,
    estimate_accuracy,
    prune_configs,
    update_gamma,
)
from .simulator import Decision, DecisionContext, gop_transition_uniform
from .traces import (
    BITRATE_CANDIDATES_MBPS,
    GOP_LENGTH_CANDIDATES,
    EncodingConfig,
    NetworkTrace,
)

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 0.02
DEFAULT_HORIZON = 3
DP_TIME_CELL_S = 0.010


def select_gop_length(
    shift_indicators: Sequence[int],
    candidates: Sequence[int] = GOP_LENGTH_CANDIDATES,
) -> Tuple[int, int]:
    """GOP length for the next GOP from predicted shift indicators.

    The length is the count of leading zeros before the first predicted
    shift, clipped to the candidate range: a shift at the very next step
    yields the shortest candidate, no shift in the window yields the
    longest. Returns ``(length, steps_consumed)`` where the consumed
    steps never exceed the window.
    """
    lo, hi = min(candidates), max(candidates)
    zeros = 0
    found = False
    for s in shift_indicators:
        if s == 1:
            found = True
            break
        zeros += 1
    length = max(lo, min(hi, zeros)) if found else hi
    return length, min(length, len(shift_indicators))


def plan_horizon(
    shifts: Sequence[int],
    throughputs: Sequence[float],
    horizon: int,
    candidates: Sequence[int] = GOP_LENGTH_CANDIDATES,
) -> List[Tuple[int, float]]:
    """GOP lengths and per-GOP mean predicted throughput over the horizon.

    The first GOP applies the leading-zeros rule as-is. Later GOPs start
    at a boundary that the re-decision itself absorbs, so a shift
    indicator at their own first step is skipped and the length runs to
    just before the next shift. Steps beyond the prediction window reuse
    the final predicted value.
    """
    lo, hi = min(candidates), max(candidates)
    plans: List[Tuple[int, float]] = []
    pos = 0
    for k in range(horizon):
        window = list(shifts[pos:])
        if k == 0:
            length, _ = select_gop_length(window, candidates)
        else:
            tail = window[1:]
            zeros = 0
            found = False
            for s in tail:
                if s == 1:
                    found = True
                    break
                zeros += 1
            length = max(lo, min(hi, 1 + zeros)) if found else hi
        values = [
            throughputs[min(pos + i, len(throughputs) - 1)] for i in range(length)
        ]
        plans.append((length, sum(values) / len(values)))
        pos += length
    return plans


@dataclass(frozen=True)
class StageParams:
    """Per-bitrate profile estimates for one horizon GOP."""

    accuracy: Dict[float, float]
    encode_delay: Dict[float, float]  # mean seconds per frame
    frame_bits: Dict[float, float]  # mean bits per frame


@dataclass
class OptimizerInstance:
    """One horizon problem: fixed GOP lengths, per-GOP rates, start state."""

    t_prev: float
    content_start: float
    q_prev: float
    frame_rate: int
    gop_plans: Sequence[Tuple[int, float]]  # (length, mean predicted Mbps)
    stages: Sequence[StageParams]
    bitrates: Sequence[float] = BITRATE_CANDIDATES_MBPS
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    gamma: float = 1.0

    def transition(
        self, stage: int, t: float, q: float, bitrate: float
    ) -> Tuple[float, float, float]:
        """Apply one GOP of dynamics; returns (t', q', stage objective)."""
        length, rate = self.gop_plans[stage]
        start = self.content_start + sum(l for l, _r in self.gop_plans[:stage])
        params = self.stages[stage]
        t_next, q_next, _wait = gop_transition_uniform(
            t_prev=t,
            content_start=start,
            q_prev=q,
            n_frames=length * self.frame_rate,
            frame_rate=self.frame_rate,
            encode_delay=params.encode_delay[bitrate],
            frame_bits=params.frame_bits[bitrate],
            mean_throughput_mbps=rate,
            gop_length=length,
        )
        gain = self.alpha * estimate_accuracy(
            self.gamma, params.accuracy[bitrate], clamp=False
        )
        return t_next, q_next, gain - self.beta * q_next


def _stall_decisions(instance: OptimizerInstance) -> List[Decision]:
    floor = min(instance.bitrates)
    return [
        Decision(
            gop_length=int(length),
            bitrate_mbps=floor,
            predicted_throughput_mbps=rate,
            objective=float("-inf"),
            gamma=instance.gamma,
            stalled=True,
        )
        for length, rate in instance.gop_plans
    ]


def optimize_dp(
    instance: OptimizerInstance,
    time_cell_s: Optional[float] = DP_TIME_CELL_S,
) -> List[Decision]:
    """Horizon bitrate sequence by forward DP with dominance pruning.

    States after each stage are (completion time, backlog) pairs; with
    quantization on, states merge within 10 ms cells keeping the best
    value. A state is pruned when another finishes no later, carries no
    more backlog, and has no smaller value. Ties prefer the
    lexicographically smallest bitrate sequence. If every sequence stalls
    (a GOP with a non-positive predicted rate), the minimum bitrate is
    emitted with the stall flag set.
    """
    horizon = len(instance.gop_plans)
    bitrates = sorted(instance.bitrates)

    # state: (t, q, value, seq)
    states: List[Tuple[float, float, float, Tuple[float, ...]]] = [
        (instance.t_prev, instance.q_prev, 0.0, ())
    ]
    for stage in range(horizon):
        cells: Dict[Tuple, Tuple[float, float, float, Tuple[float, ...]]] = {}
        for (t, q, value, seq) in states:
            for bitrate in bitrates:
                try:
                    t2, q2, gain = instance.transition(stage, t, q, bitrate)
                except StallError:
                    continue
                v2 = value + gain
                seq2 = seq + (bitrate,)
                if time_cell_s is not None:
                    key = (round(t2 / time_cell_s), round(q2 / time_cell_s))
                else:
                    key = (t2, q2)
                cur = cells.get(key)
                if cur is None or (v2, tuple(-b for b in seq2)) > (
                    cur[2],
                    tuple(-b for b in cur[3]),
                ):
                    cells[key] = (t2, q2, v2, seq2)
        merged = sorted(cells.values(), key=lambda s: (s[0], s[1], -s[2]))
        pruned: List[Tuple[float, float, float, Tuple[float, ...]]] = []
        for cand in merged:
            dominated = any(
                keep[0] <= cand[0] and keep[1] <= cand[1] and keep[2] >= cand[2]
                for keep in pruned
            )
            if not dominated:
                pruned.append(cand)
        states = pruned
        if not states:
            break

    if not states:
        return _stall_decisions(instance)

    best = max(states, key=lambda s: (s[2], tuple(-b for b in s[3])))
    _t, _q, value, seq = best
    return [
        Decision(
            gop_length=int(instance.gop_plans[k][0]),
            bitrate_mbps=seq[k],
            predicted_throughput_mbps=instance.gop_plans[k][1],
            objective=value,
            gamma=instance.gamma,
        )
        for k in range(horizon)
    ]


def brute_force_oracle(instance: OptimizerInstance, cap: int = 10**6) -> List[Decision]:
    """Exhaustive enumeration of bitrate sequences under the same dynamics.

    Ties break toward the lexicographically smallest sequence (the
    enumeration order keeps the first best), matching the DP's tie rule.
    """
    horizon = len(instance.gop_plans)
    bitrates = sorted(instance.bitrates)
    if len(bitrates) ** horizon > cap:
        raise ValueError(
            f"{len(bitrates)}^{horizon} sequences exceed the cap of {cap}"
        )

    best_value = float("-inf")
    best_seq: Optional[Tuple[float, ...]] = None

    def recurse(stage: int, t: float, q: float, value: float, seq: Tuple[float, ...]):
        nonlocal best_value, best_seq
        if stage == horizon:
            if value > best_value:
                best_value = value
                best_seq = seq
            return
        for bitrate in bitrates:
            try:
                t2, q2, gain = instance.transition(stage, t, q, bitrate)
            except StallError:
                continue
            recurse(stage + 1, t2, q2, value + gain, seq + (bitrate,))

    recurse(0, instance.t_prev, instance.q_prev, 0.0, ())
    if best_seq is None:
        return _stall_decisions(instance)
    return [
        Decision(
            gop_length=int(instance.gop_plans[k][0]),
            bitrate_mbps=best_seq[k],
            predicted_throughput_mbps=instance.gop_plans[k][1],
            objective=best_value,
            gamma=instance.gamma,
        )
        for k in range(horizon)
    ]


def highest_bitrate_below(mean_mbps: float, candidates: Sequence[float]) -> float:
    """Largest candidate strictly below the estimate; floor at the minimum."""
    eligible = [c for c in candidates if c < mean_mbps]
    return max(eligible) if eligible else min(candidates)


def baseline_fixed(
    trace: NetworkTrace,
    offset_s: int,
    candidates: Sequence[float] = BITRATE_CANDIDATES_MBPS,
    prestream_window_s: int = 60,
) -> float:
    """Bitrate from the mean throughput of the pre-stream minute."""
    start = max(0, offset_s - prestream_window_s)
    window = trace.samples[start:offset_s]
    if not window:
        return min(candidates)
    mean = sum(s.throughput for s in window) / len(window)
    return highest_bitrate_below(mean, candidates)


def baseline_adarate(
    predicted_gop_mbps: float,
    candidates: Sequence[float] = BITRATE_CANDIDATES_MBPS,
) -> float:
    """Maximum bitrate below the GOP's mean predicted throughput."""
    return highest_bitrate_below(predicted_gop_mbps, candidates)


@dataclass
class ControllerConfig:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    horizon: int = DEFAULT_HORIZON
    lookback_m: int = DEFAULT_LOOKBACK
    lookahead_n: int = DEFAULT_LOOKAHEAD
    context_p: int = 15
    delta_mbps: float = 2.5
    gop_candidates: Sequence[int] = GOP_LENGTH_CANDIDATES
    bitrate_candidates: Sequence[float] = BITRATE_CANDIDATES_MBPS
    fixed_gop_length: Optional[int] = None  # pin L (baselines / ablations)
    gamma_updates: bool = True  # False = ablation V1
    time_cell_s: Optional[float] = DP_TIME_CELL_S
    fallback_window: int = 5


class StarStreamController:
    """Closed-loop decision source implementing the full pipeline."""

    def __init__(
        self,
        profile: ProfileTable,
        predictor: Predictor,
        config: Optional[ControllerConfig] = None,
        pruned_pair: Optional[Tuple[int, Tuple[int, int]]] = None,
        name: str = "starstream",
    ):
        self.profile = profile
        self.predictor = predictor
        self.config = config or ControllerConfig()
        self.gamma_state = GammaState()
        self.name = name
        if pruned_pair is None:
            pruned_pair = prune_configs(profile, self.config.bitrate_candidates)
        self.frame_rate, self.resolution = pruned_pair
        self.predictor_failures = 0

    def begin_session(self, ctx: DecisionContext) -> None:
        self.gamma_state = GammaState()

    def _refresh_gamma(self, ctx: DecisionContext) -> None:
        if not self.config.gamma_updates:
            self.gamma_state.gamma = 1.0
            return
        if not self.gamma_state.due(ctx.now):
            return
        detections = ctx.video.compact_detections
        self.gamma_state.last_update_time = ctx.now
        if detections is None:
            return
        probe_start = max(0.0, ctx.now - self.gamma_state.probe_length_s)
        probe = detections.in_content_window(probe_start, max(ctx.now, 1e-9))
        if not probe:
            return
        u_new = compute_uncertainty(probe)
        update_gamma(self.gamma_state, u_new, self.profile.profiled_uncertainty)

    def _predict(self, ctx: DecisionContext) -> Optional[PredictionResult]:
        observed = ctx.observed_samples()
        if not observed:
            return None
        lookback = tuple(observed[-self.config.lookback_m :])
        req = PredictionRequest(
            lookback=lookback,
            n=self.config.lookahead_n,
            p=min(self.config.context_p, len(lookback)),
            delta=self.config.delta_mbps,
        )
        try:
            return self.predictor.predict(req)
        except ExternalPredictorError:
            self.predictor_failures += 1
            return predict_hm(req, self.config.fallback_window)

    def _stage_params(self, gop_length: int) -> StageParams:
        accuracy: Dict[float, float] = {}
        enc: Dict[float, float] = {}
        bits: Dict[float, float] = {}
        for bitrate in self.config.bitrate_candidates:
            cfg = EncodingConfig(bitrate, self.frame_rate, self.resolution)
            entry = self.profile.entry(cfg, gop_length)
            accuracy[bitrate] = entry.accuracy
            enc[bitrate] = entry.mean_encode_delay
            bits[bitrate] = entry.mean_frame_bits
        return StageParams(accuracy=accuracy, encode_delay=enc, frame_bits=bits)

    def decide(self, ctx: DecisionContext) -> Decision:
        self._refresh_gamma(ctx)
        result = self._predict(ctx)

        if result is None:
            # No observations at all: fall back to the pre-stream rule.
            length = self.config.fixed_gop_length or max(self.config.gop_candidates)
            return Decision(
                gop_length=length,
                bitrate_mbps=baseline_fixed(
                    ctx.trace, ctx.offset_s, self.config.bitrate_candidates
                ),
                predicted_throughput_mbps=0.0,
                gamma=self.gamma_state.gamma,
            )

        if self.config.fixed_gop_length is not None:
            length = self.config.fixed_gop_length
            plans = []
            pos = 0
            for _ in range(self.config.horizon):
                values = [
                    result.throughputs[min(pos + i, len(result.throughputs) - 1)]
                    for i in range(length)
                ]
                plans.append((length, sum(values) / len(values)))
                pos += length
        else:
            plans = plan_horizon(
                result.shifts,
                result.throughputs,
                self.config.horizon,
                self.config.gop_candidates,
            )

        instance = OptimizerInstance(
            t_prev=ctx.now,
            content_start=float(ctx.content_pos),
            q_prev=ctx.q,
            frame_rate=self.frame_rate,
            gop_plans=plans,
            stages=[self._stage_params(length) for length, _rate in plans],
            bitrates=self.config.bitrate_candidates,
            alpha=self.config.alpha,
            beta=self.config.beta,
            gamma=self.gamma_state.gamma,
        )
        decisions = optimize_dp(instance, self.config.time_cell_s)
        return decisions[0]


class FixedController:
    """Non-adaptive baseline: one bitrate for the whole session, L = 2 s."""

    name = "fixed"

    def __init__(
        self,
        candidates: Sequence[float] = BITRATE_CANDIDATES_MBPS,
        gop_length: int = 2,
        prestream_window_s: int = 60,
    ):
        self.candidates = candidates
        self.gop_length = gop_length
        self.prestream_window_s = prestream_window_s
        self.bitrate: Optional[float] = None

    def begin_session(self, ctx: DecisionContext) -> None:
        self.bitrate = baseline_fixed(
            ctx.trace, ctx.offset_s, self.candidates, self.prestream_window_s
        )

    def decide(self, ctx: DecisionContext) -> Decision:
        assert self.bitrate is not None
        return Decision(
            gop_length=self.gop_length,
            bitrate_mbps=self.bitrate,
            predicted_throughput_mbps=0.0,
        )


class AdaRateController:
    """Rate-only baseline: max bitrate below the predicted throughput."""

    name = "adarate"

    def __init__(
        self,
        predictor: Predictor,
        candidates: Sequence[float] = BITRATE_CANDIDATES_MBPS,
        gop_length: int = 2,
        config: Optional[ControllerConfig] = None,
    ):
        self.predictor = predictor
        self.candidates = candidates
        self.gop_length = gop_length
        self.config = config or ControllerConfig()

    def begin_session(self, ctx: DecisionContext) -> None:
        pass

    def decide(self, ctx: DecisionContext) -> Decision:
        observed = ctx.observed_samples()
        if not observed:
            return Decision(
                gop_length=self.gop_length,
                bitrate_mbps=min(self.candidates),
                predicted_throughput_mbps=0.0,
            )
        lookback = tuple(observed[-self.config.lookback_m :])
        req = PredictionRequest(
            lookback=lookback,
            n=self.config.lookahead_n,
            p=min(self.config.context_p, len(lookback)),
            delta=self.config.delta_mbps,
        )
        try:
            result = self.predictor.predict(req)
        except ExternalPredictorError:
            result = predict_hm(req, self.config.fallback_window)
        values = result.throughputs[: self.gop_length]
        mean = sum(values) / len(values)
        return Decision(
            gop_length=self.gop_length,
            bitrate_mbps=baseline_adarate(mean, self.candidates),
            predicted_throughput_mbps=mean,
        )


MPC_GOP_HISTORY = 5
MPC_FIXED_GOP_LENGTH = 2


def make_mpc_controller(
    profile: ProfileTable,
    config: Optional[ControllerConfig] = None,
    pruned_pair: Optional[Tuple[int, Tuple[int, int]]] = None,
) -> StarStreamController:
    """Fixed-GOP MPC baseline as a reduction of the full controller.

    Throughput is the harmonic mean over the span of the last 5 GOPs
    (5 x 2 s = 10 one-second samples), gamma stays frozen at 1, and the
    GOP length is pinned to 2 s.
    """
    cfg = replace(
        config or ControllerConfig(),
        fixed_gop_length=MPC_FIXED_GOP_LENGTH,
        gamma_updates=False,
    )
    window = MPC_GOP_HISTORY * MPC_FIXED_GOP_LENGTH
    return StarStreamController(
        profile=profile,
        predictor=HarmonicMeanPredictor(window=window),
        config=cfg,
        pruned_pair=pruned_pair,
        name="mpc",
    )


def make_starstream_controller(
    profile: ProfileTable,
    predictor: Predictor,
    config: Optional[ControllerConfig] = None,
    pruned_pair: Optional[Tuple[int, Tuple[int, int]]] = None,
    ablation: Optional[str] = None,
    v2_predictor: Optional[Predictor] = None,
) -> StarStreamController:
    """Full controller, with the two ablation switches.

    ``ablation="v1"`` freezes gamma at 1; ``ablation="v2"`` swaps the
    predictor for an alternate external endpoint.
    """
    cfg = config or ControllerConfig()
    if ablation == "v1":
        cfg = replace(cfg, gamma_updates=False)
    elif ablation == "v2":
        if v2_predictor is None:
            raise ValueError("ablation v2 needs an alternate predictor")
        predictor = v2_predictor
    elif ablation is not None:
        raise ValueError(f"unknown ablation {ablation!r}")
    return StarStreamController(
        profile=profile,
        predictor=predictor,
        config=cfg,
        pruned_pair=pruned_pair,
        name=f"starstream-{ablation}" if ablation else "starstream",
    )
