import random

import pytest

import starstream as ss
from starstream.controller import (
    ControllerConfig,
    OptimizerInstance,
    StageParams,
    baseline_adarate,
    baseline_fixed,
    brute_force_oracle,
    highest_bitrate_below,
    make_mpc_controller,
    make_starstream_controller,
    optimize_dp,
    plan_horizon,
    select_gop_length,
)
from starstream.predictors import HarmonicMeanPredictor, PredictionResult
from starstream.simulator import DecisionContext

BITRATES = ss.BITRATE_CANDIDATES_MBPS


class TestSelectGopLength:
    def test_worked_example(self):
        length, consumed = select_gop_length([0, 0, 1])
        assert length == 2
        assert consumed == 2

    def test_shift_at_first_step_clips_to_min(self):
        length, consumed = select_gop_length([1, 0, 0, 0])
        assert length == 1
        assert consumed == 1

    def test_no_shift_takes_max_candidate(self):
        length, consumed = select_gop_length([0] * 15)
        assert length == 5
        assert consumed == 5

    def test_leading_zeros_beyond_max_clip(self):
        length, _ = select_gop_length([0] * 7 + [1])
        assert length == 5

    def test_short_window_consumption(self):
        length, consumed = select_gop_length([0, 0])
        assert length == 5
        assert consumed == 2

    def test_custom_candidates(self):
        length, _ = select_gop_length([1, 0], candidates=(2, 3))
        assert length == 2
        length, _ = select_gop_length([0] * 9, candidates=(2, 3))
        assert length == 3


class TestPlanHorizon:
    def test_recursive_example(self):
        shifts = [0, 0, 1, 0, 1] + [0] * 10
        throughputs = list(range(1, 16))
        plans = plan_horizon(shifts, throughputs, horizon=2)
        assert [p[0] for p in plans] == [2, 2]

    def test_first_gop_mean_rule(self):
        plans = plan_horizon([0, 0, 1], [4.0, 6.0, 20.0], horizon=1)
        assert plans[0] == (2, 5.0)

    def test_flat_extrapolation_past_window(self):
        plans = plan_horizon([0, 0, 0], [4.0, 5.0, 6.0], horizon=2)
        # first GOP takes max candidate (5), extending past the window
        assert plans[0][0] == 5
        assert plans[0][1] == pytest.approx((4 + 5 + 6 + 6 + 6) / 5)
        assert plans[1] == (5, 6.0)

    def test_boundary_shift_absorbed_for_later_gops(self):
        # first GOP reacts to the imminent shift; the second starts AT a
        # shift step, which the re-decision there absorbs, and runs to
        # just before the following shift
        shifts = [1, 1, 0, 0, 1]
        plans = plan_horizon(shifts, [5.0] * 5, horizon=2)
        assert plans[0][0] == 1
        assert plans[1][0] == 3

    def test_later_gop_with_quiet_boundary(self):
        shifts = [1, 0, 1, 0, 0]
        plans = plan_horizon(shifts, [5.0] * 5, horizon=2)
        assert plans[0][0] == 1
        assert plans[1][0] == 1


def uniform_stage(acc_by_bitrate, enc=0.002, frame_rate=15):
    return StageParams(
        accuracy=dict(acc_by_bitrate),
        encode_delay={b: enc for b in acc_by_bitrate},
        frame_bits={b: b * 1e6 / frame_rate for b in acc_by_bitrate},
    )


def make_instance(
    rates,
    lengths,
    q0=0.0,
    gamma=1.0,
    alpha=1.0,
    beta=0.02,
    accs=None,
    frame_rate=15,
):
    if accs is None:
        accs = {b: 0.6 + 0.04 * i for i, b in enumerate(BITRATES)}
    stages = [uniform_stage(accs, frame_rate=frame_rate) for _ in lengths]
    return OptimizerInstance(
        t_prev=0.0,
        content_start=0.0,
        q_prev=q0,
        frame_rate=frame_rate,
        gop_plans=list(zip(lengths, rates)),
        stages=stages,
        bitrates=BITRATES,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
    )


class TestOptimizeDp:
    def test_beta_zero_takes_highest_accuracy(self):
        inst = make_instance([6.0, 6.0, 6.0], [2, 2, 2], beta=0.0)
        decisions = optimize_dp(inst)
        assert [d.bitrate_mbps for d in decisions] == [9.0, 9.0, 9.0]

    def test_alpha_zero_takes_minimum_bitrate(self):
        inst = make_instance([6.0, 6.0, 6.0], [2, 2, 2], alpha=0.0, q0=4.0)
        decisions = optimize_dp(inst)
        assert [d.bitrate_mbps for d in decisions] == [1.5, 1.5, 1.5]

    def test_matches_oracle_on_random_instances(self):
        rng = random.Random(123)
        for _ in range(60):
            lengths = [rng.choice(ss.GOP_LENGTH_CANDIDATES) for _ in range(3)]
            rates = [rng.uniform(1.0, 12.0) for _ in range(3)]
            accs = {
                b: min(1.0, 0.5 + 0.05 * i + rng.uniform(0, 0.04))
                for i, b in enumerate(BITRATES)
            }
            inst = make_instance(
                rates,
                lengths,
                q0=rng.uniform(0, 10),
                gamma=rng.uniform(1 / 3, 3),
                accs=accs,
            )
            exact = optimize_dp(inst, time_cell_s=None)
            oracle = brute_force_oracle(inst)
            assert exact[0].objective == pytest.approx(
                oracle[0].objective, abs=1e-9
            )
            quantized = optimize_dp(inst)
            bound = inst.beta * 0.010 * 3 * 4
            assert abs(quantized[0].objective - oracle[0].objective) <= bound

    def test_receding_horizon_returns_full_plan(self):
        inst = make_instance([6.0, 6.0, 6.0], [2, 2, 2])
        decisions = optimize_dp(inst)
        assert len(decisions) == 3
        assert decisions[0].predicted_throughput_mbps == 6.0

    def test_unreachable_rate_emits_stall_flag(self):
        inst = make_instance([0.0, 0.0, 0.0], [2, 2, 2])
        decisions = optimize_dp(inst)
        assert decisions[0].stalled
        assert decisions[0].bitrate_mbps == min(BITRATES)

    def test_increasing_beta_never_raises_first_bitrate(self):
        rng = random.Random(7)
        for _ in range(30):
            lengths = [rng.choice(ss.GOP_LENGTH_CANDIDATES) for _ in range(3)]
            rates = [rng.uniform(1.0, 12.0) for _ in range(3)]
            q0 = rng.uniform(0, 6)
            chosen = []
            for beta in (0.0, 0.02, 0.1, 0.5):
                inst = make_instance(rates, lengths, q0=q0, beta=beta)
                chosen.append(optimize_dp(inst, time_cell_s=None)[0].bitrate_mbps)
            assert chosen == sorted(chosen, reverse=True)

    def test_oracle_cap(self):
        inst = make_instance([6.0] * 3, [2] * 3)
        with pytest.raises(ValueError):
            brute_force_oracle(inst, cap=10)

    def test_deterministic(self):
        inst = make_instance([5.0, 3.0, 8.0], [2, 1, 3], q0=2.0)
        a = optimize_dp(inst)
        b = optimize_dp(inst)
        assert [d.bitrate_mbps for d in a] == [d.bitrate_mbps for d in b]


class TestBaselineRules:
    def test_highest_below(self):
        assert highest_bitrate_below(5.2, BITRATES) == 4.5
        assert highest_bitrate_below(9.7, BITRATES) == 9.0

    def test_floor_rule(self):
        assert highest_bitrate_below(1.0, BITRATES) == 1.5

    def test_strictly_below(self):
        assert highest_bitrate_below(4.5, BITRATES) == 3.0

    def test_adarate_examples(self):
        assert baseline_adarate(7.0, BITRATES) == 6.0
        assert baseline_adarate(1.2, BITRATES) == 1.5
        assert baseline_adarate(4.5, BITRATES) == 3.0

    def test_fixed_uses_prestream_minute(self):
        trace = ss.make_network_trace(
            "pre", [5.2] * 60 + [1.0] * 60, delta=2.5
        )
        assert baseline_fixed(trace, offset_s=60) == 4.5

    def test_fixed_with_short_history(self):
        trace = ss.make_network_trace("pre", [9.7] * 10, delta=2.5)
        assert baseline_fixed(trace, offset_s=10) == 9.0

    def test_fixed_with_no_history(self):
        trace = ss.make_network_trace("pre", [9.7] * 10, delta=2.5)
        assert baseline_fixed(trace, offset_s=0) == 1.5


def run_session(controller, trace, video, pair=None, log=None):
    if isinstance(controller, ss.StarStreamController):
        fr, res = controller.frame_rate, controller.resolution
    else:
        fr, res = pair
    return ss.simulate_session(
        trace,
        controller,
        video,
        fidelity="event",
        frame_rate=fr,
        resolution=res,
        offset_s=60,
        decision_log=log,
    )


class TestMpcReduction:
    def test_decision_identity_with_starstream_reduction(
        self, small_video, small_profile
    ):
        rng = random.Random(99)
        for trial in range(6):
            trace = ss.gen_synthetic_network_trace(
                seed=1000 + trial, duration_s=180
            )
            mpc_log, red_log = [], []
            mpc = make_mpc_controller(small_profile)
            reduction = make_starstream_controller(
                small_profile,
                predictor=HarmonicMeanPredictor(window=10),
                config=ControllerConfig(fixed_gop_length=2, gamma_updates=False),
            )
            run_session(mpc, trace, small_video, log=mpc_log)
            run_session(reduction, trace, small_video, log=red_log)
            assert mpc_log == red_log

    def test_constant_history_estimates_the_constant(self, small_profile, small_video):
        trace = ss.make_network_trace("const", [6.0] * 200, delta=2.5)
        mpc = make_mpc_controller(small_profile)
        log = []
        run_session(mpc, trace, small_video, log=log)
        assert all(row["predicted_throughput_mbps"] == 6.0 for row in log)


class FailingPredictor(ss.Predictor):
    name = "failing"

    def predict(self, req):
        raise ss.ExternalPredictorError("endpoint down")


class ScriptedPredictor(ss.Predictor):
    """Returns a fixed PredictionResult regardless of the request."""

    name = "scripted"

    def __init__(self, result):
        self.result = result

    def predict(self, req):
        return self.result


class TestStep:
    def test_predictor_failure_falls_back_to_hm(self, small_video, small_profile):
        trace = ss.gen_synthetic_network_trace(seed=77, duration_s=180)
        log_fallback, log_hm = [], []
        with_failures = make_starstream_controller(
            small_profile, predictor=FailingPredictor(),
            config=ControllerConfig(fallback_window=5),
        )
        with_hm = make_starstream_controller(
            small_profile, predictor=HarmonicMeanPredictor(window=5)
        )
        run_session(with_failures, trace, small_video, log=log_fallback)
        run_session(with_hm, trace, small_video, log=log_hm)
        assert with_failures.predictor_failures > 0
        assert log_fallback == log_hm

    def test_v1_freezes_gamma(self, small_video, small_profile):
        trace = ss.gen_synthetic_network_trace(seed=78, duration_s=180)
        log = []
        controller = make_starstream_controller(
            small_profile, predictor=HarmonicMeanPredictor(), ablation="v1"
        )
        run_session(controller, trace, small_video, log=log)
        assert all(row["gamma"] == 1.0 for row in log)

    def test_gamma_moves_without_v1(self, small_video, small_profile):
        trace = ss.gen_synthetic_network_trace(seed=78, duration_s=180)
        log = []
        controller = make_starstream_controller(
            small_profile, predictor=HarmonicMeanPredictor()
        )
        run_session(controller, trace, small_video, log=log)
        assert any(row["gamma"] != 1.0 for row in log)

    def test_v2_routes_to_alternate_predictor(self, small_video, small_profile):
        scripted = ScriptedPredictor(
            PredictionResult(
                throughputs=(3.0,) * 15, shifts=(0,) * 15
            )
        )
        controller = make_starstream_controller(
            small_profile,
            predictor=HarmonicMeanPredictor(),
            ablation="v2",
            v2_predictor=scripted,
        )
        assert controller.predictor is scripted

    def test_shift_guided_lengths_flow_into_decisions(
        self, small_video, small_profile
    ):
        scripted = ScriptedPredictor(
            PredictionResult(
                throughputs=(6.0,) * 15,
                shifts=(0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0),
            )
        )
        controller = make_starstream_controller(small_profile, predictor=scripted)
        trace = ss.make_network_trace("flat", [6.0] * 200, delta=2.5)
        log = []
        run_session(controller, trace, small_video, log=log)
        assert log[0]["gop_length"] == 2

    def test_only_first_decision_is_executed(self, small_video, small_profile):
        # lengths re-planned at each boundary must follow the realized
        # content position, never a stale horizon tail
        controller = make_starstream_controller(
            small_profile, predictor=HarmonicMeanPredictor()
        )
        trace = ss.gen_synthetic_network_trace(seed=79, duration_s=240)
        result = run_session(controller, trace, small_video)
        starts = [g.content_start for g in result.gops]
        lengths = [g.gop_length for g in result.gops]
        expected = 0
        for s, l in zip(starts, lengths):
            assert s == expected
            expected += l
