"""Operator entry point.

Subcommands: ``gen-traces`` (synthetic suites), ``eval-predictor``
(sliding-window metric table), ``simulate`` (session replay per
video-trace pair), ``compare`` (CDF point series and paired deltas
between result sets), and ``profile`` (offline profile table).

Configuration precedence: command line > ``STARSTREAM_*`` environment
variables > ``--config`` JSON file > defaults. Every command is
deterministic given its config and seed; rerunning overwrites outputs
with identical bytes.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence

from . import controller as ctl
from . import predictors as pred
from . import profiler as prof
from . import simulator as sim
from . import traces as tr
from .errors import StarStreamError, UsageError

ENV_PREFIX = "STARSTREAM_"


def _load_config_file(path: Optional[str]) -> Dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(obj, dict):
        raise UsageError(f"config {path!r} must be a JSON object")
    return obj


def _env_overrides() -> Dict:
    out = {}
    for key, value in os.environ.items():
        if key.startswith(ENV_PREFIX):
            out[key[len(ENV_PREFIX) :].lower()] = value
    return out


def resolve_option(name: str, cli_value, config: Dict, default=None, cast=None):
    """config-file < environment < command line."""
    value = config.get(name, default)
    env = _env_overrides()
    if name in env:
        value = env[name]
    if cli_value is not None:
        value = cli_value
    if value is not None and cast is not None and not isinstance(value, cast if isinstance(cast, type) else object):
        try:
            value = cast(value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {name}: {value!r}") from exc
    return value


def _write_json(path, payload) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _network_trace_paths(spec: str) -> List[str]:
    if os.path.isdir(spec):
        paths = sorted(glob.glob(os.path.join(spec, "*.csv")))
    else:
        paths = sorted(glob.glob(spec))
    if not paths:
        raise UsageError(f"no network traces match {spec!r}")
    return paths


def _video_dirs(spec: str) -> List[str]:
    dirs = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if os.path.isdir(part) and any(
            n.endswith(".jsonl") for n in os.listdir(part)
        ):
            dirs.append(part)
        elif os.path.isdir(part):
            sub = [
                os.path.join(part, n)
                for n in sorted(os.listdir(part))
                if os.path.isdir(os.path.join(part, n))
            ]
            dirs.extend(s for s in sub if any(n.endswith(".jsonl") for n in os.listdir(s)))
        else:
            raise UsageError(f"video trace directory {part!r} not found")
    if not dirs:
        raise UsageError(f"no video trace sets under {spec!r}")
    return dirs


def cmd_gen_traces(args, config: Dict) -> int:
    seed = resolve_option("seed", args.seed, config, cast=int)
    if seed is None:
        raise UsageError("gen-traces requires --seed")
    count = resolve_option("count", args.count, config, default=10, cast=int)
    duration = resolve_option("duration", args.duration, config, default=600, cast=int)
    delta = resolve_option("delta", args.delta, config, default=tr.DEFAULT_DELTA_MBPS, cast=float)
    scenario = resolve_option("scenario", args.scenario, config, default="markov")
    out_dir = resolve_option("out", args.out, config, default="traces-out")
    videos = resolve_option("videos", args.videos, config, default=0, cast=int)
    video_duration = resolve_option(
        "video_duration", args.video_duration, config, default=480, cast=int
    )

    os.makedirs(out_dir, exist_ok=True)
    net_dir = os.path.join(out_dir, "network")
    manifest = {
        "seed": seed,
        "count": count,
        "duration_s": duration,
        "delta_mbps": delta,
        "scenario": scenario,
        "network_traces": [],
        "video_traces": [],
    }
    for i in range(count):
        trace_seed = seed + i
        params = _scenario_params(scenario, config)
        trace = tr.gen_synthetic_network_trace(
            seed=trace_seed,
            duration_s=duration,
            params=params,
            trace_id=f"net-{scenario}-{trace_seed:05d}",
            delta=delta,
        )
        path = tr.save_network_trace(trace, net_dir)
        manifest["network_traces"].append(
            {"trace_id": trace.trace_id, "seed": trace_seed, "path": os.path.relpath(path, out_dir), "location_tag": trace.location_tag}
        )
    for i in range(videos):
        vid_seed = seed + 10_000 + i
        trace_set = tr.gen_synthetic_video_trace(
            seed=vid_seed,
            duration_s=video_duration,
            video_id=f"vid-{vid_seed:05d}",
        )
        vdir = os.path.join(out_dir, "video", trace_set.video_id)
        tr.save_video_trace_set(trace_set, vdir)
        manifest["video_traces"].append(
            {"video_id": trace_set.video_id, "seed": vid_seed, "path": os.path.relpath(vdir, out_dir)}
        )
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    print(f"wrote {count} network traces and {videos} video trace sets to {out_dir}")
    return 0


def _scenario_params(scenario: str, config: Dict) -> tr.SyntheticNetworkParams:
    if scenario == "markov":
        return tr.SyntheticNetworkParams()
    if scenario == "square":
        return tr.SyntheticNetworkParams(
            square_wave=(
                float(config.get("square_high_mbps", 9.0)),
                float(config.get("square_low_mbps", 3.0)),
            ),
            noise_sigma=float(config.get("noise_sigma", 0.25)),
        )
    if scenario == "capacity-drop":
        drop_start = int(config.get("drop_start_s", 270))
        drop_len = int(config.get("drop_length_s", 60))
        return tr.SyntheticNetworkParams(
            level_schedule=(
                (0, float(config.get("prestream_mbps", 12.0))),
                (60, float(config.get("base_mbps", 9.0))),
                (drop_start, float(config.get("drop_mbps", 2.5))),
                (drop_start + drop_len, float(config.get("base_mbps", 9.0))),
            ),
            noise_sigma=float(config.get("noise_sigma", 0.2)),
        )
    raise UsageError(f"unknown scenario {scenario!r}")


def cmd_eval_predictor(args, config: Dict) -> int:
    out_dir = resolve_option("out", args.out, config, default="eval-out")
    m = resolve_option("m", args.m, config, default=pred.DEFAULT_LOOKBACK, cast=int)
    n = resolve_option("n", args.n, config, default=pred.DEFAULT_LOOKAHEAD, cast=int)
    p = resolve_option("p", args.p, config, default=pred.DEFAULT_CONTEXT, cast=int)
    delta = resolve_option("delta", args.delta, config, default=tr.DEFAULT_DELTA_MBPS, cast=float)
    timeout = resolve_option(
        "predictor_timeout", args.predictor_timeout, config, default=None, cast=float
    )
    specs = [s.strip() for s in args.predictors.split(",") if s.strip()]
    if not specs:
        raise UsageError("no predictors given")
    paths = _network_trace_paths(args.traces)
    traces = [tr.load_network_trace(path, delta) for path in paths]

    rows = []
    errors = []
    first_failure: Optional[StarStreamError] = None
    for spec in specs:
        try:
            backend = pred.make_predictor(spec, timeout_s=timeout)
            result = pred.evaluate_on_traces(backend, traces, m=m, n=n, p=p, delta=delta)
            rows.append(
                {
                    "predictor": result.predictor if ":" not in spec else spec,
                    **result.metrics.as_dict(),
                    "windows": result.windows,
                }
            )
            backend.close()
        except StarStreamError as exc:
            errors.append({"predictor": spec, "error": str(exc)})
            first_failure = first_failure or exc
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "predictor_metrics.json"), {"rows": rows, "errors": errors})
    header = ["predictor", "mae", "rmse", "mape_pct", "r2", "shift_accuracy", "shift_f1", "count", "windows"]
    csv_path = os.path.join(out_dir, "predictor_metrics.csv")
    tmp = csv_path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(row.get(c, "")) for c in header) + "\n")
    os.replace(tmp, csv_path)
    for row in rows:
        print(
            f"{row['predictor']}: MAE={row['mae']:.4f} RMSE={row['rmse']:.4f} "
            f"MAPE={row['mape_pct']:.2f}% R2={row['r2']:.4f} "
            f"shift_acc={row['shift_accuracy']:.4f} shift_F1={row['shift_f1']:.4f}"
        )
    for err in errors:
        print(f"{err['predictor']}: ERROR {err['error']}", file=sys.stderr)
    if errors and not rows:
        assert first_failure is not None
        raise first_failure
    return 0


def _build_controller(name: str, profile, predictor_spec: str, cfg: ctl.ControllerConfig,
                      ablation: Optional[str], v2_spec: Optional[str], trace=None,
                      timeout_s: Optional[float] = None):
    if name == "fixed":
        return ctl.FixedController(candidates=cfg.bitrate_candidates)
    if name == "adarate":
        return ctl.AdaRateController(
            predictor=_predictor_for(predictor_spec, trace, timeout_s),
            candidates=cfg.bitrate_candidates, config=cfg,
        )
    if name == "mpc":
        return ctl.make_mpc_controller(profile, config=cfg)
    if name == "starstream":
        v2 = _predictor_for(v2_spec, trace, timeout_s) if v2_spec else None
        return ctl.make_starstream_controller(
            profile,
            predictor=_predictor_for(predictor_spec, trace, timeout_s),
            config=cfg,
            ablation=ablation,
            v2_predictor=v2,
        )
    raise UsageError(f"unknown controller {name!r}")


def _predictor_for(spec: str, trace, timeout_s: Optional[float] = None):
    backend = pred.make_predictor(spec, trace=trace, timeout_s=timeout_s)
    return backend.bind_trace(trace) if trace is not None else backend


def _run_pair(job) -> Dict:
    (net_path, video_dir, controller_name, predictor_spec, ablation, v2_spec,
     fidelity, offset, delta, out_dir, cfg_kwargs, timeout) = job
    trace = tr.load_network_trace(net_path, delta)
    video = tr.load_video_trace_set(video_dir)
    cfg = ctl.ControllerConfig(**cfg_kwargs)
    pair_id = f"{video.video_id}__{trace.trace_id}__{controller_name}"
    try:
        profile = prof.build_profile(video)
        source = _build_controller(
            controller_name, profile, predictor_spec, cfg, ablation, v2_spec, trace,
            timeout_s=timeout,
        )
        frame_rate, resolution = (
            (source.frame_rate, source.resolution)
            if isinstance(source, ctl.StarStreamController)
            else prof.prune_configs(profile, cfg.bitrate_candidates)
        )
        decision_rows: List[dict] = []
        result = sim.simulate_session(
            trace,
            source,
            video,
            fidelity=fidelity,
            frame_rate=frame_rate,
            resolution=resolution,
            offset_s=offset,
            controller_name=controller_name,
            decision_log=decision_rows,
        )
        sim.save_session_result(result, os.path.join(out_dir, f"{pair_id}.json"))
        sim.save_gop_log(result, os.path.join(out_dir, f"{pair_id}_gops.csv"))
        sim.save_decision_log(decision_rows, os.path.join(out_dir, f"{pair_id}_decisions.csv"))
        return {"pair": pair_id, **result.summary()}
    except StarStreamError as exc:
        payload = {"pair": pair_id, "error": str(exc), "stalled": True}
        _write_json(os.path.join(out_dir, f"{pair_id}.json"), payload)
        return payload


def cmd_simulate(args, config: Dict) -> int:
    out_dir = resolve_option("out", args.out, config, default="sim-out")
    offset = resolve_option("offset", args.offset, config, default=sim.DEFAULT_STREAM_OFFSET_S, cast=int)
    delta = resolve_option("delta", args.delta, config, default=tr.DEFAULT_DELTA_MBPS, cast=float)
    fidelity = resolve_option("fidelity", args.fidelity, config, default="event")
    controller_name = resolve_option("controller", args.controller, config, default="starstream")
    predictor_spec = resolve_option("predictor", args.predictor, config, default="hm")
    ablation = resolve_option("ablation", args.ablation, config, default=None)
    v2_spec = resolve_option("v2_predictor", args.v2_predictor, config, default=None)
    jobs = resolve_option("jobs", args.jobs, config, default=1, cast=int)
    timeout = resolve_option(
        "predictor_timeout", args.predictor_timeout, config, default=None, cast=float
    )
    alpha = resolve_option("alpha", args.alpha, config, default=ctl.DEFAULT_ALPHA, cast=float)
    beta = resolve_option("beta", args.beta, config, default=ctl.DEFAULT_BETA, cast=float)
    horizon = resolve_option("horizon", args.horizon, config, default=ctl.DEFAULT_HORIZON, cast=int)

    if ablation == "v2" and not v2_spec:
        raise UsageError("--ablation v2 requires --v2-predictor")

    net_paths = _network_trace_paths(args.network_traces)
    video_dirs = _video_dirs(args.video_traces)
    os.makedirs(out_dir, exist_ok=True)
    cfg_kwargs = {"alpha": alpha, "beta": beta, "horizon": horizon, "delta_mbps": delta}

    job_list = [
        (net, vdir, controller_name, predictor_spec, ablation, v2_spec,
         fidelity, offset, delta, out_dir, cfg_kwargs, timeout)
        for vdir in video_dirs
        for net in net_paths
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_run_pair, job_list))
    else:
        summaries = [_run_pair(job) for job in job_list]

    summary_payload = {
        "controller": controller_name,
        "fidelity": fidelity,
        "pairs": sorted(summaries, key=lambda s: s["pair"]),
    }
    ok = [s for s in summaries if "error" not in s]
    if ok:
        for metric in ("mean_accuracy", "mean_offloading_delay", "mean_response_delay", "normalized_e2e_tp"):
            summary_payload[f"mean_{metric}"] = sum(s[metric] for s in ok) / len(ok)
    _write_json(os.path.join(out_dir, "summary.json"), summary_payload)
    print(
        f"simulated {len(ok)}/{len(job_list)} pairs with {controller_name} "
        f"({fidelity} fidelity) -> {out_dir}"
    )
    for s in summaries:
        if "error" in s:
            print(f"  {s['pair']}: STALLED ({s['error']})", file=sys.stderr)
    return 0


def _load_result_pairs(result_dir: str) -> Dict[str, Dict]:
    summary_path = os.path.join(result_dir, "summary.json")
    if not os.path.exists(summary_path):
        raise UsageError(f"{result_dir!r} has no summary.json")
    with open(summary_path, "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    pairs = {}
    for row in summary.get("pairs", []):
        if "error" in row:
            continue
        # pair ids embed the controller; compare on (video, trace) only
        video_id, trace_id = row["video_id"], row["trace_id"]
        pairs[f"{video_id}__{trace_id}"] = row
    return pairs


COMPARE_METRICS = (
    "mean_accuracy",
    "normalized_e2e_tp",
    "mean_offloading_delay",
    "mean_response_delay",
)


def cmd_compare(args, config: Dict) -> int:
    out_dir = resolve_option("out", args.out, config, default="compare-out")
    dirs = args.result_dirs
    if len(dirs) < 2:
        raise UsageError("compare needs at least two result directories")
    loaded = [( _result_label(d), _load_result_pairs(d)) for d in dirs]
    base_keys = set(loaded[0][1])
    for label, pairs in loaded[1:]:
        keys = set(pairs)
        if keys != base_keys:
            missing = sorted(base_keys - keys)
            extra = sorted(keys - base_keys)
            raise UsageError(
                f"result sets cover different pairs: {label} is missing "
                f"{missing[:5]} and adds {extra[:5]}"
            )
    os.makedirs(out_dir, exist_ok=True)
    ordered = sorted(base_keys)
    for metric in COMPARE_METRICS:
        path = os.path.join(out_dir, f"cdf_{metric}.csv")
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("label,value,cdf\n")
            for label, pairs in loaded:
                values = sorted(pairs[k][metric] for k in ordered)
                for i, v in enumerate(values, start=1):
                    fh.write(f"{label},{v!r},{i / len(values)!r}\n")
        os.replace(tmp, path)
    deltas_path = os.path.join(out_dir, "deltas.csv")
    tmp = deltas_path + ".tmp"
    base_label, base_pairs = loaded[0]
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("pair,metric,base_label,other_label,base,other,delta\n")
        for label, pairs in loaded[1:]:
            for key in ordered:
                for metric in COMPARE_METRICS:
                    b = base_pairs[key][metric]
                    o = pairs[key][metric]
                    fh.write(
                        f"{key},{metric},{base_label},{label},{b!r},{o!r},{o - b!r}\n"
                    )
    os.replace(tmp, deltas_path)
    print(f"wrote {len(COMPARE_METRICS)} CDF files and deltas.csv to {out_dir}")
    return 0


def _result_label(result_dir: str) -> str:
    summary_path = os.path.join(result_dir, "summary.json")
    try:
        with open(summary_path, "r", encoding="utf-8") as fh:
            return json.load(fh).get("controller", os.path.basename(result_dir))
    except (OSError, json.JSONDecodeError):
        return os.path.basename(os.path.normpath(result_dir))


def cmd_profile(args, config: Dict) -> int:
    out = resolve_option("out", args.out, config, default="profile.json")
    video_dirs = _video_dirs(args.video_traces)
    for vdir in video_dirs:
        video = tr.load_video_trace_set(vdir)
        table = prof.build_profile(video)
        pair = prof.prune_configs(table, tr.BITRATE_CANDIDATES_MBPS)
        if len(video_dirs) == 1:
            path = out
        else:
            root, ext = os.path.splitext(out)
            path = f"{root}_{video.video_id}{ext or '.json'}"
        payload = table.to_json()
        payload["pruned_frame_rate"] = pair[0]
        payload["pruned_resolution"] = list(pair[1])
        _write_json(path, payload)
        print(
            f"{video.video_id}: profiled {len(table.entries)} entries, "
            f"pruned pair = {pair[0]} FPS {pair[1][0]}x{pair[1][1]} -> {path}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="starstream",
        description="Trace-driven adaptive live-video-analytics streaming harness",
    )
    parser.add_argument("--config", help="JSON config file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-traces", help="generate synthetic trace suites")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--count", type=int, default=None)
    g.add_argument("--duration", type=int, default=None, help="network trace seconds")
    g.add_argument("--delta", type=float, default=None)
    g.add_argument("--scenario", choices=["markov", "square", "capacity-drop"], default=None)
    g.add_argument("--videos", type=int, default=None, help="video trace sets to generate")
    g.add_argument("--video-duration", type=int, default=None)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_gen_traces)

    e = sub.add_parser("eval-predictor", help="sliding-window predictor metrics")
    e.add_argument("--traces", required=True, help="trace dir or glob")
    e.add_argument("--predictors", required=True, help="comma list, e.g. hm,ma,file:p.jsonl")
    e.add_argument("--m", type=int, default=None)
    e.add_argument("--n", type=int, default=None)
    e.add_argument("--p", type=int, default=None)
    e.add_argument("--delta", type=float, default=None)
    e.add_argument("--predictor-timeout", dest="predictor_timeout", type=float,
                   default=None, help="cmd-bridge response deadline, seconds")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval_predictor)

    s = sub.add_parser("simulate", help="replay video-trace pairs under a controller")
    s.add_argument("--network-traces", required=True)
    s.add_argument("--video-traces", required=True)
    s.add_argument("--controller", choices=["fixed", "adarate", "mpc", "starstream"], default=None)
    s.add_argument("--predictor", default=None, help="hm | ma | file:... | cmd:...")
    s.add_argument("--ablation", choices=["v1", "v2"], default=None)
    s.add_argument("--v2-predictor", default=None)
    s.add_argument("--fidelity", choices=["event", "analytic"], default=None)
    s.add_argument("--offset", type=int, default=None, help="pre-stream seconds")
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--beta", type=float, default=None)
    s.add_argument("--horizon", type=int, default=None)
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--predictor-timeout", dest="predictor_timeout", type=float,
                   default=None, help="cmd-bridge response deadline, seconds")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="CDF point series and paired deltas")
    c.add_argument("result_dirs", nargs="+")
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_compare)

    p = sub.add_parser("profile", help="build offline profile tables")
    p.add_argument("--video-traces", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_profile)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config_file(args.config)
        return args.func(args, config)
    except StarStreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
