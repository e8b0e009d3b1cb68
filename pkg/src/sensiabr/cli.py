"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 infeasible request, 4 insufficient data.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from collections import defaultdict
from pathlib import Path

from .abr.offline import offline_optimal_plan
from .abr.policies import make_policy
from .core import (
    InfeasibleError,
    InsufficientDataError,
    TraceFormatError,
    ValidationError,
    load_trace,
)
from .profiling import (
    CampaignConfig,
    enumerate_series,
    estimate_cost,
    load_ratings_csv,
    profile_from_ratings,
    sanitize,
    schedule_step1,
    schedule_step2,
    simulate_raters,
    write_ratings_csv,
)
from .qoe import (
    QoeModelParams,
    SensitivityProfile,
    discordant_fraction,
    plcc,
    qoe_gain,
    relative_error,
    srcc,
)
from .serialize import (
    dumps,
    load_manifest,
    load_plan,
    load_profile,
    manifest_to_dict,
    plan_to_dict,
    read_json,
    write_json,
)
from .sim import (
    DEFAULT_SCALE_GRID,
    SimConfig,
    bandwidth_savings,
    evaluate_grid,
    gains_csv,
    min_bandwidth_for_target,
    results_csv,
    results_json,
    session_log_json,
)

log = logging.getLogger("sensiabr")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NO_DATA = 0, 2, 3, 4


class InputError(ValueError):
    pass


# -- config -----------------------------------------------------------------------

class Config:
    """The JSON config file plus command-line overrides.

    Relative paths in the file resolve against the file's directory.
    """

    def __init__(self, data: dict | None = None, base: Path | None = None):
        self.data = data or {}
        self.base = base or Path.cwd()

    @classmethod
    def load(cls, path: str | None) -> "Config":
        if path is None:
            return cls()
        p = Path(path)
        if not p.is_file():
            raise InputError(f"config file not found: {path}")
        data = read_json(p)
        if not isinstance(data, dict):
            raise InputError("config must be a JSON object")
        return cls(data, p.parent)

    def get(self, key, default=None):
        return self.data.get(key, default)

    def path(self, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base / p

    def block(self, name: str) -> dict:
        b = self.data.get(name) or {}
        if not isinstance(b, dict):
            raise InputError(f"config block {name!r} must be an object")
        return dict(b)


def _build(cls, block: dict, what: str):
    try:
        return cls(**block)
    except TypeError as exc:
        raise InputError(f"bad {what} block: {exc}") from None


def _qoe(cfg: Config) -> QoeModelParams:
    return _build(QoeModelParams, cfg.block("qoe"), "qoe")


def _campaign(cfg: Config, seed) -> CampaignConfig:
    block = cfg.block("campaign")
    if seed is not None:
        block["seed"] = seed
    if "rebuffer_levels_s" in block:
        block["rebuffer_levels_s"] = tuple(block["rebuffer_levels_s"])
    return _build(CampaignConfig, block, "campaign")


def _sim(cfg: Config, seed) -> SimConfig:
    block = cfg.block("sim")
    if seed is not None:
        block["seed"] = seed
    if "stall_levels_s" in block:
        block["stall_levels_s"] = tuple(block["stall_levels_s"])
    return _build(SimConfig, block, "sim")


def _require(value, what):
    if value is None:
        raise InputError(f"missing input: {what}")
    return value


def _existing(path: Path, what: str) -> Path:
    if not path.is_file():
        raise InputError(f"{what} not found: {path}")
    return path


def _trace(path: Path, fmt: str):
    _existing(path, "trace file")
    if fmt == "auto":
        fmt = "csv" if path.suffix.lower() == ".csv" else "cooked"
    return load_trace(path, fmt)


def _named_paths(cfg: Config, key: str, flag_values) -> dict[str, Path]:
    if flag_values:
        return {Path(p).stem: Path(p) for p in flag_values}
    raw = cfg.get(key)
    if raw is None:
        return {}
    if isinstance(raw, dict):
        return {name: cfg.path(p) for name, p in raw.items()}
    return {Path(p).stem: cfg.path(p) for p in raw}


def _videos(cfg: Config, args) -> dict:
    paths = _named_paths(cfg, "videos", getattr(args, "video", None))
    if not paths and cfg.get("video"):
        p = cfg.path(cfg.get("video"))
        paths = {p.stem: p}
    if not paths:
        raise InputError("missing input: no videos configured")
    out = {}
    for name, p in paths.items():
        out[name] = load_manifest(_existing(p, "video manifest"))
    return out


def _traces(cfg: Config, args) -> dict:
    paths = _named_paths(cfg, "traces", getattr(args, "trace", None))
    if not paths:
        raise InputError("missing input: no traces configured")
    fmt = cfg.get("trace_format", "auto")
    return {name: _trace(p, fmt) for name, p in paths.items()}


def _profiles(cfg: Config, videos: dict) -> dict[str, SensitivityProfile]:
    extra = cfg.get("profiles") or {}
    out = {}
    for name, (video, weights) in videos.items():
        if name in extra:
            out[name] = load_profile(_existing(cfg.path(extra[name]), "profile"))
        elif weights is not None:
            out[name] = weights
        else:
            log.warning("video %s has no sensitivity weights; using uniform weights", name)
            out[name] = SensitivityProfile.uniform(video.chunk_count)
    return out


def _policies(cfg: Config, names) -> dict:
    specs = list(names) if names else cfg.get("policies") or ["bba", "fugu", "sensei-fugu"]
    planner = cfg.block("planner")
    out = {}
    for spec in specs:
        if isinstance(spec, str):
            spec = {"kind": spec}
        spec = dict(spec)
        kind = spec.pop("kind", None) or spec.get("name")
        label = spec.pop("name", kind)
        kwargs = spec
        if kind in ("fugu", "sensei-fugu"):
            for k in ("horizon", "buffer_step_s"):
                if k in planner:
                    kwargs.setdefault(k, planner[k])
        if kind in ("sensei-fugu", "offline-optimal") and "stall_levels_s" in planner:
            kwargs.setdefault("stall_levels_s", tuple(planner["stall_levels_s"]))
        try:
            out[label] = make_policy(kind, **kwargs)
        except TypeError as exc:
            raise InputError(f"bad policy spec {label!r}: {exc}") from None
        except ValueError as exc:
            raise InputError(str(exc)) from None
    return out


def _out_dir(args, cfg: Config) -> Path:
    out = Path(args.out) if args.out else cfg.path(cfg.get("output_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# -- commands ---------------------------------------------------------------------

def cmd_schedule(args, cfg: Config) -> int:
    video_path = args.video or cfg.get("video")
    video, _ = load_manifest(_existing(cfg.path(_require(video_path, "video spec")), "video spec"))
    camp = _campaign(cfg, args.seed)
    if args.step == "1":
        plan = schedule_step1(video, camp)
    elif args.step == "2":
        prof_path = args.profile or cfg.get("profile")
        prof = load_profile(_existing(cfg.path(_require(prof_path, "step-1 profile")), "profile"))
        plan = schedule_step2(video, camp, prof)
    else:
        total = _require(args.total if args.total is not None else cfg.get("total"), "--total")
        plan = enumerate_series(
            video, int(total),
            args.bitrate_levels or video.n_levels,
            args.rebuffer_levels or 3,
            seed=camp.seed,
            ratings_per_video=args.ratings_per_video,
        )
    out = _out_dir(args, cfg)
    write_json(out / f"plan-{args.step}.json", plan_to_dict(plan))
    if plan.all_renderings():
        cost = estimate_cost(plan, video, camp)
    else:
        cost = 0.0
    summary = (f"step: {plan.step}\nrenderings: {len(plan.all_renderings())}\n"
               f"ratings: {plan.total_required_ratings}\nestimated_cost_usd: {cost:.2f}\n")
    _write(out / f"cost-{args.step}.txt", summary)
    print(summary, end="")
    return EXIT_OK


def cmd_ratings_simulate(args, cfg: Config) -> int:
    plan = load_plan(_existing(cfg.path(_require(args.plan or cfg.get("plan"), "--plan")), "plan"))
    truth_path = _require(args.truth or cfg.get("truth_profile"), "--truth")
    truth = load_profile(_existing(cfg.path(truth_path), "truth profile"))
    records = simulate_raters(plan, truth, _qoe(cfg), args.sigma,
                              seed=args.seed if args.seed is not None else cfg.get("seed", 0),
                              quantize=args.quantize)
    out = _out_dir(args, cfg)
    write_ratings_csv(records, out / f"ratings-{plan.step}.csv")
    print(f"wrote {len(records)} ratings")
    return EXIT_OK


def _plans_and_ratings(args, cfg: Config):
    plan_paths = args.plan or cfg.get("plans") or []
    rating_paths = args.ratings or cfg.get("ratings") or []
    if not plan_paths:
        raise InputError("missing input: no plans given")
    if not rating_paths:
        raise InputError("missing input: no ratings given")
    plans = [load_plan(_existing(cfg.path(p), "plan")) for p in plan_paths]
    ratings = []
    for p in rating_paths:
        ratings.extend(load_ratings_csv(_existing(cfg.path(p), "ratings file")))
    return plans, ratings


def _rejection_summary(result) -> str:
    lines = [f"accepted ratings: {len(result.accepted)}",
             f"rejected raters: {len(result.rejected_raters)}"]
    for rater in sorted(result.reasons):
        lines.append(f"  {rater}: {', '.join(result.reasons[rater])}")
    return "\n".join(lines) + "\n"


def cmd_sanitize(args, cfg: Config) -> int:
    plans, ratings = _plans_and_ratings(args, cfg)
    refs = [p.reference_id for p in plans if p.reference_id]
    result = sanitize(ratings, plans, refs)
    out = _out_dir(args, cfg)
    write_ratings_csv(result.accepted, out / "accepted.csv")
    write_json(out / "rejections.json", {r: list(v) for r, v in sorted(result.reasons.items())})
    print(_rejection_summary(result), end="")
    return EXIT_OK


def cmd_profile(args, cfg: Config) -> int:
    plans, ratings = _plans_and_ratings(args, cfg)
    items = [r for p in plans for _, r in p.all_renderings()]
    if not items:
        raise InsufficientDataError("plans contain no renderings")
    video = items[0].video
    profile, result = profile_from_ratings(video, _qoe(cfg), plans, ratings,
                                           merge_steps=not args.no_merge)
    out = _out_dir(args, cfg)
    write_json(out / "manifest.json", manifest_to_dict(video, profile))
    print(_rejection_summary(result), end="")
    return EXIT_OK


def _result_text(result, fmt: str) -> tuple[str, str]:
    if fmt == "json":
        return "results.json", results_json(result)
    return "results.csv", results_csv(result.rows)


def cmd_simulate(args, cfg: Config) -> int:
    videos = _videos(cfg, args)
    traces = _traces(cfg, args)
    policies = _policies(cfg, args.policy)
    profiles = _profiles(cfg, videos)
    scales = args.scale or cfg.get("scales") or [1.0]
    baseline = args.baseline or cfg.get("baseline")
    if baseline is None:
        baseline = next(iter(policies))
    result = evaluate_grid({k: v for k, (v, _) in videos.items()}, traces, policies, profiles,
                           _qoe(cfg), _sim(cfg, args.seed), baseline=baseline, scales=scales)
    out = _out_dir(args, cfg)
    for (v, t, p, s), session in result.logs.items():
        _write(out / "sessions" / f"{v}__{t}__{p}__{s!r}.json", session_log_json(session))
    name, text = _result_text(result, args.format)
    _write(out / name, text)
    _write(out / "gains.csv", gains_csv(result.gains))
    print(f"simulated {len(result.rows)} sessions")
    return EXIT_OK


def _read_csv_rows(path: Path, required: tuple[str, ...]) -> list[dict]:
    text = _existing(path, "input table").read_text(encoding="utf-8")
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise InputError(f"{path}: missing columns {missing}")
    return list(reader)


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def _evaluate_gains(args, cfg, out: Path) -> None:
    path = args.results or cfg.get("results")
    rows = _read_csv_rows(cfg.path(_require(path, "--results")),
                          ("video", "trace", "policy", "scale", "normalized_qoe"))
    policies = sorted({r["policy"] for r in rows})
    baseline = args.baseline or cfg.get("baseline") or policies[0]
    if baseline not in policies:
        raise InputError(f"baseline {baseline!r} not in results")
    cell = {(r["video"], r["trace"], r["scale"], r["policy"]): float(r["normalized_qoe"]) for r in rows}
    by_video, by_trace = defaultdict(list), defaultdict(list)
    for (v, t, s, p), q in sorted(cell.items()):
        ref = cell.get((v, t, s, baseline))
        if ref is None:
            raise InputError(f"no baseline row for {(v, t, s)}")
        if ref <= 0:
            continue
        g = qoe_gain(q, ref)
        by_video[(v, p)].append(g)
        by_trace[(t, p)].append(g)

    def summarize(groups, key_name):
        rows_out = []
        for (k, p), gs in sorted(groups.items()):
            rows_out.append((k, p, baseline, math.fsum(gs) / len(gs), len(gs)))
        return _table((key_name, "policy", "baseline", "mean_gain", "cells"), rows_out)

    _write(out / "gains_by_video.csv", summarize(by_video, "video"))
    _write(out / "gains_by_trace.csv", summarize(by_trace, "trace"))


def _evaluate_savings(args, cfg, out: Path) -> None:
    videos = _videos(cfg, args)
    traces = _traces(cfg, args)
    policies = _policies(cfg, args.policy)
    profiles = _profiles(cfg, videos)
    params, sim_cfg = _qoe(cfg), _sim(cfg, args.seed)
    grid = args.scale or cfg.get("scale_grid") or list(DEFAULT_SCALE_GRID)
    target = args.target if args.target is not None else cfg.get("target_qoe", 0.8)
    baseline = args.baseline or cfg.get("baseline") or next(iter(policies))
    if baseline not in policies:
        raise InputError(f"baseline {baseline!r} is not among the policies")
    rows = []
    for v in sorted(videos):
        for t in sorted(traces):
            factors = {p: min_bandwidth_for_target(videos[v][0], traces[t], pol, profiles[v],
                                                   params, sim_cfg, target, grid)
                       for p, pol in sorted(policies.items())}
            ref = factors[baseline]
            for p, f in factors.items():
                save = bandwidth_savings(f, ref) if f is not None and ref is not None else None
                rows.append((v, t, p, "" if f is None else f, "" if save is None else save))
    _write(out / "savings.csv", _table(("video", "trace", "policy", "min_factor", "savings_vs_baseline"), rows))


def _evaluate_accuracy(args, cfg, out: Path) -> None:
    path = args.pairs or cfg.get("pairs")
    rows = _read_csv_rows(cfg.path(_require(path, "--pairs")),
                          ("video", "trace", "policy", "true_qoe", "pred_qoe"))
    if not rows:
        raise InputError("no pairs to evaluate")
    try:
        truth = [float(r["true_qoe"]) for r in rows]
        pred = [float(r["pred_qoe"]) for r in rows]
    except (TypeError, ValueError):
        raise InputError("true_qoe and pred_qoe must be numeric for every row") from None
    t_map, p_map = defaultdict(dict), defaultdict(dict)
    for r, tq, pq in zip(rows, truth, pred):
        key = (r["video"], r["trace"])
        if r["policy"] in t_map[key]:
            raise InputError(f"duplicate row for {key + (r['policy'],)}")
        t_map[key][r["policy"]] = tq
        p_map[key][r["policy"]] = pq
    errs = [relative_error(p, t) for p, t in zip(pred, truth) if t > 0]
    metrics = [
        ("plcc", plcc(pred, truth)),
        ("srcc", srcc(pred, truth)),
        ("mean_relative_error", math.fsum(errs) / len(errs) if errs else float("nan")),
        ("discordant_fraction", discordant_fraction(t_map, p_map)),
    ]
    _write(out / "model_accuracy.csv", _table(("metric", "value"), metrics))


def cmd_evaluate(args, cfg: Config) -> int:
    out = _out_dir(args, cfg)
    {"gains": _evaluate_gains, "savings": _evaluate_savings,
     "model-accuracy": _evaluate_accuracy}[args.mode](args, cfg, out)
    print(f"wrote {args.mode} report to {out}")
    return EXIT_OK


def cmd_oracle(args, cfg: Config) -> int:
    videos = _videos(cfg, args)
    traces = _traces(cfg, args)
    profiles = _profiles(cfg, videos)
    params, sim_cfg = _qoe(cfg), _sim(cfg, args.seed)
    out = _out_dir(args, cfg)
    for v in sorted(videos):
        for t in sorted(traces):
            plan = offline_optimal_plan(videos[v][0], traces[t], params, profiles[v],
                                        allow_stalls=not args.no_stalls,
                                        stall_levels=sim_cfg.stall_levels_s,
                                        buffer_cap_s=sim_cfg.buffer_cap_s)
            payload = {
                "video": v, "trace": t,
                "bitrate_idx": list(plan.rendered.bitrate_idx),
                "stall_s": list(plan.rendered.stall_s),
                "intentional_stall_s": list(plan.intentional_stall_s),
                "weighted_qoe": plan.weighted_qoe,
                "eps_disc": plan.eps_disc,
            }
            _write(out / "oracle" / f"{v}__{t}.json", dumps(payload))
            print(f"{v} x {t}: weighted QoE {plan.weighted_qoe:.4f}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # subcommands repeat the global flags without defaults, so values given
        # before the subcommand survive
        g = argparse.ArgumentParser(add_help=False)
        kw = {"default": argparse.SUPPRESS} if suppress else {}
        g.add_argument("--config", help="JSON experiment config", **kw)
        g.add_argument("--seed", type=int, **({"default": None} | kw))
        g.add_argument("--out", help="output directory", **kw)
        g.add_argument("--format", choices=("csv", "json"), **({"default": "csv"} | kw))
        g.add_argument("-v", "--verbose", action="store_true", **kw)
        return g

    common = global_flags(True)
    parser = argparse.ArgumentParser(prog="sensiabr", parents=[global_flags(False)],
                                     description="Sensitivity-weighted ABR toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", parents=[common], help="schedule a rating campaign")
    p.add_argument("--step", choices=("1", "2", "enumerate"), required=True)
    p.add_argument("--video")
    p.add_argument("--profile", help="step-1 profile (step 2 only)")
    p.add_argument("--total", type=int)
    p.add_argument("--bitrate-levels", type=int)
    p.add_argument("--rebuffer-levels", type=int)
    p.add_argument("--ratings-per-video", type=int, default=1)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("ratings-simulate", parents=[common], help="synthetic ratings for a plan")
    p.add_argument("--plan")
    p.add_argument("--truth", help="true profile JSON")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--quantize", action="store_true", help="round scores to integers")
    p.set_defaults(func=cmd_ratings_simulate)

    for name, func, helptext in (("sanitize", cmd_sanitize, "drop unreliable raters"),
                                 ("profile", cmd_profile, "infer sensitivity weights")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--plan", action="append")
        p.add_argument("--ratings", action="append")
        if name == "profile":
            p.add_argument("--no-merge", action="store_true",
                           help="regress on the last plan's ratings only")
        p.set_defaults(func=func)

    def grid_args(p):
        p.add_argument("--video", action="append", help="video manifest (repeatable)")
        p.add_argument("--trace", action="append", help="trace file (repeatable)")
        p.add_argument("--policy", action="append", help="policy name (repeatable)")
        p.add_argument("--scale", action="append", type=float)
        p.add_argument("--baseline")

    p = sub.add_parser("simulate", parents=[common], help="run the evaluation grid")
    grid_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", parents=[common], help="gains, savings or model accuracy")
    p.add_argument("--mode", choices=("gains", "savings", "model-accuracy"), required=True)
    grid_args(p)
    p.add_argument("--results", help="results CSV (gains)")
    p.add_argument("--pairs", help="CSV of video,trace,policy,true_qoe,pred_qoe")
    p.add_argument("--target", type=float, help="normalized QoE target (savings)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle", parents=[common], help="offline optimal schedules")
    p.add_argument("--video", action="append")
    p.add_argument("--trace", action="append")
    p.add_argument("--no-stalls", action="store_true")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = Config.load(args.config)
        return args.func(args, cfg)
    except InsufficientDataError as exc:
        print(f"error: insufficient data: {exc}", file=sys.stderr)
        return EXIT_NO_DATA
    except InfeasibleError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, TraceFormatError, ValidationError, FileNotFoundError,
            KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
