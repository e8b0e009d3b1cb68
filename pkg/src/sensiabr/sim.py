"""Trace-driven playback simulation and experiment sweeps."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

from sklearn.base import BaseEstimator, clone

from .abr.actions import PlayerState, policy_step_loop
from .core import (
    RenderedVideo,
    SessionLog,
    StallEvent,
    ThroughputTrace,
    ValidationError,
    VideoSpec,
    download_time,
    scale_trace,
)
from .qoe import QoeModelParams, SensitivityProfile, qoe_gain, session_qoe

STARTUP_POLICIES = ("play-after-first-chunk",)
DEFAULT_SCALE_GRID = tuple(round(0.2 + 0.05 * k, 2) for k in range(17))
RESULT_FIELDS = ("video", "trace", "policy", "scale", "weighted_qoe", "unweighted_qoe",
                 "stall_s", "mean_bitrate_kbps", "normalized_qoe")


@dataclass(frozen=True)
class SimConfig:
    buffer_cap_s: float = 15.0
    startup_policy: str = "play-after-first-chunk"
    horizon: int = 5
    stall_levels_s: tuple[float, ...] = (0.0, 1.0, 2.0)
    seed: int = 0
    max_consecutive_stalls: int = 3

    def __post_init__(self):
        if self.startup_policy not in STARTUP_POLICIES:
            raise ValidationError(f"unknown startup policy {self.startup_policy!r}")
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if not self.buffer_cap_s > 0:
            raise ValidationError("buffer_cap_s must be positive")
        levels = tuple(sorted({float(s) for s in self.stall_levels_s}))
        if any(s < 0 for s in levels):
            raise ValidationError("stall levels must be non-negative")
        object.__setattr__(self, "stall_levels_s", levels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stall_levels_s"] = list(self.stall_levels_s)
        return d


def _bind(policy, video, trace, profile, params, cfg):
    if isinstance(policy, BaseEstimator):
        return clone(policy).fit(video, trace, profile, params, cfg.buffer_cap_s)
    return policy


def simulate_session(video: VideoSpec, trace: ThroughputTrace, policy,
                     profile: SensitivityProfile, params: QoeModelParams | None = None,
                     cfg: SimConfig | None = None, label: str | None = None) -> SessionLog:
    """Play ``video`` over ``trace`` with ``policy`` choosing every chunk.

    Estimator policies are cloned and fitted to this session first; any other
    object only needs a ``decide(state, weights, allow_stall)`` method.

    ``buffer`` below is the time until playback would underflow, counting any
    intentional pause already requested.  Downloads run back to back, pausing
    only while the buffer is above its cap; playback keeps running meanwhile.
    """
    params = params or QoeModelParams()
    cfg = cfg or SimConfig()
    n, L, cap = video.chunk_count, video.chunk_duration_s, cfg.buffer_cap_s
    if len(profile) != n:
        raise ValueError(f"profile has {len(profile)} weights for {n} chunks")
    if cap <= L:
        raise ValidationError("buffer cap must exceed the chunk duration")
    name = label or getattr(policy, "name", type(policy).__name__)
    policy = _bind(policy, video, trace, profile, params, cfg)

    clock = buf = idle_total = 0.0
    last = None
    history: list[float] = []
    idx, stalls, intentional = [], [], []
    downloads, events = [], []
    trajectory = [(0.0, 0.0)]
    for i in range(n):
        state = PlayerState(i, buf, last, clock, tuple(history), cap)
        window = profile.window(i, cfg.horizon)
        s, lvl = policy_step_loop(policy, state, window, video.n_levels,
                                  cfg.stall_levels_s, cfg.max_consecutive_stalls)
        size = float(video.chunk_sizes[i, lvl])
        t = download_time(trace, clock, size)
        a = buf + s
        under = max(t - a, 0.0)
        if s > 0:
            events.append(StallEvent(clock + buf, s, "intentional"))
        if under > 0:
            events.append(StallEvent(clock + a, under, "startup" if i == 0 else "underflow"))
        downloads.append((clock, clock + t))
        nb = max(a - t, 0.0) + L
        idle = max(nb - cap, 0.0)
        nb = nb - idle
        clock = clock + t + idle
        trajectory.append((clock, nb))
        buf = nb
        idle_total += idle
        history.append(size / t)
        last = lvl
        idx.append(lvl)
        stalls.append(s + under)
        intentional.append(s)

    rendered = RenderedVideo(video, tuple(idx), tuple(stalls))
    report = session_qoe(params, profile, rendered)
    return SessionLog(
        rendered=rendered,
        intentional_stall_s=tuple(intentional),
        download_intervals=tuple(downloads),
        stall_intervals=tuple(events),
        buffer_trajectory=tuple(trajectory),
        achieved_qoe=report.weighted_total,
        wall_time_s=clock + buf,
        playback_s=video.duration_s,
        idle_s=idle_total,
        buffer_cap_s=cap,
        report=report,
        policy=name,
    )


# -- grids ----------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    video: str
    trace: str
    policy: str
    scale: float
    weighted_qoe: float
    unweighted_qoe: float
    stall_s: float
    mean_bitrate_kbps: float
    normalized_qoe: float


@dataclass(frozen=True)
class GainRow:
    video: str
    trace: str
    scale: float
    policy: str
    baseline: str
    gain: float | None


@dataclass
class GridResult:
    rows: list[ResultRow]
    gains: list[GainRow]
    logs: dict[tuple[str, str, str, float], SessionLog]


def _named(items, what: str) -> dict:
    if isinstance(items, Mapping):
        out = dict(items)
    else:
        out = {}
        for k, item in enumerate(items):
            key = getattr(item, "name", None) if what == "policy" else None
            key = key or f"{what}{k}"
            if key in out:
                raise ValueError(f"duplicate {what} name {key!r}; pass a mapping")
            out[key] = item
    if not out:
        raise ValueError(f"no {what}s given")
    return out


def row_from_log(video: str, trace: str, policy: str, scale: float, log: SessionLog) -> ResultRow:
    return ResultRow(
        video, trace, policy, float(scale),
        weighted_qoe=log.report.weighted_total,
        unweighted_qoe=log.report.unweighted_total,
        stall_s=log.rendered.total_stall_s,
        mean_bitrate_kbps=math.fsum(log.rendered.bitrates_kbps) / log.rendered.video.chunk_count,
        normalized_qoe=log.report.normalized,
    )


def evaluate_grid(videos, traces, policies, profiles: Mapping[str, SensitivityProfile],
                  params: QoeModelParams | None = None, cfg: SimConfig | None = None,
                  baseline: str | None = None, scales: Sequence[float] = (1.0,),
                  n_jobs: int = 1) -> GridResult:
    """Simulate every (video, trace, scale, policy) cell.

    Rows come back sorted by key, so the result does not depend on input
    order.  Gains compare each policy's normalized weighted QoE with the
    baseline policy's on the same cell; an undefined gain is ``None``.
    """
    videos, traces, policies = _named(videos, "video"), _named(traces, "trace"), _named(policies, "policy")
    params = params or QoeModelParams()
    cfg = cfg or SimConfig()
    if baseline is None:
        baseline = sorted(policies)[0]
    if baseline not in policies:
        raise ValueError(f"baseline {baseline!r} is not among the policies")
    for v in videos:
        if v not in profiles:
            raise ValueError(f"no profile for video {v!r}")

    cells = [(v, t, p, float(s)) for v in sorted(videos) for t in sorted(traces)
             for s in sorted(scales) for p in sorted(policies)]

    def run(cell):
        v, t, p, s = cell
        trace = traces[t] if s == 1.0 else scale_trace(traces[t], s)
        return simulate_session(videos[v], trace, policies[p], profiles[v], params, cfg, label=p)

    if n_jobs == 1:
        logs = [run(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=None if n_jobs < 1 else n_jobs) as pool:
            logs = list(pool.map(run, cells))
    by_cell = dict(zip(cells, logs))
    rows = [row_from_log(*c, by_cell[c]) for c in cells]

    gains = []
    base_q = {(r.video, r.trace, r.scale): r.normalized_qoe for r in rows if r.policy == baseline}
    for r in rows:
        if r.policy == baseline:
            continue
        ref = base_q[(r.video, r.trace, r.scale)]
        g = qoe_gain(r.normalized_qoe, ref) if ref > 0 else None
        gains.append(GainRow(r.video, r.trace, r.scale, r.policy, baseline, g))
    return GridResult(rows, gains, by_cell)


def min_bandwidth_for_target(video: VideoSpec, trace: ThroughputTrace, policy,
                             profile: SensitivityProfile, params: QoeModelParams | None,
                             cfg: SimConfig | None, target_qoe: float,
                             scale_grid: Sequence[float] = DEFAULT_SCALE_GRID) -> float | None:
    """Smallest trace scale whose normalized weighted QoE reaches ``target_qoe``."""
    grid = [float(x) for x in scale_grid]
    if not grid or any(x <= 0 for x in grid):
        raise ValueError("scale factors must be positive")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("scale_grid must be strictly ascending")
    for factor in grid:
        log = simulate_session(video, scale_trace(trace, factor), policy, profile, params, cfg)
        if log.report.normalized >= target_qoe:
            return factor
    return None


def bandwidth_savings(factor_a: float, factor_b: float) -> float:
    """Bandwidth policy A saves relative to policy B for the same target."""
    if not factor_b > 0:
        raise ValueError("factor_b must be positive")
    return 1.0 - factor_a / factor_b


# -- serialization ----------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def results_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in rows:
        w.writerow([_fmt(getattr(r, f)) for f in RESULT_FIELDS])
    return buf.getvalue()


def gains_csv(gains: Sequence[GainRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fields = ("video", "trace", "scale", "policy", "baseline", "gain")
    w.writerow(fields)
    for g in gains:
        w.writerow([_fmt(getattr(g, f)) for f in fields])
    return buf.getvalue()


def results_json(result: GridResult) -> str:
    payload = {
        "rows": [asdict(r) for r in result.rows],
        "gains": [asdict(g) for g in result.gains],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def session_log_json(log: SessionLog) -> str:
    return json.dumps(log.to_dict(), indent=2, sort_keys=True) + "\n"


def session_time_residual(log: SessionLog) -> float:
    """``wall - (playback + stalls)``; zero up to rounding for a consistent log."""
    return log.wall_time_s - (log.playback_s + log.total_stall_s)


__all__ = [
    "DEFAULT_SCALE_GRID", "GainRow", "GridResult", "ResultRow", "SimConfig", "bandwidth_savings",
    "evaluate_grid", "gains_csv", "min_bandwidth_for_target", "results_csv", "results_json",
    "row_from_log", "session_log_json", "session_time_residual", "simulate_session",
]
