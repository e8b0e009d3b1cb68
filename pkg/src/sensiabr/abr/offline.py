"""Offline optimal bitrate and stall schedule with full knowledge of the trace."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import InfeasibleError, RenderedVideo, ThroughputTrace, VideoSpec, download_times
from ..qoe import QoeModelParams, SensitivityProfile
from .planners import BUFFER_STEP_S, discretization_bound

_EPS = 1e-9


@dataclass(frozen=True)
class OfflinePlan:
    rendered: RenderedVideo
    intentional_stall_s: tuple[float, ...]
    weighted_qoe: float
    eps_disc: float
    states_explored: int = 0

    @property
    def bitrate_idx(self) -> tuple[int, ...]:
        return self.rendered.bitrate_idx


def offline_optimal_plan(video: VideoSpec, trace: ThroughputTrace, params: QoeModelParams,
                         profile: SensitivityProfile, allow_stalls: bool = True,
                         stall_levels=(0.0, 1.0, 2.0), buffer_cap_s: float = 15.0,
                         buffer_step_s: float = BUFFER_STEP_S,
                         clock_step_s: float = BUFFER_STEP_S) -> OfflinePlan:
    """Forward dynamic program over exact playback states.

    States carry the exact clock and buffer, so every kept path is simulated
    without approximation.  Paths that land in the same (last level, buffer
    bin, clock bin) cell are merged, keeping the best.  The merge is the only
    approximation and ``eps_disc`` bounds its nominal cost.  On a constant
    trace download times do not depend on the clock, so the clock is left out
    of the merge key.
    """
    n = video.chunk_count
    if len(profile) != n:
        raise ValueError("profile length does not match the video")
    if video.duration_s <= 0:
        raise InfeasibleError("video has no playable content")
    if buffer_cap_s < video.chunk_duration_s:
        raise InfeasibleError("buffer cap is smaller than one chunk")
    stalls = [0.0]
    if allow_stalls:
        stalls += sorted({float(s) for s in stall_levels if s > 0})
    w = np.asarray(profile.weights, dtype=float)
    A = np.array([params.quality(b) for b in video.ladder])
    L, cap = video.chunk_duration_s, buffer_cap_s
    n_lev = video.n_levels
    constant = trace.timestamps.size == 1 or bool(np.all(trace.throughput_bps == trace.throughput_bps[0]))

    clock = np.zeros(1)
    buf = np.zeros(1)
    last = np.full(1, -1)
    value = np.zeros(1)
    history = []  # per chunk: (parent, stall, level, chunk stall) of kept states
    explored = 0
    for i in range(n):
        cands = []
        for s_rank, s in enumerate(stalls):
            ok = np.flatnonzero(buf + s <= cap + _EPS) if s > 0 else np.arange(buf.size)
            if ok.size == 0:
                continue
            for lvl in range(n_lev):
                t = download_times(trace, clock[ok], video.chunk_sizes[i, lvl])
                a = buf[ok] + s
                stall = s + np.maximum(t - a, 0.0)
                nb = np.maximum(a - t, 0.0) + L
                idle = np.maximum(nb - cap, 0.0)
                nb = nb - idle
                nclock = clock[ok] + t + idle
                prev = last[ok]
                sw = np.where(prev >= 0, params.gamma * np.abs(A[lvl] - A[np.maximum(prev, 0)]), 0.0)
                q = params.alpha * A[lvl] - params.beta * stall - sw
                cands.append((ok, np.full(ok.size, s_rank), np.full(ok.size, lvl),
                              value[ok] + w[i] * q, stall, nb, nclock))
        parent, s_rank, lvl, val, stall, nb, nclock = (np.concatenate(c) for c in zip(*cands))
        explored += parent.size
        b_bin = np.floor(nb / buffer_step_s + _EPS).astype(np.int64)
        if constant:
            c_bin = np.zeros(nclock.size, np.int64)  # download times ignore the clock
        else:
            c_bin = np.floor(nclock / clock_step_s + _EPS).astype(np.int64)
        order = np.lexsort((parent, lvl, s_rank, -val, c_bin, b_bin, lvl))
        key = np.stack([lvl[order], b_bin[order], c_bin[order]], axis=1)
        first = np.ones(order.size, bool)
        first[1:] = np.any(key[1:] != key[:-1], axis=1)
        keep = order[first]
        history.append((parent[keep], np.asarray(stalls)[s_rank[keep]], lvl[keep], stall[keep]))
        clock, buf, last, value = nclock[keep], nb[keep], lvl[keep], val[keep]

    best = int(np.argmax(value))  # first maximum; states are in deterministic key order
    idx, intentional, stall_s = [0] * n, [0.0] * n, [0.0] * n
    node = best
    for i in range(n - 1, -1, -1):
        par, s_arr, l_arr, st_arr = history[i]
        idx[i], intentional[i], stall_s[i] = int(l_arr[node]), float(s_arr[node]), float(st_arr[node])
        node = int(par[node])
    rendered = RenderedVideo(video, tuple(idx), tuple(stall_s))
    eps = discretization_bound(params, w, max(buffer_step_s, clock_step_s))
    return OfflinePlan(rendered, tuple(intentional), float(value[best]), eps, explored)
