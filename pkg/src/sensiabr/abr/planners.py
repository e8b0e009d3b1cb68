"""Buffer-based baseline and lookahead value-iteration planners.

The planners share one download model with the simulator.  With ``a = B + s``
for an intentional stall ``s`` and download time ``t``::

    stall = s + max(t - a, 0)
    B'    = min(max(a - t, 0) + L, cap)

Buffer levels are snapped down to a ``buffer_step_s`` grid after every step,
so a plan's value is exact for the discretized dynamics and within
``discretization_bound`` of the continuous ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import ValidationError, VideoSpec
from ..qoe import QoeModelParams
from .actions import Action, PlayerState, SelectBitrate, Stall, TransmissionTimeDistribution

BUFFER_STEP_S = 0.25
TIE_TOLERANCE = 1e-10
_SNAP_EPS = 1e-9


def bba_decide(state: PlayerState, video: VideoSpec, reservoir_s: float = 5.0,
               cushion_s: float = 13.0) -> SelectBitrate:
    """Buffer-based rate map: lowest level up to the reservoir, top from the cushion."""
    if not reservoir_s < cushion_s <= state.buffer_cap_s + 1e-9:
        raise ValidationError("need reservoir < cushion <= buffer cap")
    b = state.buffer_s
    if b <= reservoir_s:
        return SelectBitrate(0)
    if b >= cushion_s:
        return SelectBitrate(video.top_level)
    frac = (b - reservoir_s) / (cushion_s - reservoir_s)
    return SelectBitrate(min(video.top_level, int(math.floor(frac * video.top_level + 1e-12))))


def snap_buffer(b, step: float = BUFFER_STEP_S):
    """Grid index of buffer level(s) ``b``, rounded down."""
    return np.floor(np.asarray(b, dtype=float) / step + _SNAP_EPS).astype(int)


def discretization_bound(params: QoeModelParams, weights: Sequence[float],
                         step: float = BUFFER_STEP_S) -> float:
    """Bound on what snapping the buffer can cost over a horizon.

    Each snap loses less than ``step`` seconds of buffer, and lost buffer can
    turn into stall on any later chunk.
    """
    return params.beta * step * math.fsum(w * (j + 1) for j, w in enumerate(weights))


@dataclass(frozen=True)
class PlanResult:
    value: float
    stall_s: float
    bitrate_idx: int
    horizon: int
    eps_disc: float

    @property
    def action(self) -> Action:
        return Stall(self.stall_s) if self.stall_s > 0 else SelectBitrate(self.bitrate_idx)


def solve_lookahead(state: PlayerState, video: VideoSpec, params: QoeModelParams,
                    dist: TransmissionTimeDistribution, horizon: int,
                    weights: Sequence[float] | None = None,
                    stall_levels: Sequence[float] = (0.0,),
                    buffer_step_s: float = BUFFER_STEP_S) -> PlanResult:
    """Maximize expected (weighted) QoE over the next ``horizon`` chunks.

    Backward value iteration over ``(buffer grid, last level)``.  Ties go to
    the smaller stall, then the lower bitrate.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    h = min(horizon, video.chunk_count - state.next_chunk)
    if h < 1:
        raise ValueError("no chunks left to plan")
    if dist.first_chunk != state.next_chunk or dist.horizon < h:
        raise ValueError("distribution does not cover the planning horizon")
    if weights is None:
        w = np.ones(h)
    else:
        if len(weights) < h:
            raise ValueError(f"weight window has {len(weights)} entries, horizon needs {h}")
        w = np.asarray(weights[:h], dtype=float)
    stalls = sorted({0.0, *(float(s) for s in stall_levels)})

    cap = state.buffer_cap_s
    L = video.chunk_duration_s
    step = buffer_step_s
    n_b = int(snap_buffer(cap, step)) + 1
    grid = np.arange(n_b) * step
    n_lev = video.n_levels
    A = np.array([params.quality(b) for b in video.ladder])
    # switch penalty indexed [level, last]; the extra last column means "no previous chunk"
    switch = np.zeros((n_lev, n_lev + 1))
    switch[:, :n_lev] = params.gamma * np.abs(A[:, None] - A[None, :])

    root_b = min(state.buffer_s, cap)
    root_idx = min(int(snap_buffer(root_b, step)), n_b - 1)
    root_last = n_lev if state.last_bitrate_idx is None else state.last_bitrate_idx

    v_next = np.zeros((n_b, n_lev + 1))
    for k in range(h - 1, -1, -1):
        if k == 0:
            b_now = grid[root_idx:root_idx + 1]
            b_true = np.array([root_b])
        else:
            b_now = grid
            b_true = grid
        best = np.full((b_now.size, n_lev + 1), -np.inf)
        best_s = np.zeros(best.shape)
        best_l = np.zeros(best.shape, dtype=int)
        for s in stalls:
            legal = (b_true + s <= cap + 1e-9) if s > 0 else np.ones(b_now.size, bool)
            if not legal.any():
                continue
            a = b_now + s
            for lvl in range(n_lev):
                gain = np.zeros(b_now.size)
                mass = 0.0
                for t, p in dist.bins[k][lvl]:
                    stall = s + np.maximum(t - a, 0.0)
                    nb = np.minimum(np.maximum(a - t, 0.0) + L, cap)
                    j = np.minimum(snap_buffer(nb, step), n_b - 1)
                    gain += p * (w[k] * (params.alpha * A[lvl] - params.beta * stall)
                                 + v_next[j, lvl])
                    mass += p
                total = gain[:, None] - (w[k] * mass) * switch[lvl][None, :]
                total[~legal] = -np.inf
                better = total > best + TIE_TOLERANCE
                best = np.where(better, total, best)
                best_s = np.where(better, s, best_s)
                best_l = np.where(better, lvl, best_l)
        v_next = best
        if k == 0:
            value = float(best[0, root_last])
            return PlanResult(value, float(best_s[0, root_last]), int(best_l[0, root_last]),
                              h, discretization_bound(params, w, step))
    raise AssertionError("unreachable")


def fugu_plan(state: PlayerState, video: VideoSpec, params: QoeModelParams,
              dist: TransmissionTimeDistribution, horizon: int = 5,
              buffer_step_s: float = BUFFER_STEP_S) -> SelectBitrate:
    res = solve_lookahead(state, video, params, dist, horizon, buffer_step_s=buffer_step_s)
    return SelectBitrate(res.bitrate_idx)


def sensei_fugu_plan(state: PlayerState, video: VideoSpec, params: QoeModelParams,
                     profile_window: Sequence[float], dist: TransmissionTimeDistribution,
                     horizon: int = 5, stall_levels: Sequence[float] = (0.0, 1.0, 2.0),
                     buffer_step_s: float = BUFFER_STEP_S) -> Action:
    res = solve_lookahead(state, video, params, dist, horizon, weights=profile_window,
                          stall_levels=stall_levels, buffer_step_s=buffer_step_s)
    return res.action
