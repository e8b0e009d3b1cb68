"""Chunk-level and session-level QoE, plus the evaluation metrics."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import RenderedVideo, ValidationError

QUALITY_MAPS = ("linear-mbps", "log-mbps")


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class QoeModelParams:
    """Additive chunk QoE ``alpha*A(b) - beta*stall - gamma*|A(b) - A(b_prev)|``.

    ``stall_bound_s`` is the per-chunk stall assumed when computing the worst
    attainable session QoE for normalization.
    """

    alpha: float = 1.0
    beta: float = 4.3
    gamma: float = 1.0
    quality_map: str = "linear-mbps"
    stall_bound_s: float = 2.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValidationError(f"{name} must be a non-negative number")
        if self.quality_map not in QUALITY_MAPS:
            raise ValidationError(f"quality_map must be one of {QUALITY_MAPS}")
        if not self.stall_bound_s >= 0:
            raise ValidationError("stall_bound_s must be non-negative")

    def quality(self, bitrate_kbps: float) -> float:
        if bitrate_kbps <= 0:
            raise ValueError("bitrate must be positive")
        mbps = bitrate_kbps / 1000.0
        if self.quality_map == "linear-mbps":
            return mbps
        return math.log1p(mbps)

    def chunk_value(self, quality: float, stall_s: float, prev_quality: float | None) -> float:
        """QoE of one chunk given already-mapped quality values."""
        switch = 0.0 if prev_quality is None else abs(quality - prev_quality)
        return self.alpha * quality - self.beta * stall_s - self.gamma * switch

    def to_dict(self) -> dict:
        return asdict(self)


def chunk_qoe(params: QoeModelParams, bitrate_kbps: float, stall_s: float,
              prev_bitrate_kbps: float | None) -> float:
    if stall_s < 0:
        raise ValueError("stall_s must be non-negative")
    prev = None if prev_bitrate_kbps is None else params.quality(prev_bitrate_kbps)
    return params.chunk_value(params.quality(bitrate_kbps), stall_s, prev)


@dataclass(frozen=True)
class SensitivityProfile:
    """Per-chunk sensitivity weights, normalized to mean 1."""

    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if not w:
            raise ValidationError("profile needs at least one weight")
        if any(not (x >= 0 and math.isfinite(x)) for x in w):
            raise ValidationError("weights must be non-negative")
        if abs(math.fsum(w) / len(w) - 1.0) > 1e-9:
            raise ValidationError("weights must have mean 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, weights: Sequence[float]) -> "SensitivityProfile":
        w = np.asarray(weights, dtype=float)
        mean = w.mean() if w.size else 0.0
        if not mean > 0:
            raise ValidationError("cannot normalize weights with non-positive mean")
        return cls(tuple((w / mean).tolist()))

    @classmethod
    def uniform(cls, n: int) -> "SensitivityProfile":
        return cls((1.0,) * n)

    def __len__(self):
        return len(self.weights)

    def window(self, start: int, length: int) -> tuple[float, ...]:
        return self.weights[start:start + length]


@dataclass(frozen=True)
class QoeReport:
    per_chunk_qoe: tuple[float, ...]
    weighted_total: float
    unweighted_total: float
    normalized: float
    params: dict = field(default_factory=dict)


def session_bounds(params: QoeModelParams, ladder: Sequence[float],
                   weights: Sequence[float]) -> tuple[float, float]:
    """Min and max attainable weighted session QoE on ``ladder``.

    The bounds are per-chunk: the best chunk is the top bitrate without
    penalties; the worst is the lowest bitrate with a maximal switch and a
    ``stall_bound_s`` stall (the first chunk has no switch term).
    """
    a_lo, a_hi = params.quality(min(ladder)), params.quality(max(ladder))
    best = params.alpha * a_hi
    worst_first = params.alpha * a_lo - params.beta * params.stall_bound_s
    worst = worst_first - params.gamma * (a_hi - a_lo)
    w = list(weights)
    q_max = math.fsum(x * best for x in w)
    q_min = math.fsum([w[0] * worst_first] + [x * worst for x in w[1:]])
    return q_min, q_max


def normalize_qoe(value: float, q_min: float, q_max: float) -> float:
    if q_max <= q_min:
        return 1.0
    return min(1.0, max(0.0, (value - q_min) / (q_max - q_min)))


def session_qoe(params: QoeModelParams, profile: SensitivityProfile,
                rendered: RenderedVideo) -> QoeReport:
    n = rendered.video.chunk_count
    if len(profile) != n:
        raise ValueError(f"profile has {len(profile)} weights for {n} chunks")
    ladder = rendered.video.ladder
    per_chunk = []
    prev = None
    for idx, stall in zip(rendered.bitrate_idx, rendered.stall_s):
        a = params.quality(ladder[idx])
        per_chunk.append(params.chunk_value(a, stall, prev))
        prev = a
    weighted = math.fsum(w * q for w, q in zip(profile.weights, per_chunk))
    q_min, q_max = session_bounds(params, ladder, profile.weights)
    return QoeReport(
        per_chunk_qoe=tuple(per_chunk),
        weighted_total=weighted,
        unweighted_total=math.fsum(per_chunk),
        normalized=normalize_qoe(weighted, q_min, q_max),
        params=params.to_dict(),
    )


# -- metrics ------------------------------------------------------------------

def plcc(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("plcc needs two equal-length vectors of length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def srcc(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman correlation; ties get average ranks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("srcc needs two equal-length vectors of length >= 2")
    return plcc(rankdata(x), rankdata(y))


def _sign(v: float) -> int:
    return (v > 0) - (v < 0)


def discordant_fraction(true_scores: Mapping, pred_scores: Mapping) -> float:
    """Fraction of algorithm pairs ranked differently by ``pred`` and ``true``.

    Both arguments map a (video, trace) key to ``{algorithm: qoe}``.  A pair tied
    under one mapping but not the other is discordant.
    """
    if set(true_scores) != set(pred_scores):
        raise ValueError("true and predicted scores cover different (video, trace) keys")
    total = discordant = 0
    for key in sorted(true_scores, key=repr):
        truth, pred = true_scores[key], pred_scores[key]
        if set(truth) != set(pred):
            raise ValueError(f"algorithm sets differ for {key!r}")
        for a, b in itertools.combinations(sorted(truth), 2):
            total += 1
            if _sign(truth[a] - truth[b]) != _sign(pred[a] - pred[b]):
                discordant += 1
    if total == 0:
        raise ValueError("no algorithm pairs to compare")
    return discordant / total


def relative_error(pred: float, truth: float) -> float:
    if not truth > 0:
        raise ValueError("truth must be positive")
    return abs(pred - truth) / truth


def qoe_gain(q1: float, q2: float) -> float:
    """Relative QoE gain of ``q1`` over ``q2``."""
    if not q2 > 0:
        raise ValueError("reference QoE must be positive")
    return (q1 - q2) / q2
