"""Transmission-time predictors feeding the lookahead planners."""
from __future__ import annotations

import numpy as np

from ..core import InsufficientDataError, ThroughputTrace, VideoSpec, download_times
from .actions import PlayerState, TransmissionTimeDistribution

HISTORY_WINDOW = 5


def _effective_horizon(state: PlayerState, video: VideoSpec, horizon: int) -> int:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return max(0, min(horizon, video.chunk_count - state.next_chunk))


def predictor_oracle(trace: ThroughputTrace, state: PlayerState, video: VideoSpec,
                     horizon: int) -> TransmissionTimeDistribution:
    """Point masses at the true download times, chunks fetched back to back per level."""
    h = _effective_horizon(state, video, horizon)
    sizes = video.chunk_sizes
    start = np.full(video.n_levels, float(state.clock_s))
    bins = []
    for k in range(h):
        t = download_times(trace, start, sizes[state.next_chunk + k])
        bins.append(tuple(((float(x), 1.0),) for x in t))
        start = start + t
    return TransmissionTimeDistribution(state.next_chunk, tuple(bins))


def throughput_histogram(samples, bins: int) -> list[tuple[float, float]]:
    """Equal-width histogram of throughput samples as ``(bin centre, mass)`` pairs."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    x = np.asarray(samples, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    if hi - lo <= 1e-9 * hi:
        return [(lo, 1.0)]  # equal up to rounding; numpy cannot split the range
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    centres = (edges[:-1] + edges[1:]) / 2
    total = counts.sum()
    return [(float(c), n / total) for c, n in zip(centres, counts) if n > 0]


def predictor_histogram(state: PlayerState, video: VideoSpec, horizon: int, bins: int = 5,
                        window: int = HISTORY_WINDOW) -> TransmissionTimeDistribution:
    """Throughput histogram over the last ``window`` samples, mapped to download times.

    With fewer than two samples in the window a single bin at the harmonic mean
    of everything observed is used.
    """
    history = state.recent_throughputs
    if not history:
        raise InsufficientDataError("no throughput samples to predict from")
    h = _effective_horizon(state, video, horizon)
    recent = history[-window:]
    if len(recent) < 2:
        arr = np.asarray(history, dtype=float)
        hist = [(float(len(arr) / np.sum(1.0 / arr)), 1.0)]
    else:
        hist = throughput_histogram(recent, bins)
    sizes = video.chunk_sizes
    out = []
    for k in range(h):
        row = sizes[state.next_chunk + k]
        out.append(tuple(tuple((float(s / c), p) for c, p in hist) for s in row))
    return TransmissionTimeDistribution(state.next_chunk, tuple(out))


class OraclePredictor:
    def __init__(self, trace: ThroughputTrace):
        self.trace = trace

    def __call__(self, state, video, horizon):
        return predictor_oracle(self.trace, state, video, horizon)


class HistogramPredictor:
    def __init__(self, bins: int = 5, window: int = HISTORY_WINDOW):
        self.bins = bins
        self.window = window

    def __call__(self, state, video, horizon):
        return predictor_histogram(state, video, horizon, self.bins, self.window)
