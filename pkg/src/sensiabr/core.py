"""Domain types and throughput-trace manipulation shared by every module."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_LADDER_KBPS = (300.0, 750.0, 1200.0, 1850.0, 2850.0)
DEFAULT_CHUNK_DURATION_S = 4.0


class ValidationError(ValueError):
    """An object violates one of its construction invariants."""


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InsufficientDataError(ValueError):
    pass


class DegenerateChunkError(InsufficientDataError):
    def __init__(self, chunk: int, message: str | None = None):
        self.chunk = chunk
        super().__init__(message or f"chunk {chunk} has no variation across renderings")


class InfeasibleError(ValueError):
    pass


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class VideoSpec:
    """An encoded video: ``chunk_count`` chunks of equal duration at every ladder level.

    ``chunk_sizes`` is a ``(chunk_count, len(ladder))`` array in bits.  When it is
    omitted the sizes follow the constant-bitrate assumption, bitrate x duration.
    """

    chunk_count: int
    chunk_duration_s: float = DEFAULT_CHUNK_DURATION_S
    ladder: Sequence[float] = DEFAULT_LADDER_KBPS
    chunk_sizes: np.ndarray | None = None

    def __post_init__(self):
        if int(self.chunk_count) != self.chunk_count or self.chunk_count < 1:
            raise ValidationError("chunk_count must be a positive integer")
        object.__setattr__(self, "chunk_count", int(self.chunk_count))
        if not (self.chunk_duration_s > 0 and math.isfinite(self.chunk_duration_s)):
            raise ValidationError("chunk_duration_s must be positive")
        ladder = tuple(float(b) for b in self.ladder)
        if not ladder:
            raise ValidationError("ladder must not be empty")
        if any(not (b > 0 and math.isfinite(b)) for b in ladder):
            raise ValidationError("ladder entries must be positive")
        if any(b2 <= b1 for b1, b2 in zip(ladder, ladder[1:])):
            raise ValidationError("ladder must be strictly ascending")
        object.__setattr__(self, "ladder", ladder)

        if self.chunk_sizes is None:
            row = [b * 1000.0 * self.chunk_duration_s for b in ladder]
            sizes = [row] * self.chunk_count
        else:
            sizes = self.chunk_sizes
        sizes = np.array(sizes, dtype=float)
        if sizes.shape != (self.chunk_count, len(ladder)):
            raise ValidationError(
                f"chunk_sizes has shape {sizes.shape}, expected "
                f"({self.chunk_count}, {len(ladder)})"
            )
        if not np.all(np.isfinite(sizes)) or np.any(sizes <= 0):
            raise ValidationError("chunk sizes must be positive")
        if len(ladder) > 1 and np.any(np.diff(sizes, axis=1) <= 0):
            raise ValidationError("chunk sizes must increase strictly with the ladder level")
        sizes.setflags(write=False)
        object.__setattr__(self, "chunk_sizes", sizes)

    @property
    def n_levels(self) -> int:
        return len(self.ladder)

    @property
    def top_level(self) -> int:
        return len(self.ladder) - 1

    @property
    def duration_s(self) -> float:
        return self.chunk_count * self.chunk_duration_s

    def __eq__(self, other):
        if not isinstance(other, VideoSpec):
            return NotImplemented
        return (
            self.chunk_count == other.chunk_count
            and self.chunk_duration_s == other.chunk_duration_s
            and self.ladder == other.ladder
            and np.array_equal(self.chunk_sizes, other.chunk_sizes)
        )

    def __hash__(self):
        return hash((self.chunk_count, self.chunk_duration_s, self.ladder))


@dataclass(frozen=True, eq=False)
class ThroughputTrace:
    """Piecewise-constant bandwidth samples, ``(timestamp_s, throughput_bps)``.

    Sample ``k`` holds until the next timestamp.  The last sample holds for the
    same interval as the one before it, which fixes the trace period used for
    wrap-around; ``period_s`` overrides that.  A single-sample trace is constant.
    """

    timestamps: np.ndarray
    throughput_bps: np.ndarray
    period_s: float | None = None

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=float).ravel()
        bw = np.array(self.throughput_bps, dtype=float).ravel()
        if ts.shape != bw.shape or ts.size == 0:
            raise ValidationError("trace needs matching, non-empty timestamp and throughput arrays")
        if not np.all(np.isfinite(ts)) or not np.all(np.isfinite(bw)):
            raise ValidationError("trace values must be finite")
        if ts[0] != 0:
            raise ValidationError("trace timestamps must start at 0")
        if np.any(np.diff(ts) <= 0):
            raise ValidationError("trace timestamps must be strictly increasing")
        if np.any(bw <= 0):
            raise ValidationError("throughput must be positive")
        if ts.size == 1:
            period = math.inf
        elif self.period_s is None:
            period = float(ts[-1] + (ts[-1] - ts[-2]))
        else:
            period = float(self.period_s)
            if not period > ts[-1]:
                raise ValidationError("period_s must exceed the last timestamp")
        ts.setflags(write=False)
        bw.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "throughput_bps", bw)
        object.__setattr__(self, "period_s", period)
        # cumulative bits delivered at each sample boundary within one period
        if ts.size > 1:
            edges = np.append(ts, period)
            cum = np.concatenate([[0.0], np.cumsum(bw * np.diff(edges))])
        else:
            cum = np.array([0.0, math.inf])
        cum.setflags(write=False)
        object.__setattr__(self, "_cum_bits", cum)

    @classmethod
    def from_samples(cls, samples: Iterable[tuple[float, float]], period_s=None) -> "ThroughputTrace":
        samples = list(samples)
        if not samples:
            raise ValidationError("trace must contain at least one sample")
        ts, bw = zip(*samples)
        return cls(np.asarray(ts, float), np.asarray(bw, float), period_s)

    @classmethod
    def constant(cls, throughput_bps: float) -> "ThroughputTrace":
        return cls(np.array([0.0]), np.array([float(throughput_bps)]))

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.timestamps.tolist(), self.throughput_bps.tolist()))

    @property
    def mean_bps(self) -> float:
        """Time-averaged throughput over one period."""
        if self.timestamps.size == 1:
            return float(self.throughput_bps[0])
        return float(self._cum_bits[-1] / self.period_s)

    def __eq__(self, other):
        if not isinstance(other, ThroughputTrace):
            return NotImplemented
        return (
            np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.throughput_bps, other.throughput_bps)
            and self.period_s == other.period_s
        )

    def __hash__(self):
        return hash((self.timestamps.tobytes(), self.throughput_bps.tobytes(), self.period_s))


@dataclass(frozen=True, eq=False)
class RenderedVideo:
    """A quality schedule over a video: bitrate index and pre-chunk stall per chunk.

    ``stall_s[0]`` is the start-up delay.
    """

    video: VideoSpec
    bitrate_idx: tuple[int, ...]
    stall_s: tuple[float, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.bitrate_idx)
        stalls = tuple(float(s) for s in self.stall_s)
        n = self.video.chunk_count
        if len(idx) != n or len(stalls) != n:
            raise ValidationError(f"rendering needs {n} bitrate indices and stalls")
        if any(i < 0 or i >= self.video.n_levels for i in idx):
            raise ValidationError("bitrate index outside the ladder")
        if any(not (s >= 0 and math.isfinite(s)) for s in stalls):
            raise ValidationError("stall durations must be non-negative")
        object.__setattr__(self, "bitrate_idx", idx)
        object.__setattr__(self, "stall_s", stalls)

    @classmethod
    def pristine(cls, video: VideoSpec) -> "RenderedVideo":
        """Top bitrate everywhere, no stalls."""
        n = video.chunk_count
        return cls(video, (video.top_level,) * n, (0.0,) * n)

    @property
    def bitrates_kbps(self) -> list[float]:
        return [self.video.ladder[i] for i in self.bitrate_idx]

    @property
    def total_stall_s(self) -> float:
        return math.fsum(self.stall_s)

    @property
    def length_s(self) -> float:
        """Wall-clock watch time: content plus stalls."""
        return self.video.duration_s + self.total_stall_s

    def key(self) -> tuple:
        return (self.bitrate_idx, self.stall_s)

    def __eq__(self, other):
        if not isinstance(other, RenderedVideo):
            return NotImplemented
        return self.video == other.video and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


STALL_CAUSES = ("startup", "underflow", "intentional")


@dataclass(frozen=True)
class StallEvent:
    start_s: float
    duration_s: float
    cause: str

    def __post_init__(self):
        if self.cause not in STALL_CAUSES:
            raise ValidationError(f"unknown stall cause {self.cause!r}")
        if self.duration_s < 0:
            raise ValidationError("stall duration must be non-negative")


@dataclass(frozen=True, eq=False)
class SessionLog:
    """Record of one simulated playback.

    ``buffer_trajectory`` holds ``(time_s, buffer_s)`` samples where the buffer
    counts seconds until playback would underflow, including any pending
    intentional pause.  Idle (buffer-full) waiting overlaps playback, so
    ``wall_time_s == playback_s + total stall`` exactly.
    """

    rendered: RenderedVideo
    intentional_stall_s: tuple[float, ...]
    download_intervals: tuple[tuple[float, float], ...]
    stall_intervals: tuple[StallEvent, ...]
    buffer_trajectory: tuple[tuple[float, float], ...]
    achieved_qoe: float
    wall_time_s: float
    playback_s: float
    idle_s: float
    buffer_cap_s: float
    report: object = field(default=None, repr=False)
    policy: str = ""

    @property
    def total_stall_s(self) -> float:
        return math.fsum(ev.duration_s for ev in self.stall_intervals)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "bitrate_idx": list(self.rendered.bitrate_idx),
            "stall_s": list(self.rendered.stall_s),
            "intentional_stall_s": list(self.intentional_stall_s),
            "download_intervals": [list(iv) for iv in self.download_intervals],
            "stall_intervals": [
                {"start_s": ev.start_s, "duration_s": ev.duration_s, "cause": ev.cause}
                for ev in self.stall_intervals
            ],
            "buffer_trajectory": [list(p) for p in self.buffer_trajectory],
            "achieved_qoe": self.achieved_qoe,
            "wall_time_s": self.wall_time_s,
            "playback_s": self.playback_s,
            "idle_s": self.idle_s,
            "buffer_cap_s": self.buffer_cap_s,
        }


# -- trace operations ---------------------------------------------------------

TRACE_FORMATS = ("csv", "cooked")


def parse_trace(text: str, format: str = "csv") -> ThroughputTrace:
    """Parse trace text.

    ``csv``: ``time_s,throughput_bps`` with an optional header row.
    ``cooked``: whitespace-separated ``time_s throughput_mbps`` lines, the layout
    of the commonly distributed pre-processed FCC and HSDPA traces.
    """
    if format not in TRACE_FORMATS:
        raise TraceFormatError(f"unknown trace format {format!r}")
    rows: list[tuple[int, list[str]]] = []
    if format == "csv":
        for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
            if row and any(cell.strip() for cell in row):
                rows.append((lineno, row))
    else:
        for lineno, line in enumerate(text.splitlines(), start=1):
            if line.strip():
                rows.append((lineno, line.split()))

    samples = []
    for pos, (lineno, row) in enumerate(rows):
        if len(row) < 2:
            raise TraceFormatError("expected two columns", lineno)
        try:
            t, bw = float(row[0]), float(row[1])
        except ValueError:
            if pos == 0 and format == "csv":
                continue  # header
            raise TraceFormatError(f"non-numeric value in {row[:2]!r}", lineno) from None
        if format == "cooked":
            bw *= 1e6
        samples.append((t, bw, lineno))
    if not samples:
        raise TraceFormatError("trace contains no samples")

    for (t0, _, _), (t1, _, line1) in zip(samples, samples[1:]):
        if t1 <= t0:
            raise ValidationError(f"line {line1}: timestamps must be strictly increasing")
    for t, bw, lineno in samples:
        if not bw > 0:
            raise ValidationError(f"line {lineno}: throughput must be positive")
    base = samples[0][0]
    return ThroughputTrace.from_samples((t - base, bw) for t, bw, _ in samples)


def load_trace(path, format: str = "csv") -> ThroughputTrace:
    text = Path(path).read_text(encoding="utf-8")
    return parse_trace(text, format)


def scale_trace(trace: ThroughputTrace, factor: float) -> ThroughputTrace:
    if not (factor > 0 and math.isfinite(factor)):
        raise ValueError(f"scale factor must be positive, got {factor}")
    period = None if math.isinf(trace.period_s) else trace.period_s
    return ThroughputTrace(trace.timestamps, trace.throughput_bps * factor, period)


def throughput_at(trace: ThroughputTrace, t: float) -> float:
    """Throughput in effect at time ``t``; the trace repeats after its period."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if trace.timestamps.size == 1:
        return float(trace.throughput_bps[0])
    tau = math.fmod(t, trace.period_s)
    k = int(np.searchsorted(trace.timestamps, tau, side="right")) - 1
    return float(trace.throughput_bps[k])


def _bits_before(trace: ThroughputTrace, t: np.ndarray) -> np.ndarray:
    """Bits deliverable in ``[0, t)`` under wrap-around."""
    periods = np.floor(t / trace.period_s)
    tau = t - periods * trace.period_s
    k = np.searchsorted(trace.timestamps, tau, side="right") - 1
    k = np.clip(k, 0, trace.timestamps.size - 1)
    within = trace._cum_bits[k] + trace.throughput_bps[k] * (tau - trace.timestamps[k])
    return periods * trace._cum_bits[-1] + within


def download_times(trace: ThroughputTrace, start_s, size_bits) -> np.ndarray:
    """Seconds needed to fetch ``size_bits`` starting at ``start_s`` (vectorized).

    Throughput is taken as unaffected by the download itself.
    """
    start = np.asarray(start_s, dtype=float)
    size = np.asarray(size_bits, dtype=float)
    start, size = np.broadcast_arrays(start, size)
    if trace.timestamps.size == 1:
        return size / trace.throughput_bps[0]
    per_period = trace._cum_bits[-1]
    target = _bits_before(trace, start) + size
    periods = np.floor(target / per_period)
    rem = target - periods * per_period
    k = np.searchsorted(trace._cum_bits, rem, side="right") - 1
    k = np.clip(k, 0, trace.timestamps.size - 1)
    tau = trace.timestamps[k] + (rem - trace._cum_bits[k]) / trace.throughput_bps[k]
    end = periods * trace.period_s + tau
    return np.maximum(end - start, 0.0)


def download_time(trace: ThroughputTrace, start_s: float, size_bits: float) -> float:
    return float(download_times(trace, np.array([start_s]), np.array([size_bits]))[0])
