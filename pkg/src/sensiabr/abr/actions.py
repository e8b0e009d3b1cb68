"""Player state, ABR actions, transmission-time distributions and the action loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

from ..core import ValidationError

log = logging.getLogger(__name__)


class PolicyContractError(RuntimeError):
    """A policy returned an action outside its contract."""


@dataclass(frozen=True)
class PlayerState:
    """What an ABR policy sees before chunk ``next_chunk``.

    ``buffer_s`` counts seconds until playback would underflow and already
    includes ``pending_stall_s``, the intentional stall requested so far for
    this chunk.
    """

    next_chunk: int
    buffer_s: float
    last_bitrate_idx: int | None = None
    clock_s: float = 0.0
    recent_throughputs: tuple[float, ...] = ()
    buffer_cap_s: float = 15.0
    pending_stall_s: float = 0.0

    def __post_init__(self):
        if self.next_chunk < 0:
            raise ValidationError("next_chunk must be non-negative")
        if not (0 <= self.buffer_s <= self.buffer_cap_s + 1e-9):
            raise ValidationError(f"buffer {self.buffer_s} outside [0, {self.buffer_cap_s}]")
        object.__setattr__(self, "recent_throughputs",
                           tuple(float(x) for x in self.recent_throughputs))


@dataclass(frozen=True)
class SelectBitrate:
    idx: int


@dataclass(frozen=True)
class Stall:
    duration_s: float

    def __post_init__(self):
        if not (self.duration_s > 0 and math.isfinite(self.duration_s)):
            raise ValidationError("stall duration must be positive")


Action = SelectBitrate | Stall


@dataclass(frozen=True)
class TransmissionTimeDistribution:
    """``bins[k][level]`` lists ``(seconds, probability)`` for chunk ``first_chunk + k``.

    Chunks are treated as independent.
    """

    first_chunk: int
    bins: tuple[tuple[tuple[tuple[float, float], ...], ...], ...]

    def __post_init__(self):
        frozen = []
        for k, per_level in enumerate(self.bins):
            levels = []
            for lvl, entries in enumerate(per_level):
                entries = tuple((float(t), float(p)) for t, p in entries)
                if not entries:
                    raise ValidationError(f"empty distribution for chunk {k}, level {lvl}")
                if any(not t > 0 or p < 0 for t, p in entries):
                    raise ValidationError("transmission times must be positive, probabilities >= 0")
                if abs(math.fsum(p for _, p in entries) - 1.0) > 1e-9:
                    raise ValidationError("probabilities must sum to 1")
                levels.append(entries)
            frozen.append(tuple(levels))
        object.__setattr__(self, "bins", tuple(frozen))

    @property
    def horizon(self) -> int:
        return len(self.bins)


def policy_step_loop(policy, state: PlayerState, weights: Sequence[float] | None,
                     n_levels: int | None = None,
                     stall_levels: Sequence[float] | None = None,
                     max_stalls: int = 3) -> tuple[float, int]:
    """Query ``policy`` until it picks a bitrate; return ``(total stall, bitrate)``.

    Each stall is added to the hypothetical buffer before re-querying.  After
    ``max_stalls`` consecutive stalls the policy is asked once more with stalls
    disallowed, and if it still stalls the lowest bitrate is forced.
    """
    pending = 0.0
    for n in range(max_stalls + 1):
        allow = n < max_stalls
        query = replace(state, buffer_s=state.buffer_s + pending, pending_stall_s=pending)
        action = policy.decide(query, weights, allow_stall=allow)
        if isinstance(action, SelectBitrate):
            if not isinstance(action.idx, int) or action.idx < 0 or (
                    n_levels is not None and action.idx >= n_levels):
                raise PolicyContractError(f"invalid bitrate index {action.idx!r}")
            return pending, action.idx
        if not isinstance(action, Stall):
            raise PolicyContractError(f"unknown action {action!r}")
        if stall_levels is not None and not any(
                abs(action.duration_s - s) < 1e-9 for s in stall_levels if s > 0):
            raise PolicyContractError(f"stall of {action.duration_s} s is not a configured level")
        if query.buffer_s + action.duration_s > state.buffer_cap_s + 1e-9:
            raise PolicyContractError("stall would push the buffer past its cap")
        if not allow:
            break
        pending += action.duration_s
    log.warning("policy kept stalling before chunk %d; forcing the lowest bitrate",
                state.next_chunk)
    return pending, 0
