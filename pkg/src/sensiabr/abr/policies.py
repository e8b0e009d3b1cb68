"""ABR policies as estimators: ``fit`` binds a session, ``decide`` picks actions.

Every policy is a scikit-learn ``BaseEstimator`` so that ``get_params`` and
``clone`` give the simulator fresh, identically configured copies per session.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..core import ThroughputTrace, VideoSpec
from ..qoe import QoeModelParams, SensitivityProfile
from .actions import Action, PlayerState, SelectBitrate, Stall
from .offline import offline_optimal_plan
from .planners import BUFFER_STEP_S, bba_decide, solve_lookahead
from .predictors import HISTORY_WINDOW, predictor_histogram, predictor_oracle

PREDICTORS = ("histogram", "oracle")


class _Policy(BaseEstimator):
    name = "policy"

    def fit(self, video: VideoSpec, trace: ThroughputTrace | None = None,
            profile: SensitivityProfile | None = None,
            qoe_params: QoeModelParams | None = None, buffer_cap_s: float | None = None):
        self.video_ = video
        self.trace_ = trace
        self.profile_ = profile
        self.params_ = getattr(self, "params", None) or qoe_params or QoeModelParams()
        return self

    def decide(self, state: PlayerState, weights=None, allow_stall: bool = True) -> Action:
        raise NotImplementedError


class BBAPolicy(_Policy):
    name = "bba"

    def __init__(self, reservoir_s=5.0, cushion_s=13.0):
        self.reservoir_s = reservoir_s
        self.cushion_s = cushion_s

    def decide(self, state, weights=None, allow_stall=True):
        check_is_fitted(self, "video_")
        return bba_decide(state, self.video_, self.reservoir_s, self.cushion_s)


class FuguPolicy(_Policy):
    """Expected-QoE lookahead without intentional stalls."""

    name = "fugu"
    _weighted = False

    def __init__(self, params=None, horizon=5, predictor="histogram", bins=5,
                 window=HISTORY_WINDOW, buffer_step_s=BUFFER_STEP_S):
        self.params = params
        self.horizon = horizon
        self.predictor = predictor
        self.bins = bins
        self.window = window
        self.buffer_step_s = buffer_step_s

    def fit(self, video, trace=None, profile=None, qoe_params=None, buffer_cap_s=None):
        if self.predictor not in PREDICTORS:
            raise ValueError(f"unknown predictor {self.predictor!r}")
        if self.predictor == "oracle" and trace is None:
            raise ValueError("the oracle predictor needs the trace")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        return super().fit(video, trace, profile, qoe_params, buffer_cap_s)

    def _distribution(self, state):
        if self.predictor == "oracle":
            return predictor_oracle(self.trace_, state, self.video_, self.horizon)
        return predictor_histogram(state, self.video_, self.horizon, self.bins, self.window)

    def _stall_levels(self, allow_stall):
        return (0.0,)

    def plan(self, state, weights=None, allow_stall=True):
        check_is_fitted(self, "video_")
        dist = self._distribution(state)
        return solve_lookahead(
            state, self.video_, self.params_, dist, self.horizon,
            weights=weights if self._weighted else None,
            stall_levels=self._stall_levels(allow_stall and state.pending_stall_s <= 0),
            buffer_step_s=self.buffer_step_s,
        )

    def decide(self, state, weights=None, allow_stall=True):
        check_is_fitted(self, "video_")
        if self.predictor == "histogram" and not state.recent_throughputs:
            return SelectBitrate(0)  # nothing measured yet
        return self.plan(state, weights, allow_stall).action


class SenseiFuguPolicy(FuguPolicy):
    """Weighted lookahead that may also pause playback at chunk boundaries.

    Once a stall is pending for the next chunk, only the bitrate is re-planned,
    so each chunk boundary carries at most one configured stall level.
    """

    name = "sensei-fugu"
    _weighted = True

    def __init__(self, params=None, horizon=5, predictor="histogram", bins=5,
                 window=HISTORY_WINDOW, buffer_step_s=BUFFER_STEP_S,
                 stall_levels_s=(0.0, 1.0, 2.0)):
        super().__init__(params, horizon, predictor, bins, window, buffer_step_s)
        self.stall_levels_s = stall_levels_s

    def _stall_levels(self, allow_stall):
        return tuple(self.stall_levels_s) if allow_stall else (0.0,)


class OfflineOptimalPolicy(_Policy):
    """Replays the offline optimal schedule computed at ``fit`` time."""

    name = "offline-optimal"

    def __init__(self, params=None, allow_stalls=True, stall_levels_s=(0.0, 1.0, 2.0),
                 buffer_cap_s=None, buffer_step_s=BUFFER_STEP_S, clock_step_s=BUFFER_STEP_S):
        self.params = params
        self.allow_stalls = allow_stalls
        self.stall_levels_s = stall_levels_s
        self.buffer_cap_s = buffer_cap_s
        self.buffer_step_s = buffer_step_s
        self.clock_step_s = clock_step_s

    def fit(self, video, trace=None, profile=None, qoe_params=None, buffer_cap_s=None):
        if trace is None:
            raise ValueError("the offline planner needs the trace")
        super().fit(video, trace, profile, qoe_params, buffer_cap_s)
        if profile is None:
            profile = SensitivityProfile.uniform(video.chunk_count)
        cap = self.buffer_cap_s or buffer_cap_s or 15.0
        self.plan_ = offline_optimal_plan(
            video, trace, self.params_, profile, self.allow_stalls, self.stall_levels_s,
            cap, self.buffer_step_s, self.clock_step_s,
        )
        return self

    def decide(self, state, weights=None, allow_stall=True):
        check_is_fitted(self, "plan_")
        i = state.next_chunk
        want = self.plan_.intentional_stall_s[i]
        if allow_stall and want - state.pending_stall_s > 1e-9:
            return Stall(want - state.pending_stall_s)
        return SelectBitrate(self.plan_.bitrate_idx[i])


class ScheduledPolicy(_Policy):
    """Plays a fixed bitrate and intentional-stall schedule."""

    name = "scheduled"

    def __init__(self, bitrate_idx=(), intentional_stall_s=None):
        self.bitrate_idx = bitrate_idx
        self.intentional_stall_s = intentional_stall_s

    def fit(self, video, trace=None, profile=None, qoe_params=None, buffer_cap_s=None):
        if len(self.bitrate_idx) != video.chunk_count:
            raise ValueError("schedule length does not match the video")
        if self.intentional_stall_s is not None and len(self.intentional_stall_s) != video.chunk_count:
            raise ValueError("stall schedule length does not match the video")
        return super().fit(video, trace, profile, qoe_params, buffer_cap_s)

    def decide(self, state, weights=None, allow_stall=True):
        check_is_fitted(self, "video_")
        i = state.next_chunk
        stalls = self.intentional_stall_s
        want = 0.0 if stalls is None else float(stalls[i])
        if allow_stall and want - state.pending_stall_s > 1e-9:
            return Stall(want - state.pending_stall_s)
        return SelectBitrate(int(self.bitrate_idx[i]))


def make_policy(name: str, **kwargs) -> _Policy:
    table = {
        "bba": BBAPolicy,
        "fugu": FuguPolicy,
        "sensei-fugu": SenseiFuguPolicy,
        "offline-optimal": OfflineOptimalPolicy,
        "scheduled": ScheduledPolicy,
    }
    try:
        cls = table[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted(table)}") from None
    return cls(**kwargs)


POLICY_NAMES = ("bba", "fugu", "sensei-fugu", "offline-optimal")
