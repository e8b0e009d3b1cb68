"""Bitrate adaptation: player state, predictors, planners and policies."""
from .actions import (
    Action,
    PlayerState,
    PolicyContractError,
    SelectBitrate,
    Stall,
    TransmissionTimeDistribution,
    policy_step_loop,
)
from .offline import OfflinePlan, offline_optimal_plan
from .planners import (
    BUFFER_STEP_S,
    PlanResult,
    bba_decide,
    discretization_bound,
    fugu_plan,
    sensei_fugu_plan,
    snap_buffer,
    solve_lookahead,
)
from .policies import (
    POLICY_NAMES,
    BBAPolicy,
    FuguPolicy,
    OfflineOptimalPolicy,
    ScheduledPolicy,
    SenseiFuguPolicy,
    make_policy,
)
from .predictors import (
    HistogramPredictor,
    OraclePredictor,
    predictor_histogram,
    predictor_oracle,
    throughput_histogram,
)

__all__ = [
    "Action", "BBAPolicy", "BUFFER_STEP_S", "FuguPolicy", "HistogramPredictor", "OfflineOptimalPolicy",
    "OfflinePlan", "OraclePredictor", "POLICY_NAMES", "PlanResult", "PlayerState",
    "PolicyContractError", "ScheduledPolicy", "SelectBitrate", "SenseiFuguPolicy", "Stall",
    "TransmissionTimeDistribution", "bba_decide", "discretization_bound", "fugu_plan",
    "make_policy", "offline_optimal_plan", "policy_step_loop", "predictor_histogram",
    "predictor_oracle", "sensei_fugu_plan", "snap_buffer", "solve_lookahead",
    "throughput_histogram",
]
