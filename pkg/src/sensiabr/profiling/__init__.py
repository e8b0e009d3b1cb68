"""From a source video to a sensitivity profile: scheduling, ratings, regression."""
from __future__ import annotations

from typing import Iterable, Sequence

from ..core import InsufficientDataError, VideoSpec
from ..qoe import QoeModelParams, SensitivityProfile
from .campaign import (
    CampaignConfig,
    CampaignPlan,
    enumerate_series,
    estimate_cost,
    schedule_step1,
    schedule_step2,
    select_deviant_chunks,
)
from .ratings import (
    RatingRecord,
    SanitizeResult,
    actual_incidents,
    load_ratings_csv,
    mos,
    mos_table,
    parse_ratings_csv,
    sanitize,
    simulate_raters,
    write_ratings_csv,
)
from .regression import SensitivityRegressor, design_matrix, infer_weights


def profile_from_ratings(video: VideoSpec, params: QoeModelParams,
                         plans: Sequence[CampaignPlan],
                         ratings: Iterable[RatingRecord],
                         merge_steps: bool = True) -> tuple[SensitivityProfile, SanitizeResult]:
    """Sanitize, average and regress in one go.

    With ``merge_steps`` false only the last plan's ratings enter the regression.
    """
    plans = [p for p in plans if p.all_renderings()]
    if not plans:
        raise InsufficientDataError("no renderings to profile from")
    ref_ids = [p.reference_id for p in plans if p.reference_id]
    result = sanitize(ratings, plans, ref_ids)
    used = plans if merge_steps else plans[-1:]
    renderings = {}
    for p in used:
        renderings.update(p.rendering_map())
    table = {rid: m for rid, m in mos_table(result.accepted).items() if rid in renderings}
    profile = infer_weights(video, params, table, renderings)
    return profile, result


__all__ = [
    "CampaignConfig", "CampaignPlan", "RatingRecord", "SanitizeResult", "SensitivityRegressor",
    "actual_incidents", "design_matrix", "enumerate_series", "estimate_cost", "infer_weights",
    "load_ratings_csv", "mos", "mos_table", "parse_ratings_csv", "profile_from_ratings",
    "sanitize", "schedule_step1", "schedule_step2", "select_deviant_chunks", "simulate_raters",
    "write_ratings_csv",
]
