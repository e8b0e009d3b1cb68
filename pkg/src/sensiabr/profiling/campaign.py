"""Rendered-video scheduling for rating campaigns, and campaign cost."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..core import InfeasibleError, RenderedVideo, ValidationError, VideoSpec
from ..qoe import SensitivityProfile

log = logging.getLogger(__name__)

REFERENCE_SUFFIX = "ref"


@dataclass(frozen=True)
class CampaignConfig:
    ratings_step1: int = 10
    ratings_step2: int = 5
    bitrate_incidents: int = 2
    rebuffer_incidents: int = 1
    alpha_threshold: float = 0.06
    videos_per_survey: int = 10
    hourly_rate_usd: float = 10.0
    rebuffer_levels_s: tuple[float, ...] = (0.0, 1.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        for name in ("ratings_step1", "ratings_step2", "videos_per_survey",
                     "bitrate_incidents", "rebuffer_incidents"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if not 0 < self.alpha_threshold < 1:
            raise ValidationError("alpha_threshold must be in (0, 1)")
        if self.hourly_rate_usd < 0:
            raise ValidationError("hourly_rate_usd must be non-negative")
        levels = tuple(float(x) for x in self.rebuffer_levels_s)
        if any(x < 0 for x in levels):
            raise ValidationError("rebuffer levels must be non-negative")
        object.__setattr__(self, "rebuffer_levels_s", levels)


@dataclass(frozen=True)
class CampaignPlan:
    """Renderings to publish and how many ratings each one needs.

    ``renderings`` holds the incident renderings; the pristine reference that
    every survey carries is kept apart in ``reference``.
    """

    renderings: tuple[tuple[str, RenderedVideo], ...]
    required_ratings: Mapping[str, int]
    step: str
    reference: tuple[str, RenderedVideo] | None = None
    warning: str | None = None
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        ids = [rid for rid, _ in self.all_renderings()]
        if len(set(ids)) != len(ids):
            raise ValidationError("rendering ids must be unique")
        for rid in ids:
            if self.required_ratings.get(rid, 0) < 1:
                raise ValidationError(f"rendering {rid!r} needs at least one rating")

    @property
    def reference_id(self) -> str | None:
        return None if self.reference is None else self.reference[0]

    def all_renderings(self) -> list[tuple[str, RenderedVideo]]:
        out = list(self.renderings)
        if self.reference is not None:
            out.append(self.reference)
        return out

    def rendering_map(self) -> dict[str, RenderedVideo]:
        return dict(self.all_renderings())

    @property
    def total_required_ratings(self) -> int:
        return sum(self.required_ratings[rid] for rid, _ in self.all_renderings())

    def __len__(self):
        return len(self.renderings)


def _single_incident(video: VideoSpec, chunk: int, level: int | None = None,
                     stall_s: float = 0.0) -> RenderedVideo:
    idx = [video.top_level] * video.chunk_count
    stalls = [0.0] * video.chunk_count
    if level is not None:
        idx[chunk] = level
    stalls[chunk] = stall_s
    return RenderedVideo(video, tuple(idx), tuple(stalls))


def _reference(prefix: str, video: VideoSpec) -> tuple[str, RenderedVideo]:
    return f"{prefix}-{REFERENCE_SUFFIX}", RenderedVideo.pristine(video)


def schedule_step1(video: VideoSpec, cfg: CampaignConfig) -> CampaignPlan:
    """One rendering per chunk with a single 1 s stall in front of it."""
    renderings = tuple(
        (f"s1-stall1-c{i:03d}", _single_incident(video, i, stall_s=1.0))
        for i in range(video.chunk_count)
    )
    ref = _reference("s1", video)
    required = {rid: cfg.ratings_step1 for rid, _ in renderings}
    required[ref[0]] = cfg.ratings_step1
    return CampaignPlan(renderings, required, "one", reference=ref)


def select_deviant_chunks(weights: Sequence[float], alpha: float) -> list[int]:
    """Chunks whose mean-normalized weight is at least ``alpha`` away from 1."""
    w = np.asarray(weights, dtype=float)
    w = w / w.mean()
    return [i for i, x in enumerate(w) if abs(x - 1.0) >= alpha - 1e-12]


def schedule_step2(video: VideoSpec, cfg: CampaignConfig,
                   step1_weights: SensitivityProfile) -> CampaignPlan:
    if len(step1_weights) != video.chunk_count:
        raise ValueError("step-1 profile length does not match the video")
    if cfg.bitrate_incidents > video.top_level:
        raise ValidationError("more bitrate incidents than non-top ladder levels")
    chosen = select_deviant_chunks(step1_weights.weights, cfg.alpha_threshold)
    if not chosen:
        msg = "no chunk deviates from the mean weight by the threshold; step 2 is empty"
        log.warning(msg)
        return CampaignPlan((), {}, "two", warning=msg, meta={"selected_chunks": []})

    renderings = []
    for i in chosen:
        for level in range(cfg.bitrate_incidents):
            renderings.append((f"s2-drop{level}-c{i:03d}", _single_incident(video, i, level=level)))
        for k in range(cfg.rebuffer_incidents):
            dur = 2.0 + k
            renderings.append((f"s2-stall{dur:g}-c{i:03d}", _single_incident(video, i, stall_s=dur)))
    ref = _reference("s2", video)
    required = {rid: cfg.ratings_step2 for rid, _ in renderings}
    required[ref[0]] = cfg.ratings_step2
    return CampaignPlan(tuple(renderings), required, "two", reference=ref,
                        meta={"selected_chunks": chosen})


def enumerate_series(video: VideoSpec, total: int, bitrate_levels: int,
                     rebuffer_levels: int, seed: int = 0,
                     ratings_per_video: int = 1) -> CampaignPlan:
    """Random single-chunk incident series, ``total / chunk_count`` per chunk.

    Each rendering drops one chunk to one of the ``bitrate_levels - 1`` lowest
    ladder levels and stalls 1..``rebuffer_levels`` seconds before it; every
    other chunk plays at the top level.
    """
    n = video.chunk_count
    if total < n:
        raise ValueError("total must be at least the chunk count")
    if total % n:
        raise ValueError("total must be a multiple of the chunk count")
    if not 2 <= bitrate_levels <= video.n_levels:
        raise ValueError("bitrate_levels must be between 2 and the ladder size")
    if rebuffer_levels < 1:
        raise ValueError("rebuffer_levels must be >= 1")
    per_chunk = total // n
    candidates = [(lvl, float(t)) for lvl in range(bitrate_levels - 1)
                  for t in range(1, rebuffer_levels + 1)]
    if per_chunk > len(candidates):
        raise InfeasibleError(
            f"{per_chunk} renderings per chunk requested but only {len(candidates)} are distinct"
        )
    rng = np.random.default_rng(seed)
    renderings = []
    for i in range(n):
        for j in rng.permutation(len(candidates))[:per_chunk]:
            lvl, t = candidates[j]
            rid = f"en-drop{lvl}-stall{t:g}-c{i:03d}"
            renderings.append((rid, _single_incident(video, i, level=lvl, stall_s=t)))
    ref = _reference("en", video)
    required = {rid: ratings_per_video for rid, _ in renderings}
    required[ref[0]] = ratings_per_video
    return CampaignPlan(tuple(renderings), required, "enumerate", reference=ref)


def estimate_cost(plans: CampaignPlan | Iterable[CampaignPlan], video: VideoSpec,
                  cfg: CampaignConfig) -> float:
    """Dollars paid: watched hours (stalls included) times the hourly rate."""
    if isinstance(plans, CampaignPlan):
        plans = [plans]
    plans = list(plans)
    if not plans:
        raise ValueError("no plans to cost")
    for plan in plans:
        if any(r.video != video for _, r in plan.all_renderings()):
            raise ValueError("plan renders a different video")
    hours = math.fsum(
        rendered.length_s / 3600.0 * plan.required_ratings[rid]
        for plan in plans
        for rid, rendered in plan.all_renderings()
    )
    return hours * cfg.hourly_rate_usd
