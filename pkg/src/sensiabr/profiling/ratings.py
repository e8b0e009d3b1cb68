"""Rating records: CSV I/O, rater sanitization, MOS, and a synthetic rater pool."""
from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from ..core import InsufficientDataError, RenderedVideo, ValidationError
from ..qoe import QoeModelParams, SensitivityProfile, session_bounds, session_qoe
from .campaign import CampaignPlan

INCIDENTS = ("none", "rebuffer", "bitrate-drop", "switch")
RATINGS_CSV_FIELDS = ("rater_id", "rendered_id", "score", "reported_incident",
                      "watch_time_s", "position")


@dataclass(frozen=True)
class RatingRecord:
    """One rater's score for one rendering.

    Scores live on the 1-5 scale; Likert (integer) and continuous scores are
    both accepted.
    """

    rater_id: str
    rendered_id: str
    score: float
    reported_incident: str
    watch_time_s: float
    position_in_survey: int = 0

    def __post_init__(self):
        if not 1.0 <= self.score <= 5.0:
            raise ValidationError(f"score {self.score} outside the 1-5 scale")
        if self.reported_incident not in INCIDENTS:
            raise ValidationError(f"unknown incident {self.reported_incident!r}")
        if not self.watch_time_s >= 0:
            raise ValidationError("watch_time_s must be non-negative")


def actual_incidents(rendered: RenderedVideo) -> frozenset[str]:
    """Incident reports consistent with what a rendering actually contains."""
    stalled = any(s > 0 for s in rendered.stall_s)
    dropped = any(i != rendered.video.top_level for i in rendered.bitrate_idx)
    allowed = set()
    if stalled:
        allowed.add("rebuffer")
    if dropped:
        allowed.update(("bitrate-drop", "switch"))
    return frozenset(allowed or {"none"})


def _rendering_map(plan) -> dict[str, RenderedVideo]:
    if isinstance(plan, CampaignPlan):
        return plan.rendering_map()
    if isinstance(plan, Mapping):
        return dict(plan)
    out: dict[str, RenderedVideo] = {}
    for p in plan:
        out.update(p.rendering_map())
    return out


class SanitizeResult(NamedTuple):
    accepted: list[RatingRecord]
    rejected_raters: set[str]
    reasons: dict[str, tuple[str, ...]]


def sanitize(ratings: Iterable[RatingRecord], plan, reference_id: str | Iterable[str],
             video_lengths: Mapping[str, float] | None = None,
             tolerance_s: float = 0.25) -> SanitizeResult:
    """Drop every rating of a rater who fails any quality-control rule.

    A rater is rejected when they rate some rendering above their reference
    score, stop watching early, report an incident the rendering does not
    contain, or never rated the reference.  ``plan`` is a plan, several plans,
    or a mapping of rendering id to rendering.
    """
    ratings = list(ratings)
    renderings = _rendering_map(plan)
    ref_ids = {reference_id} if isinstance(reference_id, str) else set(reference_id)
    if video_lengths is None:
        video_lengths = {rid: r.length_s for rid, r in renderings.items()}
    for rec in ratings:
        if rec.rendered_id not in renderings:
            raise ValueError(f"rating references unknown rendering {rec.rendered_id!r}")

    by_rater: dict[str, list[RatingRecord]] = defaultdict(list)
    for rec in ratings:
        by_rater[rec.rater_id].append(rec)

    reasons: dict[str, tuple[str, ...]] = {}
    for rater, recs in by_rater.items():
        found = set()
        ref_scores = [r.score for r in recs if r.rendered_id in ref_ids]
        if not ref_scores:
            found.add("missing-reference")
        else:
            ref_score = max(ref_scores)
            if any(r.score > ref_score for r in recs if r.rendered_id not in ref_ids):
                found.add("reference-exceeded")
        if any(r.watch_time_s < video_lengths[r.rendered_id] - tolerance_s for r in recs):
            found.add("short-watch")
        if any(r.reported_incident not in actual_incidents(renderings[r.rendered_id])
               for r in recs):
            found.add("wrong-incident")
        if found:
            reasons[rater] = tuple(sorted(found))

    accepted = [r for r in ratings if r.rater_id not in reasons]
    return SanitizeResult(accepted, set(reasons), reasons)


def mos(accepted: Iterable[RatingRecord], rendered_id: str) -> float:
    scores = [r.score for r in accepted if r.rendered_id == rendered_id]
    if not scores:
        raise InsufficientDataError(f"no accepted ratings for {rendered_id!r}")
    return math.fsum(scores) / len(scores)


def mos_table(accepted: Iterable[RatingRecord]) -> dict[str, float]:
    groups: dict[str, list[float]] = defaultdict(list)
    for r in accepted:
        groups[r.rendered_id].append(r.score)
    return {rid: math.fsum(s) / len(s) for rid, s in sorted(groups.items())}


def _reported(rendered: RenderedVideo) -> str:
    allowed = actual_incidents(rendered)
    for name in ("rebuffer", "bitrate-drop", "none"):
        if name in allowed:
            return name
    raise AssertionError("unreachable")


def simulate_raters(plan: CampaignPlan, true_profile: SensitivityProfile,
                    params: QoeModelParams, noise_sigma: float, seed: int = 0,
                    quantize: bool = False) -> list[RatingRecord]:
    """Synthetic ratings from raters who follow the weighted QoE model.

    The noiseless score maps the model's worst and best attainable session QoE
    to 1 and 5.  Gaussian noise is added, then the score is clipped to [1, 5]
    and, with ``quantize``, rounded to the Likert scale.  Rater ``r`` rates every
    rendering that still needs more than ``r`` ratings, in a seeded random order,
    watches each in full and reports the incident correctly.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    items = plan.all_renderings()
    if not items:
        return []
    rng = np.random.default_rng(seed)
    video = items[0][1].video
    q_min, q_max = session_bounds(params, video.ladder, true_profile.weights)
    span = q_max - q_min
    clean = {}
    for rid, rendered in items:
        q = session_qoe(params, true_profile, rendered).weighted_total
        clean[rid] = 1.0 + 4.0 * (q - q_min) / span if span > 0 else 5.0

    n_raters = max(plan.required_ratings[rid] for rid, _ in items)
    records = []
    for r in range(n_raters):
        mine = [(rid, rendered) for rid, rendered in items if plan.required_ratings[rid] > r]
        order = rng.permutation(len(mine))
        noise = rng.normal(0.0, noise_sigma, size=len(mine)) if noise_sigma > 0 else np.zeros(len(mine))
        for pos, k in enumerate(order):
            rid, rendered = mine[k]
            score = min(5.0, max(1.0, clean[rid] + float(noise[pos])))
            if quantize:
                score = float(min(5, max(1, round(score))))
            records.append(RatingRecord(
                rater_id=f"{plan.step}-r{r:03d}",
                rendered_id=rid,
                score=score,
                reported_incident=_reported(rendered),
                watch_time_s=rendered.length_s,
                position_in_survey=pos,
            ))
    return records


# -- CSV ------------------------------------------------------------------------

def _format_score(score: float) -> str:
    return str(int(score)) if float(score).is_integer() else repr(float(score))


def write_ratings_csv(records: Sequence[RatingRecord], path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RATINGS_CSV_FIELDS)
    for r in records:
        writer.writerow([r.rater_id, r.rendered_id, _format_score(r.score),
                         r.reported_incident, repr(float(r.watch_time_s)), r.position_in_survey])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def parse_ratings_csv(text: str) -> list[RatingRecord]:
    reader = csv.reader(io.StringIO(text))
    records = []
    for lineno, row in enumerate(reader, start=1):
        if not row or not any(c.strip() for c in row):
            continue
        if lineno == 1 and row[0].strip() == "rater_id":
            continue
        if len(row) != len(RATINGS_CSV_FIELDS):
            raise ValueError(f"line {lineno}: expected {len(RATINGS_CSV_FIELDS)} columns")
        try:
            records.append(RatingRecord(
                rater_id=row[0].strip(),
                rendered_id=row[1].strip(),
                score=float(row[2]),
                reported_incident=row[3].strip(),
                watch_time_s=float(row[4]),
                position_in_survey=int(row[5]),
            ))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return records


def load_ratings_csv(path) -> list[RatingRecord]:
    return parse_ratings_csv(Path(path).read_text(encoding="utf-8"))
