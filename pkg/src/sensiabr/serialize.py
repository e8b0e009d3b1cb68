"""JSON forms of videos, manifests, profiles and campaign plans.

Floats are written with ``repr`` precision, so every round trip is exact.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from .core import RenderedVideo, ValidationError, VideoSpec
from .profiling.campaign import CampaignPlan
from .qoe import SensitivityProfile


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def read_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def write_json(path, obj: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")


def video_to_dict(video: VideoSpec) -> dict:
    return {
        "chunk_count": video.chunk_count,
        "chunk_duration_s": video.chunk_duration_s,
        "ladder_kbps": list(video.ladder),
        "chunk_sizes_bits": video.chunk_sizes.tolist(),
    }


def video_from_dict(d: Mapping) -> VideoSpec:
    try:
        return VideoSpec(
            chunk_count=d["chunk_count"],
            chunk_duration_s=d.get("chunk_duration_s", 4.0),
            ladder=d.get("ladder_kbps", d.get("ladder", (300.0, 750.0, 1200.0, 1850.0, 2850.0))),
            chunk_sizes=d.get("chunk_sizes_bits"),
        )
    except KeyError as exc:
        raise ValidationError(f"video spec is missing {exc.args[0]!r}") from None


def manifest_to_dict(video: VideoSpec, profile: SensitivityProfile | None = None) -> dict:
    d = video_to_dict(video)
    if profile is not None:
        if len(profile) != video.chunk_count:
            raise ValidationError("profile length does not match the video")
        d["sensitivity_weights"] = list(profile.weights)
    return d


def manifest_from_dict(d: Mapping) -> tuple[VideoSpec, SensitivityProfile | None]:
    video = video_from_dict(d)
    weights = d.get("sensitivity_weights")
    return video, (None if weights is None else SensitivityProfile(tuple(weights)))


def load_manifest(path) -> tuple[VideoSpec, SensitivityProfile | None]:
    return manifest_from_dict(read_json(path))


def profile_to_dict(profile: SensitivityProfile) -> dict:
    return {"weights": list(profile.weights)}


def profile_from_dict(d) -> SensitivityProfile:
    if isinstance(d, Mapping):
        d = d.get("weights", d.get("sensitivity_weights"))
    if d is None:
        raise ValidationError("profile JSON needs a 'weights' list")
    return SensitivityProfile(tuple(float(x) for x in d))


def load_profile(path) -> SensitivityProfile:
    return profile_from_dict(read_json(path))


def plan_to_dict(plan: CampaignPlan) -> dict:
    items = plan.all_renderings()
    video = items[0][1].video if items else None
    entries = []
    for rid, rendered in items:
        entries.append({
            "id": rid,
            "bitrate_idx": list(rendered.bitrate_idx),
            "stall_s": list(rendered.stall_s),
            "required_ratings": plan.required_ratings[rid],
            "reference": rid == plan.reference_id,
        })
    return {
        "step": plan.step,
        "video": None if video is None else video_to_dict(video),
        "renderings": entries,
        "warning": plan.warning,
        "meta": dict(plan.meta),
    }


def plan_from_dict(d: Mapping, video: VideoSpec | None = None) -> CampaignPlan:
    if video is None and d.get("video") is not None:
        video = video_from_dict(d["video"])
    renderings, required, reference = [], {}, None
    for e in d.get("renderings", []):
        if video is None:
            raise ValidationError("plan has renderings but no video spec")
        item = (e["id"], RenderedVideo(video, tuple(e["bitrate_idx"]), tuple(e["stall_s"])))
        required[e["id"]] = int(e["required_ratings"])
        if e.get("reference"):
            reference = item
        else:
            renderings.append(item)
    return CampaignPlan(tuple(renderings), required, d["step"], reference=reference,
                        warning=d.get("warning"), meta=d.get("meta") or {})


def load_plan(path) -> CampaignPlan:
    return plan_from_dict(read_json(path))
