import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensiabr.core import (
    DegenerateChunkError,
    InfeasibleError,
    InsufficientDataError,
    RenderedVideo,
    VideoSpec,
)
from sensiabr.profiling import (
    CampaignConfig,
    CampaignPlan,
    RatingRecord,
    SensitivityRegressor,
    design_matrix,
    enumerate_series,
    estimate_cost,
    infer_weights,
    mos,
    parse_ratings_csv,
    profile_from_ratings,
    sanitize,
    schedule_step1,
    schedule_step2,
    select_deviant_chunks,
    simulate_raters,
    write_ratings_csv,
)
from sensiabr.qoe import QoeModelParams, SensitivityProfile

CFG = CampaignConfig()


def test_step1_structure():
    plan = schedule_step1(VideoSpec(3), CFG)
    assert len(plan) == 3
    assert plan.reference_id == "s1-ref"
    assert plan.rendering_map()["s1-stall1-c001"].stall_s == (0.0, 1.0, 0.0)
    assert all(r.bitrate_idx == (4, 4, 4) for _, r in plan.all_renderings())
    assert plan.total_required_ratings == 4 * CFG.ratings_step1


def test_step1_single_chunk():
    plan = schedule_step1(VideoSpec(1), CFG)
    assert len(plan.all_renderings()) == 2


def test_select_deviant_chunks():
    assert select_deviant_chunks([1.0, 1.2, 0.8], 0.06) == [1, 2]
    assert select_deviant_chunks([1.0, 1.0], 0.06) == []


def test_step2_counts_and_durations():
    v = VideoSpec(3)
    plan = schedule_step2(v, CFG, SensitivityProfile((1.0, 1.2, 0.8)))
    assert len(plan) == 2 * (2 + 1)
    stalls = sorted({max(r.stall_s) for _, r in plan.renderings})
    assert stalls == [0.0, 2.0]
    drops = [r for rid, r in plan.renderings if "drop" in rid]
    assert sorted({min(r.bitrate_idx) for r in drops}) == [0, 1]
    assert all(plan.required_ratings[rid] == CFG.ratings_step2 for rid, _ in plan.all_renderings())


def test_step2_empty_with_warning():
    plan = schedule_step2(VideoSpec(3), CFG, SensitivityProfile.uniform(3))
    assert len(plan) == 0 and plan.warning


def test_enumerate_examples():
    plan = enumerate_series(VideoSpec(2), 4, 3, 2, seed=1)
    keys = [r.key() for _, r in plan.renderings]
    assert len(keys) == 4 and len(set(keys)) == 4
    assert sorted(int(np.argmax(r.stall_s)) for _, r in plan.renderings) == [0, 0, 1, 1]
    one = enumerate_series(VideoSpec(3), 3, 2, 1)
    assert len(one) == 3
    with pytest.raises(InfeasibleError):
        enumerate_series(VideoSpec(1), 2, 2, 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 10_000))
def test_enumerate_distinct_per_chunk(n, per_chunk, seed):
    plan = enumerate_series(VideoSpec(n), n * per_chunk, 3, 2, seed=seed)
    keys = [r.key() for _, r in plan.renderings]
    assert len(set(keys)) == len(keys)
    counts = np.bincount([int(np.argmax(r.stall_s)) for _, r in plan.renderings], minlength=n)
    assert set(counts) == {per_chunk}


def test_cost_examples():
    v = VideoSpec(15)  # 60 s
    r = RenderedVideo.pristine(v)
    plan = CampaignPlan((("x", r),), {"x": 10}, "one")
    assert round(estimate_cost(plan, v, CFG), 2) == 1.67
    double = CampaignConfig(ratings_step1=20)
    assert estimate_cost(schedule_step1(v, double), v, double) == pytest.approx(
        2 * estimate_cost(schedule_step1(v, CFG), v, CFG))


def _rec(rater, rid, score, incident, watch, pos=0):
    return RatingRecord(rater, rid, score, incident, watch, pos)


def test_sanitize_examples():
    v = VideoSpec(3)
    plan = schedule_step1(v, CFG)
    L = v.duration_s
    ratings = [
        _rec("ok", "s1-ref", 5, "none", L), _rec("ok", "s1-stall1-c000", 3, "rebuffer", L + 1),
        _rec("hi", "s1-ref", 3, "none", L), _rec("hi", "s1-stall1-c000", 4, "rebuffer", L + 1),
        _rec("short", "s1-ref", 5, "none", 10.0),
    ]
    res = sanitize(ratings, plan, "s1-ref")
    assert res.rejected_raters == {"hi", "short"}
    assert res.reasons["hi"] == ("reference-exceeded",)
    assert res.reasons["short"] == ("short-watch",)
    assert {r.rater_id for r in res.accepted} == {"ok"}
    again = sanitize(list(reversed(res.accepted)), plan, "s1-ref")
    assert again.rejected_raters == set()


def test_mos_examples():
    recs = [_rec("a", "x", s, "none", 1) for s in (3, 4, 5)]
    assert mos(recs, "x") == 4.0
    assert mos([_rec("a", "x", 5, "none", 1)], "x") == 5.0
    assert mos([_rec(str(i), "x", s, "none", 1) for i, s in enumerate((1, 1, 1, 5))], "x") == 2.0
    with pytest.raises(InsufficientDataError):
        mos(recs, "y")


def test_infer_weights_direct_solve():
    p = QoeModelParams(alpha=1, beta=1, gamma=0)
    v = VideoSpec(3, ladder=(300.0, 2850.0))
    plan = schedule_step1(v, CFG)
    renders = plan.rendering_map()
    true = np.array([0.5, 1.0, 1.5])
    X = design_matrix([renders[k] for k in sorted(renders)], p)
    # rows hold 2.85 except 1.85 where the stall hits
    assert sorted(set(X.ravel().round(12))) == [1.85, 2.85]
    targets = dict(zip(sorted(renders), X @ true))
    prof = infer_weights(v, p, targets, renders)
    assert np.allclose(prof.weights, true, atol=1e-6)
    uni = dict(zip(sorted(renders), X @ np.ones(3)))
    assert np.allclose(infer_weights(v, p, uni, renders).weights, 1.0, atol=1e-6)


def test_infer_weights_errors():
    p = QoeModelParams()
    v = VideoSpec(3)
    plan = schedule_step1(v, CFG)
    renders = plan.rendering_map()
    some = dict.fromkeys(list(renders)[:2], 3.0)
    with pytest.raises(InsufficientDataError, match="need at least 4"):
        infer_weights(v, p, some, renders)
    X = np.array([[1.0, 2.0], [1.0, 3.0], [1.0, 4.0]])
    with pytest.raises(DegenerateChunkError) as e:
        SensitivityRegressor().fit(X, [1.0, 2.0, 3.0])
    assert e.value.chunk == 0


def test_regressor_is_an_estimator():
    reg = SensitivityRegressor()
    assert reg.get_params() == {"fit_intercept": True, "positive": True}
    rng = np.random.default_rng(0)
    X = rng.uniform(1, 3, size=(12, 4))
    w = np.array([0.5, 1.5, 1.0, 1.0])
    y = 2.0 + 0.7 * X @ w
    reg.fit(X, y)
    assert np.allclose(reg.coef_, w)
    assert np.allclose(reg.predict(X), y)
    assert reg.score(X, y) == pytest.approx(1.0)


def test_simulated_raters_noiseless_contract():
    v = VideoSpec(4)
    plan = schedule_step1(v, CFG)
    recs = simulate_raters(plan, SensitivityProfile.uniform(4), QoeModelParams(), 0.0, seed=3)
    assert all(r.score == 5.0 for r in recs if r.rendered_id == plan.reference_id)
    by_id = {}
    for r in recs:
        by_id.setdefault(r.rendered_id, set()).add(r.score)
    assert all(len(s) == 1 for s in by_id.values())
    # equal weights make every single-stall rendering score the same
    assert len({next(iter(by_id[rid])) for rid, _ in plan.renderings}) == 1
    assert len(recs) == plan.total_required_ratings


def test_simulated_raters_seeded_bytes():
    plan = schedule_step1(VideoSpec(5), CFG)
    prof = SensitivityProfile.normalized([1, 2, 3, 2, 1])
    a = write_ratings_csv(simulate_raters(plan, prof, QoeModelParams(), 0.3, seed=9))
    b = write_ratings_csv(simulate_raters(plan, prof, QoeModelParams(), 0.3, seed=9))
    assert a == b
    assert write_ratings_csv(parse_ratings_csv(a)) == a


def test_quantized_scores_are_likert():
    plan = schedule_step1(VideoSpec(4), CFG)
    recs = simulate_raters(plan, SensitivityProfile.normalized([1, 2, 1, 1]), QoeModelParams(),
                           0.3, seed=1, quantize=True)
    assert {r.score for r in recs} <= {1.0, 2.0, 3.0, 4.0, 5.0}


def test_two_step_focusing_noiseless():
    v = VideoSpec(8)
    truth = SensitivityProfile.normalized([1, 1, 1.5, 1, 1, 0.7, 1, 1])
    p = QoeModelParams()
    s1 = schedule_step1(v, CFG)
    prof1, _ = profile_from_ratings(v, p, [s1], simulate_raters(s1, truth, p, 0.0))
    s2 = schedule_step2(v, CFG, prof1)
    expected = [i for i, w in enumerate(truth.weights) if abs(w - 1) >= CFG.alpha_threshold]
    assert s2.meta["selected_chunks"] == expected
    ratings = simulate_raters(s1, truth, p, 0.0) + simulate_raters(s2, truth, p, 0.0)
    prof, res = profile_from_ratings(v, p, [s1, s2], ratings)
    assert not res.rejected_raters
    assert np.allclose(prof.weights, truth.weights, atol=1e-6)


def test_cost_monotone_in_counts():
    v = VideoSpec(6)
    prof = SensitivityProfile.normalized([1, 2, 1, 1, 0.5, 1])
    base = CampaignConfig()

    def total(cfg):
        return estimate_cost([schedule_step1(v, cfg), schedule_step2(v, cfg, prof)], v, cfg)

    ref = total(base)
    for field in ("ratings_step1", "ratings_step2", "bitrate_incidents", "rebuffer_incidents"):
        bigger = CampaignConfig(**{field: getattr(base, field) + 1})
        assert total(bigger) >= ref
