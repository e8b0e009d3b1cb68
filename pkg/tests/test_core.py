import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensiabr.core import (
    RenderedVideo,
    ThroughputTrace,
    TraceFormatError,
    ValidationError,
    VideoSpec,
    download_time,
    download_times,
    parse_trace,
    scale_trace,
    throughput_at,
)


def test_video_defaults_follow_constant_bitrate():
    v = VideoSpec(3)
    assert v.n_levels == 5
    assert v.chunk_sizes[0, 4] == 2850 * 1000 * 4
    assert v.duration_s == 12.0


@pytest.mark.parametrize("kwargs", [
    {"chunk_count": 0},
    {"chunk_count": 2, "ladder": (750.0, 300.0)},
    {"chunk_count": 2, "ladder": ()},
    {"chunk_count": 2, "chunk_duration_s": 0},
    {"chunk_count": 2, "ladder": (300.0, 750.0), "chunk_sizes": [[1.0, 2.0]]},
    {"chunk_count": 1, "ladder": (300.0, 750.0), "chunk_sizes": [[2.0, 1.0]]},
])
def test_video_rejects_bad_specs(kwargs):
    with pytest.raises(ValidationError):
        VideoSpec(**kwargs)


def test_rendered_video_validation():
    v = VideoSpec(2, ladder=(300.0, 750.0))
    with pytest.raises(ValidationError):
        RenderedVideo(v, (0, 2), (0.0, 0.0))
    with pytest.raises(ValidationError):
        RenderedVideo(v, (0, 1), (0.0, -1.0))
    r = RenderedVideo(v, (0, 1), (0.5, 1.0))
    assert r.length_s == 9.5
    assert r.bitrates_kbps == [300.0, 750.0]


def test_parse_csv_with_header_and_rebase():
    tr = parse_trace("time_s,throughput_bps\n10,1000000\n12,2000000\n")
    assert tr.samples == [(0.0, 1e6), (2.0, 2e6)]
    assert tr.period_s == 4.0


def test_parse_cooked_mbps():
    tr = parse_trace("0.0 1.5\n1.0 3.0\n", format="cooked")
    assert tr.samples == [(0.0, 1.5e6), (1.0, 3e6)]


@pytest.mark.parametrize("text,line", [
    ("0,1e6\n1,abc\n", 2),
    ("0,1e6\n5\n", 2),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(TraceFormatError) as e:
        parse_trace(text)
    assert e.value.line == line


def test_parse_rejects_non_increasing_and_nonpositive():
    with pytest.raises(ValidationError, match="line 2"):
        parse_trace("0,1e6\n0,2e6\n")
    with pytest.raises(ValidationError, match="line 2"):
        parse_trace("0,1e6\n1,0\n")


def test_download_time_hand_values():
    # 1 Mbps for [0,2), 2 Mbps for [2,4), then repeat
    tr = ThroughputTrace.from_samples([(0, 1e6), (2, 2e6)])
    assert download_time(tr, 0.0, 1e6) == pytest.approx(1.0, abs=1e-12)
    assert download_time(tr, 1.0, 3e6) == pytest.approx(2.0, abs=1e-12)
    assert download_time(tr, 3.0, 6e6) == pytest.approx(4.0, abs=1e-12)
    # a full period carries 6 Mb
    assert download_time(tr, 0.0, 12e6) == pytest.approx(8.0, abs=1e-12)


def test_constant_trace():
    tr = ThroughputTrace.constant(2e6)
    assert download_time(tr, 123.4, 8e6) == 4.0
    assert throughput_at(tr, 1e6) == 2e6


def test_throughput_at_wraps():
    tr = ThroughputTrace.from_samples([(0, 1e6), (2, 2e6)])
    assert throughput_at(tr, 1.0) == 1e6
    assert throughput_at(tr, 2.5) == 2e6
    assert throughput_at(tr, 5.0) == 1e6


def test_scale_trace():
    tr = ThroughputTrace.from_samples([(0, 1e6), (2, 2e6)])
    s = scale_trace(tr, 0.5)
    assert s.samples == [(0.0, 5e5), (2.0, 1e6)]
    with pytest.raises(ValueError):
        scale_trace(tr, 0)


def test_vectorized_matches_scalar():
    tr = ThroughputTrace.from_samples([(0, 1e6), (1.5, 3e6), (2.0, 0.5e6)])
    starts = np.linspace(0, 20, 41)
    vec = download_times(tr, starts, 2.5e6)
    assert [download_time(tr, s, 2.5e6) for s in starts] == list(vec)


samples = st.lists(st.floats(1e5, 1e7), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(samples, st.floats(0, 50), st.floats(1e4, 5e7), st.floats(1e4, 5e7))
def test_download_time_is_additive(bws, start, a, b):
    tr = ThroughputTrace.from_samples([(i * 0.7, bw) for i, bw in enumerate(bws)])
    t1 = download_time(tr, start, a)
    t2 = download_time(tr, start + t1, b)
    assert download_time(tr, start, a + b) == pytest.approx(t1 + t2, rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(samples, st.floats(0, 50), st.floats(1e4, 5e7))
def test_download_time_bounded_by_extreme_rates(bws, start, size):
    tr = ThroughputTrace.from_samples([(i * 0.7, bw) for i, bw in enumerate(bws)])
    t = download_time(tr, start, size)
    assert size / max(bws) - 1e-9 <= t <= size / min(bws) + 1e-9
    assert math.isfinite(t)
