import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import mminf_mean_se
from trafficwatch.counting import count_vehicles
from trafficwatch.errors import CapacityExceeded, ConfigError
from trafficwatch.ingest import ObjectClass, parse_frame, validate_frame
from trafficwatch.simulator import (
    NoiseModel,
    ScenarioConfig,
    gen_arrivals,
    render_detections,
    run_scenario,
    stream_rng,
    write_scenario,
)


def scenario(**over):
    d = {
        "seed": 7,
        "duration_s": 60,
        "frame_interval_ms": 1000,
        "segments": [
            {"segment_id": "a", "camera_id": "cam-a", "profile": [{"start_s": 0, "rate_per_min": 120}], "dwell_s": 10},
            {"segment_id": "b", "camera_id": "cam-b", "profile": [{"start_s": 0, "rate_per_min": 60}], "dwell_s": 20},
        ],
        "incidents": [{"segment_id": "a", "start_s": 10, "duration_s": 10, "class": "accident"}],
        "noise": {"p_miss": 0.0, "p_false": 0.0, "jitter_px": 0, "conf_spread": 0.0},
    }
    d.update(over)
    return ScenarioConfig.from_dict(d)


def test_zero_rate_gives_zero_counts():
    cfg = scenario(segments=[{"segment_id": "a", "profile": [{"start_s": 0, "rate_per_min": 0}], "dwell_s": 5}],
                   incidents=[])
    assert not gen_arrivals(cfg, cfg.segments[0]).any()


def test_same_seed_same_series():
    cfg = scenario()
    a = gen_arrivals(cfg, cfg.segments[0])
    b = gen_arrivals(cfg, cfg.segments[0])
    assert np.array_equal(a, b)


def test_adding_a_segment_leaves_others_unchanged():
    cfg = scenario()
    one = scenario(segments=[{"segment_id": "a", "camera_id": "cam-a",
                              "profile": [{"start_s": 0, "rate_per_min": 120}], "dwell_s": 10}])
    assert np.array_equal(gen_arrivals(cfg, cfg.segments[0]), gen_arrivals(one, one.segments[0]))


def test_littles_law_one_hour():
    rate_per_min, dwell = 90.0, 40.0
    cfg = scenario(duration_s=3600, incidents=[], segments=[
        {"segment_id": "a", "profile": [{"start_s": 0, "rate_per_min": rate_per_min}], "dwell_s": dwell}])
    counts = gen_arrivals(cfg, cfg.segments[0])
    mean = rate_per_min / 60 * dwell
    se = mminf_mean_se(mean, dwell, len(counts), 1.0)
    assert abs(counts.mean() - mean) <= 3 * se


def test_piecewise_rate_shifts_level():
    cfg = scenario(duration_s=600, incidents=[], segments=[
        {"segment_id": "a", "profile": [{"start_s": 0, "rate_per_min": 30}, {"start_s": 300, "rate_per_min": 300}],
         "dwell_s": 10}])
    c = gen_arrivals(cfg, cfg.segments[0])
    assert c[:300].mean() < 10 < c[360:].mean()


def test_noiseless_render_is_exact():
    rng = stream_rng(1, "a", "render")
    r = render_detections(17, [], NoiseModel(), 640, 640, rng)
    assert len(r.frame.detections) == 17 == r.detected
    assert count_vehicles(r.frame, 0.5).total == 17
    assert all(d.confidence == 1.0 for d in r.frame.detections)


def test_full_miss_emits_no_vehicles():
    r = render_detections(30, [ObjectClass.ACCIDENT], NoiseModel(p_miss=1.0), 640, 640, stream_rng(1, "a", "r"))
    kinds = [d.cls for d in r.frame.detections]
    assert kinds == [ObjectClass.ACCIDENT]
    assert r.misses == 30


def test_boxes_do_not_overlap_without_jitter():
    r = render_detections(100, [], NoiseModel(), 640, 640, stream_rng(3, "a", "r"))
    boxes = [d.box for d in r.frame.detections]
    for i, a in enumerate(boxes):
        for b in boxes[i + 1:]:
            assert a.x + a.w <= b.x or b.x + b.w <= a.x or a.y + a.h <= b.y or b.y + b.h <= a.y


def test_capacity_exceeded():
    with pytest.raises(CapacityExceeded):
        render_detections(101, [], NoiseModel(), 640, 640, stream_rng(1, "a", "r"))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100), st.floats(0, 1), st.floats(0, 3), st.integers(0, 20), st.floats(0, 1),
       st.integers(0, 2**31))
def test_rendered_frames_validate_and_conserve(n, p_miss, p_false, jitter, spread, seed):
    noise = NoiseModel(p_miss, min(p_false, 1.0), jitter, spread)
    try:
        r = render_detections(n, [ObjectClass.SUDDEN_STOP], noise, 640, 640, stream_rng(seed, "a", "r"))
    except CapacityExceeded:
        return
    validate_frame(r.frame)
    vehicles = [d for d in r.frame.detections if d.cls.is_vehicle]
    assert len(vehicles) == r.true_count - r.misses + r.false_positives
    assert all(1 - spread <= d.confidence <= 1 for d in r.frame.detections)


def test_run_scenario_frame_count_and_incident_truth():
    lines, truth = run_scenario(scenario())
    assert len(lines) == 120
    (inc,) = truth.incidents
    assert (inc["start_ms"], inc["end_ms"]) == (10_000, 20_000)
    frames = [parse_frame(l) for l in lines]
    with_accident = sorted(f.timestamp_ms for f in frames
                           if any(d.cls is ObjectClass.ACCIDENT for d in f.detections))
    assert with_accident == list(range(10_000, 20_000, 1000))


def test_noise_free_fidelity():
    lines, truth = run_scenario(scenario())
    frames = [parse_frame(l) for l in lines]
    counts = [count_vehicles(f, 0.5).total for f in frames]
    expected = [r["count"] for r in truth.records if r["type"] == "count"]
    assert counts == expected


def test_write_is_byte_identical(tmp_path):
    cfg = scenario(noise={"p_miss": 0.1, "p_false": 0.05, "jitter_px": 3, "conf_spread": 0.3})
    a = write_scenario(cfg, tmp_path / "a")
    b = write_scenario(cfg, tmp_path / "b")
    for pa, pb in zip(a, b):
        assert open(pa, "rb").read() == open(pb, "rb").read()


@pytest.mark.parametrize("bad", [
    {"noise": {"p_miss": 1.5}},
    {"segments": [{"segment_id": "a", "profile": [{"start_s": 0, "rate_per_min": 5}], "dwell_s": 0}]},
    {"incidents": [{"segment_id": "zz", "start_s": 1, "duration_s": 1, "class": "accident"}]},
    {"incidents": [{"segment_id": "a", "start_s": 1, "duration_s": 1, "class": "car"}]},
    {"incidents": [{"segment_id": "a", "start_s": 55, "duration_s": 10, "class": "accident"}]},
])
def test_invalid_scenarios(bad):
    with pytest.raises(ConfigError):
        scenario(**bad)
