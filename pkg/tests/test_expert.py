import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slalomnet.controller import PdGains
from slalomnet.expert import (DEFAULT_PRESETS, CorpusError, ExpertConfig, ExpertDriver,
                              SpeedProfile, generate_corpus, pure_pursuit_angle, reference_path)
from slalomnet.sim import HALF_PI, VehicleParams, VehicleState, build_course

P = VehicleParams()
COURSE = build_course()
PROFILE = reference_path(COURSE, P)


def test_reference_path_lanes_and_smoothness():
    assert PROFILE.y(0.0) == -1.75
    for cs in COURSE.cone_sets:
        free = 1.75 if cs.lane == "right" else -1.75
        assert all(PROFILE.y(x) == free for x in np.linspace(cs.x_start, cs.x_end, 11))
    # C2: first and second derivatives agree with central differences and are continuous
    xs = np.linspace(0.5, 169.5, 3000)
    h = 1e-4
    for x in xs:
        assert PROFILE.slope(x) == pytest.approx((PROFILE.y(x + h) - PROFILE.y(x - h)) / (2 * h),
                                                 abs=1e-6)
        assert PROFILE.curvature_term(x) == pytest.approx(
            (PROFILE.slope(x + h) - PROFILE.slope(x - h)) / (2 * h), abs=1e-5)
    for x_a, x_b, _, _ in PROFILE.blends:
        for edge in (x_a, x_b):
            assert abs(PROFILE.slope(edge)) < 1e-12
            assert abs(PROFILE.curvature_term(edge)) < 1e-12


def test_reference_path_keeps_clearance():
    assert PROFILE.min_clearance() >= 0.6
    with pytest.raises(ValueError):
        reference_path(COURSE, P, blend_length=31.0)


def test_pure_pursuit_zero_on_aligned_straight():
    s = VehicleState(85.0, -1.75, HALF_PI, 10.0)
    assert pure_pursuit_angle(s, PROFILE, P, 5.0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("y, sign", [(-1.0, -1), (-2.5, 1)])
def test_pure_pursuit_steers_toward_the_path(y, sign):
    # on a stretch where the path sits in the right lane (y = -1.75)
    s = VehicleState(2.0, y, HALF_PI, 10.0)
    assert np.sign(pure_pursuit_angle(s, PROFILE, P, 5.0)) == sign


def test_expert_label_is_state_determined():
    d1 = ExpertDriver(DEFAULT_PRESETS[0], PROFILE, COURSE, P, PdGains(),
                      np.random.default_rng(0))
    d2 = ExpertDriver(DEFAULT_PRESETS[0], PROFILE, COURSE, P, PdGains(),
                      np.random.default_rng(1))
    s = VehicleState(10.0, -1.5, HALF_PI + 0.05, 12.0, wheel_angle=0.3)
    d1.step(s, 40.0)
    d2.step(s, 40.0)
    assert d1.last_desired == d2.last_desired == d1.command(s)


def small_config(**kw):
    return ExpertConfig(**({"num_runs": 6, "train_runs": 4, "seed": 3} | kw))


def test_corpus_is_deterministic_and_split_by_run():
    a = generate_corpus(small_config(), COURSE, P)
    b = generate_corpus(small_config(), COURSE, P)
    np.testing.assert_array_equal(a.train.features, b.train.features)
    np.testing.assert_array_equal(a.test.target, b.test.target)
    assert a.manifest == b.manifest
    tr, te = set(a.train.run_ids.tolist()), set(a.test.run_ids.tolist())
    assert not tr & te and len(tr) == 4 and len(te) == 2
    assert tr | te == set(range(6))
    for run in a.manifest["runs"]:
        assert run["max_wheel_rate"] <= 10.0
    c = generate_corpus(small_config(seed=4), COURSE, P)
    assert not np.array_equal(a.train.target[:50], c.train.target[:50])


def test_corpus_rejections_abort():
    # a wheel-rate cap nobody can meet rejects every run
    with pytest.raises(CorpusError, match="rejected"):
        generate_corpus(small_config(wheel_rate_cap=1e-3), COURSE, P)


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), t=st.floats(0, 120))
def test_random_speed_profile_stays_in_range(seed, t):
    sp = SpeedProfile.random(np.random.default_rng(seed))
    assert 15.0 <= sp(t) <= 60.0
    assert 2 <= len(sp.levels) <= 4
    assert list(sp.times) == sorted(sp.times)


def test_speed_profile_parse():
    assert SpeedProfile.parse("fixed:42")(10.0) == 42.0
    with pytest.raises(ValueError):
        SpeedProfile.parse("warp")
    with pytest.raises(ValueError):
        SpeedProfile.parse("random")


@pytest.mark.parametrize("bad", [dict(train_runs=0), dict(train_runs=6), dict(speed_min=10.0),
                                 dict(presets=())])
def test_expert_config_validation(bad):
    with pytest.raises(ValueError):
        small_config(**bad)


def test_presets_differ():
    assert len({dataclasses.astuple(p)[1:] for p in DEFAULT_PRESETS}) == len(DEFAULT_PRESETS)
    assert math.isclose(SpeedProfile((20.0, 40.0), (5.0,))(5.0), 30.0)
