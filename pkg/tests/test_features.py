import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone

from slalomnet.features import (ABREAST, APPROACHING, DEFAULT_PERMUTATIONS, NO_TURN, TURN_LEFT,
                                TURN_RIGHT, FeatureFrame, FeatureMatrixEncoder, Normalizer,
                                build_matrix, encode_matrices, extract_frame,
                                longitudinal_proximity, reference_cone, turn_state)
from slalomnet.sim import HALF_PI, VehicleState, build_course

COURSE = build_course()
DT = 1.0 / 30.0

states = st.builds(
    VehicleState,
    x=st.floats(-10.0, 200.0), y=st.floats(-6.0, 6.0),
    heading=st.floats(0.0, math.pi), speed=st.floats(0.0, 60 / 3.6),
    wheel_angle=st.floats(-7.8, 7.8), wheel_rate=st.floats(-10.0, 10.0))

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("x, x_ref, mode, f1", [
    (0.0, 30.0, APPROACHING, TURN_LEFT),
    (29.99, 30.0, APPROACHING, TURN_LEFT),
    (30.0, 50.0, ABREAST, NO_TURN),
    (50.0, 50.0, ABREAST, NO_TURN),
    (50.01, 80.0, APPROACHING, TURN_RIGHT),
    (90.0, 100.0, ABREAST, NO_TURN),
    (120.0, 130.0, APPROACHING, TURN_LEFT),
    (160.0, 170.0, APPROACHING, NO_TURN),
    (175.0, 175.0, APPROACHING, NO_TURN),
])
def test_reference_cone_table(x, x_ref, mode, f1):
    s = VehicleState(x, 0.3)
    ref = reference_cone(s, COURSE)
    assert ref.x_ref == x_ref and ref.mode == mode
    assert turn_state(s, COURSE) == f1


def test_worked_frame_example():
    # car in the right lane, 10 m before the first (right-lane) set
    prev = VehicleState(19.5, -1.75, HALF_PI, 15.0, wheel_angle=0.1, wheel_rate=0.0)
    s = VehicleState(20.0, -1.75, HALF_PI + 0.03, 15.0, wheel_angle=0.2, wheel_rate=0.6)
    f = extract_frame(s, prev, COURSE, DT)
    assert f.f1_turn_state == TURN_LEFT
    assert f.f2_lateral == 0.0  # reference cone sits in the car's own lane
    assert f.f3_long_proximity == pytest.approx(1 / 11)
    assert f.f4_speed == pytest.approx(54.0)
    assert f.f5_heading == pytest.approx(HALF_PI + 0.03)
    assert f.f6_heading_rate == pytest.approx(0.03 / DT)
    assert f.f7_wheel_rate == 0.6
    first = extract_frame(s, None, COURSE, DT)
    assert first.f6_heading_rate == 0.0 and first.f7_wheel_rate == 0.0


def test_lateral_distance_sign():
    # approaching the left-lane set from the right lane: reference is up and to the left
    f = extract_frame(VehicleState(60.0, -1.75), None, COURSE, DT)
    assert f.f2_lateral == pytest.approx(3.5)


def test_negative_gap_rejected():
    from slalomnet.features import ReferenceConeInfo
    with pytest.raises(ValueError):
        longitudinal_proximity(VehicleState(31.0, 0.0), ReferenceConeInfo(30.0, 0.0, APPROACHING))


@settings(max_examples=10_000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(prev=states, s=states)
def test_state_feature_invariants(prev, s):
    f = extract_frame(s, prev, COURSE, DT)
    assert 0.0 < f.f3_long_proximity <= 1.0
    if any(cs.x_start <= s.x <= cs.x_end for cs in COURSE.cone_sets):
        assert f.f1_turn_state == NO_TURN
    assert f.f1_turn_state in (TURN_LEFT, TURN_RIGHT, NO_TURN)
    assert np.all(np.isfinite(f.as_array()))
    assert FeatureFrame.from_array(f.as_array()) == f


@settings(max_examples=2_000, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.just(7)), elements=finite))
def test_matrix_rows_are_permutations_of_one_another(Z):
    M = encode_matrices(Z)
    assert M.shape == (len(Z), 5, 7)
    np.testing.assert_array_equal(M[:, 0, :], Z)
    ref = np.sort(Z, axis=1)
    for r in range(5):
        np.testing.assert_array_equal(np.sort(M[:, r, :], axis=1), ref)


def test_matrix_rows_are_distinct_rotations():
    z = np.arange(7.0)[None, :]
    M = encode_matrices(z)[0]
    assert len({tuple(r) for r in M}) == 5
    np.testing.assert_array_equal(M[1], [1, 2, 3, 4, 5, 6, 0])


@pytest.mark.parametrize("bad", [
    [[0, 1, 2, 3, 4, 5, 6], [0, 0, 1, 2, 3, 4, 5]],
    [[1, 0, 2, 3, 4, 5, 6]],
    [[0, 1, 2]],
])
def test_bad_permutation_tables(bad):
    with pytest.raises(ValueError):
        encode_matrices(np.zeros((1, 7)), bad)


@settings(max_examples=2_000, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.just(7)),
              elements=st.floats(-100, 100, allow_nan=False)))
def test_normalizer_round_trip(X):
    norm = Normalizer().fit(X)
    back = norm.inverse_transform(norm.transform(X))
    assert np.max(np.abs(back - X)) < 1e-12


def test_normalizer_constant_column_and_statistics():
    X = np.column_stack([np.full(10, 3.0), np.arange(10.0)])
    norm = Normalizer().fit(X)
    Z = norm.transform(X)
    assert np.all(Z[:, 0] == 0.0)
    assert Z[:, 1].mean() == pytest.approx(0.0, abs=1e-15)
    assert Z[:, 1].std() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        norm.transform(np.zeros((2, 3)))


def test_encoder_is_an_sklearn_transformer():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 7)) * [1, 2, 3, 4, 5, 6, 7]
    enc = FeatureMatrixEncoder()
    assert clone(enc).get_params() == enc.get_params()
    out = enc.fit_transform(X)
    assert out.shape == (50, 5, 7, 1)
    m = build_matrix(FeatureFrame.from_array(X[3]), enc.normalizer_, DEFAULT_PERMUTATIONS)
    # f1 is rounded to an int inside FeatureFrame, so only compare the other entries
    np.testing.assert_allclose(m.values[0, 1:], out[3, 0, 1:, 0], atol=1e-12)
