"""Per-timestep driving features and their 5x7 matrix encoding.

Seven features are computed from simulator ground truth at every tick:

====  ===========================================================
f1    turn state: 1 turn left, 2 turn right, 3 no turn (abreast)
f2    lateral distance ``y_ref - y_car`` to the reference cone (m)
f3    longitudinal proximity ``1 / (1 + (x_ref - x_car))``
f4    speed (km/h)
f5    heading from the y-axis (rad)
f6    heading rate (rad/s)
f7    steering-wheel rate (rad/s)
====  ===========================================================
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .sim import LEFT, RIGHT, Course, VehicleState, wrap_angle

N_FEATURES = 7
N_ROWS = 5
FEATURE_NAMES = ("f1", "f2", "f3", "f4", "f5", "f6", "f7")

TURN_LEFT = 1
TURN_RIGHT = 2
NO_TURN = 3

APPROACHING = "approaching"
ABREAST = "abreast"

# Row r holds the features rotated left by r positions.
DEFAULT_PERMUTATIONS = tuple(
    tuple((j + r) % N_FEATURES for j in range(N_FEATURES)) for r in range(N_ROWS)
)


@dataclass(frozen=True)
class ReferenceConeInfo:
    x_ref: float
    y_ref: float
    mode: str
    set_index: int | None = None  # None once past the last cone set


@dataclass(frozen=True)
class FeatureFrame:
    f1_turn_state: int
    f2_lateral: float
    f3_long_proximity: float
    f4_speed: float
    f5_heading: float
    f6_heading_rate: float
    f7_wheel_rate: float

    def as_array(self) -> np.ndarray:
        return np.array([float(self.f1_turn_state), self.f2_lateral, self.f3_long_proximity,
                         self.f4_speed, self.f5_heading, self.f6_heading_rate,
                         self.f7_wheel_rate])

    @classmethod
    def from_array(cls, values) -> "FeatureFrame":
        v = [float(a) for a in values]
        return cls(int(round(v[0])), *v[1:])


def _nearest_lane(y: float, course: Course) -> str:
    return LEFT if y >= 0.0 else RIGHT


def reference_cone(state: VehicleState, course: Course) -> ReferenceConeInfo:
    """Locate the cone-set edge that the distance features refer to.

    Before a set the reference is its start; while abreast (``x_start <= x <=
    x_end``) it is its end.  After the last set the finish line acts as a
    virtual set start on the lane the car currently occupies.
    """
    x = state.x
    for i, cs in enumerate(course.cone_sets):
        y = course.lane_y(cs.lane)
        if x < cs.x_start:
            return ReferenceConeInfo(cs.x_start, y, APPROACHING, i)
        if x <= cs.x_end:
            return ReferenceConeInfo(cs.x_end, y, ABREAST, i)
    # beyond the finish the gap is pinned at zero
    x_ref = max(course.x_finish, x)
    return ReferenceConeInfo(x_ref, course.lane_y(_nearest_lane(state.y, course)), APPROACHING,
                             None)


def turn_state(state: VehicleState, course: Course) -> int:
    ref = reference_cone(state, course)
    if ref.mode == ABREAST or ref.set_index is None:
        return NO_TURN
    # the vacant space is on the side opposite the obstacle
    lane = course.cone_sets[ref.set_index].lane
    return TURN_LEFT if lane == RIGHT else TURN_RIGHT


def lateral_distance(state: VehicleState, ref: ReferenceConeInfo) -> float:
    return ref.y_ref - state.y


def longitudinal_proximity(state: VehicleState, ref: ReferenceConeInfo) -> float:
    gap = ref.x_ref - state.x
    if gap < 0:
        raise ValueError(f"reference cone at x={ref.x_ref} lies behind the car at x={state.x}")
    return 1.0 / (1.0 + gap)


def extract_frame(state: VehicleState, prev_state: VehicleState | None, course: Course,
                  dt: float) -> FeatureFrame:
    """Compute the seven features.  Pass ``prev_state=None`` on the first
    frame of a run; the two rate features are then zero."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    ref = reference_cone(state, course)
    f1 = turn_state(state, course)
    if prev_state is None:
        f6 = 0.0
        f7 = 0.0
    else:
        f6 = wrap_angle(state.heading - prev_state.heading) / dt
        f7 = state.wheel_rate
    return FeatureFrame(f1, lateral_distance(state, ref), longitudinal_proximity(state, ref),
                        state.speed_kmh, state.heading, f6, f7)


class Normalizer(BaseEstimator, TransformerMixin):
    """Per-feature z-scoring with a floor on the standard deviation.

    Parameters
    ----------
    epsilon : float, default=1e-8
        Smallest standard deviation used for scaling.
    """

    def __init__(self, epsilon: float = 1e-8):
        self.epsilon = epsilon

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        self.std_ = np.maximum(X.std(axis=0), self.epsilon)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, ("mean_", "std_"))
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return (X - self.mean_) / self.std_

    def inverse_transform(self, X):
        check_is_fitted(self, ("mean_", "std_"))
        X = check_array(X, dtype=np.float64)
        return X * self.std_ + self.mean_

    @classmethod
    def from_stats(cls, mean, std, epsilon: float = 1e-8) -> "Normalizer":
        norm = cls(epsilon=epsilon)
        norm.mean_ = np.asarray(mean, dtype=np.float64)
        norm.std_ = np.maximum(np.asarray(std, dtype=np.float64), epsilon)
        norm.n_features_in_ = norm.mean_.shape[0]
        return norm


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray  # (5, 7)
    permutation_table: tuple[tuple[int, ...], ...]


def _check_permutations(perms) -> np.ndarray:
    table = np.asarray(perms, dtype=np.intp)
    if table.ndim != 2 or table.shape[1] != N_FEATURES:
        raise ValueError(f"permutation table must have {N_FEATURES} columns, got {table.shape}")
    for row in table:
        if sorted(row.tolist()) != list(range(N_FEATURES)):
            raise ValueError(f"{row.tolist()} is not a permutation of 0..{N_FEATURES - 1}")
    if table[0].tolist() != list(range(N_FEATURES)):
        raise ValueError("row 0 of the permutation table must be the identity")
    return table


def encode_matrices(Z: np.ndarray, permutations=DEFAULT_PERMUTATIONS) -> np.ndarray:
    """Arrange normalized feature rows ``(n, 7)`` into ``(n, rows, 7)``."""
    table = _check_permutations(permutations)
    return np.asarray(Z, dtype=np.float64)[:, table]


def build_matrix(frame: FeatureFrame, norm: Normalizer,
                 permutations=DEFAULT_PERMUTATIONS) -> FeatureMatrix:
    z = norm.transform(frame.as_array()[None, :])
    return FeatureMatrix(encode_matrices(z, permutations)[0], tuple(map(tuple, permutations)))


class FeatureMatrixEncoder(BaseEstimator, TransformerMixin):
    """Normalize raw 7-feature rows and lay each out as a one-channel image.

    ``transform`` returns an array of shape ``(n, rows, 7, 1)`` ready for
    the CNN.
    """

    def __init__(self, permutations=DEFAULT_PERMUTATIONS, epsilon: float = 1e-8):
        self.permutations = permutations
        self.epsilon = epsilon

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features, got {X.shape[1]}")
        _check_permutations(self.permutations)
        self.normalizer_ = Normalizer(self.epsilon).fit(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "normalizer_")
        Z = self.normalizer_.transform(X)
        return encode_matrices(Z, self.permutations)[..., None]


def frames_to_array(frames) -> np.ndarray:
    return np.array([f.as_array() for f in frames], dtype=np.float64).reshape(-1, N_FEATURES)
