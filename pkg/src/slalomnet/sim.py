"""Vehicle plant, slalom course and collision detection.

The car is a kinematic bicycle whose front wheels are driven by a damped
steering column.  Coordinates: ``x`` runs down the road, ``y`` is lateral with
the left lane at positive ``y``.  ``heading`` is measured from the y-axis so
that driving straight down the road gives ``heading == pi/2``; a left turn
increases it.  Internally the integrator works on the yaw ``psi = heading -
pi/2`` (measured from the x-axis) which keeps straight-line motion exact in
floating point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

KMH_PER_MS = 3.6
HALF_PI = math.pi / 2

LEFT = "left"
RIGHT = "right"


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


class SimulationError(ValueError):
    """Raised when the plant is fed non-finite or otherwise invalid values."""


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.7
    steering_ratio: float = 16.0
    column_inertia: float = 0.05
    column_damping: float = 0.3
    body_length: float = 4.5
    body_width: float = 1.8
    wheel_angle_max: float = 2.5 * math.pi
    speed_time_constant: float = 0.5
    substeps: int = 4

    def __post_init__(self):
        for name in ("wheelbase", "steering_ratio", "column_inertia", "column_damping",
                     "body_length", "body_width", "wheel_angle_max", "speed_time_constant"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"VehicleParams.{name} must be finite and > 0, got {value!r}")
        if self.substeps < 4:
            raise ValueError("at least 4 RK4 substeps per control step are required")


@dataclass(frozen=True)
class VehicleState:
    """Plant state.  ``speed`` is in m/s, angles in rad."""

    x: float
    y: float
    heading: float = HALF_PI
    speed: float = 0.0
    wheel_angle: float = 0.0
    wheel_rate: float = 0.0

    @property
    def speed_kmh(self) -> float:
        return self.speed * KMH_PER_MS

    @property
    def yaw(self) -> float:
        """Heading measured from the x-axis (road direction)."""
        return self.heading - HALF_PI

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.x, self.y, self.heading, self.speed,
                                              self.wheel_angle, self.wheel_rate))


@dataclass(frozen=True)
class StepInput:
    torque: float
    speed_command: float  # km/h, supplied from outside the steering system


@dataclass(frozen=True)
class ConeSet:
    x_start: float
    x_end: float
    lane: str
    cone_spacing: float = 5.0
    cone_radius: float = 0.15

    def __post_init__(self):
        if self.lane not in (LEFT, RIGHT):
            raise ValueError(f"lane must be 'left' or 'right', got {self.lane!r}")
        if not self.x_end > self.x_start:
            raise ValueError(f"cone set needs x_end > x_start, got [{self.x_start}, {self.x_end}]")
        if self.cone_spacing <= 0 or self.cone_radius <= 0:
            raise ValueError("cone_spacing and cone_radius must be positive")

    def cone_xs(self) -> list[float]:
        n = int(math.floor((self.x_end - self.x_start) / self.cone_spacing + 1e-9))
        return [self.x_start + i * self.cone_spacing for i in range(n + 1)]

    def contains(self, x: float) -> bool:
        return self.x_start <= x <= self.x_end


@dataclass(frozen=True)
class Course:
    cone_sets: tuple[ConeSet, ...]
    lane_width: float = 3.5
    x_finish: float = 170.0
    start_lane: str = RIGHT

    def __post_init__(self):
        if not self.cone_sets:
            raise ValueError("a course needs at least one cone set")
        for a, b in zip(self.cone_sets, self.cone_sets[1:]):
            if not b.x_start > a.x_end:
                raise ValueError(
                    f"cone sets overlap or are out of order: [{a.x_start}, {a.x_end}] then "
                    f"[{b.x_start}, {b.x_end}]")
            if a.lane == b.lane:
                raise ValueError("consecutive cone sets must alternate lanes")
        if self.x_finish <= self.cone_sets[-1].x_end:
            raise ValueError("x_finish must lie beyond the last cone set")
        if self.start_lane not in (LEFT, RIGHT):
            raise ValueError(f"bad start_lane {self.start_lane!r}")

    @property
    def lane_centers(self) -> dict[str, float]:
        half = self.lane_width / 2
        return {LEFT: half, RIGHT: -half}

    def lane_y(self, lane: str) -> float:
        return self.lane_centers[lane]

    def cones(self) -> list[tuple[float, float, float]]:
        """All cones as ``(x, y, radius)``."""
        out = []
        for cs in self.cone_sets:
            y = self.lane_y(cs.lane)
            out.extend((cx, y, cs.cone_radius) for cx in cs.cone_xs())
        return out

    def start_state(self, speed_kmh: float = 0.0) -> VehicleState:
        return VehicleState(x=0.0, y=self.lane_y(self.start_lane), heading=HALF_PI,
                            speed=speed_kmh / KMH_PER_MS)

    def to_dict(self) -> dict:
        return {
            "lane_width": self.lane_width,
            "x_finish": self.x_finish,
            "start_lane": self.start_lane,
            "cone_sets": [
                {"x_start": c.x_start, "x_end": c.x_end, "lane": c.lane,
                 "cone_spacing": c.cone_spacing, "cone_radius": c.cone_radius}
                for c in self.cone_sets
            ],
        }


@dataclass
class CourseConfig:
    """Parameters for :func:`build_course`.

    Either give ``cone_sets`` explicitly (list of dicts with ``x_start``,
    ``x_end``, ``lane``) or let the regular layout generate them from
    ``lanes``, ``set_length``, ``gap`` and ``lead_in``.
    """

    lanes: Sequence[str] = (RIGHT, LEFT, RIGHT)
    set_length: float = 20.0
    gap: float = 30.0
    lead_in: float = 30.0
    run_out: float = 20.0
    lane_width: float = 3.5
    cone_spacing: float = 5.0
    cone_radius: float = 0.15
    start_lane: str = RIGHT
    cone_sets: list[dict] | None = field(default=None)
    x_finish: float | None = None


def build_course(config: CourseConfig | None = None) -> Course:
    """Build a slalom course.  The default is three 20 m cone sets, 30 m apart,
    alternating right/left/right, with the car starting in the right lane."""
    config = config or CourseConfig()
    if config.cone_sets is not None:
        sets = [ConeSet(float(d["x_start"]), float(d["x_end"]), d["lane"],
                        float(d.get("cone_spacing", config.cone_spacing)),
                        float(d.get("cone_radius", config.cone_radius)))
                for d in config.cone_sets]
    else:
        if not config.lanes:
            raise ValueError("a course needs at least one cone set")
        sets = []
        x = config.lead_in
        for lane in config.lanes:
            sets.append(ConeSet(x, x + config.set_length, lane, config.cone_spacing,
                                config.cone_radius))
            x += config.set_length + config.gap
    if not sets:
        raise ValueError("a course needs at least one cone set")
    x_finish = config.x_finish if config.x_finish is not None else sets[-1].x_end + config.run_out
    return Course(tuple(sets), lane_width=config.lane_width, x_finish=x_finish,
                  start_lane=config.start_lane)


def _derivs(psi, v, theta, omega, torque, v_cmd, p: VehicleParams):
    delta = theta / p.steering_ratio
    return (
        v * math.cos(psi),
        v * math.sin(psi),
        v * math.tan(delta) / p.wheelbase,
        (v_cmd - v) / p.speed_time_constant,
        omega,
        (torque - p.column_damping * omega) / p.column_inertia,
    )


def step(state: VehicleState, inp: StepInput, params: VehicleParams,
         dt: float = 1.0 / 30.0) -> VehicleState:
    """Advance the plant by one control period with RK4 substeps.

    Torque and speed command are held constant over ``dt``.  The steering
    column stops at ``+-wheel_angle_max``; hitting the stop zeroes its rate.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise SimulationError(f"dt must be finite and > 0, got {dt!r}")
    if not state.is_finite():
        raise SimulationError(f"non-finite vehicle state: {state}")
    if not (math.isfinite(inp.torque) and math.isfinite(inp.speed_command)):
        raise SimulationError(f"non-finite step input: {inp}")
    if inp.speed_command < 0:
        raise SimulationError(f"negative speed command {inp.speed_command}")

    p = params
    limit = p.wheel_angle_max
    v_cmd = inp.speed_command / KMH_PER_MS
    tq = inp.torque
    h = dt / p.substeps
    x, y, psi, v = state.x, state.y, state.yaw, state.speed
    th, om = state.wheel_angle, state.wheel_rate
    for _ in range(p.substeps):
        k1 = _derivs(psi, v, th, om, tq, v_cmd, p)
        k2 = _derivs(psi + 0.5 * h * k1[2], v + 0.5 * h * k1[3], th + 0.5 * h * k1[4],
                     om + 0.5 * h * k1[5], tq, v_cmd, p)
        k3 = _derivs(psi + 0.5 * h * k2[2], v + 0.5 * h * k2[3], th + 0.5 * h * k2[4],
                     om + 0.5 * h * k2[5], tq, v_cmd, p)
        k4 = _derivs(psi + h * k3[2], v + h * k3[3], th + h * k3[4], om + h * k3[5],
                     tq, v_cmd, p)
        c = h / 6.0
        x += c * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y += c * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        psi += c * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        v += c * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        th += c * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
        om += c * (k1[5] + 2 * k2[5] + 2 * k3[5] + k4[5])
        if th > limit:
            th, om = limit, 0.0
        elif th < -limit:
            th, om = -limit, 0.0
    v = max(v, 0.0)
    out = VehicleState(x, y, wrap_angle(psi + HALF_PI), v, th, om)
    if not out.is_finite():
        raise SimulationError(f"integration produced a non-finite state from {state} with {inp}")
    return out


@dataclass(frozen=True)
class CollisionReport:
    collided: bool
    cone: tuple[float, float] | None = None
    clearance: float = math.inf  # smallest (distance to body - cone radius) seen, m


def body_center(state: VehicleState, params: VehicleParams) -> tuple[float, float]:
    """Center of the body rectangle; ``(x, y)`` is the rear axle, the body is
    centered half a wheelbase ahead of it."""
    psi = state.yaw
    off = params.wheelbase / 2
    return state.x + off * math.cos(psi), state.y + off * math.sin(psi)


def point_body_distance(px: float, py: float, state: VehicleState,
                        params: VehicleParams) -> float:
    """Euclidean distance from a point to the car's body rectangle (0 inside)."""
    cx, cy = body_center(state, params)
    psi = state.yaw
    c, s = math.cos(psi), math.sin(psi)
    dx, dy = px - cx, py - cy
    lon = dx * c + dy * s
    lat = -dx * s + dy * c
    ex = max(abs(lon) - params.body_length / 2, 0.0)
    ey = max(abs(lat) - params.body_width / 2, 0.0)
    return math.hypot(ex, ey)


def check_collision(state: VehicleState, params: VehicleParams, course: Course) -> CollisionReport:
    """Collision iff a cone center lies within the body rectangle inflated by
    the cone radius."""
    reach = params.body_length + params.wheelbase
    best = math.inf
    for cs in course.cone_sets:
        if cs.x_end < state.x - reach or cs.x_start > state.x + reach:
            continue
        cy = course.lane_y(cs.lane)
        for cx in cs.cone_xs():
            gap = point_body_distance(cx, cy, state, params) - cs.cone_radius
            if gap <= 0.0:
                return CollisionReport(True, (cx, cy), gap)
            best = min(best, gap)
    return CollisionReport(False, None, best)


