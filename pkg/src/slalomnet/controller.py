"""Steering control unit: CNN set-point -> PD column torque, and the closed-loop pilot."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import RunTrace, TraceRecord
from .features import N_FEATURES, FeatureFrame, extract_frame
from .nn.model import CnnModel
from .sim import (Course, StepInput, VehicleParams, VehicleState, check_collision, step)


@dataclass(frozen=True)
class PdGains:
    """PD gains with a piecewise-linear speed schedule of gain multipliers.

    ``schedule`` is a sequence of ``(speed_kmh, multiplier)`` knots; outside
    the knot range the end multipliers hold.
    """

    p: float = 8.0
    d: float = 0.7
    schedule: tuple = ((15.0, 1.0), (60.0, 1.6))
    torque_max: float = 15.0

    def __post_init__(self):
        if not (self.p > 0 and self.d > 0):
            raise ValueError("PD gains must be positive")
        if not self.torque_max > 0:
            raise ValueError("torque_max must be positive")
        knots = tuple((float(s), float(m)) for s, m in self.schedule)
        if not knots:
            raise ValueError("gain schedule needs at least one knot")
        if any(m <= 0 for _, m in knots):
            raise ValueError("gain multipliers must be positive")
        if any(b[0] <= a[0] for a, b in zip(knots, knots[1:])):
            raise ValueError("gain schedule speeds must be strictly increasing")
        object.__setattr__(self, "schedule", knots)

    def multiplier(self, speed_kmh: float | None) -> float:
        if speed_kmh is None:
            return 1.0
        speeds = [s for s, _ in self.schedule]
        mults = [m for _, m in self.schedule]
        return float(np.interp(speed_kmh, speeds, mults))


def pd_torque(theta_a: float, theta_d: float, prev_error: float | None, dt: float,
              gains: PdGains, speed_kmh: float | None = None) -> float:
    """Column torque driving the wheel angle ``theta_a`` toward ``theta_d``.

    The error is ``e = theta_a - theta_d`` and its rate a backward difference;
    the torque is ``-(P e + D de/dt)`` scaled by the speed schedule, i.e. it
    always opposes the error.  With ``prev_error=None`` the rate term is zero.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    e = theta_a - theta_d
    de = 0.0 if prev_error is None else (e - prev_error) / dt
    tau = -gains.multiplier(speed_kmh) * (gains.p * e + gains.d * de)
    return min(max(tau, -gains.torque_max), gains.torque_max)


def desired_angle(model: CnnModel, frame: FeatureFrame, wheel_angle_max: float) -> float:
    """Run the CNN on one feature frame and return the set-point in rad."""
    if model.normalizer is None:
        raise ValueError("model has no normalizer statistics; cannot encode features")
    if model.normalizer.n_features_in_ != N_FEATURES:
        raise ValueError(f"model normalizer expects {model.normalizer.n_features_in_} features, "
                         f"frames carry {N_FEATURES}")
    out = float(model.forward(model.encode(frame.as_array()[None, :]))[0]) * model.target_scale
    return min(max(out, -wheel_angle_max), wheel_angle_max)


class Pilot:
    """Features -> CNN -> PD torque, one control tick at a time.

    Holds the previous vehicle state (for the heading-rate feature) and the
    previous angle error (for the derivative term); call :meth:`reset`
    between runs.  ``setpoint`` replaces the CNN with a fixed desired angle,
    which is how the torque loop is tested in isolation.
    """

    def __init__(self, model: CnnModel | None, course: Course, params: VehicleParams,
                 gains: PdGains, dt: float = 1.0 / 30.0, setpoint: float | None = None):
        if model is None and setpoint is None:
            raise ValueError("Pilot needs a model or a fixed setpoint")
        self.model = model
        self.course = course
        self.params = params
        self.gains = gains
        self.dt = dt
        self.setpoint = setpoint
        self.reset()

    def reset(self) -> None:
        self.prev_state: VehicleState | None = None
        self.prev_error: float | None = None
        self.last_frame: FeatureFrame | None = None
        self.last_desired: float = 0.0

    def step(self, state: VehicleState, speed_command: float) -> StepInput:
        frame = extract_frame(state, self.prev_state, self.course, self.dt)
        if self.setpoint is not None:
            theta_d = self.setpoint
        else:
            theta_d = desired_angle(self.model, frame, self.params.wheel_angle_max)
        tau = pd_torque(state.wheel_angle, theta_d, self.prev_error, self.dt, self.gains,
                        state.speed_kmh)
        self.prev_error = state.wheel_angle - theta_d
        self.prev_state = state
        self.last_frame = frame
        self.last_desired = theta_d
        return StepInput(tau, speed_command)


def pilot_step(pilot: Pilot, state: VehicleState, course: Course, speed_command: float,
               dt: float) -> StepInput:
    if course is not pilot.course or dt != pilot.dt:
        raise ValueError("pilot was initialised for a different course or dt")
    return pilot.step(state, speed_command)


@dataclass
class LoopSettings:
    dt: float = 1.0 / 30.0
    max_time: float = 120.0
    road_half_width: float | None = None  # default: one lane width beyond the lane centers


def run_closed_loop(model: CnnModel | None, course: Course, speed_profile, params: VehicleParams,
                    gains: PdGains, settings: LoopSettings | None = None, run_id: int = 0,
                    setpoint: float | None = None) -> RunTrace:
    """Drive the course from the start line with the learned pilot.

    ``speed_profile`` maps time (s) to the commanded speed (km/h); the pilot
    never alters it.  The trace is always returned; ``completed`` is set when
    the car reaches ``x_finish`` and ``failure`` names why it did not.
    """
    settings = settings or LoopSettings()
    pilot = Pilot(model, course, params, gains, settings.dt, setpoint=setpoint)
    bound = settings.road_half_width or 1.5 * course.lane_width
    return _drive(pilot.step, pilot, course, speed_profile, params, settings, run_id, bound)


def _drive(control, agent, course, speed_profile, params, settings, run_id, bound) -> RunTrace:
    dt = settings.dt
    trace = RunTrace(run_id=run_id, dt=dt)
    state = course.start_state(speed_profile(0.0))
    n_max = int(math.ceil(settings.max_time / dt))
    for k in range(n_max + 1):
        t = k * dt
        v_cmd = speed_profile(t)
        inp = control(state, v_cmd)
        hit = check_collision(state, params, course)
        trace.records.append(TraceRecord(t, state, agent.last_frame, agent.last_desired,
                                         inp.torque, hit.collided))
        if hit.collided:
            trace.collided = True
            trace.failure = trace.failure or f"collision with cone at {hit.cone}"
        if state.x >= course.x_finish:
            trace.completed = True
            break
        if abs(state.y) > bound:
            trace.failure = f"diverged: |y|={abs(state.y):.2f} m beyond road bound {bound} m"
            break
        state = step(state, inp, params, dt)
    else:
        trace.failure = trace.failure or f"did not reach x_finish within {settings.max_time} s"
    return trace


def lane_change_windows(course: Course) -> list[tuple[float, float]]:
    """x-intervals, split at cone-set midpoints, each containing one lane change."""
    mids = [(cs.x_start + cs.x_end) / 2 for cs in course.cone_sets]
    edges = [-math.inf] + mids
    return list(zip(edges[:-1], edges[1:]))


def lane_change_peaks(x, wheel_angle, course: Course) -> list[float]:
    """Peak |wheel angle| within each lane-change window."""
    x = np.asarray(x)
    wa = np.abs(np.asarray(wheel_angle))
    peaks = []
    for lo, hi in lane_change_windows(course):
        sel = (x >= lo) & (x < hi)
        peaks.append(float(wa[sel].max()) if sel.any() else math.nan)
    return peaks


@dataclass
class TrialSummary:
    run_id: int
    completed: bool
    collided: bool
    peak_wheel_angle: float
    wheel_rate_rms: float
    speed_min: float
    speed_max: float
    speed_mean: float
    duration: float
    failure: str | None = None
    lane_change_peaks: list = field(default_factory=list)


def summarize_trace(trace: RunTrace, course: Course) -> TrialSummary:
    wa = trace.column("wheel_angle")
    rate = trace.column("wheel_rate")
    speed = trace.column("speed_kmh")
    return TrialSummary(
        run_id=trace.run_id, completed=trace.completed, collided=trace.collided,
        peak_wheel_angle=float(np.abs(wa).max()), wheel_rate_rms=float(np.sqrt(np.mean(rate ** 2))),
        speed_min=float(speed.min()), speed_max=float(speed.max()),
        speed_mean=float(speed.mean()), duration=float(trace.records[-1].t),
        failure=trace.failure,
        lane_change_peaks=lane_change_peaks(trace.column("x"), wa, course))
