"""Scripted expert drivers that generate the demonstration corpus."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .controller import LoopSettings, PdGains, _drive, lane_change_peaks, pd_torque
from .data import Dataset, RunTrace
from .features import extract_frame
from .sim import HALF_PI, LEFT, RIGHT, Course, StepInput, VehicleParams, VehicleState, \
    point_body_distance

log = logging.getLogger(__name__)


def _quintic(u):
    """Smoothstep with zero first and second derivatives at both ends."""
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


def _quintic_d1(u):
    return 30.0 * u * u * (1.0 - u) ** 2


def _quintic_d2(u):
    return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)


class LateralProfile:
    """Target lateral position ``y_ref(x)`` through the slalom.

    The profile holds the free lane's center alongside every cone set and
    switches lanes with a quintic blend of ``blend_length`` centered in each
    gap (including the lead-in before the first set).  It is C2-continuous.
    """

    def __init__(self, course: Course, params: VehicleParams | None = None,
                 blend_length: float = 20.0, clearance_margin: float = 0.6):
        self.course = course
        self.params = params or VehicleParams()
        self.blend_length = blend_length
        self.clearance_margin = clearance_margin
        self.blends = []  # (x_a, x_b, y_from, y_to)
        y = course.lane_y(course.start_lane)
        prev_end = 0.0
        for cs in course.cone_sets:
            free = LEFT if cs.lane == RIGHT else RIGHT
            y_to = course.lane_y(free)
            if y_to != y:
                gap = cs.x_start - prev_end
                if blend_length >= gap:
                    raise ValueError(f"gap of {gap} m before the cone set at x={cs.x_start} is "
                                     f"too short for a {blend_length} m lane-change blend")
                mid = (prev_end + cs.x_start) / 2
                self.blends.append((mid - blend_length / 2, mid + blend_length / 2, y, y_to))
            y = y_to
            prev_end = cs.x_end
        self._y_final = y
        self._check_clearance()

    def _segment(self, x):
        for x_a, x_b, y0, y1 in self.blends:
            if x < x_a:
                return None, y0, 0.0
            if x <= x_b:
                return (x - x_a) / (x_b - x_a), y0, y1 - y0
        return None, self._y_final, 0.0

    def y(self, x: float) -> float:
        u, y0, dy = self._segment(x)
        return y0 if u is None else y0 + dy * _quintic(u)

    def slope(self, x: float) -> float:
        u, _, dy = self._segment(x)
        return 0.0 if u is None else dy * _quintic_d1(u) / self.blend_length

    def curvature_term(self, x: float) -> float:
        """Second derivative d2y/dx2."""
        u, _, dy = self._segment(x)
        return 0.0 if u is None else dy * _quintic_d2(u) / self.blend_length ** 2

    def min_clearance(self, step: float = 0.1) -> float:
        """Smallest cone-to-body gap (minus cone radius) for a car riding the profile."""
        best = math.inf
        cones = self.course.cones()
        for x in np.arange(0.0, self.course.x_finish + step, step):
            st = VehicleState(float(x), self.y(x), HALF_PI + math.atan(self.slope(x)))
            for cx, cy, r in cones:
                if abs(cx - x) < 10.0:
                    best = min(best, point_body_distance(cx, cy, st, self.params) - r)
        return best

    def _check_clearance(self):
        c = self.min_clearance()
        if c < self.clearance_margin:
            raise ValueError(f"reference path passes within {c:.3f} m of a cone "
                             f"(margin {self.clearance_margin} m); lengthen gaps or shorten "
                             f"the blend")


def reference_path(course: Course, params: VehicleParams | None = None,
                   blend_length: float = 20.0, clearance_margin: float = 0.6) -> LateralProfile:
    return LateralProfile(course, params, blend_length, clearance_margin)


@dataclass(frozen=True)
class DriverPreset:
    name: str
    lookahead_gain: float  # s; lookahead distance = gain * speed
    lookahead_min: float  # m
    smoothing_tau: float  # s, first-order filter on the steering command
    noise_std: float  # rad, stationary std of the steering perturbation
    noise_tau: float = 1.0  # s, correlation time of the perturbation


DEFAULT_PRESETS = (
    DriverPreset("steady", 0.55, 4.0, 0.15, 0.75),
    DriverPreset("brisk", 0.42, 3.5, 0.08, 1.05),
    DriverPreset("relaxed", 0.65, 5.0, 0.20, 0.6),
    DriverPreset("average", 0.50, 4.0, 0.12, 0.9),
)


def pure_pursuit_angle(state: VehicleState, profile: LateralProfile, params: VehicleParams,
                       lookahead: float) -> float:
    """Steering-wheel angle that points the rear axle at the profile point
    ``lookahead`` metres down the road."""
    gx = state.x + lookahead
    gy = profile.y(gx)
    dx, dy = gx - state.x, gy - state.y
    alpha = math.atan2(dy, dx) - state.yaw
    delta = math.atan2(2.0 * params.wheelbase * math.sin(alpha), math.hypot(dx, dy))
    angle = params.steering_ratio * delta
    return min(max(angle, -params.wheel_angle_max), params.wheel_angle_max)


class ExpertDriver:
    """Pure pursuit actuated through the same PD column loop as the learned
    pilot.

    The recorded target is the pure-pursuit angle at the current state, a
    function of what the features can see.  The angle actually sent to the
    column is that command passed through a first-order smoothing filter
    plus a correlated perturbation, so the demonstrations include
    recoveries from slightly off-path states.
    """

    def __init__(self, preset: DriverPreset, profile: LateralProfile, course: Course,
                 params: VehicleParams, gains: PdGains, rng: np.random.Generator | None,
                 dt: float = 1.0 / 30.0):
        self.preset = preset
        self.profile = profile
        self.course = course
        self.params = params
        self.gains = gains
        self.rng = rng
        self.dt = dt
        self.filtered: float | None = None
        self.noise = 0.0
        self._ou = 0.0
        self.prev_state: VehicleState | None = None
        self.prev_error: float | None = None
        self.last_frame = None
        self.last_desired = 0.0

    def command(self, state: VehicleState) -> float:
        """Intended steering-wheel angle (rad) at ``state``."""
        p = self.preset
        lookahead = max(p.lookahead_min, p.lookahead_gain * state.speed)
        return pure_pursuit_angle(state, self.profile, self.params, lookahead)

    def perturbation(self) -> float:
        p = self.preset
        if self.rng is not None and p.noise_std > 0:
            # Ornstein-Uhlenbeck source through one more first-order lag; the
            # second stage removes the white component from the column rate
            a = math.exp(-self.dt / p.noise_tau)
            self._ou = a * self._ou + p.noise_std * math.sqrt(2.0 * (1 - a * a)) * \
                self.rng.standard_normal()
            self.noise = a * self.noise + (1 - a) * self._ou
        return self.noise

    def step(self, state: VehicleState, speed_command: float) -> StepInput:
        self.last_frame = extract_frame(state, self.prev_state, self.course, self.dt)
        cmd = self.command(state)
        if self.filtered is None:
            self.filtered = cmd
        else:
            k = 1.0 - math.exp(-self.dt / self.preset.smoothing_tau)
            self.filtered += k * (cmd - self.filtered)
        limit = self.params.wheel_angle_max
        executed = min(max(self.filtered + self.perturbation(), -limit), limit)
        tau = pd_torque(state.wheel_angle, executed, self.prev_error, self.dt, self.gains,
                        state.speed_kmh)
        self.prev_error = state.wheel_angle - executed
        self.prev_state = state
        self.last_desired = cmd
        return StepInput(tau, speed_command)


def expert_step(driver: ExpertDriver, state: VehicleState) -> float:
    """One steering-wheel command (rad) from the expert."""
    return driver.command(state)


@dataclass(frozen=True)
class SpeedProfile:
    """Commanded speed (km/h) over time: ``levels[0]`` then a smoothed step
    to ``levels[i]`` centered at ``times[i-1]``."""

    levels: tuple
    times: tuple = ()
    ramp: float = 2.0  # s, width of each smoothed step

    def __call__(self, t: float) -> float:
        v = self.levels[0]
        for t_k, lo, hi in zip(self.times, self.levels, self.levels[1:]):
            u = min(max((t - t_k) / self.ramp + 0.5, 0.0), 1.0)
            v += (hi - lo) * _quintic(u)
        return v

    @classmethod
    def fixed(cls, speed_kmh: float) -> "SpeedProfile":
        return cls((float(speed_kmh),))

    @classmethod
    def random(cls, rng: np.random.Generator, vmin: float = 15.0, vmax: float = 60.0,
               max_steps: int = 3, horizon: float = 15.0) -> "SpeedProfile":
        n = int(rng.integers(1, max_steps + 1))
        levels = tuple(float(v) for v in rng.uniform(vmin, vmax, n + 1))
        times = tuple(float(t) for t in np.sort(rng.uniform(1.0, horizon, n)))
        return cls(levels, times)

    @classmethod
    def parse(cls, text: str, rng: np.random.Generator | None = None) -> "SpeedProfile":
        """``fixed:40`` or ``random``."""
        if text.startswith("fixed:"):
            return cls.fixed(float(text.split(":", 1)[1]))
        if text == "random":
            if rng is None:
                raise ValueError("random speed profile needs an rng")
            return cls.random(rng)
        raise ValueError(f"unknown speed profile {text!r} (use 'random' or 'fixed:<km/h>')")

    def to_dict(self) -> dict:
        return {"levels": list(self.levels), "times": list(self.times), "ramp": self.ramp}


@dataclass
class ExpertConfig:
    num_runs: int = 573
    train_runs: int = 500
    speed_min: float = 15.0
    speed_max: float = 60.0
    max_speed_steps: int = 3
    blend_length: float = 20.0
    clearance_margin: float = 0.6
    wheel_rate_cap: float = 10.0  # rad/s
    max_rejection_rate: float = 0.01
    max_time: float = 120.0
    presets: tuple = DEFAULT_PRESETS
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_runs < self.num_runs:
            raise ValueError("need 0 < train_runs < num_runs")
        if not 15.0 <= self.speed_min < self.speed_max <= 60.0:
            raise ValueError("speed range must lie within [15, 60] km/h")
        self.presets = tuple(p if isinstance(p, DriverPreset) else DriverPreset(**p)
                             for p in self.presets)
        if not self.presets:
            raise ValueError("at least one driver preset is required")


class CorpusError(RuntimeError):
    pass


def run_rng(seed: int, run_index: int, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, run_index, attempt]))


def simulate_expert_run(course: Course, profile: LateralProfile, preset: DriverPreset,
                        speed_profile: SpeedProfile, params: VehicleParams, gains: PdGains,
                        rng: np.random.Generator | None, run_id: int = 0,
                        dt: float = 1.0 / 30.0, max_time: float = 120.0) -> RunTrace:
    driver = ExpertDriver(preset, profile, course, params, gains, rng, dt)
    settings = LoopSettings(dt=dt, max_time=max_time)
    return _drive(driver.step, driver, course, speed_profile, params, settings, run_id,
                  1.5 * course.lane_width)


@dataclass
class Corpus:
    train: Dataset
    test: Dataset
    manifest: dict
    traces: list = field(default_factory=list, repr=False)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.train.to_csv(out / "train.csv")
        self.test.to_csv(out / "test.csv")
        (out / "manifest.json").write_text(json.dumps(self.manifest, indent=2) + "\n")


def generate_corpus(config: ExpertConfig, course: Course, params: VehicleParams | None = None,
                    gains: PdGains | None = None, dt: float = 1.0 / 30.0,
                    keep_traces: bool = False) -> Corpus:
    """Simulate ``num_runs`` expert demonstrations and split them by run.

    Runs that hit a cone, miss the finish or exceed the wheel-rate cap are
    regenerated with a fresh attempt seed; more than ``max_rejection_rate``
    rejections abort the corpus.
    """
    params = params or VehicleParams()
    gains = gains or PdGains()
    profile = reference_path(course, params, config.blend_length, config.clearance_margin)
    rejected = 0
    max_rejections = int(config.max_rejection_rate * config.num_runs)
    runs, stats, traces = [], [], []
    for i in range(config.num_runs):
        preset = config.presets[i % len(config.presets)]
        attempt = 0
        while True:
            rng = run_rng(config.seed, i, attempt)
            speeds = SpeedProfile.random(rng, config.speed_min, config.speed_max,
                                         config.max_speed_steps)
            trace = simulate_expert_run(course, profile, preset, speeds, params, gains, rng,
                                        run_id=i, dt=dt, max_time=config.max_time)
            max_rate = float(np.abs(trace.column("wheel_rate")).max())
            problem = None
            if trace.collided:
                problem = trace.failure
            elif not trace.completed:
                problem = trace.failure or "did not finish"
            elif max_rate > config.wheel_rate_cap:
                problem = f"wheel rate {max_rate:.2f} rad/s above cap {config.wheel_rate_cap}"
            if problem is None:
                break
            rejected += 1
            log.warning("expert run %d attempt %d rejected: %s", i, attempt, problem)
            if rejected > max_rejections:
                raise CorpusError(f"{rejected} rejected expert runs out of {config.num_runs} "
                                  f"exceeds {config.max_rejection_rate:.0%}; last: {problem}")
            attempt += 1
        runs.append(trace.to_dataset())
        if keep_traces:
            traces.append(trace)
        x = trace.column("x")
        stats.append({
            "run_id": i, "driver": preset.name, "attempt": attempt,
            "records": len(trace.records), "duration_s": trace.records[-1].t,
            "speed_profile": speeds.to_dict(),
            "max_wheel_rate": max_rate,
            "peak_wheel_angle": float(np.abs(trace.column("wheel_angle")).max()),
            "lane_change_peaks": lane_change_peaks(x, trace.column("wheel_angle"), course),
        })
    split_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5917]))
    order = split_rng.permutation(config.num_runs)
    train_ids = np.sort(order[:config.train_runs])
    test_ids = np.sort(order[config.train_runs:])
    train_set = set(train_ids.tolist())
    for s in stats:
        s["split"] = "train" if s["run_id"] in train_set else "test"
    manifest = {
        "seed": config.seed,
        "num_runs": config.num_runs,
        "train_runs": config.train_runs,
        "test_runs": config.num_runs - config.train_runs,
        "dt": dt,
        "rejected_attempts": rejected,
        "course": course.to_dict(),
        "presets": [asdict(p) for p in config.presets],
        "train_run_ids": train_ids.tolist(),
        "test_run_ids": test_ids.tolist(),
        "runs": stats,
    }
    train = Dataset.concat(runs[i] for i in train_ids)
    test = Dataset.concat(runs[i] for i in test_ids)
    return Corpus(train, test, manifest, traces)
