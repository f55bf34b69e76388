import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slalomnet.controller import (LoopSettings, PdGains, Pilot, lane_change_peaks,
                                  lane_change_windows, pd_torque, run_closed_loop)
from slalomnet.expert import SpeedProfile
from slalomnet.sim import HALF_PI, VehicleParams, VehicleState, build_course, step

P = VehicleParams()
G = PdGains()
DT = 1.0 / 30.0
COURSE = build_course()

angles = st.floats(-7.8, 7.8)


@settings(max_examples=500, deadline=None)
@given(a=angles, d=angles, prev=st.one_of(st.none(), st.floats(-15, 15)),
       v=st.floats(15, 60))
def test_torque_opposes_error_and_is_clamped(a, d, prev, v):
    tau = pd_torque(a, d, prev, DT, G, v)
    assert abs(tau) <= G.torque_max
    if prev is None or prev == a - d:
        # pure proportional action: sign opposite to the error
        assert tau * (a - d) <= 0.0


def test_torque_formula_and_schedule():
    g = PdGains(p=8.0, d=0.7, torque_max=1e9)
    # e = 0.1, de/dt = (0.1 - 0.04) / dt = 1.8, multiplier at 37.5 km/h is 1.3
    assert pd_torque(0.3, 0.2, 0.04, DT, g, 37.5) == pytest.approx(-1.3 * (0.8 + 0.7 * 1.8))
    assert g.multiplier(10.0) == 1.0 and g.multiplier(80.0) == 1.6
    assert pd_torque(0.3, 0.2, None, DT, g, None) == pytest.approx(-0.8)
    with pytest.raises(ValueError):
        pd_torque(0.0, 0.0, None, 0.0, g)


@pytest.mark.parametrize("bad", [dict(p=0.0), dict(d=-1.0), dict(torque_max=0.0),
                                 dict(schedule=()), dict(schedule=((30, 1.0), (20, 1.2))),
                                 dict(schedule=((30, 0.0),))])
def test_invalid_gains(bad):
    with pytest.raises(ValueError):
        PdGains(**bad)


def step_response(theta_d: float, v_kmh: float, seconds: float = 2.0):
    pilot = Pilot(None, COURSE, P, G, DT, setpoint=theta_d)
    s = VehicleState(0.0, 0.0, HALF_PI, v_kmh / 3.6)
    out = [s.wheel_angle]
    for _ in range(int(seconds / DT)):
        s = step(s, pilot.step(s, v_kmh), P, DT)
        out.append(s.wheel_angle)
    return np.array(out)


def settling_time(theta, target, band=0.02):
    outside = np.nonzero(np.abs(theta - target) > band * abs(target))[0]
    return (outside[-1] + 1) * DT if outside.size else 0.0


@pytest.mark.parametrize("v_kmh", [15.0, 30.0, 45.0, 60.0])
@pytest.mark.parametrize("theta_d", [0.5, -2.0, 4.0])
def test_step_response_settles_within_one_second(theta_d, v_kmh):
    theta = step_response(theta_d, v_kmh)
    assert settling_time(theta, theta_d) < 1.0


def test_pilot_passes_speed_command_through():
    course = build_course()
    profile = SpeedProfile((20.0, 50.0), (3.0,))
    trace = run_closed_loop(None, course, profile, P, G, LoopSettings(DT, 6.0), setpoint=0.0)
    speeds = trace.column("speed_kmh")
    assert speeds[0] == pytest.approx(20.0)
    # the car follows the command through the vehicle's speed lag only
    assert 20.0 <= speeds.min() and speeds.max() <= 50.0
    assert speeds[-1] > 45.0


def test_lane_change_windows_and_peaks():
    assert lane_change_windows(COURSE) == [(-math.inf, 40.0), (40.0, 90.0), (90.0, 140.0)]
    x = np.array([0.0, 20.0, 39.9, 40.0, 60.0, 100.0, 139.0, 160.0])
    wa = np.array([0.1, -0.8, 0.2, 0.3, 1.5, -2.0, 0.5, 9.0])
    assert lane_change_peaks(x, wa, COURSE) == [0.8, 1.5, 2.0]
    assert all(math.isnan(v) for v in lane_change_peaks([], [], COURSE))


def test_pilot_requires_model_or_setpoint():
    with pytest.raises(ValueError):
        Pilot(None, COURSE, P, G)
