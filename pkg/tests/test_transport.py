import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.constants import g as g_n

from cavityqed.transport import (MotionPlan, cavity_crossings, free_fall_time, plan_trapezoid,
                                 round_trip_for_crossings, round_trip_plan, sample_trajectory,
                                 survival_fraction)

A_MAX = 1.5 * g_n


def integrate(plan, dt=1e-6):
    """Oracle: velocity-Verlet stepping through the piecewise-constant acceleration."""
    z, v, t = plan.start_z, plan.start_v, 0.0
    for dur, acc in plan.segments:
        n = max(int(round(dur / dt)), 1)
        h = dur / n
        for _ in range(n):
            z += v * h + 0.5 * acc * h * h
            v += acc * h
        t += dur
    return t, z, v


def test_free_fall():
    assert free_fall_time(0.015) * 1e3 == pytest.approx(55.31, abs=0.01)
    with pytest.raises(ValueError):
        free_fall_time(-1.0)


def test_trapezoid_timing():
    plan = plan_trapezoid(0.015, 0.3, A_MAX)
    # 2 v/a + (D - v^2/a)/v
    expected = 2 * 0.3 / A_MAX + (0.015 - 0.09 / A_MAX) / 0.3
    assert plan.duration == pytest.approx(expected, rel=1e-14)
    assert plan.duration * 1e3 == pytest.approx(70.39, abs=0.01)
    assert plan.segments[1][0] * 0.3 * 1e3 == pytest.approx(8.88, abs=0.01)


def test_triangular_and_pass_through():
    tri = plan_trapezoid(0.015, 10.0, 30.0)
    assert len(tri.segments) == 2
    assert tri.duration * 1e3 == pytest.approx(2 * np.sqrt(0.015 / 30.0) * 1e3, rel=1e-12)
    assert tri.duration * 1e3 == pytest.approx(44.72, abs=0.01)
    pas = plan_trapezoid(0.015, np.inf, 30.0, stop_at_target=False)
    assert pas.duration * 1e3 == pytest.approx(31.62, abs=0.01)
    assert pas.end_v == pytest.approx(-np.sqrt(2 * 30.0 * 0.015))


@given(st.floats(1e-4, 0.05), st.floats(0.01, 2.0), st.floats(0.5, 50.0), st.booleans())
def test_plans_respect_limits_and_distance(dist, v_max, a_max, stop):
    plan = plan_trapezoid(dist, v_max, a_max, start_z=dist, stop_at_target=stop)
    _, z, v = plan.knots()
    assert np.max(np.abs(v)) <= v_max * (1 + 1e-12)
    assert max(abs(a) for _, a in plan.segments) <= a_max
    assert z[-1] == pytest.approx(0.0, abs=1e-12)
    if stop:
        assert v[-1] == pytest.approx(0.0, abs=1e-12)


def test_closed_form_matches_integrator():
    plan = round_trip_plan(0.0155, 0.3, A_MAX, turnaround_hold=3e-3, start_z=0.015)
    t, z, v = integrate(plan)
    assert t == pytest.approx(plan.duration)
    assert z == pytest.approx(plan.end_z, abs=1e-9)
    assert v == pytest.approx(plan.end_v, abs=1e-9)


@given(st.floats(1e-3, 0.03), st.floats(0.05, 1.0), st.floats(1.0, 40.0), st.floats(0, 0.02))
def test_round_trip_returns_home(dist, v_max, a_max, hold):
    rt = round_trip_plan(dist, v_max, a_max, turnaround_hold=hold, start_z=dist)
    assert abs(rt.end_z - rt.start_z) < 1e-12
    assert abs(rt.end_v) < 1e-12


def test_round_trip_crossings():
    plan, launch = round_trip_for_crossings(0.015, 0.3, A_MAX, 0.5e-3, 0.020, 0.120)
    cross = [launch + t for t in cavity_crossings(plan)]
    assert cross == pytest.approx([0.120, 0.140], abs=1e-12)
    assert launch * 1e3 == pytest.approx(56.18, abs=0.01)
    hold = [dur for dur, acc in plan.segments if acc == 0.0 and dur < 0.01]
    assert hold[0] * 1e3 == pytest.approx(3.51, abs=0.01)
    with pytest.raises(ValueError, match="overshoot"):
        round_trip_for_crossings(0.015, 0.3, A_MAX, 5e-3, 0.001, 0.1)


def test_evaluate_continuity():
    plan = plan_trapezoid(0.015, 0.3, A_MAX, start_z=0.015)
    tk, zk, vk = plan.knots()
    for t, z, v in zip(tk, zk, vk):
        ze, ve, _ = plan.evaluate([t])
        assert ze[0] == pytest.approx(z, abs=1e-15) and ve[0] == pytest.approx(v, abs=1e-15)


def test_sample_trajectory_detuning():
    plan = plan_trapezoid(0.015, 0.3, A_MAX, start_z=0.015)
    s = sample_trajectory(plan, 1e-3, 850e-9, t0=0.1)
    assert s[0].t == 0.1 and s[0].z == 0.015
    mid = s[len(s) // 2]
    # moving down at 0.3 m/s: delta = 2 v / lambda
    assert mid.delta == pytest.approx(2 * -0.3 / 850e-9)
    with pytest.raises(ValueError):
        sample_trajectory(plan, 0.0)


def test_survival():
    assert survival_fraction(0.104, 0.104) == pytest.approx(np.exp(-1))
    with pytest.raises(ValueError):
        survival_fraction(-1.0, 0.1)


def test_plan_validation():
    with pytest.raises(ValueError):
        MotionPlan([(1.0, 20.0)], a_max=10.0)
    with pytest.raises(ValueError):
        MotionPlan([(-1.0, 0.0)])
    with pytest.raises(ValueError):
        plan_trapezoid(0.01, 0.0, 1.0)
