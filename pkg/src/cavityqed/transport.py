"""
Atom delivery kinematics: free fall and piecewise-constant-acceleration lattice
motion plans.

z is measured from the cavity axis, positive toward the MOT, so a downward
delivery has negative velocity.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import g as g_n

from .beams_traps import detuning_for_velocity


@dataclass
class MotionPlan:
    segments: list = field(default_factory=list)  # (duration [s], acceleration [m/s^2])
    start_z: float = 0.0
    v_max: float = np.inf
    a_max: float = np.inf
    start_v: float = 0.0

    def __post_init__(self):
        for dur, acc in self.segments:
            if dur < 0:
                raise ValueError("segment durations must be >= 0")
            if abs(acc) > self.a_max * (1 + 1e-12):
                raise ValueError(f"segment acceleration {acc} exceeds a_max={self.a_max}")

    @property
    def duration(self):
        return float(sum(dur for dur, _ in self.segments))

    def knots(self):
        """Times, positions and velocities at the segment boundaries."""
        t, z, v = [0.0], [self.start_z], [self.start_v]
        for dur, acc in self.segments:
            z.append(z[-1] + v[-1] * dur + 0.5 * acc * dur * dur)
            v.append(v[-1] + acc * dur)
            t.append(t[-1] + dur)
        return np.array(t), np.array(z), np.array(v)

    def evaluate(self, t):
        """Exact (z, v, a) at times t; the final velocity persists after the plan ends."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tk, zk, vk = self.knots()
        acc = np.array([a for _, a in self.segments] + [0.0])
        k = np.clip(np.searchsorted(tk, t, side="right") - 1, 0, len(tk) - 1)
        tau = np.maximum(t - tk[k], 0.0)
        a = acc[k]
        z = zk[k] + vk[k] * tau + 0.5 * a * tau**2
        v = vk[k] + a * tau
        return z, v, a

    @property
    def end_z(self):
        return float(self.knots()[1][-1])

    @property
    def end_v(self):
        return float(self.knots()[2][-1])

    def mirrored(self):
        """Reverse every acceleration; used for the return leg of a round trip."""
        return [(dur, -acc) for dur, acc in self.segments]


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    z: float
    v: float
    delta: float  # lattice difference frequency 2 v / lambda [Hz]


def free_fall_time(drop, g=g_n):
    if drop < 0:
        raise ValueError("drop must be >= 0")
    return float(np.sqrt(2 * drop / g))


def plan_trapezoid(distance, v_max, a_max, hold_at_target=0.0, start_z=0.0, direction=-1,
                   stop_at_target=True):
    """Symmetric accelerate / cruise / decelerate plan covering ``distance``.

    The profile is triangular when a_max * distance < v_max**2. With
    ``stop_at_target=False`` the plan only accelerates (then cruises) and passes
    the target at speed.
    """
    if distance < 0 or not v_max > 0 or not a_max > 0:
        raise ValueError("need distance >= 0 and v_max, a_max > 0")
    sgn = 1.0 if direction > 0 else -1.0
    segs = []
    if distance > 0:
        if stop_at_target:
            if a_max * distance >= v_max**2:
                t_acc = v_max / a_max
                t_cruise = (distance - v_max**2 / a_max) / v_max
                segs = [(t_acc, sgn * a_max), (t_cruise, 0.0), (t_acc, -sgn * a_max)]
            else:
                t_acc = np.sqrt(distance / a_max)
                segs = [(t_acc, sgn * a_max), (t_acc, -sgn * a_max)]
        else:
            d_acc = v_max**2 / (2 * a_max)
            if distance <= d_acc:
                segs = [(np.sqrt(2 * distance / a_max), sgn * a_max)]
            else:
                segs = [(v_max / a_max, sgn * a_max), ((distance - d_acc) / v_max, 0.0)]
    if hold_at_target > 0:
        segs.append((hold_at_target, 0.0))
    segs = [(float(dur), float(acc)) for dur, acc in segs if dur > 0]
    return MotionPlan(segs, start_z=start_z, v_max=v_max, a_max=a_max)


def round_trip_plan(distance, v_max, a_max, turnaround_hold=0.0, start_z=0.0, direction=-1):
    down = plan_trapezoid(distance, v_max, a_max, hold_at_target=turnaround_hold,
                          start_z=start_z, direction=direction)
    up = plan_trapezoid(distance, v_max, a_max, start_z=start_z, direction=direction)
    segs = down.segments + up.mirrored()
    return MotionPlan(segs, start_z=start_z, v_max=v_max, a_max=a_max)


def cavity_crossings(plan, z_cavity=0.0):
    """Times at which the plan passes through z_cavity (exact per-segment roots)."""
    tk, zk, vk = plan.knots()
    out = []
    for i, (dur, acc) in enumerate(plan.segments):
        # z_k + v_k tau + acc tau^2 / 2 = z_cavity on [0, dur]
        coeffs = [0.5 * acc, vk[i], zk[i] - z_cavity]
        roots = np.roots(coeffs) if acc != 0 else (
            [] if vk[i] == 0 else [-(zk[i] - z_cavity) / vk[i]])
        for r in np.atleast_1d(roots):
            if np.isreal(r) and -1e-15 <= np.real(r) <= dur + 1e-15:
                out.append(float(tk[i] + np.real(r)))
    out = sorted(out)
    return [t for i, t in enumerate(out) if i == 0 or t - out[i - 1] > 1e-12]


def round_trip_for_crossings(mot_height, v_max, a_max, overshoot, crossing_gap, first_crossing):
    """Round trip from the MOT whose two cavity crossings are ``crossing_gap`` apart.

    The turnaround hold is solved for; the launch time places the first crossing
    at ``first_crossing``. Returns (plan, launch_time).
    """
    base = round_trip_plan(mot_height + overshoot, v_max, a_max, 0.0, start_z=mot_height)
    t0 = cavity_crossings(base)
    hold = crossing_gap - (t0[1] - t0[0])
    if hold < 0:
        raise ValueError(
            f"crossing gap {crossing_gap} s is shorter than the zero-hold gap {t0[1] - t0[0]:.6g} s; "
            "reduce the overshoot"
        )
    plan = round_trip_plan(mot_height + overshoot, v_max, a_max, hold, start_z=mot_height)
    return plan, first_crossing - cavity_crossings(plan)[0]


def sample_trajectory(plan, dt, wavelength=850e-9, t0=0.0, t_end=None):
    """Sample a plan every dt with closed-form kinematics; times are offset by t0."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    t_end = plan.duration if t_end is None else t_end
    n = int(np.floor(t_end / dt + 1e-9)) + 1
    t = np.arange(n) * dt
    z, v, _ = plan.evaluate(t)
    delta = detuning_for_velocity(v, wavelength)
    return [TrajectorySample(float(a + t0), float(b), float(c), float(e))
            for a, b, c, e in zip(t, z, v, delta)]


def survival_fraction(t, lifetime):
    if np.any(np.asarray(t) < 0) or not lifetime > 0:
        raise ValueError("need t >= 0 and lifetime > 0")
    return np.exp(-np.asarray(t, dtype=float) / lifetime)
