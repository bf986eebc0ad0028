"""Numerical acceptance checks replayed by ``cavityqed selftest``."""

import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.constants import g as g_n
from scipy.optimize import brentq

from . import bistability as bs
from .beams_traps import GaussianBeam, LatticeConfig, dipole_depth, lattice_depth, waist_at
from .core_params import derive_quantities, preset, validate_consistency
from .estimator import extract_timeline, fit_cloud
from .transit_sim import (CloudModel, DetectorModel, calibration_for, jc_transmission,
                          normal_mode_peaks, simulate_transit)
from .transport import free_fall_time, plan_trapezoid, round_trip_plan

TRANSIT_POWERS = (2e-12, 6.4e-12, 20e-12, 30e-12)
TIMELINE_POWERS = (240e-12, 758e-12, 2400e-12, 7580e-12, 31214e-12)
CLOUD_FWHM = 1.5e-3
CLOUD_SIGMA_R = 10e-6


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:>2}. {self.name}: {self.detail}"


def _setup():
    atom, cavity = preset("paper-2003")
    return atom, cavity, derive_quantities(atom, cavity)


def check_derived_constants():
    atom, cavity, dq = _setup()
    rep = validate_consistency(atom, cavity, dq)
    detail = ", ".join(f"{c.name}={c.value:.4g} ({c.ratio:.3f}x)" for c in rep.checks)
    return CheckResult(1, "derived constants", rep.passed, detail)


def check_beam_divergence():
    w1 = waist_at(GaussianBeam(16e-3, 30e-6, 782.5e-9), 15e-3)
    w2 = waist_at(GaussianBeam(0.2, 22e-6, 850e-9), 15e-3)
    ok = 126e-6 <= w1 <= 132e-6 and 183e-6 <= w2 <= 189e-6
    return CheckResult(2, "beam divergence", ok, f"w(15 mm) = {w1 * 1e6:.1f} um, {w2 * 1e6:.1f} um")


def check_trap_depths():
    atom, _, _ = _setup()
    fort = GaussianBeam(16e-3, 30e-6, 782.5e-9)
    beam = GaussianBeam(0.2, 22e-6, 850e-9)
    lat = LatticeConfig(beam, beam)
    f0, f1 = dipole_depth(fort, 0.0, atom), dipole_depth(fort, 15e-3, atom)
    l0, l1 = lattice_depth(lat, 0.0, atom), lattice_depth(lat, 15e-3, atom)
    ratios_ok = abs((f0 / f1) / (72 / 4) - 1) <= 0.10 and abs((l0 / l1) / (476 / 7) - 1) <= 0.10
    pairs = [(f0, 72e-6), (f1, 4e-6), (l0, 476e-6), (l1, 7e-6)]
    abs_ok = all(0.5 <= v / ref <= 2.0 for v, ref in pairs)
    detail = (f"FORT {f0 * 1e6:.1f}->{f1 * 1e6:.2f} uK (ratio {f0 / f1:.2f}), "
              f"lattice {l0 * 1e6:.1f}->{l1 * 1e6:.2f} uK (ratio {l0 / l1:.2f}), calibration 1.0")
    return CheckResult(3, "trap depth ratios", ratios_ok and abs_ok, detail)


def _monotone_on_grid(coop, d, n):
    x = np.concatenate([[0.0], np.logspace(-6, np.log10(1e4 * (1 + coop)), n - 1)])
    return bool(np.all(np.diff(bs.input_for_output(x, coop, d)) > 0))


def check_threshold():
    c_star = bs.bistability_threshold(0.0)
    in_band = 13.0 <= c_star <= 17.0
    single = True
    for coop in (0.0, 1.0, 5.0, 0.5 * c_star, 0.99 * c_star):
        single &= _monotone_on_grid(coop, 0.0, 100_000)
        for y in np.logspace(-3, 6, 60):
            single &= len(bs.solve_branches(y, coop, 0.0)) == 1
    c_det = bs.bistability_threshold(4 / 2.4)
    detail = f"C*(d=0) = {c_star:.3f} (band [13, 17]); C*(d=4/2.4) = {c_det:.3f}; single root below C*: {single}"
    return CheckResult(4, "bistability threshold", in_band and single, detail)


def check_hysteresis():
    d = 4 / 2.4
    tp = bs.turning_points(200.0, d)
    (_, ya), (_, yb) = tp
    y = np.concatenate([np.linspace(0, 1.5 * ya, 601), np.linspace(1.5 * ya, 0, 601)[1:]])
    tr = bs.hysteresis_sweep(200.0, d, y)
    ratio = tr.switch_ratio
    k = int(np.argmax(y))
    up = {yy: xx for yy, xx, _ in tr.response[: k + 1]}
    down = {yy: xx for yy, xx, _ in tr.response[k:]}
    between = [yy for yy in up if yb < yy < ya and yy in down]
    order_ok = all(up[yy] <= down[yy] for yy in between) and len(between) > 0
    ok = 7.0 <= ratio <= 13.0 and order_ok
    return CheckResult(5, "hysteresis switch ratio", ok,
                       f"y_up/y_down = {ratio:.3f} (band [7, 13]); up <= down between switches: {order_ok}")


def grid_scan_roots(y, coop, d, n=20001):
    """Oracle: sign changes of Y(X) - y on a dense log grid, refined by brentq."""
    lo = y / ((1 + 2 * coop) ** 2 + d * d) * 0.5
    hi = y / (1 + d * d) * 2.0
    z = np.linspace(np.log(lo), np.log(hi), n)
    f = bs.input_for_output(np.exp(z), coop, d) - y
    roots = []
    for i in np.nonzero(np.sign(f[:-1]) != np.sign(f[1:]))[0]:
        g = lambda s: bs.input_for_output(np.exp(s), coop, d) - y
        roots.append(float(np.exp(brentq(g, z[i], z[i + 1], xtol=1e-15, rtol=1e-15))))
    return roots


def check_oracle_equivalence(n_cases=200, seed=2003):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_cases):
        coop = rng.uniform(0, 1e4)
        d = rng.uniform(0, 5)
        tp = bs.turning_points(coop, d)
        if tp is not None and rng.random() < 0.5:
            (_, ya), (_, yb) = tp
            y = np.exp(rng.uniform(np.log(yb), np.log(ya)))
        else:
            y = np.exp(rng.uniform(np.log(1e-3), np.log(1e3 * (1 + 2 * coop) ** 2)))
        got = [p.x for p in bs.solve_branches(y, coop, d)]
        ref = grid_scan_roots(y, coop, d)
        if len(got) != len(ref) or any(abs(a / b - 1) > 1e-6 for a, b in zip(got, ref)):
            bad += 1
    return CheckResult(6, "branch solver vs grid oracle", bad == 0, f"{n_cases - bad}/{n_cases} cases agree")


def check_weak_field():
    atom, cavity, dq = _setup()
    jc = jc_transmission(cavity.g0, 0.0, 0.0, cavity, atom)
    closed = (1 + 2 * dq.c1) ** -2
    y = 1e-9
    x, _ = bs.follow_branches(np.array([y]), dq.c1, 0.0)
    weak = x[0] / y
    peaks = normal_mode_peaks(cavity, atom)
    peak_ok = all(abs(abs(p) / cavity.g0 - 1) <= 0.01 for p in peaks)
    ok = abs(jc / closed - 1) <= 1e-4 and abs(weak / jc - 1) <= 1e-4 and peak_ok
    return CheckResult(7, "weak-field consistency", ok,
                       f"JC = {jc:.5e}, (1+2C1)^-2 = {closed:.5e}, N=1 bistability = {weak:.5e}, "
                       f"peaks at {peaks[0] / cavity.g0:+.4f}, {peaks[1] / cavity.g0:+.4f} g0")


def switched_off_duration(trace, low=0.1):
    base = np.median(trace.p_out[:50])
    return float(np.count_nonzero(trace.p_out < low * base) * trace.dt)


def check_transit_phenomenology():
    atom, cavity, dq = _setup()
    cloud = CloudModel.for_peak(200, dq.c1, dq.mode_waist, 0.0, CLOUD_FWHM, CLOUD_SIGMA_R)
    det = DetectorModel()
    durs = [switched_off_duration(simulate_transit(cloud, p, cavity, atom, det)) for p in TRANSIT_POWERS]
    decreasing = all(b < a for a, b in zip(durs, durs[1:])) and durs[-1] > 0

    # static cloud at C = 200 under a triangular probe ramp
    d = abs(cavity.detuning_ratio)
    static = CloudModel.for_peak(200, dq.c1, dq.mode_waist, 0.0, 1e4, CLOUD_SIGMA_R)
    cal = calibration_for(cavity, atom)
    p_top = float(cal.power_from_y(1.5 * bs.turning_points(200.0, d)[0][1]))
    tri = p_top * np.concatenate([np.linspace(0, 1, 501), np.linspace(1, 0, 501)[1:]])
    tr = simulate_transit(static, tri, cavity, atom, None, t_span=(-1e-3, 1e-3))
    y = cal.y_from_power(tr.p_in)
    x = cal.x_from_power(tr.p_out)
    pos = y > 0
    resid = np.max(np.abs(bs.input_for_output(x[pos], tr.coop[pos], d) / y[pos] - 1))
    loop = bs.hysteresis_sweep(200.0, d, y)
    xl = np.array([r[1] for r in loop.response])
    loop_err = np.max(np.abs(xl[pos] / x[pos] - 1))
    ok = decreasing and resid <= 1e-6 and loop_err <= 1e-6
    return CheckResult(8, "transit phenomenology", ok,
                       "off windows " + ", ".join(f"{v * 1e3:.3f}" for v in durs)
                       + f" ms; S-curve residual {resid:.1e}, loop mismatch {loop_err:.1e}")


def check_estimator_round_trip():
    atom, cavity, dq = _setup()
    cloud = CloudModel.for_peak(5400, dq.c1, dq.mode_waist, 0.0, CLOUD_FWHM, CLOUD_SIGMA_R)
    det = DetectorModel()
    traces = [simulate_transit(cloud, p, cavity, atom, det) for p in TIMELINE_POWERS]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tl = extract_timeline(traces, abs(cavity.detuning_ratio), calibration_for(cavity, atom))
    fit = fit_cloud(tl, dq.c1, dq.mode_volume)
    ok = (abs(fit.peak_coop / 5400 - 1) <= 0.05 and 100 <= fit.n_peak <= 112
          and abs(fit.fwhm / CLOUD_FWHM - 1) <= 0.10)
    return CheckResult(9, "estimator round trip", ok,
                       f"C_peak = {fit.peak_coop:.1f}, N_peak = {fit.n_peak:.1f}, "
                       f"FWHM = {fit.fwhm * 1e3:.3f} ms from {len(tl.samples)} samples")


def check_transport():
    t_ff = free_fall_time(15e-3)
    t_pass = plan_trapezoid(15e-3, np.inf, 30.0, stop_at_target=False).duration
    plan = plan_trapezoid(15e-3, 0.30, 1.5 * g_n)
    _, _, v_knots = plan.knots()
    limits_ok = (np.max(np.abs(v_knots)) <= 0.30 and max(abs(a) for _, a in plan.segments) <= 1.5 * g_n)
    rt = round_trip_plan(15e-3, 0.30, 1.5 * g_n, turnaround_hold=5e-3, start_z=15e-3)
    net = abs(rt.end_z - rt.start_z)
    ok = (abs(t_ff - 55e-3) <= 1e-3 and abs(t_pass / 34e-3 - 1) <= 0.15 and limits_ok and net < 1e-12)
    return CheckResult(10, "transport timing", ok,
                       f"free fall {t_ff * 1e3:.2f} ms, 30 m/s^2 pass {t_pass * 1e3:.2f} ms, "
                       f"limits respected: {limits_ok}, round-trip drift {net:.1e} m")


def check_determinism():
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        blobs = []
        for run in ("a", "b"):
            out = Path(tmp) / run
            main(["transit", "--preset", "paper-2003", "--seed", "11", "--out", str(out), "--quiet"])
            blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = blobs[0] == blobs[1] and len(blobs[0]) > 0
    return CheckResult(11, "determinism", same, f"{len(blobs[0])} files, identical: {same}")


ALL_CHECKS = (
    check_derived_constants,
    check_beam_divergence,
    check_trap_depths,
    check_threshold,
    check_hysteresis,
    check_oracle_equivalence,
    check_weak_field,
    check_transit_phenomenology,
    check_estimator_round_trip,
    check_transport,
    check_determinism,
)


def run_all():
    return [chk() for chk in ALL_CHECKS]
