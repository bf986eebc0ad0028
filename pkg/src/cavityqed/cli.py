"""Command-line entry point: ``cavityqed <subcommand> [--config F | --preset NAME] ...``."""

import argparse
import csv
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import bistability as bs
from .beams_traps import dipole_depth, lattice_depth, waist_at
from .config import ConfigError, default_scenario, load_scenario
from .core_params import derive_quantities, g0_two_level, hz, validate_consistency
from .estimator import (EstimationError, SweepDataset, detect_switches, extract_timeline, fit_cloud,
                        fit_sweep_cooperativity)
from .transit_sim import TransmissionTrace, calibration_for, simulate_transit
from .transport import (free_fall_time, plan_trapezoid, round_trip_for_crossings, sample_trajectory,
                        survival_fraction)

OUT_ENV = "CAVITYQED_OUT"


class CliError(Exception):
    pass


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9e}"
    return str(v)


class Run:
    def __init__(self, args, scenario):
        self.args = args
        self.sc = scenario
        self.out = Path(args.out or os.environ.get(OUT_ENV) or scenario.out_dir or "out")
        self.quiet = args.quiet

    def header(self, extra=()):
        return [f"cavityqed {__version__}", f"config_hash {self.sc.config_hash}",
                f"seed {self.sc.seed}", f"preset {self.sc.preset or 'explicit'}", *extra]

    def say(self, *lines):
        if not self.quiet:
            for line in lines:
                print(line)

    def write_csv(self, name, columns, rows, extra=()):
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        with open(path, "w", newline="") as fh:
            for line in self.header(extra):
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        return path

    def write_text(self, name, text):
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text("".join(f"# {line}\n" for line in self.header()) + text)
        return path


def cmd_params(run):
    sc = run.sc
    dq = derive_quantities(sc.atom, sc.cavity)
    rep = validate_consistency(sc.atom, sc.cavity, dq)
    cal = calibration_for(sc.cavity, sc.atom, sc.detector)
    rows = [(c.name, c.value, c.reference, c.ratio, c.rel_tol, "PASS" if c.passed else "FAIL") for c in rep.checks]
    rows += [
        ("fsr_hz", dq.fsr, "", "", "", ""),
        ("mode_waist_m", dq.mode_waist, "", "", "", ""),
        ("mode_volume_m3", dq.mode_volume, "", "", "", ""),
        ("g0_two_level_hz", hz(g0_two_level(sc.atom, sc.cavity)), hz(sc.cavity.g0), rep.g0_ratio, "", ""),
        ("input_coupling_eps", cal.epsilon, "", "", "", ""),
    ]
    run.write_csv("params.csv", ["name", "value", "reference", "ratio", "rel_tol", "status"], rows)
    run.say(*rep.lines(), f"g0 from mode volume / configured g0 = {rep.g0_ratio:.4f}",
            f"input coupling eps = {cal.epsilon:.4f}")
    return 0


def cmd_trap(run):
    sc = run.sc
    if not sc.beams and sc.lattice is None:
        raise CliError("trap needs a 'beams' or 'lattice' block")
    z = np.linspace(min(sc.trap_z), max(sc.trap_z), 61)
    cols, data = ["z_m"], [z]
    for name, beam in sorted(sc.beams.items()):
        cols += [f"{name}_depth_K", f"{name}_waist_m"]
        data += [dipole_depth(beam, z, sc.atom), waist_at(beam, z)]
    if sc.lattice is not None:
        cols += ["lattice_depth_K", "lattice_waist_m"]
        data += [lattice_depth(sc.lattice, z, sc.atom), waist_at(sc.lattice.beam_down, z)]
    run.write_csv("trap.csv", cols, zip(*data), extra=["depth convention: D1/D2 weighted, calibration 1.0"])
    for zz in sc.trap_z:
        parts = [f"{n} {dipole_depth(b, zz, sc.atom) * 1e6:.2f} uK" for n, b in sorted(sc.beams.items())]
        if sc.lattice is not None:
            parts.append(f"lattice {lattice_depth(sc.lattice, zz, sc.atom) * 1e6:.2f} uK")
        run.say(f"z = {zz * 1e3:6.2f} mm: " + ", ".join(parts))
    return 0


def cmd_bistability(run):
    cfg = run.sc.bistability
    coop = cfg.get("coop", 200.0)
    d = cfg.get("d", abs(run.sc.cavity.detuning_ratio))
    tp = bs.turning_points(coop, d)
    y_max = cfg.get("y_max") or (1.5 * tp[0][1] if tp else 10 * (1 + 2 * coop) ** 2)
    n = int(cfg.get("points", 401))
    curve = bs.s_curve(coop, d)
    run.write_csv("s_curve.csv", ["x", "y", "slope_sign"], curve.samples, extra=[f"C {coop}", f"d {d}"])
    ramp = np.concatenate([np.linspace(0, y_max, n), np.linspace(y_max, 0, n)[1:]])
    tr = bs.hysteresis_sweep(coop, d, ramp)
    run.write_csv("hysteresis.csv", ["y", "x", "branch"], tr.response, extra=[f"C {coop}", f"d {d}"])
    run.say(f"C* (d = {d:.4g}) = {bs.bistability_threshold(d):.4f}, C* (d = 0) = {bs.bistability_threshold(0):.4f}")
    if tp:
        run.say(f"turning points: up-switch y_a = {tp[0][1]:.6g}, down-switch y_b = {tp[1][1]:.6g}, "
                f"ratio {tr.switch_ratio:.4f}")
    else:
        run.say(f"C = {coop} is below threshold: no hysteresis")
    return 0


def cmd_transport(run):
    cfg = run.sc.transport
    dist = cfg.get("distance", 15e-3)
    v_max, a_max = cfg.get("v_max", 0.3), cfg.get("a_max", 14.709975)
    lam = cfg.get("wavelength", 850e-9)
    dt = cfg.get("dt", 1e-4)
    plan = plan_trapezoid(dist, v_max, a_max, start_z=dist)
    samples = sample_trajectory(plan, dt, lam)
    run.write_csv("transport.csv", ["t", "z", "v", "delta_hz"],
                  [(s.t, s.z, s.v, s.delta) for s in samples],
                  extra=[f"v_max {v_max}", f"a_max {a_max}", "z measured from the cavity axis, positive up"])
    t_ff = free_fall_time(dist)
    t_pass = plan_trapezoid(dist, np.inf, cfg.get("accel_pass", 30.0), stop_at_target=False).duration
    run.say(f"free fall {dist * 1e3:.1f} mm: {t_ff * 1e3:.2f} ms",
            f"trapezoid ({v_max} m/s, {a_max:.3f} m/s^2): {plan.duration * 1e3:.2f} ms",
            f"constant {cfg.get('accel_pass', 30.0)} m/s^2 pass-through: {t_pass * 1e3:.2f} ms")
    if run.sc.lattice is not None:
        run.say(f"lattice survival over the trapezoid: "
                f"{float(survival_fraction(plan.duration, run.sc.lattice.trap_lifetime)):.3f}")
    if all(cfg.get(k) is not None for k in ("overshoot", "crossing_gap", "first_crossing")):
        rt, t0 = round_trip_for_crossings(dist, v_max, a_max, cfg["overshoot"], cfg["crossing_gap"],
                                          cfg["first_crossing"])
        s = sample_trajectory(rt, dt, lam, t0=t0)
        run.write_csv("round_trip.csv", ["t", "z", "v", "delta_hz"], [(q.t, q.z, q.v, q.delta) for q in s],
                      extra=[f"launch {t0}"])
        run.say(f"round trip: launch at {t0 * 1e3:.2f} ms, duration {rt.duration * 1e3:.2f} ms")
    return 0


def _traces(run):
    sc = run.sc
    if not sc.cloud:
        raise CliError("transit needs a 'cloud' block")
    dq = derive_quantities(sc.atom, sc.cavity)
    cloud = sc.cloud_model(dq.c1, dq.mode_waist)
    if sc.probe_schedule:
        ts, ps = zip(*sc.probe_schedule)
        jobs = [("schedule", lambda t: np.interp(t, ts, ps))]
    elif sc.probe_powers:
        jobs = [(f"{p * 1e12:g}pW", p) for p in sc.probe_powers]
    else:
        raise CliError("transit needs probe powers or a probe schedule")
    out = []
    for i, (label, p) in enumerate(jobs):
        try:
            tr = simulate_transit(cloud, p, sc.cavity, sc.atom, sc.detector, dt=sc.dt,
                                  rng_seed=sc.seed + i, scenario=label)
        except ValueError as e:
            raise CliError(str(e)) from None
        out.append((label, tr))
    return out


def cmd_transit(run):
    sc = run.sc
    cal = calibration_for(sc.cavity, sc.atom, sc.detector)
    extra = [f"input coupling eps {cal.epsilon:.9e}", f"d {abs(sc.cavity.detuning_ratio):.9e}"]
    meta = {"version": __version__, "config_hash": sc.config_hash, "seed": sc.seed,
            "calibration": cal.as_dict(), "config": sc.normalized, "traces": []}
    for i, (label, tr) in enumerate(_traces(run)):
        name = f"trace_{i}_{label}.csv"
        path = run.out / name
        run.out.mkdir(parents=True, exist_ok=True)
        tr.to_csv(path, run.header(extra))
        ev = detect_switches(tr, sc.estimate.get("high", 0.7), sc.estimate.get("low", 0.1))
        meta["traces"].append({"file": name, "label": label, "down": ev.down, "up": ev.up})
        window = ev.up[0] - ev.down[0] if ev.down and ev.up else 0.0
        run.say(f"{name}: switched off for {window * 1e3:.3f} ms")
    (run.out / "transit_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1, default=str) + "\n")
    return 0


def cmd_estimate(run):
    sc = run.sc
    inputs = run.args.inputs or sc.estimate.get("inputs") or []
    sweep = run.args.sweep or sc.estimate.get("sweep")
    if not inputs and not sweep:
        raise CliError("estimate needs trace CSVs (--inputs) or a sweep CSV (--sweep)")
    for p in list(inputs) + ([sweep] if sweep else []):
        if not Path(p).is_file():
            raise CliError(f"input file not found: {p}")
    cal = calibration_for(sc.cavity, sc.atom, sc.detector)
    d = abs(sc.cavity.detuning_ratio)
    report = []
    if sweep:
        tr = TransmissionTrace.from_csv(sweep)
        coop, resid = fit_sweep_cooperativity(SweepDataset(list(zip(tr.p_in, tr.p_out)), d, cal))
        report.append(f"sweep fit: C = {coop:.6g}, residual {resid:.3e}")
    if inputs:
        traces = [TransmissionTrace.from_csv(p) for p in inputs]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            tl = extract_timeline(traces, d, cal, sc.estimate.get("high", 0.7), sc.estimate.get("low", 0.1))
        for w in caught:
            report.append(f"warning: {w.message}")
        run.write_csv("timeline.csv", ["t", "coop", "source_power", "kind"],
                      [(s.t, s.coop, s.source_power, s.kind) for s in tl.samples])
        dq = derive_quantities(sc.atom, sc.cavity)
        try:
            fit = fit_cloud(tl, dq.c1, dq.mode_volume)
            report += [
                f"C_peak = {fit.peak_coop:.6g}",
                f"t_center = {fit.t_center:.6e} s",
                f"sigma_t = {fit.sigma_t:.6e} s (FWHM {fit.fwhm * 1e3:.4f} ms)",
                f"N_peak = {fit.n_peak:.4f}",
                f"density = {fit.density * 1e-6:.4e} cm^-3",
                f"convention: {fit.convention}",
            ]
        except EstimationError as e:
            report.append(f"cloud fit skipped: {e}")
    run.write_text("fit_report.txt", "\n".join(report) + "\n")
    run.say(*report)
    return 0


def cmd_selftest(run):
    from .checks import run_all

    results = run_all()
    for r in results:
        print(r.line())
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} checks passed")
    return 0 if n_ok == len(results) else 1


COMMANDS = {
    "params": cmd_params,
    "trap": cmd_trap,
    "bistability": cmd_bistability,
    "transport": cmd_transport,
    "transit": cmd_transit,
    "estimate": cmd_estimate,
    "selftest": cmd_selftest,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", help="scenario YAML file")
    src.add_argument("--preset", help="built-in scenario (paper-2003)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out", help=f"output directory (else ${OUT_ENV}, the config, or ./out)")
    common.add_argument("--format", choices=["csv"], default="csv")
    common.add_argument("--quiet", action="store_true")

    ap = argparse.ArgumentParser(prog="cavityqed", description=__doc__)
    ap.add_argument("--version", action="version", version=f"cavityqed {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "estimate":
            p.add_argument("--inputs", nargs="*", help="trace CSV files")
            p.add_argument("--sweep", help="CSV with p_in, p_out columns in acquisition order")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.config) if args.config else default_scenario(args.preset or "paper-2003")
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be >= 0", "--seed")
            sc.seed = args.seed
            sc.normalized["seed"] = args.seed
        return COMMANDS[args.command](Run(args, sc))
    except (ConfigError, CliError, EstimationError) as e:
        print(f"cavityqed: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
