"""
Scenario files: a YAML tree whose numbers may carry unit suffixes.

    preset: paper-2003
    seed: 7
    cloud: {peak_coop: 200, fwhm: 1.5 ms, sigma_r: 10 um}
    probe: {powers: [2 pW, 6.4 pW, 20 pW, 30 pW]}

Quantities are normalized to SI when the file is read. Frequencies are ordinary
frequencies in Hz (converted to rad/s only when building CavityParams /
AtomParams). Errors carry the dotted field name and the source line.
"""

import hashlib
import json
import math
import re
from decimal import Decimal
from dataclasses import dataclass, field

import yaml
from scipy.constants import atomic_mass, g as g_n

from .beams_traps import GaussianBeam, LatticeConfig
from .core_params import AtomParams, CavityParams, ParameterError, angular, preset as load_preset
from .transit_sim import CloudModel, DetectorModel


class ConfigError(ValueError):
    def __init__(self, msg, field_name=None, line=None, source="<config>"):
        where = source
        if line is not None:
            where += f":{line}"
        if field_name:
            where += f": {field_name}"
        super().__init__(f"{where}: {msg}")
        self.field_name = field_name
        self.line = line


_UNITS = {
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9},
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9, "fm": 1e-15},
    "power": {"W": 1.0, "mW": 1e-3, "uW": 1e-6, "µW": 1e-6, "nW": 1e-9, "pW": 1e-12},
    "temperature": {"K": 1.0, "mK": 1e-3, "uK": 1e-6, "µK": 1e-6},
    "velocity": {"m/s": 1.0, "mm/s": 1e-3, "cm/s": 1e-2},
    "acceleration": {"m/s^2": 1.0, "m/s2": 1.0, "g": g_n},
    "intensity": {"W/m^2": 1.0, "mW/cm^2": 10.0},
    "mass": {"kg": 1.0, "u": atomic_mass, "amu": atomic_mass},
    "dimensionless": {"": 1.0},
}

_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\s\d].*)?$")


def parse_quantity(value, kind, field_name=None, line=None, source="<config>"):
    """Number (taken as SI) or 'number unit' string -> float in SI units."""
    if isinstance(value, bool):
        raise ConfigError(f"expected a {kind}, got {value!r}", field_name, line, source)
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"expected a {kind}, got {value!r}", field_name, line, source)
    m = _QTY.match(value)
    if not m:
        raise ConfigError(f"cannot parse {value!r} as a {kind}", field_name, line, source)
    text, unit = m.group(1), (m.group(2) or "").strip()
    table = _UNITS[kind]
    if not unit:
        return float(text)
    if unit not in table:
        raise ConfigError(
            f"unit {unit!r} is not a {kind} unit (allowed: {', '.join(u for u in table if u) or 'none'})",
            field_name, line, source,
        )
    factor = table[unit]
    exp = math.log10(factor)
    if exp == round(exp):
        # decimal prefixes: scale exactly so "10 um" is the float nearest 1e-5
        return float(Decimal(text).scaleb(int(round(exp))))
    return float(text) * factor


class _Tree:
    """A loaded YAML mapping that remembers the source line of every key."""

    def __init__(self, node, path, source):
        self.node = node
        self.path = path
        self.source = source
        self.items = {}
        if node is None:
            return
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError("expected a mapping", path or None, node.start_mark.line + 1, source)
        for k, v in node.value:
            self.items[k.value] = v

    def line(self, key=None):
        node = self.items.get(key) if key is not None else self.node
        return None if node is None else node.start_mark.line + 1

    def name(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.items

    def raw(self, key, default=None):
        if key not in self.items:
            return default
        return yaml.safe_load(yaml.serialize(self.items[key]))

    def sub(self, key):
        return _Tree(self.items.get(key), self.name(key), self.source)

    def qty(self, key, kind, default=None, required=False):
        if key not in self.items:
            if required:
                raise ConfigError("missing required field", self.name(key), self.line(), self.source)
            return default
        return parse_quantity(self.raw(key), kind, self.name(key), self.line(key), self.source)

    def qty_list(self, key, kind):
        vals = self.raw(key)
        if vals is None:
            return None
        if not isinstance(vals, list):
            vals = [vals]
        return [parse_quantity(v, kind, f"{self.name(key)}[{i}]", self.line(key), self.source)
                for i, v in enumerate(vals)]

    def check_keys(self, allowed):
        for k in self.items:
            if k not in allowed:
                raise ConfigError(f"unknown field (allowed: {', '.join(sorted(allowed))})",
                                  self.name(k), self.line(k), self.source)

    def fail(self, key, msg):
        raise ConfigError(msg, self.name(key) if key else self.path or None, self.line(key), self.source)


@dataclass
class Scenario:
    atom: AtomParams
    cavity: CavityParams
    preset: str | None = None
    seed: int = 0
    beams: dict = field(default_factory=dict)  # name -> GaussianBeam
    lattice: LatticeConfig | None = None
    trap_z: list = field(default_factory=lambda: [0.0, 15e-3])
    cloud: dict = field(default_factory=dict)
    probe_powers: list = field(default_factory=list)
    probe_schedule: list | None = None  # [(t, p_in)], piecewise linear
    detector: DetectorModel = field(default_factory=DetectorModel)
    dt: float = 2e-6
    transport: dict = field(default_factory=dict)
    bistability: dict = field(default_factory=dict)
    estimate: dict = field(default_factory=dict)
    out_dir: str | None = None
    normalized: dict = field(default_factory=dict)

    @property
    def config_hash(self):
        blob = json.dumps(self.normalized, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def cloud_model(self, c1, mode_waist):
        cl = dict(self.cloud)
        if "peak_coop" in cl:
            peak = cl.pop("peak_coop")
            fwhm = cl.pop("fwhm")
            return CloudModel.for_peak(peak, c1, mode_waist, cl.pop("t_center"), fwhm,
                                       cl.pop("sigma_r"), **cl)
        fwhm = cl.pop("fwhm")
        return CloudModel(n_atoms=cl.pop("n_atoms"), t_center=cl.pop("t_center"),
                          sigma_t=fwhm / 2.354820045030949, sigma_r=cl.pop("sigma_r"), **cl)


DEFAULT_SCENARIO = """\
preset: paper-2003
seed: 0
beams:
  fort: {power: 16 mW, waist: 30 um, wavelength: 782.5 nm}
lattice:
  down: {power: 200 mW, waist: 22 um, wavelength: 850 nm}
  up: {power: 200 mW, waist: 22 um, wavelength: 850 nm}
  lifetime: 104 ms
trap_z: [0 mm, 15 mm]
cloud: {peak_coop: 200, fwhm: 1.5 ms, t_center: 0 ms, sigma_r: 10 um, mode: ensemble}
probe: {powers: [2 pW, 6.4 pW, 20 pW, 30 pW]}
detector: {bandwidth: 30 kHz, noise_floor: 0 W}
simulation: {dt: 2 us}
transport: {distance: 15 mm, v_max: 0.3 m/s, a_max: 1.5 g, accel_pass: 30 m/s^2, dt: 0.1 ms}
bistability: {coop: 200, points: 401}
estimate: {high: 0.7, low: 0.1}
"""

_TOP = {"preset", "params", "seed", "beams", "lattice", "trap_z", "cloud", "probe", "detector",
        "simulation", "transport", "bistability", "estimate", "output"}


def _params(tree, source):
    atom_t, cav_t = tree.sub("atom"), tree.sub("cavity")
    atom_t.check_keys({"gamma", "lambda", "i_sat", "mass", "lambda_d1"})
    cav_t.check_keys({"g0", "kappa", "length", "mirror_radius", "lambda", "delta_c", "mirror_transmission"})
    try:
        atom = AtomParams(
            gamma=angular(atom_t.qty("gamma", "frequency", required=True)),
            lambda_atom=atom_t.qty("lambda", "length", required=True),
            i_sat=atom_t.qty("i_sat", "intensity", required=True),
            mass=atom_t.qty("mass", "mass", required=True),
            lambda_d1=atom_t.qty("lambda_d1", "length", 794.978851e-9),
        )
    except ParameterError as e:
        raise ConfigError(str(e), "params.atom", atom_t.line(), source) from None
    try:
        cavity = CavityParams(
            g0=angular(cav_t.qty("g0", "frequency", required=True)),
            kappa=angular(cav_t.qty("kappa", "frequency", required=True)),
            length=cav_t.qty("length", "length", required=True),
            mirror_radius=cav_t.qty("mirror_radius", "length", required=True),
            lambda_cav=cav_t.qty("lambda", "length", required=True),
            delta_c=angular(cav_t.qty("delta_c", "frequency", 0.0)),
            mirror_transmission=cav_t.qty("mirror_transmission", "dimensionless"),
        )
    except ParameterError as e:
        raise ConfigError(str(e), "params.cavity", cav_t.line(), source) from None
    return atom, cavity


def _beam(tree):
    tree.check_keys({"power", "waist", "wavelength", "focus_z"})
    try:
        return GaussianBeam(
            power=tree.qty("power", "power", required=True),
            waist=tree.qty("waist", "length", required=True),
            wavelength=tree.qty("wavelength", "length", required=True),
            focus_z=tree.qty("focus_z", "length", 0.0),
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        tree.fail(None, str(e))


def _section(tree, spec):
    """Parse a flat mapping; spec maps key -> (kind, default)."""
    tree.check_keys(set(spec))
    out = {}
    for key, (kind, default) in spec.items():
        if kind == "str":
            v = tree.raw(key, default)
            if v is not None and not isinstance(v, str):
                tree.fail(key, f"expected a string, got {v!r}")
        elif kind == "int":
            v = tree.raw(key, default)
            if v is not None and (isinstance(v, bool) or not isinstance(v, int)):
                tree.fail(key, f"expected an integer, got {v!r}")
        elif kind == "bool":
            v = tree.raw(key, default)
            if not isinstance(v, bool):
                tree.fail(key, f"expected true/false, got {v!r}")
        elif kind == "list":
            v = tree.raw(key, default)
        else:
            v = tree.qty(key, kind, default)
        if v is not None:
            out[key] = v
    return out


def scenario_from_text(text, source="<config>"):
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(e, 'problem', e)}", None,
                          mark.line + 1 if mark else None, source) from None
    tree = _Tree(root, "", source)
    tree.check_keys(_TOP)

    has_preset, has_params = tree.has("preset"), tree.has("params")
    if has_preset == has_params:
        raise ConfigError("exactly one of 'preset' or 'params' must be given", "preset/params",
                          tree.line("preset") or tree.line("params"), source)
    if has_preset:
        name = tree.raw("preset")
        try:
            atom, cavity = load_preset(name)
        except ParameterError as e:
            tree.fail("preset", str(e))
    else:
        atom, cavity = _params(tree.sub("params"), source)

    seed = tree.raw("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        tree.fail("seed", f"seed must be a non-negative integer, got {seed!r}")

    sc = Scenario(atom=atom, cavity=cavity, preset=tree.raw("preset"), seed=seed)

    beams_t = tree.sub("beams")
    for name in beams_t.items:
        sc.beams[name] = _beam(beams_t.sub(name))

    if tree.has("lattice"):
        lt = tree.sub("lattice")
        lt.check_keys({"down", "up", "lifetime"})
        try:
            sc.lattice = LatticeConfig(_beam(lt.sub("down")), _beam(lt.sub("up")),
                                       lt.qty("lifetime", "time", 0.104))
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            lt.fail(None, str(e))

    if tree.has("trap_z"):
        sc.trap_z = tree.qty_list("trap_z", "length")

    if tree.has("cloud"):
        ct = tree.sub("cloud")
        cl = _section(ct, {
            "peak_coop": ("dimensionless", None), "n_atoms": ("dimensionless", None),
            "fwhm": ("time", None), "t_center": ("time", 0.0), "sigma_r": ("length", 10e-6),
            "mode": ("str", "ensemble"), "v_fall": ("velocity", None), "poisson": ("bool", True),
        })
        if ("peak_coop" in cl) == ("n_atoms" in cl):
            ct.fail(None, "give exactly one of peak_coop or n_atoms")
        if "fwhm" not in cl:
            ct.fail("fwhm", "missing required field")
        sc.cloud = cl
        try:
            from .core_params import derive_quantities
            dq = derive_quantities(atom, cavity)
            sc.cloud_model(dq.c1, dq.mode_waist)
        except ValueError as e:
            ct.fail(None, str(e))

    if tree.has("probe"):
        pt = tree.sub("probe")
        pt.check_keys({"powers", "schedule"})
        if pt.has("powers"):
            sc.probe_powers = pt.qty_list("powers", "power")
            if any(p < 0 for p in sc.probe_powers):
                pt.fail("powers", "probe powers must be >= 0")
        if pt.has("schedule"):
            rows = pt.raw("schedule")
            if not isinstance(rows, list) or not all(isinstance(r, list) and len(r) == 2 for r in rows):
                pt.fail("schedule", "expected a list of [time, power] pairs")
            sched = []
            for i, (tv, pv) in enumerate(rows):
                nm = f"{pt.name('schedule')}[{i}]"
                sched.append((parse_quantity(tv, "time", nm, pt.line("schedule"), source),
                              parse_quantity(pv, "power", nm, pt.line("schedule"), source)))
            if any(b[0] <= a[0] for a, b in zip(sched, sched[1:])):
                pt.fail("schedule", "schedule times must be strictly increasing")
            sc.probe_schedule = sched

    if tree.has("detector"):
        dt_ = tree.sub("detector")
        det = _section(dt_, {"bandwidth": ("frequency", 30e3), "noise_floor": ("power", 0.0),
                             "input_coupling": ("dimensionless", None)})
        try:
            sc.detector = DetectorModel(**det)
        except ValueError as e:
            dt_.fail(None, str(e))

    if tree.has("simulation"):
        sim = _section(tree.sub("simulation"), {"dt": ("time", 2e-6)})
        sc.dt = sim["dt"]
        if not 0 < sc.dt <= 10e-6:
            tree.sub("simulation").fail("dt", "dt must lie in (0, 10 us]")

    if tree.has("transport"):
        sc.transport = _section(tree.sub("transport"), {
            "distance": ("length", 15e-3), "v_max": ("velocity", 0.3), "a_max": ("acceleration", 1.5 * g_n),
            "accel_pass": ("acceleration", 30.0), "dt": ("time", 1e-4), "overshoot": ("length", None),
            "crossing_gap": ("time", None), "first_crossing": ("time", None),
            "wavelength": ("length", 850e-9),
        })

    if tree.has("bistability"):
        sc.bistability = _section(tree.sub("bistability"), {
            "coop": ("dimensionless", 200.0), "d": ("dimensionless", None),
            "y_max": ("dimensionless", None), "points": ("int", 401),
        })

    if tree.has("estimate"):
        sc.estimate = _section(tree.sub("estimate"), {
            "high": ("dimensionless", 0.7), "low": ("dimensionless", 0.1), "inputs": ("list", None),
            "sweep": ("str", None),
        })

    if tree.has("output"):
        sc.out_dir = _section(tree.sub("output"), {"dir": ("str", None)}).get("dir")

    sc.normalized = _normalize(sc)
    return sc


def _normalize(sc):
    """Plain-data view of everything that influences a run (hashed into headers)."""
    beam = lambda b: {"power": b.power, "waist": b.waist, "wavelength": b.wavelength, "focus_z": b.focus_z}
    return {
        "atom": sc.atom.__dict__.copy(),
        "cavity": sc.cavity.__dict__.copy(),
        "seed": sc.seed,
        "beams": {k: beam(b) for k, b in sorted(sc.beams.items())},
        "lattice": None if sc.lattice is None else {
            "down": beam(sc.lattice.beam_down), "up": beam(sc.lattice.beam_up),
            "lifetime": sc.lattice.trap_lifetime},
        "trap_z": sc.trap_z,
        "cloud": sc.cloud,
        "probe_powers": sc.probe_powers,
        "probe_schedule": sc.probe_schedule,
        "detector": sc.detector.__dict__.copy(),
        "dt": sc.dt,
        "transport": sc.transport,
        "bistability": sc.bistability,
        "estimate": {k: v for k, v in sc.estimate.items() if k != "inputs"},
    }


def load_scenario(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", None, None, str(path)) from None
    return scenario_from_text(text, str(path))


def default_scenario(name="paper-2003"):
    text = DEFAULT_SCENARIO.replace("preset: paper-2003", f"preset: {name}", 1)
    return scenario_from_text(text, f"<preset {name}>")
