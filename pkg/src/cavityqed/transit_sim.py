"""
Forward model of the cavity transmission while atoms pass through the mode.

Chain per time step: cloud -> mode-weighted atom number -> cooperativity ->
quasi-static bistable steady state (branch memory kept between steps) ->
transmitted power -> detector (first-order low-pass plus additive noise).

Power normalization: Y and X are intracavity photon numbers in units of the
critical photon number m0. The probe power maps to Y through the empty,
resonant cavity photon number n = eps * P / (hbar omega kappa); eps absorbs
mode matching and detection efficiency and is pinned by the statement that
1.9 pW gives about one intracavity photon. The transmitted power is
P_out = X m0 hbar omega * T c / (2L), the photon loss rate through one mirror.
"""

import csv
import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import c as c_light, hbar
from scipy.signal import lfilter

from . import bistability as bs
from .core_params import derive_quantities, mode_waist

ENSEMBLE, DISCRETE = "ensemble", "discrete"
SINGLE = "single"

N_REF_POWER = 1.9e-12  # probe power giving one intracavity photon [W]
N_REF_PHOTONS = 1.0


@dataclass(frozen=True)
class CloudModel:
    n_atoms: float
    t_center: float
    sigma_t: float
    sigma_r: float
    mode: str = ENSEMBLE
    v_fall: float = 0.54  # vertical speed through the mode, discrete mode only [m/s]
    poisson: bool = True  # discrete mode: Poisson atom count, else rounded

    def __post_init__(self):
        if self.n_atoms < 0:
            raise ValueError("n_atoms must be >= 0")
        if not self.sigma_t > 0 or not self.sigma_r > 0:
            raise ValueError("sigma_t and sigma_r must be > 0")
        if self.mode not in (ENSEMBLE, DISCRETE):
            raise ValueError(f"mode must be {ENSEMBLE!r} or {DISCRETE!r}")

    @property
    def fwhm(self):
        return 2 * np.sqrt(2 * np.log(2)) * self.sigma_t

    @classmethod
    def for_peak(cls, coop_peak, c1, mode_waist, t_center, fwhm, sigma_r, **kw):
        """Cloud whose ensemble cooperativity peaks at ``coop_peak``."""
        eta = transverse_overlap(sigma_r, mode_waist)
        return cls(coop_peak / c1 / eta, t_center, fwhm / (2 * np.sqrt(2 * np.log(2))), sigma_r, **kw)


@dataclass
class CouplingSample:
    t: np.ndarray
    n_eff: np.ndarray
    coop: np.ndarray


@dataclass(frozen=True)
class DetectorModel:
    bandwidth: float = 30e3  # [Hz]
    noise_floor: float = 0.0  # rms [W]
    input_coupling: float | None = None  # None -> calibrated eps

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be >= 0")
        if self.input_coupling is not None and not self.input_coupling > 0:
            raise ValueError("input_coupling must be > 0")


@dataclass(frozen=True)
class Calibration:
    """Constants converting probe / transmitted power to the normalized Y / X."""

    epsilon: float
    photon_energy: float  # hbar omega [J]
    kappa: float  # [rad/s]
    m0: float
    out_rate: float  # photon loss rate through the output mirror [1/s]

    def photons_from_power(self, p_in):
        return self.epsilon * np.asarray(p_in, dtype=float) / (self.photon_energy * self.kappa)

    def y_from_power(self, p_in):
        return self.photons_from_power(p_in) / self.m0

    def power_from_y(self, y):
        return np.asarray(y) * self.m0 * self.photon_energy * self.kappa / self.epsilon

    def power_from_x(self, x):
        return np.asarray(x) * self.m0 * self.photon_energy * self.out_rate

    def x_from_power(self, p_out):
        return np.asarray(p_out) / (self.m0 * self.photon_energy * self.out_rate)

    @property
    def transfer(self):
        """Empty resonant cavity p_out / p_in; bounds the steady-state transmission."""
        return self.epsilon * self.out_rate / self.kappa

    def as_dict(self):
        return {k: float(v) for k, v in self.__dict__.items()}


def calibrate_input_coupling(cavity, atom, p_ref=N_REF_POWER, n_ref=N_REF_PHOTONS):
    """eps such that p_ref drives n_ref photons into the empty resonant cavity."""
    return n_ref * hbar * atom.omega * cavity.kappa / p_ref


def calibration_for(cavity, atom, detector=None):
    derived = derive_quantities(atom, cavity)
    eps = detector.input_coupling if detector and detector.input_coupling is not None else \
        calibrate_input_coupling(cavity, atom)
    out_rate = derived.mirror_transmission * c_light / (2 * cavity.length)
    return Calibration(
        epsilon=eps,
        photon_energy=hbar * atom.omega,
        kappa=cavity.kappa,
        m0=derived.m0,
        out_rate=out_rate,
    )


def power_to_drive(p_in, cavity, atom, detector=None):
    return calibration_for(cavity, atom, detector).y_from_power(p_in)


def drive_to_output_power(x, cavity, atom):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be >= 0")
    return calibration_for(cavity, atom).power_from_x(x)


def mode_coupling(position, cavity):
    """g(r)/g0 for the standing-wave TEM00 mode; x along the cavity axis."""
    x, y, z = (np.asarray(p, dtype=float) for p in position)
    w = mode_waist(cavity)
    return np.cos(2 * np.pi * x / cavity.lambda_cav) * np.exp(-(y**2 + z**2) / w**2)


def transverse_overlap(sigma_r, mode_waist):
    """Mode-weighted fraction of a Gaussian column: <cos^2> = 1/2 times the transverse overlap."""
    return 0.5 / np.sqrt(1 + 4 * sigma_r**2 / mode_waist**2)


def _discrete_atoms(cloud, w, lam, rng):
    stretch = np.sqrt(1 + 4 * (cloud.v_fall * cloud.sigma_t) ** 2 / w**2)
    mean = cloud.n_atoms * stretch
    n = rng.poisson(mean) if cloud.poisson else int(round(mean))
    t_arr = rng.normal(cloud.t_center, cloud.sigma_t, n)
    y = rng.normal(0.0, cloud.sigma_r, n)
    x = rng.uniform(0.0, lam / 2, n)
    return t_arr, x, y


def effective_atom_number(cloud, t, cavity, atom, rng_seed=0):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    derived = derive_quantities(atom, cavity)
    w = derived.mode_waist
    if cloud.mode == ENSEMBLE:
        G = np.exp(-((t - cloud.t_center) ** 2) / (2 * cloud.sigma_t**2))
        n_eff = cloud.n_atoms * G * transverse_overlap(cloud.sigma_r, w)
    else:
        rng = np.random.default_rng(rng_seed)
        t_arr, x, y = _discrete_atoms(cloud, w, cavity.lambda_cav, rng)
        weight = np.cos(2 * np.pi * x / cavity.lambda_cav) ** 2 * np.exp(-2 * y**2 / w**2)
        n_eff = np.zeros_like(t)
        for lo in range(0, t.size, 512):
            tt = t[lo:lo + 512]
            z = cloud.v_fall * (tt[:, None] - t_arr[None, :])
            n_eff[lo:lo + 512] = (np.exp(-2 * z**2 / w**2) * weight[None, :]).sum(axis=1)
    return CouplingSample(t=t, n_eff=n_eff, coop=n_eff * derived.c1)


@dataclass
class TransmissionTrace:
    t: np.ndarray
    p_out: np.ndarray
    branch: np.ndarray
    p_in: np.ndarray
    coop: np.ndarray = None
    n_eff: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.p_out = np.asarray(self.p_out, dtype=float)
        self.p_in = np.broadcast_to(np.asarray(self.p_in, dtype=float), self.t.shape).copy()
        self.branch = np.asarray(self.branch, dtype=object)
        if self.coop is None:
            self.coop = np.full(self.t.shape, np.nan)
        if self.n_eff is None:
            self.n_eff = np.full(self.t.shape, np.nan)
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trace times must be strictly increasing")

    @property
    def dt(self):
        return float(np.median(np.diff(self.t)))

    COLUMNS = ("t", "p_in", "p_out", "branch", "C", "n_eff")

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("# metadata: " + json.dumps(self.metadata, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for row in zip(self.t, self.p_in, self.p_out, self.branch, self.coop, self.n_eff):
                w.writerow([f"{row[0]:.9e}", f"{row[1]:.9e}", f"{row[2]:.9e}", row[3],
                            f"{row[4]:.9e}", f"{row[5]:.9e}"])

    @classmethod
    def from_csv(cls, path):
        meta = {}
        rows = []
        with open(path, newline="") as fh:
            lines = []
            for line in fh:
                if line.startswith("#"):
                    if line.startswith("# metadata: "):
                        meta = json.loads(line[len("# metadata: "):])
                    continue
                lines.append(line)
        reader = csv.DictReader(lines)
        missing = {"t", "p_in", "p_out"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for r in reader:
            rows.append(r)
        col = lambda k, default="nan": np.array([float(r.get(k) or default) for r in rows])
        return cls(
            t=col("t"), p_out=col("p_out"), p_in=col("p_in"),
            branch=np.array([r.get("branch", "") for r in rows], dtype=object),
            coop=col("C"), n_eff=col("n_eff"), metadata=meta,
        )


def _probe_schedule(p_in, t):
    if callable(p_in):
        p = np.asarray(p_in(t), dtype=float)
    else:
        p = np.broadcast_to(np.asarray(p_in, dtype=float), t.shape).astype(float)
    if np.any(p < 0):
        raise ValueError("probe power must be >= 0")
    return p


def simulate_transit(cloud, p_in, cavity, atom, detector=None, dt=2e-6, t_span=None,
                     rng_seed=0, scenario="transit", model="bistable"):
    """Quasi-static transmission of the probe while the cloud crosses the mode.

    ``p_in`` is a constant power, an array matching the time grid, or a callable
    of time. ``model="jc"`` uses the weak-drive single-atom response with the
    collective coupling g0 sqrt(n_eff) instead of the saturating bistable one.
    With ``detector=None`` the raw steady-state trace is returned.
    """
    if not 0 < dt <= 10e-6:
        raise ValueError("dt must lie in (0, 10 us]")
    if t_span is None:
        t_span = (cloud.t_center - 6 * cloud.sigma_t, cloud.t_center + 6 * cloud.sigma_t)
    n = int(np.floor((t_span[1] - t_span[0]) / dt + 1e-9)) + 1
    t = t_span[0] + dt * np.arange(n)
    cal = calibration_for(cavity, atom, detector)
    coupling = effective_atom_number(cloud, t, cavity, atom, rng_seed)
    p = _probe_schedule(p_in, t)
    y = cal.y_from_power(p)
    d = abs(cavity.detuning_ratio)
    if model == "bistable":
        x, labels = bs.follow_branches(y, coupling.coop, d)
    elif model == "jc":
        g = cavity.g0 * np.sqrt(coupling.n_eff)
        x = y * jc_transmission(g, cavity.delta_c, 0.0, cavity, atom)
        labels = np.full(n, SINGLE, dtype=object)
    else:
        raise ValueError(f"unknown model {model!r}")
    trace = TransmissionTrace(
        t=t, p_out=cal.power_from_x(x), branch=labels, p_in=p,
        coop=coupling.coop, n_eff=coupling.n_eff,
        metadata={"scenario": scenario, "model": model, "calibration": cal.as_dict(), "d": d, "seed": int(rng_seed),
                  "cloud_mode": cloud.mode, "n_convention": "mode-weighted, <cos^2> = 1/2"},
    )
    if detector is not None:
        trace = apply_detector(trace, detector, rng_seed)
    return trace


def apply_detector(trace, detector, rng_seed=0):
    """First-order low-pass at the detector bandwidth, then additive Gaussian noise."""
    dts = np.diff(trace.t)
    if dts.size and dts.max() > 1 / (10 * detector.bandwidth) * (1 + 1e-9):
        raise ValueError(
            f"trace sampled at dt={dts.max():.3g} s; the detector model needs dt <= "
            f"{1 / (10 * detector.bandwidth):.3g} s"
        )
    a = np.exp(-2 * np.pi * detector.bandwidth * trace.dt)
    p = trace.p_out
    filtered, _ = lfilter([1 - a], [1, -a], p, zi=[a * p[0]])
    if detector.noise_floor > 0:
        rng = np.random.default_rng(rng_seed)
        filtered = filtered + rng.normal(0.0, detector.noise_floor, filtered.shape)
    meta = dict(trace.metadata)
    meta["detector"] = {"bandwidth": detector.bandwidth, "noise_floor": detector.noise_floor,
                        "seed": int(rng_seed)}
    return replace(trace, p_out=filtered, metadata=meta)


def jc_transmission(g, delta_c, delta_a, cavity, atom):
    """Weak-drive transmission of one atom in the cavity, relative to the empty resonant cavity."""
    k = cavity.kappa
    h = atom.gamma / 2
    num = np.abs(k * (h + 1j * np.asarray(delta_a))) ** 2
    den = np.abs((k + 1j * np.asarray(delta_c)) * (h + 1j * np.asarray(delta_a)) + np.asarray(g) ** 2) ** 2
    out = num / den
    return out if np.ndim(out) else float(out)


def normal_mode_peaks(cavity, atom, g=None):
    """Probe detunings of the two vacuum-Rabi peaks (cavity and atom degenerate)."""
    from scipy.optimize import minimize_scalar

    g = cavity.g0 if g is None else g
    scan = np.linspace(-2 * g, 2 * g, 40001)
    T = jc_transmission(g, scan, scan, cavity, atom)
    step = scan[1] - scan[0]
    peaks = []
    for sign in (-1, 1):
        half = scan * sign > 0
        i = np.argmax(np.where(half, T, -1))
        res = minimize_scalar(lambda D: -jc_transmission(g, D, D, cavity, atom),
                              bounds=(scan[i] - step, scan[i] + step), method="bounded",
                              options={"xatol": 1e-9 * g})
        peaks.append(float(res.x))
    return tuple(peaks)


def trace_digest(trace):
    h = hashlib.sha256()
    for arr in (trace.t, trace.p_in, trace.p_out, trace.coop, trace.n_eff):
        h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    return h.hexdigest()
