"""
Physical parameters of the atom-cavity system and derived figures of merit.

Rates (g0, kappa, gamma, delta_c) are stored as angular frequencies in rad/s.
Anything printed or read from a config is an ordinary frequency in Hz.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c, hbar, epsilon_0, atomic_mass, pi

TWO_PI = 2 * pi


class ParameterError(ValueError):
    """Raised when a parameter set violates a physical invariant."""


def angular(nu):
    return TWO_PI * nu


def hz(omega):
    return omega / TWO_PI


@dataclass(frozen=True)
class AtomParams:
    gamma: float  # spontaneous emission rate [rad/s]
    lambda_atom: float  # D2 resonance [m]
    i_sat: float  # saturation intensity [W/m^2]
    mass: float  # [kg]
    lambda_d1: float = 794.978851e-9  # D1 resonance, used for the FORT fine-structure weighting [m]

    def __post_init__(self):
        for name in ("gamma", "lambda_atom", "i_sat", "mass", "lambda_d1"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"AtomParams.{name} must be > 0, got {getattr(self, name)!r}")
        if not 100e-9 < self.lambda_atom < 10e-6:
            raise ParameterError(f"AtomParams.lambda_atom={self.lambda_atom!r} outside (100 nm, 10 um)")

    @property
    def omega(self):
        return TWO_PI * c / self.lambda_atom


@dataclass(frozen=True)
class CavityParams:
    g0: float  # single-atom coupling at an antinode [rad/s]
    kappa: float  # field decay rate [rad/s]
    length: float  # mirror separation [m]
    mirror_radius: float  # [m]
    lambda_cav: float  # [m]
    delta_c: float = 0.0  # probe - cavity detuning, signed [rad/s]
    mirror_transmission: float | None = None  # per mirror; None -> pi/finesse (lossless symmetric)

    def __post_init__(self):
        if not self.g0 > 0:
            raise ParameterError(f"CavityParams.g0 must be > 0, got {self.g0!r}")
        if not self.kappa > 0:
            raise ParameterError(f"CavityParams.kappa must be > 0, got {self.kappa!r}")
        if not self.lambda_cav > 0:
            raise ParameterError(f"CavityParams.lambda_cav must be > 0, got {self.lambda_cav!r}")
        if not self.mirror_radius > 0:
            raise ParameterError(f"CavityParams.mirror_radius must be > 0, got {self.mirror_radius!r}")
        if not 0 < self.length < 2 * self.mirror_radius:
            raise ParameterError(
                f"unstable resonator: need 0 < L < 2R, got L={self.length!r} m, R={self.mirror_radius!r} m"
            )
        if self.mirror_transmission is not None and not 0 < self.mirror_transmission < 1:
            raise ParameterError(
                f"CavityParams.mirror_transmission must lie in (0, 1), got {self.mirror_transmission!r}"
            )

    @property
    def detuning_ratio(self):
        """Normalized detuning d = delta_c / kappa used by the bistability equation."""
        return self.delta_c / self.kappa


@dataclass(frozen=True)
class DerivedQuantities:
    finesse: float
    fsr: float  # [Hz]
    c1: float
    m0: float
    n0: float
    mode_waist: float  # [m]
    mode_volume: float  # [m^3]
    length_stability: float  # [m]
    mirror_transmission: float

    @property
    def linewidth(self):
        """Cavity FWHM in Hz."""
        return self.fsr / self.finesse


def rb87_atom():
    return AtomParams(
        gamma=angular(6.0e6),
        lambda_atom=780.241209e-9,
        i_sat=16.7,
        mass=86.909180520 * atomic_mass,
    )


def reference_cavity():
    return CavityParams(
        g0=angular(27e6),
        kappa=angular(2.4e6),
        length=75e-6,
        mirror_radius=0.10,
        lambda_cav=780e-9,
        delta_c=angular(4e6),
    )


PRESETS = {"paper-2003": lambda: (rb87_atom(), reference_cavity())}


def preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None


def mode_waist(cavity):
    """TEM00 waist of the symmetric two-mirror resonator, w^2 = (lambda/2pi) sqrt(L (2R - L))."""
    L, R = cavity.length, cavity.mirror_radius
    return float(np.sqrt(cavity.lambda_cav / TWO_PI * np.sqrt(L * (2 * R - L))))


def derive_quantities(atom, cavity):
    L, R, lam = cavity.length, cavity.mirror_radius, cavity.lambda_cav
    if L >= 2 * R:
        raise ParameterError(f"unstable resonator: L={L} m >= 2R={2 * R} m")

    fsr = c / (2 * L)
    finesse = pi * c / (2 * L * cavity.kappa)
    c1 = cavity.g0**2 / (cavity.kappa * atom.gamma)
    m0 = atom.gamma**2 / (8 * cavity.g0**2)
    w = mode_waist(cavity)
    T = cavity.mirror_transmission if cavity.mirror_transmission is not None else pi / finesse
    return DerivedQuantities(
        finesse=finesse,
        fsr=fsr,
        c1=c1,
        m0=m0,
        n0=1 / c1,
        mode_waist=w,
        mode_volume=float(pi / 4 * w * w * L),
        length_stability=0.1 * lam / finesse,
        mirror_transmission=T,
    )


def g0_two_level(atom, cavity, dipole=None):
    """Vacuum Rabi coupling from the mode volume, g0 = d sqrt(w / (2 hbar eps0 V)).

    With ``dipole=None`` the two-level dipole implied by ``atom.gamma`` is used.
    """
    derived = derive_quantities(atom, cavity)
    omega = atom.omega
    if dipole is None:
        dipole = np.sqrt(3 * pi * epsilon_0 * hbar * c**3 * atom.gamma / omega**3)
    return dipole * np.sqrt(omega / (2 * hbar * epsilon_0 * derived.mode_volume))


# Published values the consistency report compares against.
PUBLISHED_VALUES = {
    "c1": 51.0,
    "m0": 0.006,
    "n0": 0.02,
    "finesse": 420_000.0,
    "length_stability": 200e-15,
}

DEFAULT_TOLERANCES = {
    "c1": 0.05,
    "m0": 0.05,
    "n0": 0.05,
    "finesse": 0.05,
    "length_stability": 0.10,
}


@dataclass
class ConsistencyCheck:
    name: str
    value: float
    reference: float
    rel_tol: float

    @property
    def ratio(self):
        return self.value / self.reference

    @property
    def passed(self):
        return abs(self.ratio - 1) <= self.rel_tol


@dataclass
class ConsistencyReport:
    checks: list = field(default_factory=list)
    g0_ratio: float = float("nan")  # two-level g0 from mode volume / configured g0

    @property
    def passed(self):
        return all(ch.passed for ch in self.checks)

    def __getitem__(self, name):
        for ch in self.checks:
            if ch.name == name:
                return ch
        raise KeyError(name)

    def lines(self):
        out = []
        for ch in self.checks:
            mark = "PASS" if ch.passed else "FAIL"
            out.append(
                f"{ch.name:<18} {ch.value:>12.5g}  ref {ch.reference:>10.4g}  "
                f"ratio {ch.ratio:7.4f}  tol {ch.rel_tol:.0%}  {mark}"
            )
        return out


def validate_consistency(atom, cavity, derived, tolerances=None, references=None):
    tolerances = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    references = PUBLISHED_VALUES if references is None else references
    report = ConsistencyReport(g0_ratio=float(g0_two_level(atom, cavity) / cavity.g0))
    for name, ref in references.items():
        report.checks.append(
            ConsistencyCheck(name, float(getattr(derived, name)), ref, tolerances.get(name, 0.05))
        )
    return report
