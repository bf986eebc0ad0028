"""Gaussian beams, far-off-resonance dipole traps and the moving 1-D lattice."""

from dataclasses import dataclass

import numpy as np
from scipy.constants import c, hbar, k as k_B, pi


@dataclass(frozen=True)
class GaussianBeam:
    power: float  # [W]
    waist: float  # 1/e^2 intensity radius at focus [m]
    wavelength: float  # [m]
    focus_z: float = 0.0  # [m], z axis points from the cavity toward the MOT

    def __post_init__(self):
        if self.power < 0:
            raise ValueError(f"beam power must be >= 0, got {self.power!r}")
        if not self.waist > 0 or not self.wavelength > 0:
            raise ValueError("beam waist and wavelength must be > 0")


@dataclass(frozen=True)
class LatticeConfig:
    beam_down: GaussianBeam
    beam_up: GaussianBeam
    trap_lifetime: float = 0.104  # 1/e [s]

    def __post_init__(self):
        if self.beam_down.wavelength != self.beam_up.wavelength:
            raise ValueError("lattice beams must share a wavelength")
        if not self.trap_lifetime > 0:
            raise ValueError("trap_lifetime must be > 0")


@dataclass(frozen=True)
class TrapPoint:
    z: float  # [m]
    depth: float  # U/k_B [K]
    radial_waist: float  # [m]

    @property
    def depth_uK(self):
        return self.depth * 1e6


def rayleigh_range(beam):
    return pi * beam.waist**2 / beam.wavelength


def waist_at(beam, z):
    zeta = (np.asarray(z, dtype=float) - beam.focus_z) / rayleigh_range(beam)
    return beam.waist * np.sqrt(1 + zeta**2)


def peak_intensity(beam, z):
    w = waist_at(beam, z)
    return 2 * beam.power / (pi * w**2)


def effective_detuning(wavelength, atom, d1_d2_weighting=True):
    """Angular detuning omega_L - omega_0 entering the two-level light shift.

    With the fine-structure weighting the D2 and D1 lines contribute 2/3 and 1/3
    of the ground-state light shift, 1/Delta_eff = (2/3)/Delta_D2 + (1/3)/Delta_D1.
    """
    omega_l = 2 * pi * c / wavelength
    delta_d2 = omega_l - 2 * pi * c / atom.lambda_atom
    if not d1_d2_weighting:
        return delta_d2
    delta_d1 = omega_l - 2 * pi * c / atom.lambda_d1
    return 1.0 / ((2 / 3) / delta_d2 + (1 / 3) / delta_d1)


def dipole_depth(beam, z, atom, d1_d2_weighting=True, calibration=1.0):
    """Peak trap depth U/k_B [K] of a single travelling-wave beam at axial position z.

    U = hbar Gamma^2 / (8 Delta_eff) * I / I_sat with I = 2P / (pi w(z)^2);
    ``calibration`` rescales the absolute depth and leaves all position ratios alone.
    """
    delta = effective_detuning(beam.wavelength, atom, d1_d2_weighting)
    if delta > 0:
        raise ValueError(
            f"trap light at {beam.wavelength * 1e9:.2f} nm is blue-detuned overall; the guide would repel"
        )
    s = peak_intensity(beam, z) / atom.i_sat
    U = hbar * atom.gamma**2 / (8 * delta) * s
    return -calibration * U / k_B


def trap_point(beam, z, atom, **kw):
    return TrapPoint(z=float(z), depth=float(dipole_depth(beam, z, atom, **kw)),
                     radial_waist=float(waist_at(beam, z)))


def lattice_depth(lattice, z, atom, d1_d2_weighting=True, calibration=1.0):
    """Antinode depth of the standing wave, (sqrt(U1) + sqrt(U2))^2."""
    u1 = dipole_depth(lattice.beam_down, z, atom, d1_d2_weighting, calibration)
    u2 = dipole_depth(lattice.beam_up, z, atom, d1_d2_weighting, calibration)
    return (np.sqrt(u1) + np.sqrt(u2)) ** 2


def walking_wave_velocity(delta, wavelength):
    """Lattice velocity v = lambda * delta / 2 for a beam difference frequency delta [Hz]."""
    return wavelength * delta / 2


def detuning_for_velocity(v, wavelength):
    return 2 * v / wavelength
