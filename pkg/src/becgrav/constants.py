"""Physical constants, species/trap parameters, and derived interaction scales.

Everything here is in SI units. These are plain immutable value objects shared
by every solver module; nothing in this file depends on a grid or a state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhysicalConstants",
    "SpeciesParams",
    "TrapConfig",
    "CouplingMatrix",
    "CONSTANTS",
    "rubidium87",
    "derive_couplings",
    "thomas_fermi_scales",
]


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA-style constants. Do not mutate at runtime."""

    hbar: float = 1.054571817e-34       # J s
    bohr_radius: float = 5.29177210903e-11  # m
    gravity_default: float = 9.81       # m/s^2

    def __post_init__(self):
        if not (self.hbar > 0 and self.bohr_radius > 0 and self.gravity_default > 0):
            raise ValueError("physical constants must be strictly positive")


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class SpeciesParams:
    """Atomic species: mass, s-wave scattering lengths, two-photon wavevector.

    Scattering lengths may be zero (ideal-gas test configurations); mass and
    k0 must be positive.
    """

    mass: float   # kg
    a11: float    # m
    a22: float    # m
    a12: float    # m
    k0: float     # 1/m, effective two-photon wavevector (2 k_L)

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.k0 <= 0:
            raise ValueError("k0 must be positive")
        for name in ("a11", "a22", "a12"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def ideal(self) -> bool:
        """True when all scattering lengths vanish (no interactions)."""
        return self.a11 == 0.0 and self.a22 == 0.0 and self.a12 == 0.0


# 87Rb mass: 86.909180531 u. Hyperfine pair |F=1,mF=0>, |F=2,mF=0>;
# scattering lengths (100.4, 95.0, 97.66) a0, k0 = 2 k_L for the 780 nm D2 line.
_RB87_MASS = 86.909180531 * 1.66053906892e-27


def rubidium87(
    ideal: bool = False,
    constants: PhysicalConstants = CONSTANTS,
) -> SpeciesParams:
    """The 87Rb parameter set used throughout; `ideal=True` zeroes interactions."""
    a0 = constants.bohr_radius
    if ideal:
        a11 = a22 = a12 = 0.0
    else:
        a11, a22, a12 = 100.4 * a0, 95.0 * a0, 97.66 * a0
    return SpeciesParams(mass=_RB87_MASS, a11=a11, a22=a22, a12=a12, k0=1.61e7)


@dataclass(frozen=True)
class TrapConfig:
    """Cylindrically-symmetric harmonic trap, frequencies in Hz."""

    f_radial: float
    f_axial: float

    def __post_init__(self):
        if self.f_radial < 0 or self.f_axial < 0:
            raise ValueError("trap frequencies must be >= 0")

    @property
    def omega_radial(self) -> float:
        return 2.0 * np.pi * self.f_radial

    @property
    def omega_axial(self) -> float:
        return 2.0 * np.pi * self.f_axial


@dataclass(frozen=True)
class CouplingMatrix:
    """Two-component contact-interaction strengths g_ij in J m^3."""

    g11: float
    g22: float
    g12: float

    @property
    def all_zero(self) -> bool:
        return self.g11 == 0.0 and self.g22 == 0.0 and self.g12 == 0.0


def derive_couplings(
    species: SpeciesParams,
    constants: PhysicalConstants = CONSTANTS,
) -> CouplingMatrix:
    """g_ij = 4 pi hbar^2 a_ij / m for each scattering channel."""
    pref = 4.0 * np.pi * constants.hbar**2 / species.mass
    return CouplingMatrix(
        g11=pref * species.a11,
        g22=pref * species.a22,
        g12=pref * species.a12,
    )


def thomas_fermi_scales(
    species: SpeciesParams,
    trap: TrapConfig,
    atom_number: float,
    constants: PhysicalConstants = CONSTANTS,
) -> dict:
    """Thomas-Fermi chemical potential and initial radial width.

    mu = (hbar*wbar/2) (15 N a11 / abar)^(2/5) with wbar the geometric-mean
    angular frequency and abar = sqrt(hbar/(m wbar)); the radial width follows
    as r_perp0 = sqrt(2 mu / (m w_perp^2)). Requires an interacting gas in a
    real trap: zero a11 or a zero trap frequency has no TF regime.
    """
    if atom_number <= 0:
        raise ValueError("atom_number must be positive")
    if trap.f_radial <= 0 or trap.f_axial <= 0:
        raise ValueError("thomas_fermi_scales needs both trap frequencies > 0")
    if species.a11 <= 0:
        raise ValueError("thomas_fermi_scales needs a11 > 0 (non-TF regime)")
    hbar, m = constants.hbar, species.mass
    w_perp = trap.omega_radial
    wbar = (w_perp**2 * trap.omega_axial) ** (1.0 / 3.0)
    abar = np.sqrt(hbar / (m * wbar))
    mu = 0.5 * hbar * wbar * (15.0 * atom_number * species.a11 / abar) ** 0.4
    r_perp0 = np.sqrt(2.0 * mu / (m * w_perp**2))
    return {"mu": mu, "r_perp0": r_perp0}
