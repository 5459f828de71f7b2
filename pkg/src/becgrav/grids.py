"""Spatial grids and spectral transforms for the split-step solvers.

Two grid types: a uniform periodic 1D grid (Fourier in z) and a
cylindrically-symmetric grid (quasi-discrete Hankel transform of order zero in
r_perp, Fourier in z). The Hankel scheme is the symmetric Bessel-J0-zero
construction of Guizar-Sicairos & Gutierrez-Vega, which is self-inverse to
~1e-9 and near-unitary; the Fourier side is exactly unitary.

Array convention: the z axis is always the last axis; the radial axis (when
present) is second-to-last. All transform kernels broadcast over any leading
batch axes, so a trajectory ensemble (n_traj, ..., n_z) evolves with the same
code as a single field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
from scipy.special import j0, j1, jn_zeros

from .fields import FieldState2, Frame, FrameError

__all__ = [
    "Grid1D",
    "CylGrid",
    "SpectralPlan",
    "AliasingError",
    "fourier_roundtrip",
    "hankel_roundtrip",
    "apply_kinetic_phase",
    "max_momentum_support",
    "assert_no_aliasing",
]


class AliasingError(ValueError):
    """Initial state needs more momentum headroom than the grid provides."""


def _is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on [z_min, z_max) with power-of-two point count."""

    n_points: int
    z_min: float
    z_max: float

    def __post_init__(self):
        if not _is_power_of_two(self.n_points):
            raise ValueError("n_points must be a power of two")
        if not self.z_max > self.z_min:
            raise ValueError("z_max must exceed z_min")

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / self.n_points

    @property
    def z(self) -> np.ndarray:
        return self.z_min + self.dz * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        return 2.0 * np.pi * scipy.fft.fftfreq(self.n_points, d=self.dz)

    @property
    def k_nyquist(self) -> float:
        return np.pi / self.dz

    @property
    def shape(self) -> tuple:
        return (self.n_points,)

    @property
    def dV(self) -> float:
        return self.dz

    # volume element per node, broadcastable against fields on this grid
    @property
    def dV_nodes(self) -> np.ndarray:
        return np.full(self.n_points, self.dz)

    @property
    def n_modes(self) -> int:
        return self.n_points

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return values.sum(axis=-1) * self.dz

    def fft(self, f: np.ndarray, workers: int = 1) -> np.ndarray:
        return scipy.fft.fft(f, axis=-1, workers=workers)

    def ifft(self, f: np.ndarray, workers: int = 1) -> np.ndarray:
        return scipy.fft.ifft(f, axis=-1, workers=workers)

    def carrier_phase(self, sign_k0: float, k0: float) -> np.ndarray:
        return np.exp(1j * sign_k0 * k0 * self.z)

    def index_of(self, z: float) -> int:
        """Index of the grid node equal to z (must lie on the grid)."""
        i = int(round((z - self.z_min) / self.dz))
        if not (0 <= i < self.n_points) or abs(self.z_min + i * self.dz - z) > 1e-9 * self.dz + 1e-15:
            raise ValueError(f"z={z} is not a node of this grid")
        return i


@dataclass(frozen=True)
class CylGrid:
    """(r_perp, z) grid: Bessel-zero radial nodes, uniform periodic z."""

    n_radial: int
    r_max: float
    axial: Grid1D
    _tables: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n_radial < 4:
            raise ValueError("n_radial must be at least 4")
        if self.r_max <= 0:
            raise ValueError("r_max must be positive")
        zeros = jn_zeros(0, self.n_radial + 1)
        alpha, s = zeros[:-1], zeros[-1]
        k_max = s / self.r_max
        j1a = np.abs(j1(alpha))
        tmat = 2.0 * j0(np.outer(alpha, alpha) / s) / (s * np.outer(j1a, j1a))
        self._tables.update(
            alpha=alpha,
            s=s,
            radial_nodes=alpha * self.r_max / s,
            k_radial=alpha / self.r_max,
            k_radial_max=k_max,
            scale_r=j1a / self.r_max,
            scale_k=j1a / k_max,
            tmat=tmat,
            # quadrature for integrals against 2 pi r dr on [0, r_max]
            weights_r=4.0 * np.pi / (k_max**2 * j1a**2),
        )

    @property
    def radial_nodes(self) -> np.ndarray:
        return self._tables["radial_nodes"]

    @property
    def k_radial(self) -> np.ndarray:
        return self._tables["k_radial"]

    @property
    def radial_weights(self) -> np.ndarray:
        return self._tables["weights_r"]

    @property
    def shape(self) -> tuple:
        return (self.n_radial, self.axial.n_points)

    @property
    def n_modes(self) -> int:
        return self.n_radial * self.axial.n_points

    @property
    def dV_nodes(self) -> np.ndarray:
        """Per-node volume element w_r * dz, shape (n_radial, 1)."""
        return self.radial_weights[:, None] * self.axial.dz

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return (values * self.dV_nodes).sum(axis=(-2, -1))

    def hankel(self, f: np.ndarray) -> np.ndarray:
        """Forward order-0 QDHT along the radial axis."""
        t = self._tables
        scaled = f / t["scale_r"][:, None]
        return t["scale_k"][:, None] * np.matmul(t["tmat"], scaled)

    def ihankel(self, f: np.ndarray) -> np.ndarray:
        t = self._tables
        scaled = f / t["scale_k"][:, None]
        return t["scale_r"][:, None] * np.matmul(t["tmat"], scaled)

    def fft_z(self, f: np.ndarray, workers: int = 1) -> np.ndarray:
        return scipy.fft.fft(f, axis=-1, workers=workers)

    def ifft_z(self, f: np.ndarray, workers: int = 1) -> np.ndarray:
        return scipy.fft.ifft(f, axis=-1, workers=workers)

    def carrier_phase(self, sign_k0: float, k0: float) -> np.ndarray:
        return np.exp(1j * sign_k0 * k0 * self.axial.z)[None, :]


def fourier_roundtrip(grid: Grid1D, f: np.ndarray) -> np.ndarray:
    """inverse(forward(f)); identity up to roundoff (unitary FFT pair)."""
    if f.shape[-1] != grid.n_points:
        raise ValueError("field length does not match grid")
    return grid.ifft(grid.fft(f))


def hankel_roundtrip(grid: CylGrid, f: np.ndarray) -> np.ndarray:
    """inverse(forward(f)) along the radial axis; near-identity (~1e-9)."""
    if f.shape[-2 if f.ndim > 1 else -1] != grid.n_radial:
        raise ValueError("field length does not match radial grid")
    if f.ndim == 1:
        f = f[:, None]
        return grid.ihankel(grid.hankel(f))[:, 0]
    return grid.ihankel(grid.hankel(f))


class SpectralPlan:
    """Cached kinetic-phase tables for one grid, mass, and carrier wavevector.

    The co-moving component-2 field is centred at k=0 by construction, so its
    kinetic factor uses (k_z + k0)^2; a lab-frame state uses k_z^2 for both
    components. Tables are built lazily per (dt, frame) and reused.
    """

    def __init__(self, grid, mass: float, k0: float, hbar: float):
        self.grid = grid
        self.mass = mass
        self.k0 = k0
        self.hbar = hbar
        self._cache = {}

    def _ksq(self, k0_offset: float):
        if isinstance(self.grid, Grid1D):
            kz = self.grid.k
            return kz**2, (kz + k0_offset) ** 2
        kz = self.grid.axial.k[None, :]
        kr2 = (self.grid.k_radial**2)[:, None]
        return kr2 + kz**2, kr2 + (kz + k0_offset) ** 2

    def phases(self, dt: float, frame: Frame):
        key = (float(dt), frame)
        if key not in self._cache:
            offset = self.k0 if frame is Frame.COMOVING else 0.0
            ksq1, ksq2 = self._ksq(offset)
            coef = -1j * self.hbar * dt / (2.0 * self.mass)
            self._cache[key] = (np.exp(coef * ksq1), np.exp(coef * ksq2))
        return self._cache[key]


def _apply_spectral(grid, comp1, comp2, phase1, phase2, workers: int = 1):
    """Multiply both components by kinetic phases in spectral space, in place."""
    if isinstance(grid, Grid1D):
        f1 = grid.fft(comp1, workers)
        f1 *= phase1
        comp1[...] = grid.ifft(f1, workers)
        f2 = grid.fft(comp2, workers)
        f2 *= phase2
        comp2[...] = grid.ifft(f2, workers)
    else:
        f1 = grid.fft_z(grid.hankel(comp1), workers)
        f1 *= phase1
        comp1[...] = grid.ihankel(grid.ifft_z(f1, workers))
        f2 = grid.fft_z(grid.hankel(comp2), workers)
        f2 *= phase2
        comp2[...] = grid.ihankel(grid.ifft_z(f2, workers))


def apply_kinetic_phase(state: FieldState2, dt: float, plan: SpectralPlan) -> FieldState2:
    """Free-particle propagation of both components for a time dt."""
    if state.grid is not plan.grid and state.grid != plan.grid:
        raise ValueError("state grid does not match plan grid")
    out = state.copy()
    phase1, phase2 = plan.phases(dt, state.frame)
    _apply_spectral(out.grid, out.component1, out.component2, phase1, phase2)
    out.time = state.time + dt
    return out


def max_momentum_support(grid, f: np.ndarray, fraction: float = 1e-6) -> float:
    """Smallest K with all but `fraction` of axial spectral weight at |k| <= K."""
    if isinstance(grid, Grid1D):
        spec = np.abs(grid.fft(f)) ** 2
        k = np.abs(grid.k)
    else:
        spec = (np.abs(grid.fft_z(f)) ** 2 * grid.radial_weights[:, None]).sum(axis=-2)
        k = np.abs(grid.axial.k)
    order = np.argsort(k, kind="stable")
    cum = np.cumsum(spec[..., order], axis=-1)
    total = cum[..., -1]
    if total == 0:
        return 0.0
    idx = int(np.searchsorted(cum, (1.0 - fraction) * total))
    idx = min(idx, len(order) - 1)
    return float(k[order][idx])


def assert_no_aliasing(grid, f: np.ndarray, fraction: float = 1e-6):
    """Reject states whose momentum support exceeds half the axial Nyquist."""
    k_nyq = grid.k_nyquist if isinstance(grid, Grid1D) else grid.axial.k_nyquist
    support = max_momentum_support(grid, f, fraction)
    if support > 0.5 * k_nyq:
        raise AliasingError(
            f"momentum support {support:.3e} 1/m exceeds half the Nyquist "
            f"wavenumber {0.5 * k_nyq:.3e} 1/m; refine dz or enlarge the box"
        )
