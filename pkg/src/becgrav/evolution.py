"""Strang split-step propagation of the two-component fields.

One kernel serves the mean-field GPE and the truncated-Wigner trajectories:
the equations differ only in the symmetric-ordering correction terms inside
the nonlinearity (-g/dV on the self term, -g/(2 dV) on the cross term per
grid node). Every factor applied is a pure phase, so the per-component norm
is conserved to roundoff regardless of step size.

Couplings may be constant (3D / cylindrical, J m^3) or driven by the radial
scaling solution (effective 1D, J m), in which case each nonlinear substep
evaluates them at its midpoint time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import CONSTANTS, CouplingMatrix
from .fields import FieldState2, Frame
from .grids import CylGrid, Grid1D, SpectralPlan, _apply_spectral

__all__ = [
    "SolverError",
    "ConstantCouplings",
    "ScalingCouplings",
    "SplitStepEvolver",
]

_NAN_CHECK_STRIDE = 32


class SolverError(RuntimeError):
    """Numerical breakdown (NaN/overflow) during propagation."""


@dataclass(frozen=True)
class ConstantCouplings:
    """Time-independent interaction strengths."""

    g11: float
    g22: float
    g12: float

    @classmethod
    def from_matrix(cls, c: CouplingMatrix) -> "ConstantCouplings":
        return cls(c.g11, c.g22, c.g12)

    def at(self, t: float):
        return self.g11, self.g22, self.g12

    @property
    def all_zero(self) -> bool:
        return self.g11 == 0.0 and self.g22 == 0.0 and self.g12 == 0.0


class ScalingCouplings:
    """Effective-1D couplings g_ij(t) = 4 g_ij / (3 pi R_perp(0)^2 b_perp(t)^2).

    `bperp_of_t` is a callable (typically a cubic spline through the radial
    scaling solution) evaluated at absolute time since release.
    """

    def __init__(self, couplings3d: CouplingMatrix, r_perp0: float, bperp_of_t):
        if r_perp0 <= 0:
            raise ValueError("r_perp0 must be positive")
        self._g3d = couplings3d
        self.r_perp0 = r_perp0
        self.bperp_of_t = bperp_of_t

    def at(self, t: float):
        pref = 4.0 / (3.0 * np.pi * self.r_perp0**2 * float(self.bperp_of_t(t)) ** 2)
        return pref * self._g3d.g11, pref * self._g3d.g22, pref * self._g3d.g12

    @property
    def all_zero(self) -> bool:
        return self._g3d.all_zero


class SplitStepEvolver:
    """Second-order Strang split-step propagator for a fixed grid and species.

    Parameters
    ----------
    grid : Grid1D or CylGrid
    mass, k0 : species mass (kg) and two-photon wavevector (1/m)
    couplings : object with .at(t) -> (g11, g22, g12); None means ideal gas
    wigner : include the truncated-Wigner ordering corrections
    gravity : uniform acceleration; adds the m*g*z potential phase (lab-frame
        cross-check path; production runs use the freely-falling frame, g=0)
    potential : optional external potential array broadcastable to the grid
    """

    def __init__(
        self,
        grid,
        mass: float,
        k0: float,
        couplings=None,
        *,
        wigner: bool = False,
        gravity: float = 0.0,
        potential=None,
        hbar: float = CONSTANTS.hbar,
        workers: int = 1,
    ):
        self.grid = grid
        self.plan = SpectralPlan(grid, mass, k0, hbar)
        self.couplings = couplings
        self.wigner = wigner
        self.hbar = hbar
        self.mass = mass
        self.workers = workers
        self.potential = None
        pot = None
        if potential is not None:
            pot = np.asarray(potential, dtype=float)
        if gravity != 0.0:
            z = grid.z if isinstance(grid, Grid1D) else grid.axial.z[None, :]
            gz = mass * gravity * z
            pot = gz if pot is None else pot + gz
        self.potential = pot
        if wigner:
            dv = grid.dV_nodes if isinstance(grid, CylGrid) else grid.dV
            self._inv_dv = 1.0 / dv
        else:
            self._inv_dv = None

    @property
    def interacting(self) -> bool:
        return self.couplings is not None and not self.couplings.all_zero

    def _nonlinear_phase_args(self, comp1, comp2, t_mid):
        g11, g22, g12 = self.couplings.at(t_mid) if self.couplings else (0.0, 0.0, 0.0)
        n1 = np.abs(comp1) ** 2
        n2 = np.abs(comp2) ** 2
        arg1 = g11 * n1 + g12 * n2
        arg2 = g12 * n1 + g22 * n2
        if self._inv_dv is not None:
            # symmetric-ordering corrections: -g/dV (self), -g/(2 dV) (cross)
            arg1 -= (g11 + 0.5 * g12) * self._inv_dv
            arg2 -= (g22 + 0.5 * g12) * self._inv_dv
        if self.potential is not None:
            arg1 += self.potential
            arg2 += self.potential
        return arg1, arg2

    def _nonlinear_step(self, comp1, comp2, dt, t_mid):
        arg1, arg2 = self._nonlinear_phase_args(comp1, comp2, t_mid)
        factor = -dt / self.hbar
        comp1 *= np.exp(1j * (factor * arg1))
        comp2 *= np.exp(1j * (factor * arg2))

    def evolve_arrays(self, comp1, comp2, duration, dt, *, frame, t_start):
        """In-place propagation over `duration`. Arrays may carry batch axes."""
        if duration == 0.0:
            return t_start
        if duration < 0 or dt <= 0:
            raise ValueError("duration must be >= 0 and dt > 0")
        linear = self.couplings is None or self.couplings.all_zero
        if linear and self.potential is None:
            # purely kinetic: one exact spectral step regardless of dt
            p1, p2 = self.plan.phases(duration, frame)
            _apply_spectral(self.grid, comp1, comp2, p1, p2, self.workers)
            return t_start + duration
        n_steps = max(1, int(round(duration / dt)))
        h = duration / n_steps
        half1, half2 = self.plan.phases(0.5 * h, frame)
        full1, full2 = self.plan.phases(h, frame)
        t = t_start
        _apply_spectral(self.grid, comp1, comp2, half1, half2, self.workers)
        for i in range(n_steps):
            self._nonlinear_step(comp1, comp2, h, t + 0.5 * h)
            if i == n_steps - 1:
                _apply_spectral(self.grid, comp1, comp2, half1, half2, self.workers)
            else:
                _apply_spectral(self.grid, comp1, comp2, full1, full2, self.workers)
            t += h
            if (i + 1) % _NAN_CHECK_STRIDE == 0 or i == n_steps - 1:
                self._check_finite(comp1, comp2, t)
        return t_start + duration

    def _check_finite(self, comp1, comp2, t):
        if not (np.isfinite(comp1.reshape(-1)[:: max(1, comp1.size // 4096)]).all()
                and np.isfinite(comp2.reshape(-1)[:: max(1, comp2.size // 4096)]).all()):
            bad = ~np.isfinite(comp1).all(axis=tuple(range(comp1.ndim - len(self.grid.shape), comp1.ndim)))
            raise SolverError(
                f"non-finite field values at t = {t:.6e} s"
                + (f" (trajectories {np.nonzero(bad)[0][:8].tolist()} ...)" if bad.ndim else "")
            )

    def evolve(self, state: FieldState2, duration: float, dt: float) -> FieldState2:
        """Propagate a FieldState2; returns a new state at state.time + duration."""
        out = state.copy()
        self.evolve_arrays(
            out.component1, out.component2, duration, dt,
            frame=state.frame, t_start=state.time,
        )
        out.time = state.time + duration
        return out

    def kinetic_operator(self, f: np.ndarray, component: int, frame: Frame) -> np.ndarray:
        """Apply -hbar^2 grad^2 / (2m) spectrally (carrier-aware for component 2)."""
        offset = self.plan.k0 if (frame is Frame.COMOVING and component == 2) else 0.0
        ksq1, ksq2 = self.plan._ksq(offset)
        ksq = ksq2 if component == 2 else ksq1
        coef = self.hbar**2 / (2.0 * self.mass)
        grid = self.grid
        if isinstance(grid, Grid1D):
            return grid.ifft(coef * ksq * grid.fft(f))
        return grid.ihankel(grid.ifft_z(coef * ksq * grid.fft_z(grid.hankel(f))))

    def energy(self, state: FieldState2) -> float:
        """Total mean-field energy (kinetic + potential + interaction)."""
        g11, g22, g12 = self.couplings.at(state.time) if self.couplings else (0.0, 0.0, 0.0)
        grid = self.grid
        kin = 0.0
        for comp, f in ((1, state.component1), (2, state.component2)):
            kin += float(np.real(grid.integrate(np.conj(f) * self.kinetic_operator(f, comp, state.frame))))
        n1 = np.abs(state.component1) ** 2
        n2 = np.abs(state.component2) ** 2
        inter = float(grid.integrate(0.5 * g11 * n1**2 + 0.5 * g22 * n2**2 + g12 * n1 * n2))
        pot = 0.0
        if self.potential is not None:
            pot = float(grid.integrate(self.potential * (n1 + n2)))
        return kin + inter + pot
