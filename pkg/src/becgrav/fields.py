"""Two-component field state on a spatial grid.

The stored component-2 field may be either the bare (lab-frame) field or the
co-moving field with the e^{i k0 z} plane-wave carrier divided out. All pulse
operations and mode-overlap diagnostics require the co-moving representation,
where both components sit at the origin of momentum space.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Frame", "FieldState2", "FrameError", "mix_fields"]


def _broadcastable(angle, ndim):
    a = np.asarray(angle, dtype=float)
    if a.ndim == 0 or a.ndim == ndim:
        return a
    # per-trajectory angles against batched fields: pad grid axes on the right
    return a.reshape(a.shape + (1,) * (ndim - a.ndim))


def mix_fields(comp1: np.ndarray, comp2: np.ndarray, theta, phi):
    """SU(2) beamsplitter mixing of co-moving field pairs.

    (c1', c2') = (cos(t/2) c1 - i e^{+i phi} sin(t/2) c2,
                  cos(t/2) c2 - i e^{-i phi} sin(t/2) c1)

    `theta`/`phi` may be scalars or per-trajectory arrays; trajectory axes
    lead, grid axes trail. Pointwise total density is preserved exactly.
    """
    th = _broadcastable(theta, comp1.ndim)
    ph = _broadcastable(phi, comp1.ndim)
    c = np.cos(0.5 * th)
    s = np.sin(0.5 * th)
    new1 = c * comp1 + (-1j * np.exp(1j * ph) * s) * comp2
    new2 = c * comp2 + (-1j * np.exp(-1j * ph) * s) * comp1
    return new1, new2


class FrameError(ValueError):
    """Raised when an operation receives a state in the wrong frame."""


class Frame(enum.Enum):
    LAB = "lab"
    COMOVING = "comoving"


@dataclass
class FieldState2:
    """Complex fields for internal states |1> and |2> on a shared grid.

    `time` is seconds since trap release (the scaling solution and
    time-dependent 1D couplings are indexed by it).
    """

    component1: np.ndarray
    component2: np.ndarray
    grid: object
    frame: Frame = Frame.COMOVING
    time: float = 0.0

    def __post_init__(self):
        shape = tuple(self.grid.shape)
        if self.component1.shape != shape or self.component2.shape != shape:
            raise ValueError(
                f"field shape {self.component1.shape}/{self.component2.shape} "
                f"does not match grid shape {shape}"
            )

    def copy(self) -> "FieldState2":
        return FieldState2(
            component1=self.component1.copy(),
            component2=self.component2.copy(),
            grid=self.grid,
            frame=self.frame,
            time=self.time,
        )

    def norm1(self) -> float:
        return float(self.grid.integrate(np.abs(self.component1) ** 2))

    def norm2(self) -> float:
        return float(self.grid.integrate(np.abs(self.component2) ** 2))

    def total_norm(self) -> float:
        return self.norm1() + self.norm2()

    def to_lab(self, k0: float) -> "FieldState2":
        """Restore the e^{i k0 z} carrier on component 2."""
        if self.frame is Frame.LAB:
            return self.copy()
        out = self.copy()
        out.component2 = out.component2 * self.grid.carrier_phase(+1.0, k0)
        out.frame = Frame.LAB
        return out

    def to_comoving(self, k0: float) -> "FieldState2":
        """Divide out the e^{i k0 z} carrier from component 2."""
        if self.frame is Frame.COMOVING:
            return self.copy()
        out = self.copy()
        out.component2 = out.component2 * self.grid.carrier_phase(-1.0, k0)
        out.frame = Frame.COMOVING
        return out
