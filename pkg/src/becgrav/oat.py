"""Closed-form two-mode one-axis-twisting model.

Exact pseudospin moments after a twisting phase lambda, the generalized spin
squeezing parameter with spatial-mode-overlap degradation, its minimum over
the second-pulse angles, noise-modified squeezing parameters, the resulting
gravimetric sensitivity, and the linear pulse-algebra output coefficients of
the five-pulse sequence.

Conventions: angles in radians, phi_opt reported in (-pi, pi]. Powers like
cos^(N-1) are evaluated through logs so N = 1e6 does not underflow.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = [
    "OatParams",
    "OatMoments",
    "SqueezingPrediction",
    "UndefinedSqueezingError",
    "oat_moments",
    "xi_general",
    "xi_min",
    "xi_detection_noise",
    "xi_number_fluctuations",
    "sensitivity_from_xi",
    "jz_out_coefficients",
    "write_xi_scan_csv",
]


class UndefinedSqueezingError(ValueError):
    """The mean spin length vanishes; xi is undefined at these parameters."""


@dataclass(frozen=True)
class OatParams:
    """Inputs to the analytic model: atom number, twisting phase, mode overlap."""

    n_atoms: float
    lam: float
    q_overlap: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")
        if abs(self.q_overlap) > 1.0 + 1e-6:
            raise ValueError("|Q| cannot exceed 1")

    @property
    def q_abs(self) -> float:
        return min(abs(self.q_overlap), 1.0)

    @property
    def q_phase(self) -> float:
        return float(np.angle(self.q_overlap))


@dataclass(frozen=True)
class OatMoments:
    """Exact twisted coherent-state moments (dimensionless pseudospin)."""

    jx_mean: float
    jy_mean: float
    jz_mean: float
    jx2: float
    jy2: float
    jz2: float
    sym_xy: float
    sym_xz: float
    sym_yz: float


def _signed_pow(base: float, n: float) -> float:
    """base**n for possibly negative base and large real n, via logs."""
    if base == 0.0:
        return 0.0
    mag = np.exp(n * np.log(abs(base)))
    if base > 0:
        return float(mag)
    # integer-ish exponent expected; preserve alternating sign
    return float(mag * (-1.0) ** (int(round(n)) % 2))


def oat_moments(n_atoms: float, lam: float) -> OatMoments:
    """Pseudospin moments of the x-polarized state after twisting by lambda."""
    n = float(n_atoms)
    if n < 1:
        raise ValueError("n_atoms must be >= 1")
    cosl = np.cos(lam)
    cos2l = np.cos(2.0 * lam)
    c_n1 = _signed_pow(cosl, n - 1.0)
    c_n2_2l = _signed_pow(cos2l, n - 2.0)
    c_n2 = _signed_pow(cosl, n - 2.0)
    jx = 0.5 * n * c_n1
    jx2 = 0.125 * n * (n + 1.0 + (n - 1.0) * c_n2_2l)
    jy2 = 0.25 * n * (1.0 + 0.5 * (n - 1.0) * (1.0 - c_n2_2l))
    sym_yz = 0.25 * n * (n - 1.0) * np.sin(lam) * c_n2
    return OatMoments(
        jx_mean=jx, jy_mean=0.0, jz_mean=0.0,
        jx2=jx2, jy2=jy2, jz2=0.25 * n,
        sym_xy=0.0, sym_xz=0.0, sym_yz=sym_yz,
    )


def _quadratic_form(params: OatParams, moments: OatMoments | None = None):
    """Coefficients (A, B, C, denominator) of xi^2(theta) at phi = -phi_Q.

    xi^2(theta) = N (A sin^2 t + B cos^2 t - C sin 2t) / den with exact
    moments and the (1-|Q|^2) vacuum-degradation term folded into B.
    """
    m = moments if moments is not None else oat_moments(params.n_atoms, params.lam)
    n = float(params.n_atoms)
    q = params.q_abs
    var_jz = m.jz2 - m.jz_mean**2
    var_jy = m.jy2 - m.jy_mean**2
    a = var_jz
    b = q**2 * var_jy + 0.25 * (1.0 - q**2) * n
    c = q * (m.sym_yz - m.jy_mean * m.jz_mean)
    den = q**2 * m.jx_mean**2
    return a, b, c, den, m


def xi_general(theta: float, phi: float, params: OatParams) -> float:
    """Generalized squeezing parameter xi^2 at second-pulse angles (theta, phi).

    Uses exact twisted-state moments; the overlap phase drifts the mean spin
    along the equator, so the perpendicular quadrature is taken at
    psi = phi + phi_Q. Raises UndefinedSqueezingError when the mean spin
    length vanishes.
    """
    if params.q_abs <= 0:
        raise UndefinedSqueezingError("|Q| = 0 leaves no mean spin")
    m = oat_moments(params.n_atoms, params.lam)
    n = float(params.n_atoms)
    q = params.q_abs
    psi = phi + params.q_phase
    sp, cp = np.sin(psi), np.cos(psi)
    var_jz = m.jz2 - m.jz_mean**2
    var_perp = (
        sp**2 * (m.jx2 - m.jx_mean**2)
        + cp**2 * (m.jy2 - m.jy_mean**2)
        + 2.0 * sp * cp * (m.sym_xy - m.jx_mean * m.jy_mean)
    )
    cov_perp_z = sp * (m.sym_xz - m.jx_mean * m.jz_mean) + cp * (
        m.sym_yz - m.jy_mean * m.jz_mean
    )
    st, ct = np.sin(theta), np.cos(theta)
    num = n * (
        st**2 * var_jz
        + ct**2 * (q**2 * var_perp + 0.25 * (1.0 - q**2) * n)
        - 2.0 * st * ct * q * cov_perp_z
    )
    mean_perp = cp * m.jx_mean - sp * m.jy_mean
    den = q**2 * mean_perp**2
    if den == 0.0:
        raise UndefinedSqueezingError("mean spin length is zero; xi undefined")
    return float(num / den)


@dataclass(frozen=True)
class SqueezingPrediction:
    """Minimum squeezing and the second-pulse angles that reach it.

    `xi` is the closed-form linear-regime value; `xi_exact` minimizes the
    exact- moment xi^2(theta) and is what xi_general returns at
    (theta_sq, phi_opt). The closed form is quantitative only while
    N lambda^2 << 1 (`linear_regime` flags N lambda^2 < 0.01).
    """

    xi: float
    xi_exact: float
    theta_sq: float
    theta_antisq: float
    phi_opt: float
    moments: OatMoments
    params: OatParams
    linear_regime: bool


def _branch_near(angle: float, target: float) -> float:
    """Shift angle by a multiple of pi to land nearest the target."""
    return angle + np.pi * round((target - angle) / np.pi)


def xi_min(params: OatParams) -> SqueezingPrediction:
    """Minimum spin squeezing over the second-pulse angles.

    Closed form: xi^2 = [1 - |Q| N lam (sqrt(4 + |Q|^2 N^2 lam^2)
    - |Q| N lam)/2] / |Q|^2, with theta_sq = 3 pi/2 - arctan(2/(N|Q|lam))/2
    and phi_opt = -phi_Q. The exact-moment minimum is computed alongside by
    minimizing the quadratic form in theta analytically.
    """
    if params.lam < 0:
        raise ValueError("lambda must be >= 0")
    if params.q_abs <= 0:
        raise UndefinedSqueezingError("|Q| must be positive")
    n = float(params.n_atoms)
    q = params.q_abs
    x = n * q * params.lam

    xi2_closed = (1.0 - 0.5 * x * (np.sqrt(4.0 + x * x) - x)) / q**2

    a, b, c, den, m = _quadratic_form(params)
    if den == 0.0:
        raise UndefinedSqueezingError("mean spin length is zero; xi undefined")
    p = 0.5 * (b - a)
    r = np.hypot(p, c)
    mean_ab = 0.5 * (a + b)
    xi2_exact = n * (mean_ab - r) / den
    two_theta = np.arctan2(c, -p)
    theta_sq = _branch_near(0.5 * two_theta, 1.5 * np.pi)
    theta_anti = _branch_near(0.5 * np.arctan2(-c, p), np.pi)
    phi_opt = -params.q_phase
    if phi_opt <= -np.pi:
        phi_opt += 2.0 * np.pi
    return SqueezingPrediction(
        xi=float(np.sqrt(max(xi2_closed, 0.0))),
        xi_exact=float(np.sqrt(max(xi2_exact, 0.0))),
        theta_sq=float(theta_sq),
        theta_antisq=float(theta_anti),
        phi_opt=float(phi_opt),
        moments=m,
        params=params,
        linear_regime=bool(n * params.lam**2 < 1e-2),
    )


def xi_detection_noise(xi: float, n_atoms: float, delta_n: float) -> float:
    """Squeezing parameter degraded by atom-counting resolution delta_n."""
    if delta_n < 0:
        raise ValueError("delta_n must be >= 0")
    return float(np.sqrt(xi**2 + 2.0 * delta_n**2 / n_atoms))


def number_fluctuation_bracket(x: float) -> float:
    """Prefactor of (sigma_N/N)^2/|Q|^2 in the fluctuation-degraded xi^2.

    Bounded above by 1 for all x = N |Q| lambda >= 0; vanishes at x = 0.
    """
    if x == 0.0:
        return 0.0
    root = np.sqrt(4.0 + x * x)
    return float(1.5 * x * x * (root - x - 4.0 / (3.0 * x)) / root)


def xi_number_fluctuations(params: OatParams, sigma_n_rel: float) -> dict:
    """Squeezing under Gaussian shot-to-shot atom-number fluctuations.

    Returns the full expression (`xi_exact`) and the simple bound
    sqrt(xi^2 + (sigma_N/N)^2/|Q|^2) (`xi_bound`); xi_exact <= xi_bound
    since the bracket prefactor never exceeds 1.
    """
    if not 0.0 <= sigma_n_rel < 0.5:
        raise ValueError("sigma_n_rel must lie in [0, 0.5)")
    pred = xi_min(params)
    q = params.q_abs
    x = params.n_atoms * q * params.lam
    s2q2 = (sigma_n_rel / q) ** 2
    xi2 = pred.xi**2
    return {
        "xi_exact": float(np.sqrt(max(xi2 + number_fluctuation_bracket(x) * s2q2, 0.0))),
        "xi_bound": float(np.sqrt(xi2 + s2q2)),
    }


def sensitivity_from_xi(
    xi: float, n_atoms: float, k0: float, t_interrogation: float,
    t_oat: float = 0.0, theta: float = np.pi / 2.0,
) -> dict:
    """Single-shot gravimetric sensitivity from the squeezing parameter.

    `delta_g` uses the exact prefactor |T^2 - cos(theta) T_OAT^2|;
    `delta_g_approx` is the T >> T_OAT limit xi / (sqrt(N) k0 T^2).
    """
    if t_interrogation <= 0:
        raise ValueError("t_interrogation must be positive")
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    lever = abs(t_interrogation**2 - np.cos(theta) * t_oat**2)
    root_n = np.sqrt(n_atoms)
    return {
        "delta_g": float(xi / (root_n * k0 * lever)),
        "delta_g_approx": float(xi / (root_n * k0 * t_interrogation**2)),
    }


def jz_out_coefficients(theta, phi, phi1, phi2, phi_bs3) -> dict:
    """Coefficients mapping pre-pulse moments to the measured J_z.

    J_z(out) = Cx Jx + Cy Jy + Cz Jz for the linear tail of the five-pulse
    sequence (gravity phase phi1, second pulse (theta, phi), mirror, gravity
    phase phi2, closing pulse with phase phi_bs3). (Cx, Cy, Cz) is a unit
    vector: the tail is a composition of rotations.
    """
    a = phi2 + phi + phi_bs3
    b = phi1 + phi
    sin_a, cos_a = np.sin(a), np.cos(a)
    sin_b, cos_b = np.sin(b), np.cos(b)
    ct, st = np.cos(theta), np.sin(theta)
    return {
        "cx": -sin_a * cos_b + ct * cos_a * sin_b,
        "cy": sin_a * sin_b + ct * cos_a * cos_b,
        "cz": -st * cos_a,
    }


def write_xi_scan_csv(rows, path):
    """CSV emitter for xi-vs-N / lambda-scan tables.

    Each row: dict with n_atoms, lambda, q_abs, xi, theta_sq_rad, phi_opt_rad.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_atoms", "lambda", "q_abs", "xi", "theta_sq_rad", "phi_opt_rad"])
        for row in rows:
            w.writerow([
                f"{row['n_atoms']:.17g}", f"{row['lambda']:.17g}",
                f"{row['q_abs']:.17g}", f"{row['xi']:.17g}",
                f"{row['theta_sq_rad']:.17g}", f"{row['phi_opt_rad']:.17g}",
            ])
