"""Truncated-Wigner ensembles: sampling, evolution, and moment estimation.

Initial states are sampled by adding half-a-quantum-per-mode complex Gaussian
noise to the condensate mean field (variance 1/(2 dV) per grid node and
component); trajectories then evolve under GPE-like equations carrying the
symmetric-ordering correction terms. Ensemble averages estimate symmetrically
ordered operator expectations, so the reported pseudospin moments subtract
the known sampling contributions: nothing for first moments of J (and the
mode-count offsets cancel in J_z), M/8 on each J variance, and M per
component pair on the total atom number, with M grid modes per component.

Per-trajectory RNG streams are counter-based (Philox keyed by seed root,
purpose, and trajectory index), so any batching or execution order yields
bit-identical fields.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .constants import CONSTANTS, CouplingMatrix, SpeciesParams, TrapConfig, derive_couplings, thomas_fermi_scales
from .evolution import ConstantCouplings, ScalingCouplings, SplitStepEvolver
from .fields import FieldState2, Frame
from .grids import CylGrid, Grid1D, assert_no_aliasing
from .meanfield import GroundstateResult, imaginary_time_groundstate

__all__ = [
    "ScalingState",
    "ScalingSeries",
    "integrate_scaling",
    "g1d_of_t",
    "NoiseSpec",
    "TrajectoryEnsemble",
    "TruncationWarning",
    "trajectory_rng",
    "sample_initial_ensemble",
    "evolve_tw",
    "evolve_tw_1d",
    "evolve_tw_cyl",
    "spin_moment_samples",
    "SpinMomentEstimates",
    "estimate_spin_moments",
    "XiEstimate",
    "xi_from_ensemble",
    "effective_1d_initial_state",
    "save_ensemble",
    "load_ensemble",
]

# RNG stream purposes (part of the Philox key)
STREAM_VACUUM = 0
STREAM_THETA = 1
STREAM_NUMBER = 2
STREAM_DETECTION = 3


class TruncationWarning(UserWarning):
    """Occupation per grid mode is low; the truncation may be unreliable."""


# ---------------------------------------------------------------------------
# scaling solutions for free expansion from a cylindrical harmonic trap

@dataclass(frozen=True)
class ScalingState:
    """Self-similar scale factors and rates at one instant."""

    t: float
    b_perp: float
    b_z: float
    db_perp: float
    db_z: float


@dataclass
class ScalingSeries:
    times: np.ndarray
    b_perp: np.ndarray
    b_z: np.ndarray
    db_perp: np.ndarray
    db_z: np.ndarray

    def state_at(self, i: int) -> ScalingState:
        return ScalingState(
            t=float(self.times[i]), b_perp=float(self.b_perp[i]),
            b_z=float(self.b_z[i]), db_perp=float(self.db_perp[i]),
            db_z=float(self.db_z[i]),
        )

    def bperp_spline(self) -> CubicSpline:
        return CubicSpline(self.times, self.b_perp)


def integrate_scaling(trap: TrapConfig, t_end: float, dt: float = 2e-6) -> ScalingSeries:
    """Radial/axial scale factors for free expansion, released from rest.

    Classic RK4 on b_perp'' = w_perp^2/(b_perp^3 b_z),
    b_z'' = w_z^2/(b_perp^2 b_z^2), from b = 1, b' = 0.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    wp2 = trap.omega_radial**2
    wz2 = trap.omega_axial**2

    def rhs(y):
        bp, bz, vp, vz = y
        return np.array([vp, vz, wp2 / (bp**3 * bz), wz2 / (bp**2 * bz**2)])

    n = max(1, int(np.ceil(t_end / dt)))
    h = t_end / n if t_end > 0 else dt
    out = np.empty((n + 1, 4))
    y = np.array([1.0, 1.0, 0.0, 0.0])
    out[0] = y
    for i in range(n):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = y
    times = np.linspace(0.0, t_end if t_end > 0 else dt * n, n + 1)
    return ScalingSeries(
        times=times, b_perp=out[:, 0], b_z=out[:, 1],
        db_perp=out[:, 2], db_z=out[:, 3],
    )


def g1d_of_t(couplings: CouplingMatrix, r_perp0: float, scaling: ScalingState) -> dict:
    """Effective 1D couplings 4 g_ij / (3 pi R_perp(0)^2 b_perp(t)^2) in J m."""
    if r_perp0 <= 0:
        raise ValueError("r_perp0 must be positive")
    pref = 4.0 / (3.0 * np.pi * r_perp0**2 * scaling.b_perp**2)
    return {
        "g11_1d": pref * couplings.g11,
        "g22_1d": pref * couplings.g22,
        "g12_1d": pref * couplings.g12,
    }


# ---------------------------------------------------------------------------
# ensembles

@dataclass(frozen=True)
class NoiseSpec:
    """Shot-to-shot and detection imperfections (all standard deviations)."""

    sigma_theta: float = 0.0   # rad, common offset on every pulse of a shot
    sigma_n_rel: float = 0.0   # relative atom-number spread sigma_N / N
    delta_n: float = 0.0       # atoms, detection resolution

    def __post_init__(self):
        if self.sigma_theta < 0 or self.sigma_n_rel < 0 or self.delta_n < 0:
            raise ValueError("noise magnitudes must be >= 0")

    @property
    def silent(self) -> bool:
        return self.sigma_theta == 0.0 and self.sigma_n_rel == 0.0 and self.delta_n == 0.0


@dataclass
class TrajectoryEnsemble:
    """A batch of stochastic field samples sharing grid, frame, and time.

    `traj_start` records the global index of the first trajectory so batched
    processing draws exactly the same noise as a monolithic run.
    """

    comp1: np.ndarray
    comp2: np.ndarray
    grid: object
    frame: Frame
    time: float
    seed_root: int
    traj_start: int = 0

    def __post_init__(self):
        shape = tuple(self.grid.shape)
        if self.comp1.shape[1:] != shape or self.comp2.shape[1:] != shape:
            raise ValueError("ensemble field shapes do not match grid")
        if self.comp1.shape[0] != self.comp2.shape[0]:
            raise ValueError("components disagree on trajectory count")

    @property
    def n_traj(self) -> int:
        return self.comp1.shape[0]

    @property
    def traj_indices(self) -> np.ndarray:
        return self.traj_start + np.arange(self.n_traj)

    def copy(self) -> "TrajectoryEnsemble":
        return TrajectoryEnsemble(
            self.comp1.copy(), self.comp2.copy(), self.grid, self.frame,
            self.time, self.seed_root, self.traj_start,
        )


def trajectory_rng(seed_root: int, traj_index: int, purpose: int) -> np.random.Generator:
    """Counter-based per-trajectory stream; independent of execution order."""
    key = np.array(
        [np.uint64(seed_root), np.uint64((purpose << 48) + traj_index)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def _vacuum_noise(rng: np.random.Generator, shape, dv_nodes) -> np.ndarray:
    """Complex Gaussian with <|eta|^2> = 1/(2 dV) per node."""
    scale = np.sqrt(0.25 / dv_nodes)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return scale * (re + 1j * im)


def sample_initial_ensemble(
    groundstate,
    n_traj: int,
    seed_root: int,
    *,
    traj_start: int = 0,
    amplitude_scale: np.ndarray | None = None,
) -> TrajectoryEnsemble:
    """Wigner samples of the released condensate: Phi1 = Psi1 + eta1, Phi2 = eta2.

    `amplitude_scale` optionally multiplies the coherent part per trajectory
    (sqrt(N_shot/N) factors for shot-to-shot atom-number fluctuations).
    """
    state = groundstate.state if isinstance(groundstate, GroundstateResult) else groundstate
    if n_traj < 2:
        raise ValueError("n_traj must be at least 2 for any variance estimate")
    grid = state.grid
    dv = grid.dV_nodes if isinstance(grid, CylGrid) else grid.dV
    shape = tuple(grid.shape)
    comp1 = np.empty((n_traj,) + shape, dtype=complex)
    comp2 = np.empty((n_traj,) + shape, dtype=complex)
    for j in range(n_traj):
        rng = trajectory_rng(seed_root, traj_start + j, STREAM_VACUUM)
        comp1[j] = _vacuum_noise(rng, shape, dv)
        comp2[j] = _vacuum_noise(rng, shape, dv)
    if amplitude_scale is None:
        comp1 += state.component1
    else:
        scale = np.asarray(amplitude_scale, dtype=float).reshape(
            (n_traj,) + (1,) * len(shape))
        comp1 += scale * state.component1
    comp2 += state.component2
    return TrajectoryEnsemble(
        comp1, comp2, grid, state.frame, state.time, seed_root, traj_start
    )


def check_truncation_validity(
    ensemble: TrajectoryEnsemble,
    *,
    min_occupation: float = 1.0,
    region_weight: float = 0.99,
    max_bad_fraction: float = 0.10,
):
    """Warn when too little of the cloud has >= 1 atom per grid node.

    The occupied region is the smallest set of nodes holding `region_weight`
    of the (ordering-corrected) atoms; the warning fires when more than
    `max_bad_fraction` of it sits below `min_occupation` atoms per node.
    """
    grid = ensemble.grid
    dv = grid.dV_nodes if isinstance(grid, CylGrid) else grid.dV
    dens = (np.abs(ensemble.comp1) ** 2 + np.abs(ensemble.comp2) ** 2).mean(axis=0)
    atoms_per_node = (dens - 1.0 / dv) * dv  # corrected occupation per node
    atoms_per_node = np.maximum(atoms_per_node, 0.0).ravel()
    total = atoms_per_node.sum()
    if total <= 0:
        return
    order = np.argsort(atoms_per_node)[::-1]
    csum = np.cumsum(atoms_per_node[order])
    region = order[: int(np.searchsorted(csum, region_weight * total)) + 1]
    bad = float(np.mean(atoms_per_node[region] < min_occupation))
    if bad > max_bad_fraction:
        warnings.warn(
            f"{100 * bad:.0f}% of the occupied region holds fewer than "
            f"{min_occupation:g} atoms per grid node; truncation may be invalid",
            TruncationWarning,
            stacklevel=2,
        )


def evolve_tw(
    ensemble: TrajectoryEnsemble,
    duration: float,
    dt: float,
    *,
    species: SpeciesParams,
    couplings,
    constants=CONSTANTS,
    check_truncation: bool = False,
) -> TrajectoryEnsemble:
    """Evolve every trajectory under the TW equations (in place on a copy)."""
    if ensemble.frame is not Frame.COMOVING:
        raise ValueError("TW evolution expects the co-moving frame")
    out = ensemble.copy()
    if check_truncation:
        check_truncation_validity(out)
    evolver = SplitStepEvolver(
        out.grid, species.mass, species.k0, couplings,
        wigner=True, hbar=constants.hbar,
    )
    evolver.evolve_arrays(
        out.comp1, out.comp2, duration, dt, frame=out.frame, t_start=out.time
    )
    out.time += duration
    return out


def evolve_tw_1d(ensemble, duration, dt, *, species, couplings, **kw):
    if not isinstance(ensemble.grid, Grid1D):
        raise ValueError("evolve_tw_1d needs a 1D grid")
    return evolve_tw(ensemble, duration, dt, species=species, couplings=couplings, **kw)


def evolve_tw_cyl(ensemble, duration, dt, *, species, couplings, **kw):
    if not isinstance(ensemble.grid, CylGrid):
        raise ValueError("evolve_tw_cyl needs a cylindrical grid")
    return evolve_tw(ensemble, duration, dt, species=species, couplings=couplings, **kw)


# ---------------------------------------------------------------------------
# moment estimation

def spin_moment_samples(ensemble: TrajectoryEnsemble) -> np.ndarray:
    """Per-trajectory (jx, jy, jz, n) from the co-moving field overlaps.

    Returns an (n_traj, 4) float array. These are raw phase-space values;
    symmetric-ordering corrections are applied by the estimators.
    """
    if ensemble.frame is not Frame.COMOVING:
        raise ValueError("spin moments are defined on co-moving fields")
    grid = ensemble.grid
    cross = grid.integrate(np.conj(ensemble.comp1) * ensemble.comp2)
    n1 = grid.integrate(np.abs(ensemble.comp1) ** 2)
    n2 = grid.integrate(np.abs(ensemble.comp2) ** 2)
    return np.column_stack([
        np.real(cross), np.imag(cross), 0.5 * (n1 - n2), n1 + n2,
    ])


@dataclass
class SpinMomentEstimates:
    """Ordering-corrected pseudospin moments with jackknife standard errors."""

    mean_j: np.ndarray          # (3,) <Jx>, <Jy>, <Jz>
    cov_j: np.ndarray           # (3, 3) corrected covariance matrix
    n_mean: float               # corrected <N>
    se_mean_j: np.ndarray       # (3,)
    se_var_j: np.ndarray        # (3,) jackknife s.e. of the variances
    n_traj: int
    modes_per_component: int
    samples: np.ndarray = field(repr=False)  # (n_traj, 4) raw table

    @property
    def var_jz(self) -> float:
        return float(self.cov_j[2, 2])


def estimate_spin_moments(source) -> SpinMomentEstimates:
    """Corrected quantum moments from an ensemble or a raw sample table.

    Accepts a TrajectoryEnsemble or an (n_traj, 4) table from
    spin_moment_samples; a table source also needs `modes` (pass a tuple
    (table, modes_per_component)).
    """
    if isinstance(source, TrajectoryEnsemble):
        table = spin_moment_samples(source)
        modes = source.grid.n_modes
    else:
        table, modes = source
    n = table.shape[0]
    if n < 2:
        raise ValueError("need at least two trajectories")
    j = table[:, :3]
    mean_j = j.mean(axis=0)
    cov_raw = np.cov(j, rowvar=False, ddof=1)
    cov = cov_raw - (modes / 8.0) * np.eye(3)
    n_mean = float(table[:, 3].mean() - modes)

    se_mean = j.std(axis=0, ddof=1) / np.sqrt(n)
    # jackknife on the three variances
    se_var = np.empty(3)
    for i in range(3):
        x = j[:, i]
        s1, s2 = x.sum(), (x * x).sum()
        loo_mean = (s1 - x) / (n - 1)
        loo_var = (s2 - x * x - (n - 1) * loo_mean**2) / (n - 2)
        se_var[i] = np.sqrt((n - 1) / n * ((loo_var - loo_var.mean()) ** 2).sum())
    return SpinMomentEstimates(
        mean_j=mean_j, cov_j=cov, n_mean=n_mean,
        se_mean_j=se_mean, se_var_j=se_var,
        n_traj=n, modes_per_component=modes, samples=table,
    )


@dataclass
class XiEstimate:
    xi: float
    xi_se: float
    theta_opt: float
    phi_opt: float
    spin_length: float
    spin_length_se: float
    n_mean: float
    theta_grid: np.ndarray = field(repr=False)
    xi_of_theta: np.ndarray = field(repr=False)


def _xi_squared_at(mean_j, cov_j, n_mean, theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    direction = np.stack([st * sp, st * cp, ct * np.ones_like(st * sp)], axis=-1)
    var = np.einsum("...i,ij,...j->...", direction, cov_j, direction)
    mean_perp = cp * mean_j[0] - sp * mean_j[1]
    return n_mean * var / mean_perp**2


def xi_from_ensemble(
    source,
    theta_scan: int = 1000,
    *,
    fixed_theta: float | None = None,
    fixed_phi: float | None = None,
    min_significance: float = 5.0,
) -> XiEstimate:
    """Squeezing parameter from corrected ensemble moments.

    The quadrature phase follows phi_opt = atan2(-<Jy>, <Jx>) (aligning the
    mean spin with Jx); theta comes from a dense scan of xi(theta) at that
    phase. Passing fixed angles skips the optimisation (used for evaluating
    degradation at a reference optimum). Standard errors are delete-one
    jackknife at the chosen angles.
    """
    est = source if isinstance(source, SpinMomentEstimates) else estimate_spin_moments(source)
    jx, jy = est.mean_j[0], est.mean_j[1]
    length = float(np.hypot(jx, jy))
    se_len = float(np.hypot(est.se_mean_j[0] * jx, est.se_mean_j[1] * jy) / max(length, 1e-300))
    if fixed_phi is None and length < min_significance * se_len:
        raise ValueError(
            f"mean spin length {length:.3g} is consistent with zero "
            f"(s.e. {se_len:.3g}); xi is undefined"
        )
    phi = float(np.arctan2(-jy, jx)) if fixed_phi is None else fixed_phi
    thetas = np.linspace(0.0, 2.0 * np.pi, theta_scan, endpoint=False)
    xi2_curve = _xi_squared_at(est.mean_j, est.cov_j, est.n_mean, thetas, phi)
    if fixed_theta is None:
        theta = float(thetas[int(np.argmin(xi2_curve))])
    else:
        theta = fixed_theta
    xi2, xi2_se = _jackknife_xi2(est, theta, phi)
    xi = float(np.sqrt(max(xi2, 0.0)))
    xi_se = float(xi2_se / (2.0 * xi)) if xi > 0 else float("nan")
    return XiEstimate(
        xi=xi, xi_se=xi_se, theta_opt=theta, phi_opt=phi,
        spin_length=length, spin_length_se=se_len, n_mean=est.n_mean,
        theta_grid=thetas, xi_of_theta=np.sqrt(np.maximum(xi2_curve, 0.0)),
    )


def _jackknife_xi2(est: SpinMomentEstimates, theta, phi):
    """Delete-one jackknife of xi^2 at fixed angles, vectorised over leaves."""
    table = est.samples
    n = table.shape[0]
    modes = est.modes_per_component
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    direction = np.array([st * sp, st * cp, ct])
    proj = table[:, :3] @ direction            # per-trajectory J_{theta,phi}
    perp = cp * table[:, 0] - sp * table[:, 1]  # per-trajectory J_perp
    ntot = table[:, 3]

    def xi2_from(sums):
        s_p, s_p2, s_perp, s_n, m = sums
        mean_p = s_p / m
        var = (s_p2 - m * mean_p**2) / (m - 1) - modes / 8.0
        mean_perp = s_perp / m
        n_mean = s_n / m - modes
        return n_mean * var / mean_perp**2

    full = xi2_from((proj.sum(), (proj**2).sum(), perp.sum(), ntot.sum(), n))
    loo = xi2_from((
        proj.sum() - proj, (proj**2).sum() - proj**2,
        perp.sum() - perp, ntot.sum() - ntot, n - 1,
    ))
    se = np.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum())
    return float(full), float(se)


# ---------------------------------------------------------------------------
# effective-1D preparation

def effective_1d_initial_state(
    species: SpeciesParams,
    trap: TrapConfig,
    atom_number: float,
    grid1d: Grid1D,
    t_max: float,
    *,
    n_radial: int = 64,
    gs_tolerance: float = 1e-8,
    scaling_dt: float = 2e-6,
    constants=CONSTANTS,
):
    """Initial 1D state and time-dependent couplings for the reduced model.

    Interacting gas: solves the cylindrical groundstate on an auxiliary grid
    with the same axial spacing, integrates the density over the radial
    coordinate, and transplants sqrt(n_1d(z)) onto the propagation grid
    (an exact translation; no interpolation). Couplings follow the radial
    scaling solution through t_max. Ideal gas: the axial oscillator
    groundstate with zero couplings.

    Returns (state, couplings, scaling_series_or_None).
    """
    hbar = constants.hbar
    if species.ideal:
        gs = imaginary_time_groundstate(
            species, TrapConfig(0.0, trap.f_axial), atom_number, grid1d,
            gs_tolerance, constants=constants,
        )
        return gs.state, ConstantCouplings(0.0, 0.0, 0.0), None

    tf = thomas_fermi_scales(species, trap, atom_number, constants)
    r_perp0 = tf["r_perp0"]
    r_z = r_perp0 * trap.omega_radial / trap.omega_axial
    a_r = np.sqrt(hbar / (species.mass * trap.omega_radial))
    dz = grid1d.dz
    half_span = max(8.0 * r_z, 12.0 * np.sqrt(hbar / (species.mass * trap.omega_axial)))
    n_z_gs = int(2 ** np.ceil(np.log2(2.0 * half_span / dz)))
    if n_z_gs > grid1d.n_points:
        raise ValueError("propagation grid is smaller than the groundstate support")
    gs_axial = Grid1D(n_z_gs, -0.5 * n_z_gs * dz, 0.5 * n_z_gs * dz)
    gs_grid = CylGrid(n_radial, max(1.7 * r_perp0, 6.0 * a_r), gs_axial)
    gs = imaginary_time_groundstate(
        species, trap, atom_number, gs_grid, gs_tolerance, constants=constants
    )
    n1d = (np.abs(gs.state.component1) ** 2 * gs_grid.radial_weights[:, None]).sum(axis=0)
    psi1d = np.sqrt(np.maximum(n1d, 0.0)).astype(complex)

    comp1 = np.zeros(grid1d.n_points, dtype=complex)
    i0 = int(np.argmin(np.abs(grid1d.z - gs_axial.z_min)))
    if i0 + n_z_gs > grid1d.n_points:
        raise ValueError("groundstate window does not fit inside the propagation grid")
    comp1[i0:i0 + n_z_gs] = psi1d
    comp1 *= np.sqrt(atom_number / grid1d.integrate(np.abs(comp1) ** 2))
    state = FieldState2(
        comp1, np.zeros_like(comp1), grid1d, frame=Frame.COMOVING, time=0.0
    )

    series = integrate_scaling(trap, t_max, scaling_dt)
    couplings3d = derive_couplings(species, constants)
    couplings = ScalingCouplings(couplings3d, r_perp0, series.bperp_spline())
    return state, couplings, series


# ---------------------------------------------------------------------------
# checkpoint format
#
# Little-endian binary layout:
#   magic   4s   = b"BGTW"
#   version u32  = 1
#   kind    u8   (1 = Grid1D, 2 = CylGrid)
#   frame   u8   (0 = lab, 1 = comoving)
#   pad     u16
#   time    f64
#   n_traj  u64
#   seed    u64
#   start   u64  (traj_start)
#   grid descriptor:
#     kind 1: n_z u64, z_min f64, z_max f64
#     kind 2: n_r u64, r_max f64, n_z u64, z_min f64, z_max f64
#   data: for each trajectory, component-1 values then component-2 values,
#         C-ordered complex128 (little-endian), grid shape each.

_MAGIC = b"BGTW"
_VERSION = 1


def save_ensemble(ensemble: TrajectoryEnsemble, path):
    grid = ensemble.grid
    kind = 1 if isinstance(grid, Grid1D) else 2
    frame = 1 if ensemble.frame is Frame.COMOVING else 0
    header = struct.pack(
        "<4sIBBHdQQQ", _MAGIC, _VERSION, kind, frame, 0,
        ensemble.time, ensemble.n_traj, ensemble.seed_root, ensemble.traj_start,
    )
    if kind == 1:
        header += struct.pack("<Qdd", grid.n_points, grid.z_min, grid.z_max)
    else:
        header += struct.pack(
            "<QdQdd", grid.n_radial, grid.r_max,
            grid.axial.n_points, grid.axial.z_min, grid.axial.z_max,
        )
    data = np.stack([ensemble.comp1, ensemble.comp2], axis=1).astype("<c16")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def load_ensemble(path) -> TrajectoryEnsemble:
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize("<4sIBBHdQQQ"))
        magic, version, kind, frame, _, time, n_traj, seed, start = struct.unpack(
            "<4sIBBHdQQQ", head
        )
        if magic != _MAGIC:
            raise ValueError("not an ensemble checkpoint (bad magic)")
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        if kind == 1:
            n_z, z_min, z_max = struct.unpack("<Qdd", fh.read(struct.calcsize("<Qdd")))
            grid = Grid1D(n_z, z_min, z_max)
        elif kind == 2:
            n_r, r_max, n_z, z_min, z_max = struct.unpack(
                "<QdQdd", fh.read(struct.calcsize("<QdQdd"))
            )
            grid = CylGrid(n_r, r_max, Grid1D(n_z, z_min, z_max))
        else:
            raise ValueError(f"unknown grid kind {kind}")
        raw = np.frombuffer(fh.read(), dtype="<c16")
    data = raw.reshape((n_traj, 2) + tuple(grid.shape)).astype(complex)
    return TrajectoryEnsemble(
        comp1=data[:, 0].copy(), comp2=data[:, 1].copy(), grid=grid,
        frame=Frame.COMOVING if frame == 1 else Frame.LAB,
        time=time, seed_root=int(seed), traj_start=int(start),
    )
