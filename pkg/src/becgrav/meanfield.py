"""Two-component mean-field engine and squeezing diagnostics.

Imaginary-time propagation finds trap groundstates; real-time split-step
evolution (free or freely-falling) propagates the released condensate; and
the diagnostics chi(t), lambda(t) = int chi dt', and the complex mode overlap
Q(t) recorded over the state-preparation stage feed the analytic one-axis
twisting model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .constants import CONSTANTS, SpeciesParams, TrapConfig, derive_couplings
from .evolution import ConstantCouplings, SolverError, SplitStepEvolver
from .fields import FieldState2, Frame, FrameError, mix_fields
from .grids import CylGrid, Grid1D, assert_no_aliasing

__all__ = [
    "GroundstateResult",
    "SqueezingDiagnostics",
    "trap_potential",
    "imaginary_time_groundstate",
    "evolve_gpe",
    "compute_chi",
    "compute_overlap",
    "run_squeezing_stage",
]


def trap_potential(grid, trap: TrapConfig, mass: float) -> np.ndarray:
    """Harmonic potential on the grid nodes (axial-only for a 1D grid)."""
    if isinstance(grid, Grid1D):
        return 0.5 * mass * trap.omega_axial**2 * grid.z**2
    r = grid.radial_nodes[:, None]
    z = grid.axial.z[None, :]
    return 0.5 * mass * (trap.omega_radial**2 * r**2 + trap.omega_axial**2 * z**2)


@dataclass
class GroundstateResult:
    state: FieldState2
    mu: float
    energy: float
    iterations: int
    residual: float
    residual_history: list = field(default_factory=list, repr=False)


def _gp_hamiltonian_apply(evolver, psi, potential, g11, frame):
    h_psi = evolver.kinetic_operator(psi, 1, frame)
    h_psi += (potential + g11 * np.abs(psi) ** 2) * psi
    return h_psi


def imaginary_time_groundstate(
    species: SpeciesParams,
    trap: TrapConfig,
    atom_number: float,
    grid,
    tolerance: float = 1e-8,
    *,
    max_iterations: int = 40000,
    dtau: float | None = None,
    constants=CONSTANTS,
) -> GroundstateResult:
    """Groundstate of the trapped single-component GPE by imaginary time.

    Split-step with t -> -i tau and renormalisation to N relaxes the shape;
    a preconditioned residual-descent stage then converges to the discrete
    eigenstate, measured by ||H psi - mu psi|| / ||mu psi|| <= tolerance.
    The discrete H caps the trap at 200x the chemical-potential scale: pure
    far field (true amplitude there is below 1e-40), in the same spirit as
    the finite box, but it keeps the refinement well conditioned on
    propagation-sized domains.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if trap.f_radial <= 0 and isinstance(grid, CylGrid):
        raise ValueError("cylindrical groundstate needs f_radial > 0")
    if trap.f_axial <= 0:
        raise ValueError("groundstate needs f_axial > 0")
    hbar, mass = constants.hbar, species.mass
    couplings = derive_couplings(species, constants)
    potential_exact = trap_potential(grid, trap, mass)
    # axial interaction strength is the 3D one on CylGrid; a bare Grid1D
    # groundstate is only meaningful for the ideal gas (used by tests and the
    # non-interacting pipeline), so reject an interacting 1D request.
    if isinstance(grid, Grid1D) and not species.ideal:
        raise ValueError(
            "interacting groundstates need a CylGrid; the effective-1D initial "
            "state is the radial integral of the cylindrical groundstate"
        )
    g11 = couplings.g11
    evolver = SplitStepEvolver(grid, mass, species.k0, None, hbar=hbar)

    interacting = g11 > 0 and isinstance(grid, CylGrid)
    if interacting:
        # Thomas-Fermi seed: much closer than a Gaussian at large N
        from .constants import thomas_fermi_scales

        mu_tf = thomas_fermi_scales(species, trap, atom_number, constants)["mu"]
        psi = np.sqrt(np.maximum(mu_tf - potential_exact, 0.0) / g11).astype(complex)
        if float(grid.integrate(np.abs(psi) ** 2)) == 0.0:
            raise SolverError("TF seed vanished; grid does not cover the cloud")
        energy_scale = max(mu_tf, hbar * trap.omega_axial, hbar * trap.omega_radial)
    else:
        a_z = np.sqrt(hbar / (mass * trap.omega_axial))
        if isinstance(grid, Grid1D):
            psi = np.exp(-0.5 * (grid.z / a_z) ** 2).astype(complex)
            energy_scale = hbar * trap.omega_axial
        else:
            a_r = np.sqrt(hbar / (mass * trap.omega_radial))
            psi = np.exp(
                -0.5 * (grid.radial_nodes[:, None] / a_r) ** 2
                - 0.5 * (grid.axial.z[None, :] / a_z) ** 2
            ).astype(complex)
            energy_scale = hbar * max(trap.omega_axial, trap.omega_radial)
    psi *= np.sqrt(atom_number / grid.integrate(np.abs(psi) ** 2))

    # Cap the trap far outside the cloud: the groundstate amplitude there is
    # below machine precision, while uncapped edge values (propagation grids
    # reach hundreds of microns) wreck the conditioning of the refinement.
    v_cap = 200.0 * energy_scale
    potential = np.minimum(potential_exact, v_cap)

    omega_scale = energy_scale / hbar
    tau = dtau if dtau is not None else 0.1 / omega_scale
    ksq1, _ = evolver.plan._ksq(0.0)  # component 1 carries no momentum carrier
    coef = hbar / (2.0 * mass)

    def kinetic_decay(f, t_step):
        dec = np.exp(-coef * ksq1 * t_step)
        if isinstance(grid, Grid1D):
            return grid.ifft(dec * grid.fft(f))
        return grid.ihankel(grid.ifft_z(dec * grid.fft_z(grid.hankel(f))))

    def residual_mu(f, v_ext):
        h_f = _gp_hamiltonian_apply(evolver, f, v_ext, g11, Frame.LAB)
        mu = float(np.real(grid.integrate(np.conj(f) * h_f))) / atom_number
        num = np.sqrt(float(grid.integrate(np.abs(h_f - mu * f) ** 2)))
        den = abs(mu) * np.sqrt(float(grid.integrate(np.abs(f) ** 2)))
        return num / den, mu, h_f

    def precond_apply(f, density, shift):
        """Symmetric position/spectral preconditioner for the GP residual.

        sqrt(shift/(V + g n + shift)) * (T + shift)^(-1) * (same), which
        tames both the kinetic and the potential ends of the spectrum.
        """
        pv = np.sqrt(shift / (potential + g11 * density + shift))
        pk = 1.0 / (coef * hbar * ksq1 + shift)
        if isinstance(grid, Grid1D):
            return pv * grid.ifft(pk * grid.fft(pv * f))
        return pv * grid.ihankel(grid.ifft_z(pk * grid.fft_z(grid.hankel(pv * f))))

    history = []
    check_every = 50
    res, mu, h_psi = residual_mu(psi, potential)
    history.append(res)
    iterations = 0

    # Stage 1: split-step imaginary time relaxes the overall shape quickly
    # but its fixed point carries an O(tau^2) bias, so it only needs to get
    # within ~1e-4 of the eigenstate.
    switch_res = max(tolerance, 1e-4)
    while res > switch_res and iterations < max_iterations // 2:
        for _ in range(check_every):
            psi = kinetic_decay(psi, 0.5 * tau)
            v = potential + g11 * np.abs(psi) ** 2
            psi *= np.exp(-(tau / hbar) * v)
            psi = kinetic_decay(psi, 0.5 * tau)
            psi *= np.sqrt(atom_number / grid.integrate(np.abs(psi) ** 2))
        iterations += check_every
        if not np.isfinite(psi).all():
            raise SolverError(f"groundstate iteration diverged after {iterations} steps")
        res, mu, h_psi = residual_mu(psi, potential)
        history.append(res)
        if res > switch_res and res > 0.98 * history[-2]:
            break  # stalled at the tau^2 floor; hand over to the refiner

    # Stage 2: preconditioned residual descent (inverse-iteration style)
    # converges to the discrete eigenstate without a step-size floor.
    beta = 1.0
    while res > tolerance and iterations < max_iterations:
        r_vec = h_psi - mu * psi
        shift = max(abs(mu), hbar * omega_scale)
        step = precond_apply(r_vec, np.abs(psi) ** 2, shift)
        trial = psi - beta * step
        trial *= np.sqrt(atom_number / grid.integrate(np.abs(trial) ** 2))
        new_res, new_mu, new_h = residual_mu(trial, potential)
        iterations += 1
        if new_res < res:
            psi, res, mu, h_psi = trial, new_res, new_mu, new_h
            beta = min(1.0, beta * 1.2)
            history.append(res)
        else:
            beta *= 0.5
            if beta < 1e-4:
                break
        if not np.isfinite(psi).all():
            raise SolverError(f"groundstate refinement diverged after {iterations} steps")
    if res > tolerance:
        raise SolverError(
            f"groundstate did not reach residual {tolerance:g} in "
            f"{iterations} iterations (residual history tail: "
            f"{[f'{r:.2e}' for r in history[-5:]]})"
        )

    zero = np.zeros_like(psi)
    state = FieldState2(psi, zero, grid, frame=Frame.COMOVING, time=0.0)
    gs_evolver = SplitStepEvolver(
        grid, mass, species.k0,
        ConstantCouplings(g11, couplings.g22, couplings.g12),
        potential=potential_exact, hbar=hbar,
    )
    energy = gs_evolver.energy(state)
    return GroundstateResult(
        state=state, mu=mu, energy=energy, iterations=iterations,
        residual=res, residual_history=history,
    )


def evolve_gpe(
    state: FieldState2,
    duration: float,
    dt: float,
    *,
    species: SpeciesParams,
    couplings=None,
    include_gravity: bool = False,
    gravity: float | None = None,
    constants=CONSTANTS,
) -> FieldState2:
    """Free (or freely-falling) mean-field evolution by Strang split-step.

    `couplings` follows the evolution-engine protocol (.at(t)); None means
    the 3D couplings derived from the species on a CylGrid, or the ideal gas
    on a Grid1D (time-dependent 1D couplings must be supplied explicitly).
    Gravity defaults to the freely-falling frame (no m g z term).
    """
    if state.norm2() > 0 and state.frame is not Frame.COMOVING:
        raise FrameError("two-component evolution requires the co-moving frame")
    if couplings is None:
        if isinstance(state.grid, CylGrid):
            couplings = ConstantCouplings.from_matrix(derive_couplings(species, constants))
        else:
            couplings = ConstantCouplings(0.0, 0.0, 0.0) if species.ideal else None
        if couplings is None:
            raise ValueError("Grid1D evolution of an interacting gas needs explicit 1D couplings")
    g_val = (gravity if gravity is not None else constants.gravity_default) if include_gravity else 0.0
    evolver = SplitStepEvolver(
        state.grid, species.mass, species.k0, couplings,
        gravity=g_val, hbar=constants.hbar,
    )
    assert_no_aliasing(state.grid, state.component1)
    return evolver.evolve(state, duration, dt)


def compute_chi(state: FieldState2, couplings, hbar: float = CONSTANTS.hbar) -> dict:
    """Collisional squeezing rates chi_ij = g_ij/(2 hbar) * int |u_i|^2 |u_j|^2.

    Modes u_i are the unit-normalised component fields; both components must
    be occupied. Returns chi11, chi22, chi12 and chi = chi11 + chi22 - 2 chi12.
    """
    n1 = state.norm1()
    n2 = state.norm2()
    if n1 <= 0 or n2 <= 0:
        raise ValueError("compute_chi needs both components occupied")
    g11, g22, g12 = couplings.at(state.time) if hasattr(couplings, "at") else (
        couplings.g11, couplings.g22, couplings.g12)
    d1 = np.abs(state.component1) ** 2 / n1
    d2 = np.abs(state.component2) ** 2 / n2
    grid = state.grid
    chi11 = 0.5 * g11 / hbar * float(grid.integrate(d1 * d1))
    chi22 = 0.5 * g22 / hbar * float(grid.integrate(d2 * d2))
    chi12 = 0.5 * g12 / hbar * float(grid.integrate(d1 * d2))
    return {"chi11": chi11, "chi22": chi22, "chi12": chi12,
            "chi": chi11 + chi22 - 2.0 * chi12}


def compute_overlap(state: FieldState2) -> complex:
    """Complex spatial-mode overlap Q = int u1* u2 dV of the normalised modes."""
    if state.frame is not Frame.COMOVING:
        raise FrameError("mode overlap is defined on the co-moving fields")
    n1 = state.norm1()
    n2 = state.norm2()
    if n1 <= 0 or n2 <= 0:
        raise ValueError("compute_overlap needs both components occupied")
    q = state.grid.integrate(np.conj(state.component1) * state.component2)
    return complex(q / np.sqrt(n1 * n2))


@dataclass
class SqueezingDiagnostics:
    """chi(t), lambda(t) and Q(t) sampled over the state-preparation stage."""

    times: np.ndarray
    chi: np.ndarray
    chi11: np.ndarray
    chi22: np.ndarray
    chi12: np.ndarray
    lam: np.ndarray
    q_complex: np.ndarray
    atom_number: float
    final_state: FieldState2 | None = None

    @property
    def lambda_total(self) -> float:
        return float(self.lam[-1])

    @property
    def q_final(self) -> complex:
        return complex(self.q_complex[-1])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "chi_per_s", "lambda", "q_abs", "q_phase_rad"])
            for t, c, l, q in zip(self.times, self.chi, self.lam, self.q_complex):
                w.writerow([f"{t:.17g}", f"{c:.17g}", f"{l:.17g}",
                            f"{abs(q):.17g}", f"{np.angle(q):.17g}"])


def run_squeezing_stage(
    species: SpeciesParams,
    trap: TrapConfig,
    atom_number: float,
    grid,
    t_oat: float,
    dt: float,
    sample_stride: int = 10,
    *,
    tolerance: float = 1e-8,
    initial: FieldState2 | None = None,
    couplings=None,
    keep_final_state: bool = True,
    constants=CONSTANTS,
) -> SqueezingDiagnostics:
    """Mean-field state-preparation stage with squeezing diagnostics.

    Applies a 50/50 pulse to the released groundstate, evolves for t_oat,
    applies a mirror pulse, evolves for t_oat again, and records chi(t),
    lambda(t) (trapezoidal accumulation of chi) and the mode overlap Q(t)
    every `sample_stride` steps. The two twisting periods separated by the
    mirror compose into a single twisting period, so lambda at 2 t_oat is the
    model parameter fed to the analytic minimum.

    On a CylGrid the groundstate and 3D couplings are built internally; a
    Grid1D run must supply `initial` and time-dependent 1D `couplings`
    (see wigner.effective_1d_initial_state).
    """
    if t_oat <= 0:
        raise ValueError("t_oat must be positive")
    if initial is None:
        if not isinstance(grid, CylGrid):
            raise ValueError(
                "run_squeezing_stage on a Grid1D needs an explicit effective-1D "
                "initial state and couplings"
            )
        gs = imaginary_time_groundstate(
            species, trap, atom_number, grid, tolerance, constants=constants
        )
        initial = gs.state
        couplings = ConstantCouplings.from_matrix(derive_couplings(species, constants))
    if couplings is None:
        raise ValueError("couplings must accompany an explicit initial state")

    evolver = SplitStepEvolver(
        grid, species.mass, species.k0, couplings, hbar=constants.hbar
    )
    assert_no_aliasing(grid, initial.component1)

    state = initial.copy()
    state.component1, state.component2 = mix_fields(
        state.component1, state.component2, np.pi / 2.0, -np.pi / 2.0
    )

    n_steps = max(1, int(round(t_oat / dt)))
    h = t_oat / n_steps
    times, chis, chi11s, chi22s, chi12s, qs = [], [], [], [], [], []

    def record(s):
        c = compute_chi(s, couplings, constants.hbar)
        times.append(s.time)
        chis.append(c["chi"])
        chi11s.append(c["chi11"])
        chi22s.append(c["chi22"])
        chi12s.append(c["chi12"])
        qs.append(compute_overlap(s))

    record(state)
    for half in range(2):
        for i in range(0, n_steps, sample_stride):
            block = min(sample_stride, n_steps - i)
            state = evolver.evolve(state, block * h, h)
            record(state)
        if half == 0:
            state.component1, state.component2 = mix_fields(
                state.component1, state.component2, np.pi, 0.0
            )

    times_arr = np.asarray(times)
    chi_arr = np.asarray(chis)
    lam = np.concatenate([[0.0], np.cumsum(
        0.5 * (chi_arr[1:] + chi_arr[:-1]) * np.diff(times_arr))])
    return SqueezingDiagnostics(
        times=times_arr,
        chi=chi_arr,
        chi11=np.asarray(chi11s),
        chi22=np.asarray(chi22s),
        chi12=np.asarray(chi12s),
        lam=lam,
        q_complex=np.asarray(qs),
        atom_number=atom_number,
        final_state=state if keep_final_state else None,
    )
