"""Pulse sequences, gravimetry protocols, and sensitivity estimation.

Pulses are instantaneous SU(2) rotations of the co-moving field pair; gravity
enters as relative phase imprints in the freely-falling frame. Three
protocols are provided:

 - plain_mz:        pi/2 - T - pi - T - pi/2 straight after release
 - expand_then_mz:  free expansion for 2 T_OAT, then the same MZ
 - quantum_enhanced: state-preparation interferometer (pi/2, T_OAT, pi,
   T_OAT) generating twisting, a squeezing-angle second pulse, then the MZ

The second-pulse angle defaults to the analytic optimum fed by a mean-field
diagnostics pre-pass; quadrature phases default to aligning the mean spin
(mid-fringe operation at the nominal gravity). Sensitivities come from
same-seed finite differences of the output J_z against a gravity probe.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import CONSTANTS, SpeciesParams, TrapConfig
from .evolution import SplitStepEvolver
from .fields import FieldState2, Frame, FrameError, mix_fields
from .grids import Grid1D, assert_no_aliasing
from .meanfield import compute_chi, compute_overlap
from .oat import OatParams, xi_min
from .wigner import (
    STREAM_DETECTION,
    STREAM_NUMBER,
    STREAM_THETA,
    NoiseSpec,
    SpinMomentEstimates,
    TrajectoryEnsemble,
    XiEstimate,
    effective_1d_initial_state,
    estimate_spin_moments,
    sample_initial_ensemble,
    spin_moment_samples,
    trajectory_rng,
    xi_from_ensemble,
)

__all__ = [
    "Beamsplitter",
    "FreeEvolve",
    "GravityPhase",
    "PulseSequence",
    "RunSpec",
    "ProtocolResult",
    "SensitivityResult",
    "apply_beamsplitter",
    "apply_gravity_phase",
    "build_sequence",
    "resolve_pulse_phases",
    "run_protocol",
    "run_tw_squeezing_stage",
    "sensitivity_finite_difference",
    "noise_sweep",
]

PROTOCOLS = ("plain_mz", "expand_then_mz", "quantum_enhanced")


# ---------------------------------------------------------------------------
# segments

@dataclass(frozen=True)
class Beamsplitter:
    theta: float
    phi: float
    label: str = ""


@dataclass(frozen=True)
class FreeEvolve:
    duration: float

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("segment durations must be >= 0")


@dataclass(frozen=True)
class GravityPhase:
    phi: float


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple

    @property
    def pulse_labels(self):
        return [s.label for s in self.segments if isinstance(s, Beamsplitter)]

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments if isinstance(s, FreeEvolve))


def apply_beamsplitter(obj, theta, phi):
    """Instantaneous pulse on a FieldState2 or TrajectoryEnsemble.

    theta/phi may be per-trajectory arrays for an ensemble. Requires the
    co-moving frame, where the momentum-kick factors are identity on the
    stored fields.
    """
    if obj.frame is not Frame.COMOVING:
        raise FrameError("beamsplitters act on co-moving fields")
    out = obj.copy()
    if isinstance(obj, TrajectoryEnsemble):
        out.comp1, out.comp2 = mix_fields(out.comp1, out.comp2, theta, phi)
    else:
        out.component1, out.component2 = mix_fields(
            out.component1, out.component2, theta, phi
        )
    return out


def apply_gravity_phase(obj, phi: float):
    """Relative phase imprint: Phi1 -> Phi1 e^{-i phi/2}, Phi2 -> Phi2 e^{+i phi/2}."""
    out = obj.copy()
    f1 = np.exp(-0.5j * phi)
    f2 = np.exp(+0.5j * phi)
    if isinstance(obj, TrajectoryEnsemble):
        out.comp1 *= f1
        out.comp2 *= f2
    else:
        out.component1 *= f1
        out.component2 *= f2
    return out


# ---------------------------------------------------------------------------
# run specification

@dataclass(frozen=True)
class RunSpec:
    """Everything one protocol run needs besides the protocol name."""

    species: SpeciesParams
    trap: TrapConfig
    atom_number: float
    grid: Grid1D
    t_oat: float
    t_interrogation: float
    dt_fine: float = 2.5e-5
    dt_coarse: float = 2.5e-4
    t_fine_end: float | None = None     # default: max(2 t_oat, 20 ms)
    bs2_theta: float | str = "auto"
    bs2_phi: float | str = "auto"
    g_nominal: float = 0.0
    noise: NoiseSpec = NoiseSpec()
    n_traj: int = 1000
    seed_root: int = 20260809
    batch_size: int = 256
    workers: int = 1
    gs_tolerance: float = 1e-8
    n_radial: int = 64

    @property
    def fine_end(self) -> float:
        return self.t_fine_end if self.t_fine_end is not None else max(
            2.0 * self.t_oat, 0.02)


def _protocol_duration(protocol: str, spec: RunSpec) -> float:
    if protocol == "plain_mz":
        return 2.0 * (spec.t_interrogation + spec.t_oat)
    return 2.0 * spec.t_oat + 2.0 * spec.t_interrogation


def build_sequence(protocol: str, spec: RunSpec, phases: dict, gravity: float) -> PulseSequence:
    """Concrete segment list for one protocol at a given true gravity."""
    k0 = spec.species.k0
    t_oat, t_int = spec.t_oat, spec.t_interrogation
    if protocol == "quantum_enhanced":
        segs = (
            Beamsplitter(np.pi / 2.0, -np.pi / 2.0, "BS1"),
            FreeEvolve(t_oat),
            Beamsplitter(np.pi, 0.0, "M1"),
            FreeEvolve(t_oat),
            GravityPhase(k0 * gravity * t_oat**2),
            Beamsplitter(phases["bs2_theta"], phases["bs2_phi"], "BS2"),
            FreeEvolve(t_int),
            Beamsplitter(np.pi, 0.0, "M2"),
            FreeEvolve(t_int),
            GravityPhase(k0 * gravity * t_int**2),
            Beamsplitter(-np.pi / 2.0, phases["bs3_phi"], "BS3"),
        )
    elif protocol in ("plain_mz", "expand_then_mz"):
        t_mz = t_int + t_oat if protocol == "plain_mz" else t_int
        prefix = () if protocol == "plain_mz" else (FreeEvolve(2.0 * t_oat),)
        segs = prefix + (
            Beamsplitter(np.pi / 2.0, -np.pi / 2.0, "BS1"),
            FreeEvolve(t_mz),
            Beamsplitter(np.pi, 0.0, "M1"),
            FreeEvolve(t_mz),
            GravityPhase(k0 * gravity * t_mz**2),
            Beamsplitter(-np.pi / 2.0, phases["bs3_phi"], "BS3"),
        )
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    return PulseSequence(segs)


# ---------------------------------------------------------------------------
# executors

class _Engine:
    """Shared evolution context: initial state, couplings, evolver factory."""

    def __init__(self, spec: RunSpec, protocol: str, constants=CONSTANTS):
        self.spec = spec
        self.constants = constants
        duration = _protocol_duration(protocol, spec)
        self.state0, self.couplings, self.scaling = effective_1d_initial_state(
            spec.species, spec.trap, spec.atom_number, spec.grid,
            duration * 1.02 + 1e-4,
            n_radial=spec.n_radial, gs_tolerance=spec.gs_tolerance,
            constants=constants,
        )
        assert_no_aliasing(spec.grid, self.state0.component1)

    def evolver(self, wigner: bool) -> SplitStepEvolver:
        return SplitStepEvolver(
            self.spec.grid, self.spec.species.mass, self.spec.species.k0,
            self.couplings, wigner=wigner, hbar=self.constants.hbar,
        )

    def evolve_span(self, evolver, comp1, comp2, t0, duration, frame):
        """Fine steps early (dense, interacting cloud), coarse steps later."""
        spec = self.spec
        t_switch = spec.fine_end
        if duration <= 0:
            return t0
        t = t0
        if t < t_switch:
            span = min(duration, t_switch - t)
            evolver.evolve_arrays(comp1, comp2, span, spec.dt_fine, frame=frame, t_start=t)
            t += span
        remaining = t0 + duration - t
        if remaining > 0:
            evolver.evolve_arrays(comp1, comp2, remaining, spec.dt_coarse, frame=frame, t_start=t)
        return t0 + duration


def _run_meanfield_segments(engine: _Engine, segments, *, stop_before=None,
                            record_chi=False):
    """Mean-field pass; optionally stop just before a labelled pulse.

    Returns (state, lambda_total, q_complex) where the diagnostics are only
    accumulated when record_chi is set (trapezoidal in the chi samples taken
    at every evolution sub-block boundary).
    """
    spec = engine.spec
    evolver = engine.evolver(wigner=False)
    state = engine.state0.copy()
    lam = 0.0
    last = None  # (t, chi)

    def chi_sample(s):
        nonlocal lam, last
        c = compute_chi(s, engine.couplings, engine.constants.hbar)["chi"]
        if last is not None:
            lam += 0.5 * (c + last[1]) * (s.time - last[0])
        last = (s.time, c)

    for seg in segments:
        if isinstance(seg, Beamsplitter):
            if stop_before is not None and seg.label == stop_before:
                return state, lam, (compute_overlap(state) if record_chi else None)
            state = apply_beamsplitter(state, seg.theta, seg.phi)
            if record_chi and state.norm2() > 1e-12 and state.norm1() > 1e-12:
                last = None
                chi_sample(state)
        elif isinstance(seg, GravityPhase):
            state = apply_gravity_phase(state, seg.phi)
        else:
            if record_chi and last is not None:
                # sample chi on a stride through the segment
                n_blocks = max(1, int(round(seg.duration / max(spec.dt_fine * 20, seg.duration / 50))))
                block = seg.duration / n_blocks
                for _ in range(n_blocks):
                    engine.evolve_span(
                        evolver, state.component1, state.component2,
                        state.time, block, state.frame)
                    state.time += block
                    chi_sample(state)
            else:
                engine.evolve_span(
                    evolver, state.component1, state.component2,
                    state.time, seg.duration, state.frame)
                state.time += seg.duration
    return state, lam, (compute_overlap(state) if record_chi else None)


def resolve_pulse_phases(protocol: str, spec: RunSpec, engine: _Engine | None = None,
                         constants=CONSTANTS) -> dict:
    """Fill the auto pulse parameters with a mean-field pre-pass at g_nominal.

    quantum_enhanced: the second-pulse phase follows the mean-spin azimuth at
    2 T_OAT (phi' = atan2(-<Jy>, <Jx>), equal to -arg Q), its angle follows
    the analytic squeezing optimum fed with the accumulated (lambda, Q), and
    the closing phase applies the compensation rule
    phi = -k0 g T_OAT^2 + phi', phi_bs3 = -k0 g (T^2 - T_OAT^2) - phi'.
    MZ protocols: the closing phase cancels the mean-spin azimuth before the
    final pulse (mid-fringe operation).
    """
    engine = engine or _Engine(spec, protocol, constants)
    k0 = spec.species.k0
    g0 = spec.g_nominal
    phases = {"bs2_theta": 0.0, "bs2_phi": 0.0, "bs3_phi": 0.0}
    if protocol == "quantum_enhanced":
        need_auto = spec.bs2_theta == "auto" or spec.bs2_phi == "auto"
        placeholder = dict(phases)
        pre = build_sequence(protocol, spec, placeholder, g0)
        state, lam, q = _run_meanfield_segments(
            engine, pre.segments, stop_before="BS2", record_chi=need_auto)
        est = spin_moment_samples_like(state)
        phi_prime = float(np.arctan2(-est[1], est[0]))
        if spec.bs2_theta == "auto":
            pred = xi_min(OatParams(spec.atom_number, max(lam, 0.0), q))
            theta2 = pred.theta_sq
        else:
            theta2 = float(spec.bs2_theta)
        if spec.bs2_phi != "auto":
            phi_prime = float(spec.bs2_phi)
        phases["bs2_theta"] = theta2
        phases["bs2_phi"] = -k0 * g0 * spec.t_oat**2 + phi_prime
        phases["bs3_phi"] = (
            -k0 * g0 * (spec.t_interrogation**2 - spec.t_oat**2) - phi_prime
        )
        phases["phi_prime"] = phi_prime
        phases["lambda_meanfield"] = lam
        phases["q_meanfield"] = q if q is not None else complex("nan")
    else:
        placeholder = dict(phases)
        pre = build_sequence(protocol, spec, placeholder, g0)
        state, _, _ = _run_meanfield_segments(engine, pre.segments, stop_before="BS3")
        est = spin_moment_samples_like(state)
        phases["bs3_phi"] = float(-np.arctan2(est[1], est[0]))
        phases["fringe_azimuth"] = float(np.arctan2(est[1], est[0]))
    return phases


def spin_moment_samples_like(state: FieldState2) -> np.ndarray:
    """(jx, jy, jz, n) of a single mean field."""
    grid = state.grid
    cross = complex(grid.integrate(np.conj(state.component1) * state.component2))
    n1, n2 = state.norm1(), state.norm2()
    return np.array([cross.real, cross.imag, 0.5 * (n1 - n2), n1 + n2])


@dataclass
class ProtocolResult:
    protocol: str
    estimates: SpinMomentEstimates | None
    meanfield_moments: np.ndarray | None
    phases: dict
    gravity: float
    table: np.ndarray | None
    spec: RunSpec


def _tw_batch_table(engine: _Engine, segments, spec: RunSpec, j0: int, j1: int,
                    detection: str) -> np.ndarray:
    """Evolve trajectories [j0, j1) through the sequence; per-trajectory table."""
    noise = spec.noise
    n_batch = j1 - j0
    idx = np.arange(j0, j1)
    amp = None
    if noise.sigma_n_rel > 0:
        draws = np.array([
            trajectory_rng(spec.seed_root, int(j), STREAM_NUMBER).standard_normal()
            for j in idx
        ])
        amp = np.sqrt(np.maximum(1.0 + noise.sigma_n_rel * draws, 0.0))
    dtheta = None
    if noise.sigma_theta > 0:
        dtheta = noise.sigma_theta * np.array([
            trajectory_rng(spec.seed_root, int(j), STREAM_THETA).standard_normal()
            for j in idx
        ])
    ens = sample_initial_ensemble(
        engine.state0, n_batch, spec.seed_root, traj_start=j0, amplitude_scale=amp
    )
    evolver = engine.evolver(wigner=True)
    for seg in segments:
        if isinstance(seg, Beamsplitter):
            theta = seg.theta if dtheta is None else seg.theta + dtheta
            ens.comp1, ens.comp2 = mix_fields(ens.comp1, ens.comp2, theta, seg.phi)
        elif isinstance(seg, GravityPhase):
            ens.comp1 *= np.exp(-0.5j * seg.phi)
            ens.comp2 *= np.exp(+0.5j * seg.phi)
        else:
            engine.evolve_span(
                evolver, ens.comp1, ens.comp2, ens.time, seg.duration, ens.frame)
            ens.time += seg.duration
    table = spin_moment_samples(ens)
    if detection == "smear" and noise.delta_n > 0:
        smear = (noise.delta_n / np.sqrt(2.0)) * np.array([
            trajectory_rng(spec.seed_root, int(j), STREAM_DETECTION).standard_normal()
            for j in idx
        ])
        table[:, 2] += smear
    return table


def _run_tw_table(engine: _Engine, segments, spec: RunSpec, detection: str) -> np.ndarray:
    """Full per-trajectory table, batched; byte-stable under any worker count."""
    bounds = [
        (j, min(j + spec.batch_size, spec.n_traj))
        for j in range(0, spec.n_traj, spec.batch_size)
    ]
    if spec.workers <= 1 or len(bounds) == 1:
        parts = [
            _tw_batch_table(engine, segments, spec, j0, j1, detection)
            for j0, j1 in bounds
        ]
    else:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            futures = [
                pool.submit(_tw_batch_table, engine, segments, spec, j0, j1, detection)
                for j0, j1 in bounds
            ]
            parts = [f.result() for f in futures]  # fixed batch order
    return np.concatenate(parts, axis=0)


def run_protocol(
    protocol: str,
    spec: RunSpec,
    engine_kind: str = "tw",
    *,
    gravity: float | None = None,
    phases: dict | None = None,
    detection: str = "none",
    engine: _Engine | None = None,
    constants=CONSTANTS,
) -> ProtocolResult:
    """Execute one protocol and return output pseudospin moments.

    `gravity` is the true acceleration (defaults to the nominal one); pulse
    phases are resolved at the nominal gravity unless supplied (pass the
    phases of a paired run to keep an apparatus configuration fixed).
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    engine = engine or _Engine(spec, protocol, constants)
    phases = phases if phases is not None else resolve_pulse_phases(
        protocol, spec, engine, constants)
    g_true = spec.g_nominal if gravity is None else gravity
    seq = build_sequence(protocol, spec, phases, g_true)
    if engine_kind == "meanfield":
        if not spec.noise.silent:
            raise ValueError("shot-to-shot noise needs the tw engine")
        state, _, _ = _run_meanfield_segments(engine, seq.segments)
        return ProtocolResult(
            protocol, None, spin_moment_samples_like(state), phases, g_true,
            None, spec,
        )
    if engine_kind != "tw":
        raise ValueError("engine must be 'meanfield' or 'tw'")
    if not spec.noise.silent and spec.n_traj < 100:
        raise ValueError("noise sweeps need at least 100 trajectories (shots)")
    table = _run_tw_table(engine, seq.segments, spec, detection)
    est = estimate_spin_moments((table, spec.grid.n_modes))
    return ProtocolResult(protocol, est, None, phases, g_true, table, spec)


def run_tw_squeezing_stage(
    spec: RunSpec,
    *,
    theta_scan: int = 1000,
    fixed_theta: float | None = None,
    fixed_phi: float | None = None,
    constants=CONSTANTS,
) -> tuple[XiEstimate, SpinMomentEstimates]:
    """TW state-preparation stage only (BS1, T_OAT, mirror, T_OAT) and xi.

    Shot-to-shot noise in `spec.noise` applies (pulse-angle offsets on BS1
    and the mirror, atom-number scaling, detection smearing of jz).
    """
    engine = _Engine(spec, "quantum_enhanced", constants)
    segments = (
        Beamsplitter(np.pi / 2.0, -np.pi / 2.0, "BS1"),
        FreeEvolve(spec.t_oat),
        Beamsplitter(np.pi, 0.0, "M1"),
        FreeEvolve(spec.t_oat),
    )
    table = _run_tw_table(
        engine, segments, spec,
        "smear" if spec.noise.delta_n > 0 else "none",
    )
    est = estimate_spin_moments((table, spec.grid.n_modes))
    xi = xi_from_ensemble(
        est, theta_scan, fixed_theta=fixed_theta, fixed_phi=fixed_phi)
    return xi, est


@dataclass
class SensitivityResult:
    delta_g: float
    delta_g_stderr: float
    slope: float
    slope_stderr: float
    output_mean: float
    output_variance: float
    detection_variance: float
    protocol: str
    noise: NoiseSpec
    probe: float
    phases: dict
    n_traj: int
    t_oat: float
    t_interrogation: float
    atom_number: float


def sensitivity_finite_difference(
    protocol: str,
    spec: RunSpec,
    delta_g_probe: float = 1e-6,
    *,
    detection: str = "inflate",
    engine: _Engine | None = None,
    constants=CONSTANTS,
) -> SensitivityResult:
    """Delta g from paired same-seed runs at g0 and g0 + probe.

    slope = (<Jz>(g0 + probe) - <Jz>(g0)) / probe and
    Delta g = sqrt(Var(Jz) + delta_n^2/2) / |slope|, the detection term
    entering as a deterministic variance inflation (detection='inflate',
    default) or by per-shot smearing of the measured Jz ('smear').
    Standard errors are delete-one jackknife over the trajectory pairs.
    """
    if not 1e-10 <= delta_g_probe <= 1e-4:
        raise ValueError("delta_g_probe must lie in [1e-10, 1e-4] m/s^2")
    engine = engine if engine is not None else _Engine(spec, protocol, constants)
    detect = detection if detection == "smear" else "none"
    base = run_protocol(protocol, spec, "tw", detection=detect, engine=engine,
                        constants=constants)
    shifted = run_protocol(
        protocol, spec, "tw", gravity=spec.g_nominal + delta_g_probe,
        phases=base.phases, detection=detect, engine=engine,
        constants=constants,
    )
    jz0 = base.table[:, 2]
    jz1 = shifted.table[:, 2]
    n = jz0.size
    modes = spec.grid.n_modes
    det_var = 0.5 * spec.noise.delta_n**2 if detection == "inflate" else 0.0

    def stats(mask_out=None):
        if mask_out is None:
            a, b = jz0, jz1
            m = n
            s1, s2 = a.sum(), (a * a).sum()
            sd = (b - a).sum()
        else:
            m = n - 1
            s1 = jz0.sum() - jz0
            s2 = (jz0**2).sum() - jz0**2
            sd = (jz1 - jz0).sum() - (jz1 - jz0)
        mean = s1 / m
        var = (s2 - m * mean**2) / (m - 1) - modes / 8.0
        slope = sd / m / delta_g_probe
        dg = np.sqrt(np.maximum(var + det_var, 0.0)) / np.abs(slope)
        return mean, var, slope, dg

    mean0, var0, slope, dg = stats()
    _, _, slopes_loo, dg_loo = stats(mask_out=True)
    se_dg = float(np.sqrt((n - 1) / n * ((dg_loo - dg_loo.mean()) ** 2).sum()))
    se_slope = float(np.sqrt((n - 1) / n * ((slopes_loo - slopes_loo.mean()) ** 2).sum()))
    return SensitivityResult(
        delta_g=float(dg), delta_g_stderr=se_dg,
        slope=float(slope), slope_stderr=se_slope,
        output_mean=float(mean0), output_variance=float(var0),
        detection_variance=float(det_var),
        protocol=protocol, noise=spec.noise, probe=delta_g_probe,
        phases=base.phases, n_traj=n,
        t_oat=spec.t_oat, t_interrogation=spec.t_interrogation,
        atom_number=spec.atom_number,
    )


def noise_sweep(
    protocol: str,
    spec: RunSpec,
    axis: str,
    values,
    *,
    delta_g_probe: float = 1e-6,
    constants=CONSTANTS,
) -> list[SensitivityResult]:
    """Sensitivity versus one noise magnitude.

    axis is one of 'sigma_theta', 'sigma_n_rel', 'delta_n'. Each simulated
    shot (trajectory) draws one offset applied to all pulses of that shot;
    the underlying standard-normal draws are keyed by trajectory index only,
    so sweep points share common random numbers and the zero point is
    bit-identical to a noiseless run.
    """
    if axis not in ("sigma_theta", "sigma_n_rel", "delta_n"):
        raise ValueError(f"unknown noise axis {axis!r}")
    engine = _Engine(spec, protocol, constants)
    out = []
    for v in values:
        noise = replace(spec.noise, **{axis: float(v)})
        spec_v = replace(spec, noise=noise)
        detection = "smear" if axis == "delta_n" else "inflate"
        out.append(sensitivity_finite_difference(
            protocol, spec_v, delta_g_probe, detection=detection,
            engine=engine, constants=constants,
        ))
    return out
