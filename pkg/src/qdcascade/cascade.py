"""Unidirectional composition of source dot, photonic channel and target dot.

The joint system lives on source x target (dim 12 for the neutral source,
16 for a charged source).  Each photon color is a one-way channel: the line
mode of color c carries the collective jump operator

    L_c = sqrt(eta_ch * Gamma_src,c) S_c + sqrt(Gamma2 * b_vertical) T_c

together with the cascade Hamiltonian (i/2) kappa_c (S_c^dag T_c - T_c^dag S_c),
kappa_c = sqrt(eta_ch * Gamma_src,c * Gamma2 * b_vertical).  This is the
standard cascaded-system generator: tracing out the target leaves the free
source dynamics exactly, while the target sees the source emission as an
input field.  Photons never appear as Fock-space degrees of freedom; they
exist only as jump records.

The colors are split by several linewidths, so keeping them as separate line
modes (a secular approximation in the color splitting) is both accurate and
exactly what a frequency-selective level scheme requires: a red photon can
only be absorbed on the red vertical transition.

A cheaper target-only representation drives the 4-level target with a
single-photon wavepacket through the Fock-state master-equation hierarchy;
it is used for oracle checks and for long background-dominated traces where
the joint system would be wasteful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import emitters
from .core import (
    IntegrationError,
    JumpChannel,
    LinearOp,
    OpenSystem,
    QuantumState,
    Tone,
    commutator_superop,
    dissipator_superop,
    evolve_counting,
    evolve_master,
    evolve_trajectory,
    ghz_to_angular,
    jump_superop,
    partial_trace,
)
from .emitters import (
    DOWN,
    G,
    TAG_HERALD,
    TAG_SOURCE_LOSS,
    TAG_VERT_BLUE,
    TAG_VERT_RED,
    T_DOWN,
    T_UP,
    UP,
    X_BLUE,
    X_RED,
    SourceDotSpec,
    TargetDotSpec,
    larmor_frame_matrix,
    source_level_energies,
    target_jump_channels,
)


@dataclass(frozen=True)
class ChannelSpec:
    """Photonic-channel and collection efficiencies, all in [0, 1].

    ``eta_ch`` is the full source-to-target power transmission including the
    spatial mode overlap at the target dot; it is what scales the cascade
    coupling.  The collection-side factors describe the herald path: first
    lens, polarizer, spectral filter, detector.  In the fully crossed
    polarizer configuration the diagonal (herald) photons are co-polarized
    with the polarizer axis, so ``eta_pol`` does not thin them; it expresses
    the suppression of the orthogonally polarized vertical photons, whose
    counterpart in the dynamics is the 50 % diagonal branching ratio.
    """

    eta_ch: float = 0.003 * 0.20
    eta_collect: float = 0.20
    eta_pol: float = 0.5
    eta_filter: float = 0.85
    eta_det: float = 0.80

    def __post_init__(self):
        for name in ("eta_ch", "eta_collect", "eta_pol", "eta_filter", "eta_det"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    def herald_detection_efficiency(self, elliptical_pol_factor: float = 1.0) -> float:
        """Probability that an emitted diagonal photon is detected."""
        return self.eta_collect * self.eta_filter * self.eta_det * elliptical_pol_factor


IDEAL_CHANNEL = None  # sentinel documented in build_cascade


@dataclass(frozen=True, eq=False)
class CascadeSystem:
    """Joint source x target open system plus index bookkeeping."""

    system: OpenSystem
    src_dim: int
    tgt_dim: int
    source_spec: object
    target_spec: TargetDotSpec
    channel: ChannelSpec
    source_kind: str  # 'neutral' | 'charged-entangler' | 'charged-transfer'
    source_ground_splitting_ghz: float = 0.0  # charged sources: Larmor rate of spin 1

    @property
    def dim(self) -> int:
        return self.src_dim * self.tgt_dim

    def joint_index(self, src_level: int, tgt_level: int) -> int:
        return src_level * self.tgt_dim + tgt_level

    def embed_source(self, op: np.ndarray) -> np.ndarray:
        return np.kron(op, np.eye(self.tgt_dim))

    def embed_target(self, op: np.ndarray) -> np.ndarray:
        return np.kron(np.eye(self.src_dim), op)

    def target_reduced(self, rho: np.ndarray) -> np.ndarray:
        return partial_trace(rho, (self.src_dim, self.tgt_dim), keep=1)

    def source_reduced(self, rho: np.ndarray) -> np.ndarray:
        return partial_trace(rho, (self.src_dim, self.tgt_dim), keep=0)


def _cascade_terms(s_ops, t_ops, src_rates, eta_ch, tgt_spec):
    """Collective jump operators and cascade Hamiltonian for the color modes.

    ``s_ops``/``t_ops`` are embedded lowering operators per color (same
    order), ``src_rates`` the source emission rates per color.
    """
    b_v = tgt_spec.branching[0]
    gamma_line = tgt_spec.gamma2 * b_v
    h_casc = np.zeros_like(s_ops[0])
    collective = []
    for s_op, t_op, g_src in zip(s_ops, t_ops, src_rates):
        kappa = np.sqrt(eta_ch * g_src * gamma_line)
        op = np.sqrt(eta_ch * g_src) * s_op + np.sqrt(gamma_line) * t_op
        collective.append(op)
        h_casc = h_casc + 0.5j * kappa * (
            s_op.conj().T @ t_op - t_op.conj().T @ s_op
        )
    return collective, h_casc


def build_cascade(
    src: SourceDotSpec,
    tgt: TargetDotSpec,
    ch: ChannelSpec | None = None,
    *,
    src_gate_v: float | None = None,
    tgt_detuning_ghz: float = 0.0,
    overhauser_shift_ghz: float = 0.0,
    source_tones: tuple[Tone, ...] = (),
) -> CascadeSystem:
    """Neutral-source cascade on dim 12 = 3 x 4.

    ``ch=None`` means the ideal channel (eta_ch = 1, unit collection), used
    for protocol-identity checks.  ``source_tones`` lets the schedule add
    laser drive tones acting on the source factor (already embedded or 3-dim;
    3-dim tones are embedded here).
    """
    if ch is None:
        ch = ChannelSpec(eta_ch=1.0, eta_collect=1.0, eta_pol=1.0, eta_filter=1.0, eta_det=1.0)
    src_dim, tgt_dim = 3, 4
    dim = src_dim * tgt_dim

    e_src = source_level_energies(src, src_gate_v)
    e_tgt = tgt.level_energies(overhauser_shift_ghz, tgt_detuning_ghz)
    h = np.kron(np.diag(e_src), np.eye(tgt_dim)) + np.kron(np.eye(src_dim), np.diag(e_tgt))
    h = h.astype(complex)

    def s_low(x_level):
        op = np.zeros((src_dim, src_dim), dtype=complex)
        op[G, x_level] = 1.0
        return np.kron(op, np.eye(tgt_dim))

    def t_low(upper, lower):
        op = np.zeros((tgt_dim, tgt_dim), dtype=complex)
        op[lower, upper] = 1.0
        return np.kron(np.eye(src_dim), op)

    s_ops = [s_low(X_BLUE), s_low(X_RED)]
    t_ops = [t_low(T_UP, UP), t_low(T_DOWN, DOWN)]
    collective, h_casc = _cascade_terms(s_ops, t_ops, [src.gamma1, src.gamma1], ch.eta_ch, tgt)
    h = h + h_casc

    jumps = [
        JumpChannel(LinearOp.from_matrix(collective[0]), 1.0, TAG_VERT_BLUE),
        JumpChannel(LinearOp.from_matrix(collective[1]), 1.0, TAG_VERT_RED),
    ]
    if ch.eta_ch < 1.0:
        loss = (1.0 - ch.eta_ch) * src.gamma1
        jumps.append(JumpChannel(LinearOp.from_matrix(s_ops[0]), loss, TAG_SOURCE_LOSS))
        jumps.append(JumpChannel(LinearOp.from_matrix(s_ops[1]), loss, TAG_SOURCE_LOSS))
    # Herald channel: both diagonal decays coherently in one detected mode.
    diag = np.zeros((tgt_dim, tgt_dim), dtype=complex)
    diag[DOWN, T_UP] = 1.0
    diag[UP, T_DOWN] = 1.0
    b_d = tgt.branching[1]
    jumps.append(
        JumpChannel(
            LinearOp.from_matrix(np.kron(np.eye(src_dim), diag)),
            tgt.gamma2 * b_d,
            TAG_HERALD,
            "herald",
        )
    )

    tones = []
    for tone in source_tones:
        op = tone.op.entries
        if op.shape[0] == src_dim:
            op = np.kron(op, np.eye(tgt_dim))
        tones.append(Tone(LinearOp.from_matrix(op), tone.amp, tone.nu, tone.phase))

    system = OpenSystem(LinearOp.from_matrix(h, hermitian=True), tuple(jumps), tuple(tones))
    return CascadeSystem(system, src_dim, tgt_dim, src, tgt, ch, "neutral")


# Charged-source level orders for the alternative protocols.
S_UP, S_DOWN, S_TRION = 0, 1, 2  # entangler source (3 levels)
S4_UP, S4_DOWN, S4_TRED, S4_TBLUE = 0, 1, 2, 3  # transfer source (4 levels)


def build_entangler_cascade(
    tgt: TargetDotSpec,
    ch: ChannelSpec | None = None,
    *,
    gamma1: float = 1.0 / 0.6,
) -> CascadeSystem:
    """Charged source emitting a photon whose color is entangled with its spin.

    A single source trion decays with equal rates to the two spin ground
    states; with the polarization erased, both photons travel in the line:
    blue with the source left in spin up, red with spin down.  Heralded
    absorption then leaves the two spins in (|up1 down2> + |down1 up2>)/sqrt(2).
    """
    if ch is None:
        ch = ChannelSpec(eta_ch=1.0, eta_collect=1.0, eta_pol=1.0, eta_filter=1.0, eta_det=1.0)
    src_dim, tgt_dim = 3, 4
    dv = ghz_to_angular(tgt.vertical_splitting_ghz)
    e_src = np.array([0.0, dv, dv / 2.0])
    e_tgt = tgt.level_energies()
    h = np.kron(np.diag(e_src), np.eye(tgt_dim)) + np.kron(np.eye(src_dim), np.diag(e_tgt))
    h = h.astype(complex)

    def s_low(lower):
        op = np.zeros((src_dim, src_dim), dtype=complex)
        op[lower, S_TRION] = 1.0
        return np.kron(op, np.eye(tgt_dim))

    def t_low(upper, lower):
        op = np.zeros((tgt_dim, tgt_dim), dtype=complex)
        op[lower, upper] = 1.0
        return np.kron(np.eye(src_dim), op)

    s_ops = [s_low(S_UP), s_low(S_DOWN)]  # blue, red
    t_ops = [t_low(T_UP, UP), t_low(T_DOWN, DOWN)]
    rates = [gamma1 / 2.0, gamma1 / 2.0]
    collective, h_casc = _cascade_terms(s_ops, t_ops, rates, ch.eta_ch, tgt)
    h = h + h_casc

    jumps = [
        JumpChannel(LinearOp.from_matrix(collective[0]), 1.0, TAG_VERT_BLUE),
        JumpChannel(LinearOp.from_matrix(collective[1]), 1.0, TAG_VERT_RED),
    ]
    if ch.eta_ch < 1.0:
        loss = (1.0 - ch.eta_ch)
        jumps.append(JumpChannel(LinearOp.from_matrix(s_ops[0]), loss * rates[0], TAG_SOURCE_LOSS))
        jumps.append(JumpChannel(LinearOp.from_matrix(s_ops[1]), loss * rates[1], TAG_SOURCE_LOSS))
    diag = np.zeros((tgt_dim, tgt_dim), dtype=complex)
    diag[DOWN, T_UP] = 1.0
    diag[UP, T_DOWN] = 1.0
    jumps.append(
        JumpChannel(
            LinearOp.from_matrix(np.kron(np.eye(src_dim), diag)),
            tgt.gamma2 * tgt.branching[1],
            TAG_HERALD,
            "herald",
        )
    )
    system = OpenSystem(LinearOp.from_matrix(h, hermitian=True), tuple(jumps))
    return CascadeSystem(
        system, src_dim, tgt_dim, None, tgt, ch, "charged-entangler",
        source_ground_splitting_ghz=tgt.vertical_splitting_ghz,
    )


def build_transfer_cascade(
    tgt: TargetDotSpec,
    ch: ChannelSpec | None = None,
    *,
    gamma1: float = 1.0 / 0.6,
    kept_branching: float = 0.5,
) -> CascadeSystem:
    """Charged source for spin-to-spin transfer (dim 16 = 4 x 4).

    Optical pi pulses map alpha |up1> + beta |down1> onto the two trions; the
    decay channels returning to |up1> are kept (spectrally filtered into the
    line), the ones to |down1> are rejected and appear only as loss.  The kept
    photons form alpha |blue> + beta |red>, which the target absorbs into
    alpha |down2> + beta |up2>.
    """
    if ch is None:
        ch = ChannelSpec(eta_ch=1.0, eta_collect=1.0, eta_pol=1.0, eta_filter=1.0, eta_det=1.0)
    src_dim, tgt_dim = 4, 4
    dv = ghz_to_angular(tgt.vertical_splitting_ghz)
    e_src = np.array([0.0, 0.0, -dv / 2.0, dv / 2.0])
    e_tgt = tgt.level_energies()
    h = np.kron(np.diag(e_src), np.eye(tgt_dim)) + np.kron(np.eye(src_dim), np.diag(e_tgt))
    h = h.astype(complex)

    def s_low(lower, upper):
        op = np.zeros((src_dim, src_dim), dtype=complex)
        op[lower, upper] = 1.0
        return np.kron(op, np.eye(tgt_dim))

    def t_low(upper, lower):
        op = np.zeros((tgt_dim, tgt_dim), dtype=complex)
        op[lower, upper] = 1.0
        return np.kron(np.eye(src_dim), op)

    s_ops = [s_low(S4_UP, S4_TBLUE), s_low(S4_UP, S4_TRED)]  # kept: blue, red
    t_ops = [t_low(T_UP, UP), t_low(T_DOWN, DOWN)]
    rates = [gamma1 * kept_branching, gamma1 * kept_branching]
    collective, h_casc = _cascade_terms(s_ops, t_ops, rates, ch.eta_ch, tgt)
    h = h + h_casc

    jumps = [
        JumpChannel(LinearOp.from_matrix(collective[0]), 1.0, TAG_VERT_BLUE),
        JumpChannel(LinearOp.from_matrix(collective[1]), 1.0, TAG_VERT_RED),
    ]
    if ch.eta_ch < 1.0:
        loss = 1.0 - ch.eta_ch
        jumps.append(JumpChannel(LinearOp.from_matrix(s_ops[0]), loss * rates[0], TAG_SOURCE_LOSS))
        jumps.append(JumpChannel(LinearOp.from_matrix(s_ops[1]), loss * rates[1], TAG_SOURCE_LOSS))
    grey = gamma1 * (1.0 - kept_branching)
    if grey > 0:
        jumps.append(JumpChannel(LinearOp.from_matrix(s_low(S4_DOWN, S4_TBLUE)), grey, "source-grey"))
        jumps.append(JumpChannel(LinearOp.from_matrix(s_low(S4_DOWN, S4_TRED)), grey, "source-grey"))
    diag = np.zeros((tgt_dim, tgt_dim), dtype=complex)
    diag[DOWN, T_UP] = 1.0
    diag[UP, T_DOWN] = 1.0
    jumps.append(
        JumpChannel(
            LinearOp.from_matrix(np.kron(np.eye(src_dim), diag)),
            tgt.gamma2 * tgt.branching[1],
            TAG_HERALD,
            "herald",
        )
    )
    system = OpenSystem(LinearOp.from_matrix(h, hermitian=True), tuple(jumps))
    return CascadeSystem(system, src_dim, tgt_dim, None, tgt, ch, "charged-transfer")


# -- heralded conditioning ----------------------------------------------------


class ConditioningError(RuntimeError):
    """Herald probability too small for the conditional state to exist."""


HERALD_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class HeraldedResult:
    """Conditional state given exactly one herald in the window."""

    spin: QuantumState  # 2x2 conditional spin state (target ground doublet)
    herald_probability: float
    joint_ground: np.ndarray | None = None  # source x target ground block (charged)
    n_trajectories: int | None = None
    n_selected: int | None = None
    spin_samples: np.ndarray | None = None  # per-trajectory 2x2 states


def _herald_conditional_master(system: OpenSystem, rho0, window, t_quiet=0.0):
    """Exactly-one-herald block via photon-counting master evolution."""
    w0, w1 = window
    if not 0.0 <= w0 < w1:
        raise ValueError("herald window must satisfy 0 <= start < end")
    rho = np.asarray(rho0, dtype=complex)
    if w0 > 0.0:
        states = evolve_master(QuantumState(system.dim, density=rho), system, [0.0, w0])
        rho = states[-1].density
    blocks = evolve_counting(system, rho, TAG_HERALD, [0.0, w1 - w0], max_count=2, phase_origin=w0)
    rho_one = blocks[-1][1]
    prob = float(np.trace(rho_one).real)
    return rho_one, prob


def _spin_block(rho_tgt: np.ndarray, delta_e_ghz: float, at_time: float, frame: str) -> np.ndarray:
    """Ground-doublet block of a 4-level target state, optionally rotated into
    the frame co-precessing with the nominal Larmor frequency."""
    block = rho_tgt[:2, :2].copy()
    tr = np.trace(block).real
    if tr <= 0:
        raise ConditioningError("conditional state has no ground-doublet weight")
    block = block / tr
    if frame == "rotating":
        u = larmor_frame_matrix(delta_e_ghz, at_time)
        block = u @ block @ u.conj().T
    elif frame != "lab":
        raise ValueError("frame must be 'rotating' or 'lab'")
    return block


def heralded_conditional_state(
    cascade: CascadeSystem,
    input_amplitudes,
    spin_prep: QuantumState,
    herald_window,
    *,
    method: str = "master",
    n_trajectories: int = 4000,
    rng=None,
    frame: str = "rotating",
) -> HeraldedResult:
    """Target spin state conditioned on exactly one herald in the window.

    ``input_amplitudes`` = (alpha, beta) weights of the red/blue photon
    components (the source is prepared in alpha |X_red> + beta |X_blue>);
    ``spin_prep`` is a 2-dim state on the target ground doublet.  The
    conditional state is reported at the window end, by default in the frame
    co-precessing at the nominal Larmor frequency so the deterministic phase
    is removed.
    """
    if cascade.source_kind != "neutral":
        raise ValueError("input-amplitude heralding applies to the neutral-source cascade")
    alpha, beta = complex(input_amplitudes[0]), complex(input_amplitudes[1])
    nrm = abs(alpha) ** 2 + abs(beta) ** 2
    if abs(nrm - 1.0) > 1e-9:
        raise ValueError("|alpha|^2 + |beta|^2 must be 1")
    if spin_prep.dim != 2:
        raise ValueError("spin_prep must live on the ground doublet (dim 2)")

    src_vec = np.zeros(3, dtype=complex)
    src_vec[X_RED] = alpha
    src_vec[X_BLUE] = beta
    tgt_vec4 = np.zeros(4, dtype=complex)
    w0, w1 = herald_window
    delta_e = cascade.target_spec.delta_e_ghz

    if method == "master":
        rho_tgt4 = np.zeros((4, 4), dtype=complex)
        rho_tgt4[:2, :2] = spin_prep.to_density()
        rho0 = np.kron(np.outer(src_vec, src_vec.conj()), rho_tgt4)
        rho_one, prob = _herald_conditional_master(cascade.system, rho0, herald_window)
        if prob < HERALD_PROB_FLOOR:
            raise ConditioningError(f"herald probability {prob:.3e} below {HERALD_PROB_FLOOR}")
        rho_tgt = cascade.target_reduced(rho_one / prob)
        spin = _spin_block(rho_tgt, delta_e, w1, frame)
        return HeraldedResult(QuantumState(2, density=spin), prob)

    if method != "trajectory":
        raise ValueError("method must be 'master' or 'trajectory'")
    if rng is None:
        raise ValueError("trajectory method requires an rng")
    if not spin_prep.is_pure:
        raise ValueError("trajectory method requires a pure spin_prep")
    tgt_vec4[:2] = spin_prep.amplitudes
    psi0 = QuantumState(cascade.dim, amplitudes=np.kron(src_vec, tgt_vec4))
    samples = []
    n_sel = 0
    for _ in range(n_trajectories):
        fin, jumps = evolve_trajectory(psi0, cascade.system, w1, rng)
        n_heralds = sum(1 for t, tag in jumps if tag == TAG_HERALD and w0 <= t <= w1)
        if n_heralds != 1:
            continue
        n_sel += 1
        rho_tgt = cascade.target_reduced(fin.to_density())
        samples.append(_spin_block(rho_tgt, delta_e, w1, frame))
    if n_sel == 0:
        raise ConditioningError("no trajectory produced exactly one herald in the window")
    samples = np.array(samples)
    spin_mean = samples.mean(axis=0)
    spin_mean = 0.5 * (spin_mean + spin_mean.conj().T)
    prob = n_sel / n_trajectories
    return HeraldedResult(
        QuantumState(2, density=spin_mean / np.trace(spin_mean).real),
        prob,
        n_trajectories=n_trajectories,
        n_selected=n_sel,
        spin_samples=samples,
    )


def heralded_two_spin_state(
    cascade: CascadeSystem,
    herald_window,
    *,
    source_prep: np.ndarray,
    target_prep: QuantumState,
    frame: str = "rotating",
):
    """Joint (source spin x target spin) state after one herald, for the
    charged-source protocols.  Returns (4x4 density matrix, herald prob)."""
    if cascade.source_kind == "neutral":
        raise ValueError("two-spin conditioning requires a charged-source cascade")
    if target_prep.dim != 2:
        raise ValueError("target_prep must live on the ground doublet (dim 2)")
    rho_tgt4 = np.zeros((4, 4), dtype=complex)
    rho_tgt4[:2, :2] = target_prep.to_density()
    src_vec = np.asarray(source_prep, dtype=complex)
    rho0 = np.kron(np.outer(src_vec, src_vec.conj()), rho_tgt4)
    rho_one, prob = _herald_conditional_master(cascade.system, rho0, herald_window)
    if prob < HERALD_PROB_FLOOR:
        raise ConditioningError(f"herald probability {prob:.3e} below {HERALD_PROB_FLOOR}")
    rho = rho_one / prob
    w1 = herald_window[1]
    if frame == "rotating":
        # Undo deterministic precession of both ground doublets.
        u_t = np.eye(4, dtype=complex)
        u_t[:2, :2] = larmor_frame_matrix(cascade.target_spec.delta_e_ghz, w1)
        u_s = np.eye(cascade.src_dim, dtype=complex)
        u_s[:2, :2] = larmor_frame_matrix(cascade.source_ground_splitting_ghz, w1)
        u = np.kron(u_s, u_t)
        rho = u @ rho @ u.conj().T
    # Keep the ground doublets of both factors.
    dim_t = cascade.tgt_dim
    idx = [s * dim_t + t for s in (0, 1) for t in (0, 1)]
    block = rho[np.ix_(idx, idx)]
    tr = np.trace(block).real
    if tr <= 0:
        raise ConditioningError("no ground-ground weight in conditional state")
    return block / tr, prob


# -- single-photon (Fock) input, target-only mode -----------------------------


def target_line_system(spec: TargetDotSpec, *, overhauser_shift_ghz=0.0, detuning_ghz=0.0) -> OpenSystem:
    """Target system with the two verticals merged into one line channel.

    Single-spatial-mode coupling for the Fock-input hierarchy: the line sees
    the coherent sum of both vertical dipoles, the diagonals stay the herald
    channel.
    """
    energies = spec.level_energies(overhauser_shift_ghz, detuning_ghz)
    h = np.diag(energies).astype(complex)
    b_v, b_d = spec.branching
    line = np.zeros((4, 4), dtype=complex)
    line[UP, T_UP] = 1.0
    line[DOWN, T_DOWN] = 1.0
    diag = np.zeros((4, 4), dtype=complex)
    diag[DOWN, T_UP] = 1.0
    diag[UP, T_DOWN] = 1.0
    jumps = (
        JumpChannel(LinearOp.from_matrix(line), spec.gamma2 * b_v, "line"),
        JumpChannel(LinearOp.from_matrix(diag), spec.gamma2 * b_d, TAG_HERALD, "herald"),
    )
    return OpenSystem(LinearOp.from_matrix(h, hermitian=True), jumps)


def fock_input_evolution(
    sys: OpenSystem,
    line_tag: str,
    xi,
    rho0: np.ndarray,
    t_grid,
    *,
    eta: float = 1.0,
    count_tag: str | None = None,
    atol=1e-10,
    rtol=1e-9,
):
    """Drive ``sys`` with a single-photon wavepacket in its ``line_tag`` mode.

    ``xi(t)`` is the complex wavepacket amplitude, normalized so that
    integral |xi|^2 dt = 1 over the support; ``eta`` is the probability that
    the photon is present at all (channel loss upstream).  Returns a dict
    with the physical state rho(t) and, when ``count_tag`` is given, the
    blocks resolved by the number of counted jumps (0, 1, >=2).

    Implements the two-level Fock hierarchy
        d rho_mn = L rho_mn + sqrt(m) xi [rho_{m-1,n}, L^dag]
                             + sqrt(n) xi* [L, rho_{m,n-1}]
    for m, n in {0, 1}.
    """
    line = [ch for ch in sys.jumps if ch.tag == line_tag]
    if len(line) != 1:
        raise ValueError(f"need exactly one channel tagged {line_tag!r}")
    l_op = line[0].scaled()
    dim = sys.dim

    lv = commutator_superop(sys.hamiltonian.entries)
    for chn in sys.jumps:
        lv = lv + dissipator_superop(chn)

    if count_tag is not None:
        counted = [chn for chn in sys.jumps if chn.tag == count_tag]
        if not counted:
            raise ValueError(f"no channel tagged {count_tag!r}")
        feed = sum(jump_superop(chn) for chn in counted)
        lv0 = lv - feed
        n_count = 3  # 0, 1, >=2 counted jumps
    else:
        feed = None
        lv0 = lv
        n_count = 1

    eye = np.eye(dim)
    # rho -> [rho, L^dag] and rho -> [L, rho] as superoperators.
    right_ldag = np.kron(eye, l_op.conj()) - np.kron(l_op.conj().T, eye)
    left_l = np.kron(l_op, eye) - np.kron(eye, l_op.T)

    nsq = dim * dim
    # Block layout per count level: (rho11, rho10, rho00); rho01 = rho10^dag.
    nblocks = 3 * n_count

    def unpack(y):
        return y.reshape(nblocks, nsq)

    def rhs(t, y):
        b = unpack(y)
        out = np.empty_like(b)
        x = xi(t)
        xc = np.conjugate(x)
        for c in range(n_count):
            r11, r10, r00 = b[3 * c], b[3 * c + 1], b[3 * c + 2]
            # rho01 = rho10^dag in vectorized form: conj of the transpose.
            r01 = np.conjugate(r10.reshape(dim, dim)).T.reshape(-1)
            d11 = lv0 @ r11 + x * (right_ldag @ r01) + xc * (left_l @ r10)
            d10 = lv0 @ r10 + x * (right_ldag @ r00)
            d00 = lv0 @ r00
            if feed is not None and c > 0:
                d11 = d11 + feed @ b[3 * (c - 1)]
                d10 = d10 + feed @ b[3 * (c - 1) + 1]
                d00 = d00 + feed @ b[3 * (c - 1) + 2]
            if feed is not None and c == n_count - 1:
                d11 = d11 + feed @ r11
                d10 = d10 + feed @ r10
                d00 = d00 + feed @ r00
            out[3 * c] = d11
            out[3 * c + 1] = d10
            out[3 * c + 2] = d00
        return out.reshape(-1)

    t_grid = np.asarray(t_grid, dtype=float)
    y0 = np.zeros(nblocks * nsq, dtype=complex)
    rho0 = np.asarray(rho0, dtype=complex).reshape(-1)
    y0[0:nsq] = rho0  # rho11
    y0[nsq : 2 * nsq] = 0.0  # rho10
    y0[2 * nsq : 3 * nsq] = rho0  # rho00

    sol = solve_ivp(rhs, (t_grid[0], t_grid[-1]), y0, t_eval=t_grid, method="DOP853", atol=atol, rtol=rtol)
    if not sol.success:
        raise IntegrationError(f"Fock-input integration failed: {sol.message}")

    result = {"t": t_grid}
    ys = sol.y.T.reshape(t_grid.size, nblocks, dim, dim)
    # Physical state: eta * rho11 + (1 - eta) * rho00, summed over count levels.
    phys = eta * ys[:, 0::3].sum(axis=1) + (1.0 - eta) * ys[:, 2::3].sum(axis=1)
    result["rho"] = phys
    if count_tag is not None:
        per_count = [
            eta * ys[:, 3 * c] + (1.0 - eta) * ys[:, 3 * c + 2] for c in range(n_count)
        ]
        result["count_blocks"] = per_count
    return result


def exponential_wavepacket(gamma: float, t_peak: float = 0.0, rising: bool = False):
    """Normalized exponential wavepacket at amplitude decay/rise rate gamma/2."""
    if rising:
        def xi(t):
            dt = t - t_peak
            return np.sqrt(gamma) * np.exp(gamma * dt / 2.0) if dt <= 0 else 0.0
    else:
        def xi(t):
            dt = t - t_peak
            return np.sqrt(gamma) * np.exp(-gamma * dt / 2.0) if dt >= 0 else 0.0
    return xi


# -- spectral-overlap herald-rate model ---------------------------------------


def lorentzian_absorption(omega, gamma2_rate):
    """Peak-normalized target absorption profile (angular frequency units)."""
    half = gamma2_rate / 2.0
    return half**2 / (np.asarray(omega) ** 2 + half**2)


def spectral_overlap(spectrum, tgt_offset, gamma2_rate):
    """Overlap of an emission spectrum object with the target Lorentzian.

    The coherent delta line contributes its weight at the frame origin; the
    incoherent density is integrated against the absorption profile.
    """
    coh = spectrum.coherent_weight * lorentzian_absorption(-tgt_offset, gamma2_rate)
    absorb = lorentzian_absorption(spectrum.omega - tgt_offset, gamma2_rate)
    inc = np.trapz(spectrum.density * absorb, spectrum.omega) / (2.0 * np.pi)
    return float(coh + inc)


def driven_source_spectrum(gamma1, rabi, detuning, omega_grid):
    """Resonance-fluorescence spectrum of one source color as a two-level dot.

    Frequencies are relative to the driving laser; ``detuning`` is laser
    minus transition in rad/ns.
    """
    from .spectra import emission_spectrum  # local import to avoid cycle at module load

    sm = LinearOp.ketbra(2, 0, 1)
    h = np.diag([0.0, -detuning]).astype(complex)
    h[0, 1] = rabi / 2.0
    h[1, 0] = rabi / 2.0
    sys = OpenSystem(LinearOp.from_matrix(h, hermitian=True), (JumpChannel(sm, gamma1, "decay"),))
    return emission_spectrum(sys, sm, omega_grid)


def scattering_rate(gamma1, rabi, detuning):
    """Total photon scattering rate of a driven two-level dot (1/ns)."""
    s = (rabi**2 / 2.0) / (detuning**2 + gamma1**2 / 4.0)
    return gamma1 * 0.5 * s / (1.0 + s)


def herald_rate_overlap_model(
    src: SourceDotSpec,
    tgt: TargetDotSpec,
    rabi_ghz: float,
    src_detuning_ghz: float,
    tgt_detuning_ghz: float = 0.0,
    *,
    omega_span: float = 40.0,
    n_omega: int = 1601,
):
    """Relative herald rate for cw two-color driving, per the spectral-overlap
    picture: each source color's emission spectrum is folded with the matched
    target vertical's absorption Lorentzian.

    The laser tracks the target verticals; detunings move the dots relative
    to it.  Returns a dimensionless overlap (normalize externally to a
    calibrated peak rate).
    """
    rabi = ghz_to_angular(rabi_ghz)
    d_src = ghz_to_angular(src_detuning_ghz)
    d_tgt = ghz_to_angular(tgt_detuning_ghz)
    grid = np.linspace(-omega_span, omega_span, n_omega)
    total = 0.0
    for _color in ("blue", "red"):
        spec = driven_source_spectrum(src.gamma1, rabi, -d_src, grid)
        total += spectral_overlap(spec, d_tgt - 0.0, tgt.gamma2)
    return total


# -- background model ----------------------------------------------------------


@dataclass(frozen=True)
class BackgroundSpec:
    """Background contributions to the herald detector.

    Rates in 1/s; the two-photon-excitation (TPE) tail launched by each
    picosecond pulse relaxes bi-exponentially and its amplitude scales with
    the squares of relative pulse power and detuning.
    """

    dark_rate: float = 1.0
    ambient_rate: float = 1.0
    eom_extinction: float = 1e6
    tpe_amplitude: float = 0.0  # 1/ns at pulse end
    tpe_short_tau: float = 0.6  # ns
    tpe_long_tau: float = 5.0  # ns
    tpe_power_exponent: int = 2
    tpe_detuning_exponent: int = 2

    def __post_init__(self):
        if self.dark_rate < 0 or self.ambient_rate < 0 or self.tpe_amplitude < 0:
            raise ValueError("background rates must be >= 0")
        if self.eom_extinction < 1:
            raise ValueError("extinction ratio must be >= 1")
        if self.tpe_short_tau <= 0 or self.tpe_long_tau <= 0:
            raise ValueError("TPE time constants must be > 0")


@dataclass(frozen=True)
class PulseWindow:
    """One optical pulse as the background model sees it.

    ``detected_rate`` is the in-window detected signal rate (1/ns) whose
    leakage floor is detected_rate / extinction outside the window;
    ``inband_background`` adds imperfect polarization suppression inside the
    window; ``tpe_scale`` multiplies the TPE tail amplitude (0 disables);
    ``rf_amplitude`` launches a plain radiative tail at the window end.
    """

    kind: str  # 'pump' | 'ps' | 'source'
    start: float
    duration: float
    detected_rate: float = 0.0
    inband_background: float = 0.0
    tpe_scale: float = 0.0
    rf_amplitude: float = 0.0
    power_rel: float = 1.0
    detuning_rel: float = 1.0


def expand_replicas(windows, native_period_ns: float, period_ns: float, suppression: float, max_copies: int = 4, kinds=("ps",)):
    """Replica copies of laser-synchronized pulses, attenuated and wrapped.

    Imperfect pulse picking leaves copies of each pulse of the given kinds at
    multiples of the native laser period; they wrap modulo the program period.
    """
    out = list(windows)
    for w in windows:
        if w.kind not in kinds:
            continue
        for k in range(1, max_copies + 1):
            start = (w.start + k * native_period_ns) % period_ns
            out.append(
                PulseWindow(
                    kind="ps",
                    start=start,
                    duration=w.duration,
                    detected_rate=w.detected_rate / suppression,
                    inband_background=w.inband_background / suppression,
                    tpe_scale=w.tpe_scale / suppression,
                    rf_amplitude=w.rf_amplitude / suppression,
                    power_rel=w.power_rel,
                    detuning_rel=w.detuning_rel,
                )
            )
    return tuple(out)


def background_intensity(bg: BackgroundSpec, windows, t, period_ns: float, *, include_signal=False):
    """Detector-side background intensity (1/ns) at time t within the period.

    Sums detector dark counts and ambient light, cw leakage through the
    finite-extinction modulators, per-window polarization leakage, and the
    radiative plus TPE tails launched at each pulse end (tails from the two
    preceding periods wrap around).
    """
    t = float(t) % period_ns
    rate = (bg.dark_rate + bg.ambient_rate) * 1e-9
    for w in windows:
        inside = w.start <= t < w.start + w.duration
        if inside:
            rate += w.inband_background
            if include_signal:
                rate += w.detected_rate
        # cw leakage floor from the off-state of the modulators
        rate += w.detected_rate / bg.eom_extinction
        tpe_amp = (
            bg.tpe_amplitude
            * w.tpe_scale
            * w.power_rel**bg.tpe_power_exponent
            * w.detuning_rel**bg.tpe_detuning_exponent
        )
        end = w.start + w.duration
        for wrap in (0.0, period_ns, 2.0 * period_ns):
            dt = t + wrap - end
            if dt < 0:
                continue
            if w.rf_amplitude:
                rate += w.rf_amplitude * np.exp(-dt / bg.tpe_short_tau)
            if tpe_amp:
                rate += tpe_amp * (
                    0.5 * np.exp(-dt / bg.tpe_short_tau) + 0.5 * np.exp(-dt / bg.tpe_long_tau)
                )
    return float(rate)


def sample_inhomogeneous(rng, intensity_fn, t0: float, t1: float, lam_max: float):
    """Thinning sampler for an inhomogeneous Poisson process on [t0, t1)."""
    if lam_max <= 0:
        return []
    times = []
    t = t0
    while True:
        t += rng.exponential(1.0 / lam_max)
        if t >= t1:
            break
        if rng.random() * lam_max <= intensity_fn(t):
            times.append(t)
    return times
