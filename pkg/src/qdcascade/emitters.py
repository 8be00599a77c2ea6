"""Level schemes and builders for the two quantum dots.

Source dot: neutral exciton, three levels {g, X_red, X_blue} with a
fine-structure splitting ``fss`` between the two exciton colors; both decay
radiatively at ``gamma1`` into color-tagged channels.

Target dot: single-electron charged, in-plane field (Voigt geometry), four
levels ordered (up, down, trion_down, trion_up).  The electron Zeeman
splitting ``delta_e`` separates the ground doublet, the hole splitting
``delta_h`` the trion doublet, and all four optical transitions are allowed
with equal strength:

* vertical transitions (spin preserved): trion_up -> up at +(delta_e+delta_h)/2
  and trion_down -> down at -(delta_e+delta_h)/2 relative to the frame origin;
* diagonal transitions (spin flipped): split by |delta_e - delta_h|, centered
  on the frame origin.

The rotating frame sits at the mean diagonal-transition frequency, so when
|delta_e| = |delta_h| the two diagonal photons are exactly degenerate.  They
are then emitted into one collective herald channel whose jump operator is
the coherent sum of the two diagonal lowering operators: a detector behind
the spectral filter cannot tell which transition fired, and conditioning must
not destroy the trion coherence.  Both diagonal transitions therefore carry
the single tag ``herald-diag``.

Per-shot nuclear-spin (Overhauser) noise enters as a Gaussian shift of the
ground-state splitting, drawn once per shot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import JumpChannel, LinearOp, OpenSystem, QuantumState, Tone, ghz_to_angular

MU_B_GHZ_PER_TESLA = 13.996  # Bohr magneton over Planck constant

# Target-dot level order.
UP, DOWN, T_DOWN, T_UP = 0, 1, 2, 3
# Source-dot level order.
G, X_RED, X_BLUE = 0, 1, 2

TAG_HERALD = "herald-diag"
TAG_VERT_BLUE = "loss-vertical-blue"
TAG_VERT_RED = "loss-vertical-red"
TAG_SOURCE_BLUE = "source-blue"
TAG_SOURCE_RED = "source-red"
TAG_SOURCE_LOSS = "source-loss"

TARGET_TRANSITIONS = ("vertical-blue", "vertical-red", "diagonal")


@dataclass(frozen=True)
class ZeemanParams:
    """In-plane g-factors and field; splittings in GHz via mu_B/h."""

    g_e: float
    g_h: float
    b_tesla: float

    def __post_init__(self):
        if self.b_tesla < 0:
            raise ValueError("magnetic field must be >= 0")

    @property
    def delta_e_ghz(self) -> float:
        return abs(self.g_e) * MU_B_GHZ_PER_TESLA * self.b_tesla

    @property
    def delta_h_ghz(self) -> float:
        return abs(self.g_h) * MU_B_GHZ_PER_TESLA * self.b_tesla


def diagonal_splitting(zeeman: ZeemanParams) -> float:
    """Frequency difference of the two diagonal transitions, GHz."""
    return abs(abs(zeeman.g_e) - abs(zeeman.g_h)) * MU_B_GHZ_PER_TESLA * zeeman.b_tesla


@dataclass(frozen=True)
class OverhauserModel:
    """Per-shot Gaussian shift (GHz, std sigma) of the electron splitting."""

    sigma_ghz: float = 0.0

    def __post_init__(self):
        if self.sigma_ghz < 0:
            raise ValueError("sigma must be >= 0")

    @property
    def t2_star_ns(self) -> float:
        """Gaussian free-induction decay time of the ensemble coherence."""
        if self.sigma_ghz == 0:
            return np.inf
        return np.sqrt(2.0) / (2.0 * np.pi * self.sigma_ghz)


def sample_overhauser(model: OverhauserModel, rng) -> float:
    """One shift draw in GHz (mean 0, sd sigma)."""
    if model.sigma_ghz == 0.0:
        return 0.0
    return float(rng.normal(0.0, model.sigma_ghz))


@dataclass(frozen=True)
class SourceDotSpec:
    """Neutral source dot: exciton doublet split by ``fss_ghz``.

    ``detuning_offset_ghz`` is the common shift of both source colors relative
    to the matching target vertical transitions; the gate voltage moves it
    linearly: detuning(V) = offset + slope * (V - v0).
    """

    fss_ghz: float = 4.9
    gamma1: float = 1.0 / 0.6  # radiative rate, 1/ns
    detuning_offset_ghz: float = 0.0
    stark_slope_ghz_per_v: float = 0.0
    v0: float = 0.0

    def __post_init__(self):
        if self.fss_ghz <= 0:
            raise ValueError("fine-structure splitting must be > 0")
        if self.gamma1 <= 0:
            raise ValueError("gamma1 must be > 0")

    def detuning_ghz(self, gate_v: float | None = None) -> float:
        if gate_v is None:
            return self.detuning_offset_ghz
        return self.detuning_offset_ghz + self.stark_slope_ghz_per_v * (gate_v - self.v0)


@dataclass(frozen=True)
class TargetDotSpec:
    """Charged target dot; splittings given directly in GHz or via Zeeman data.

    Defaults make the vertical splitting 4.9 GHz with degenerate diagonals
    (delta_e = delta_h).  ``branching`` is (vertical, diagonal) and must sum
    to 1; with equal oscillator strengths it is (0.5, 0.5).
    """

    delta_e_ghz: float = 2.45
    delta_h_ghz: float = 2.45
    gamma2: float = 1.0 / 0.6  # total trion decay rate, 1/ns
    branching: tuple[float, float] = (0.5, 0.5)
    stark_slope_ghz_per_v: float = 0.0
    v0: float = 0.0

    @classmethod
    def from_zeeman(cls, zeeman: ZeemanParams, **kwargs) -> "TargetDotSpec":
        return cls(delta_e_ghz=zeeman.delta_e_ghz, delta_h_ghz=zeeman.delta_h_ghz, **kwargs)

    def __post_init__(self):
        if self.gamma2 <= 0:
            raise ValueError("gamma2 must be > 0")
        if self.delta_e_ghz < 0 or self.delta_h_ghz < 0:
            raise ValueError("Zeeman splittings must be >= 0")
        if abs(sum(self.branching) - 1.0) > 1e-12:
            raise ValueError("branching fractions must sum to 1")
        if min(self.branching) < 0:
            raise ValueError("branching fractions must be >= 0")

    @property
    def vertical_splitting_ghz(self) -> float:
        return self.delta_e_ghz + self.delta_h_ghz

    @property
    def diagonal_splitting_ghz(self) -> float:
        return abs(self.delta_e_ghz - self.delta_h_ghz)

    def detuning_ghz(self, gate_v: float | None = None) -> float:
        if gate_v is None:
            return 0.0
        return self.stark_slope_ghz_per_v * (gate_v - self.v0)

    def level_energies(self, overhauser_shift_ghz: float = 0.0, detuning_ghz: float = 0.0):
        """Level energies in rad/ns, frame at the nominal diagonal mean.

        The Overhauser shift moves only the ground splitting (the trion has no
        unpaired electron); a gate detuning rigidly shifts the trion manifold.
        """
        de, dh = self.delta_e_ghz, self.delta_h_ghz
        e = np.array(
            [
                0.0,
                de + overhauser_shift_ghz,
                (de - dh) / 2.0 + detuning_ghz,
                (de + dh) / 2.0 + detuning_ghz,
            ]
        )
        return ghz_to_angular(e)

    def transitions(self, detuning_ghz: float = 0.0):
        """All four optical transitions: (label, tag, upper, lower, freq GHz, rate)."""
        b_v, b_d = self.branching
        half_v = self.vertical_splitting_ghz / 2.0
        half_d = (self.delta_h_ghz - self.delta_e_ghz) / 2.0
        return (
            ("vertical-blue", TAG_VERT_BLUE, T_UP, UP, half_v + detuning_ghz, self.gamma2 * b_v),
            ("vertical-red", TAG_VERT_RED, T_DOWN, DOWN, -half_v + detuning_ghz, self.gamma2 * b_v),
            ("diagonal-up", TAG_HERALD, T_UP, DOWN, half_d + detuning_ghz, self.gamma2 * b_d),
            ("diagonal-down", TAG_HERALD, T_DOWN, UP, -half_d + detuning_ghz, self.gamma2 * b_d),
        )


def target_jump_channels(spec: TargetDotSpec, herald_route: str | None = "herald"):
    """The target's decay channels: two color-tagged verticals plus one
    collective herald channel covering both (indistinguishable) diagonals."""
    b_v, b_d = spec.branching
    sigma_vb = LinearOp.ketbra(4, UP, T_UP)
    sigma_vr = LinearOp.ketbra(4, DOWN, T_DOWN)
    diag = np.zeros((4, 4), dtype=complex)
    diag[DOWN, T_UP] = 1.0
    diag[UP, T_DOWN] = 1.0
    channels = [
        JumpChannel(sigma_vb, spec.gamma2 * b_v, TAG_VERT_BLUE),
        JumpChannel(sigma_vr, spec.gamma2 * b_v, TAG_VERT_RED),
        JumpChannel(LinearOp.from_matrix(diag), spec.gamma2 * b_d, TAG_HERALD, herald_route),
    ]
    return channels


def _target_drive_term(transition: str):
    """Raising operator and nominal transition frequency label for a drive."""
    if transition == "vertical-blue":
        op = np.zeros((4, 4), dtype=complex)
        op[T_UP, UP] = 1.0
        return op, "vblue"
    if transition == "vertical-red":
        op = np.zeros((4, 4), dtype=complex)
        op[T_DOWN, DOWN] = 1.0
        return op, "vred"
    if transition == "diagonal":
        # One laser at the diagonal mean addresses both (degenerate) diagonals.
        op = np.zeros((4, 4), dtype=complex)
        op[T_UP, DOWN] = 1.0
        op[T_DOWN, UP] = 1.0
        return op, "diag"
    raise ValueError(f"unknown target transition {transition!r}; expected one of {TARGET_TRANSITIONS}")


def build_target_system(
    spec: TargetDotSpec,
    drives=(),
    *,
    overhauser_shift_ghz: float = 0.0,
    detuning_ghz: float = 0.0,
    herald_route: str | None = "herald",
) -> OpenSystem:
    """Four-level open system for the target dot.

    ``drives`` is a list of (transition, rabi GHz, laser detuning GHz).  With a
    single distinct laser frequency the system is built in that laser's frame
    (static Hamiltonian; ``frame`` records the trion-manifold offset); several
    distinct frequencies are kept as harmonic tones in the canonical frame.
    """
    energies = spec.level_energies(overhauser_shift_ghz, detuning_ghz)
    nominal = {
        "vblue": energies[T_UP] - energies[UP],
        "vred": energies[T_DOWN] - energies[DOWN],
        "diag": 0.5 * (energies[T_UP] - energies[DOWN] + energies[T_DOWN] - energies[UP]),
    }

    parsed = []
    for transition, rabi_ghz, laser_det_ghz in drives:
        op, key = _target_drive_term(transition)
        nu = nominal[key] + ghz_to_angular(laser_det_ghz)
        parsed.append((op, ghz_to_angular(rabi_ghz), nu))

    h = np.diag(energies).astype(complex)
    frame = None
    tones = []
    laser_freqs = sorted({round(nu, 12) for _, _, nu in parsed})
    if parsed and len(laser_freqs) == 1:
        # Single laser: shift the trion manifold into the laser frame.
        nu = parsed[0][2]
        h[T_DOWN, T_DOWN] -= nu
        h[T_UP, T_UP] -= nu
        for op, rabi, _ in parsed:
            h += 0.5 * rabi * (op + op.conj().T)
        frame = np.array([0.0, 0.0, nu, nu])
    else:
        for op, rabi, nu in parsed:
            tones.append(Tone(LinearOp.from_matrix(op), rabi, nu))

    return OpenSystem(
        LinearOp.from_matrix(h, hermitian=True),
        tuple(target_jump_channels(spec, herald_route)),
        tuple(tones),
        frame,
    )


@dataclass(frozen=True)
class TwoColorDrive:
    """CW or square-pulse two-color drive of the source excitons.

    Rabi amplitudes in GHz per color; each color addresses its own exciton
    and the common detuning follows the source's Stark shift.
    """

    rabi_blue_ghz: float = 0.0
    rabi_red_ghz: float = 0.0
    detuning_ghz: float = 0.0

    def __post_init__(self):
        if self.rabi_blue_ghz < 0 or self.rabi_red_ghz < 0:
            raise ValueError("drive amplitudes must be >= 0")


def source_level_energies(spec: SourceDotSpec, gate_v: float | None = None):
    """Source levels (g, X_red, X_blue) in rad/ns, canonical frame."""
    delta = spec.detuning_ghz(gate_v)
    half = spec.fss_ghz / 2.0
    return ghz_to_angular(np.array([0.0, delta - half, delta + half]))


def build_source_system(
    spec: SourceDotSpec,
    drive: TwoColorDrive | None = None,
    *,
    gate_v: float | None = None,
    detector_route: str | None = "direct",
) -> OpenSystem:
    """Three-level source system with color-tagged radiative channels.

    The two colors are split by several linewidths, so their emissions are
    dynamically independent channels; interference of the two colors at an
    unfiltered detector is handled by :func:`source_beat_operator`.
    """
    energies = source_level_energies(spec, gate_v)
    h = np.diag(energies).astype(complex)
    tones = []
    if drive is not None:
        if drive.rabi_blue_ghz:
            op = np.zeros((3, 3), dtype=complex)
            op[X_BLUE, G] = 1.0
            tones.append(Tone(LinearOp.from_matrix(op), ghz_to_angular(drive.rabi_blue_ghz), energies[X_BLUE] + ghz_to_angular(drive.detuning_ghz)))
        if drive.rabi_red_ghz:
            op = np.zeros((3, 3), dtype=complex)
            op[X_RED, G] = 1.0
            tones.append(Tone(LinearOp.from_matrix(op), ghz_to_angular(drive.rabi_red_ghz), energies[X_RED] + ghz_to_angular(drive.detuning_ghz)))
    jumps = (
        JumpChannel(LinearOp.ketbra(3, G, X_BLUE), spec.gamma1, TAG_SOURCE_BLUE, detector_route),
        JumpChannel(LinearOp.ketbra(3, G, X_RED), spec.gamma1, TAG_SOURCE_RED, detector_route),
    )
    return OpenSystem(LinearOp.from_matrix(h, hermitian=True), jumps, tuple(tones))


def source_beat_operator(dim: int = 3) -> LinearOp:
    """Field operator seen by a detector that does not resolve the two colors.

    The detected intensity Gamma1 * <B^dag B> carries the beat of the exciton
    coherence at the fine-structure splitting.
    """
    op = np.zeros((dim, dim), dtype=complex)
    op[G, X_BLUE] = 1.0
    op[G, X_RED] = 1.0
    return LinearOp.from_matrix(op)


# -- spin rotations -----------------------------------------------------------

_SIGMA = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

TRION_OCCUPATION_TOL = 1e-3


class SpinRotationError(RuntimeError):
    """Raised when a spin rotation is applied while the trion is occupied."""


def spin_rotation_matrix(angle: float, axis) -> np.ndarray:
    """SU(2) rotation exp(-i angle/2 n.sigma) on the ground doublet."""
    if isinstance(axis, str):
        n = {"x": (1, 0, 0), "y": (0, 1, 0), "z": (0, 0, 1)}[axis]
    else:
        n = np.asarray(axis, dtype=float)
        n = n / np.linalg.norm(n)
    nsigma = n[0] * _SIGMA["x"] + n[1] * _SIGMA["y"] + n[2] * _SIGMA["z"]
    return np.cos(angle / 2.0) * np.eye(2) - 1j * np.sin(angle / 2.0) * nsigma


def rotate_spin(state: QuantumState, angle: float, axis) -> QuantumState:
    """Instantaneous spin rotation on a 4-level target state.

    The rotation acts on the ground doublet only; applying it while the trion
    holds more than 1e-3 population is an error (the physical pulse is far
    detuned from the optical transitions and cannot address the trion).
    """
    if state.dim != 4:
        raise ValueError("rotate_spin expects a 4-level target state")
    trion_pop = state.population(T_DOWN) + state.population(T_UP)
    if trion_pop > TRION_OCCUPATION_TOL:
        raise SpinRotationError(f"trion occupied ({trion_pop:.2e}) at rotation time")
    u = np.eye(4, dtype=complex)
    u[:2, :2] = spin_rotation_matrix(angle, axis)
    if state.is_pure:
        return QuantumState(4, amplitudes=u @ state.amplitudes)
    return QuantumState(4, density=u @ state.density @ u.conj().T)


def larmor_frame_matrix(delta_e_ghz: float, t_ns: float) -> np.ndarray:
    """Unitary removing the deterministic ground-doublet precession at time t."""
    phase = ghz_to_angular(delta_e_ghz) * t_ns
    return np.diag([1.0, np.exp(1j * phase)]).astype(complex)
