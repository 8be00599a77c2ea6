"""Finite-dimensional open-quantum-system engine.

States live in Hilbert spaces of dimension <= 64 (in practice <= 16), stored
densely.  All Hamiltonians are expressed in a rotating frame in angular
frequency units (rad/ns); time is in nanoseconds throughout.  GHz values are
converted once at construction boundaries via :func:`ghz_to_angular`.

Dynamics come in two unravellings of the same Lindblad generator:

* :func:`evolve_master` integrates the density matrix with an adaptive
  embedded Runge-Kutta scheme.  The trace is a linear invariant of the
  Lindblad right-hand side, so it is preserved to roundoff regardless of the
  step controller.
* :func:`evolve_trajectory` samples Monte Carlo wavefunction trajectories:
  deterministic non-Hermitian evolution interrupted by jumps located by
  norm-threshold root finding, with each jump labelled by its channel tag.

Hamiltonians may carry optional harmonic drive tones,
``H(t) = H0 + sum_k (amp_k/2) (A_k e^{-i(nu_k t + phi_k)} + h.c.)``,
so that multi-frequency laser drives stay exact in a single rotating frame.
Systems without tones use fast matrix-exponential propagation; toned systems
fall back to direct ODE integration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

TWOPI = 2.0 * np.pi

# Tolerances fixed by contract.
PURE_NORM_TOL = 1e-9
HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-9
EIGENVALUE_FLOOR = -1e-9
# Per-step tolerances one decade tighter than the state invariants demand;
# looser settings let truncation error push density eigenvalues below the
# -1e-9 floor on 12-dim cascades.
ODE_ATOL = 1e-11
ODE_RTOL = 1e-10
JUMP_TIME_TOL = 1e-10


def ghz_to_angular(f_ghz):
    """Convert an ordinary frequency in GHz to rad/ns."""
    return TWOPI * np.asarray(f_ghz, dtype=float)


def angular_to_ghz(w):
    return np.asarray(w, dtype=float) / TWOPI


class DimensionMismatchError(ValueError):
    pass


class IntegrationError(RuntimeError):
    """Integrator failure; carries the time at which stepping broke down."""

    def __init__(self, message, t_fail=None):
        super().__init__(message)
        self.t_fail = t_fail


class NonUniqueSteadyStateError(RuntimeError):
    pass


class NormUnderflowError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure state vector or density matrix, discriminated by which field is set.

    Invariants are enforced at construction: unit norm for pure states,
    Hermiticity / unit trace / positivity (to tolerance) for density matrices.
    """

    dim: int
    amplitudes: np.ndarray | None = None
    density: np.ndarray | None = None

    def __post_init__(self):
        if (self.amplitudes is None) == (self.density is None):
            raise ValueError("exactly one of amplitudes/density must be set")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.amplitudes is not None:
            vec = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
            if vec.shape != (self.dim,):
                raise DimensionMismatchError("amplitude length != dim")
            if not np.all(np.isfinite(vec.view(float))):
                raise ValueError("non-finite amplitudes")
            norm = float(np.vdot(vec, vec).real)
            if abs(norm - 1.0) > PURE_NORM_TOL:
                raise ValueError(f"pure-state norm^2 {norm} outside 1 +/- {PURE_NORM_TOL}")
            object.__setattr__(self, "amplitudes", vec)
        else:
            mat = np.asarray(self.density, dtype=complex)
            if mat.shape != (self.dim, self.dim):
                raise DimensionMismatchError("density shape != (dim, dim)")
            if not np.all(np.isfinite(mat.view(float))):
                raise ValueError("non-finite density entries")
            if np.max(np.abs(mat - mat.conj().T)) > 1e-10:
                raise ValueError("density matrix not Hermitian")
            tr = float(np.trace(mat).real)
            if abs(tr - 1.0) > TRACE_TOL:
                raise ValueError(f"trace {tr} outside 1 +/- {TRACE_TOL}")
            if float(np.min(scipy.linalg.eigvalsh(mat))) < EIGENVALUE_FLOOR:
                raise ValueError("density matrix has eigenvalue below tolerance floor")
            object.__setattr__(self, "density", mat)

    # -- constructors -------------------------------------------------------

    @classmethod
    def pure(cls, amplitudes):
        vec = np.asarray(amplitudes, dtype=complex).reshape(-1)
        nrm = np.linalg.norm(vec)
        if nrm == 0:
            raise ValueError("zero vector is not a state")
        return cls(dim=vec.size, amplitudes=vec / nrm)

    @classmethod
    def mixed(cls, matrix):
        mat = np.asarray(matrix, dtype=complex)
        mat = 0.5 * (mat + mat.conj().T)
        return cls(dim=mat.shape[0], density=mat / np.trace(mat).real)

    @classmethod
    def basis(cls, dim, index):
        vec = np.zeros(dim, dtype=complex)
        vec[index] = 1.0
        return cls(dim=dim, amplitudes=vec)

    # -- views --------------------------------------------------------------

    @property
    def is_pure(self) -> bool:
        return self.amplitudes is not None

    def to_density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.amplitudes, self.amplitudes.conj())
        return self.density

    def population(self, index) -> float:
        if self.is_pure:
            return float(np.abs(self.amplitudes[index]) ** 2)
        return float(self.density[index, index].real)

    def populations(self) -> np.ndarray:
        if self.is_pure:
            return np.abs(self.amplitudes) ** 2
        return np.diag(self.density).real.copy()

    def expect(self, op) -> complex:
        mat = op.entries if isinstance(op, LinearOp) else np.asarray(op)
        if self.is_pure:
            return complex(np.vdot(self.amplitudes, mat @ self.amplitudes))
        return complex(np.trace(mat @ self.density))

    def fidelity(self, other: "QuantumState") -> float:
        """Uhlmann fidelity; reduces to |<a|b>|^2 for pure states."""
        if self.is_pure and other.is_pure:
            return float(np.abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)
        if self.is_pure:
            return float(np.real(np.vdot(self.amplitudes, other.to_density() @ self.amplitudes)))
        if other.is_pure:
            return other.fidelity(self)
        sq = scipy.linalg.sqrtm(self.to_density())
        inner = scipy.linalg.sqrtm(sq @ other.to_density() @ sq)
        return float(np.real(np.trace(inner)) ** 2)


@dataclass(frozen=True, eq=False)
class LinearOp:
    """Dense operator with an optional Hermiticity hint (checked when set)."""

    dim: int
    entries: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        mat = np.asarray(self.entries, dtype=complex)
        if mat.shape != (self.dim, self.dim):
            raise DimensionMismatchError("operator shape != (dim, dim)")
        if self.hermitian and np.max(np.abs(mat - mat.conj().T)) > HERMITICITY_TOL:
            raise ValueError("operator marked hermitian but is not (tol 1e-12)")
        object.__setattr__(self, "entries", mat)

    @classmethod
    def from_matrix(cls, matrix, hermitian=False):
        mat = np.asarray(matrix, dtype=complex)
        return cls(dim=mat.shape[0], entries=mat, hermitian=hermitian)

    @classmethod
    def ketbra(cls, dim, ket, bra):
        mat = np.zeros((dim, dim), dtype=complex)
        mat[ket, bra] = 1.0
        return cls(dim=dim, entries=mat)

    def dagger(self) -> "LinearOp":
        return LinearOp(self.dim, self.entries.conj().T, self.hermitian)


@dataclass(frozen=True, eq=False)
class JumpChannel:
    """Collapse channel: dissipator rate * D[operator], with a routing tag.

    ``tag`` labels what kind of photon the jump emits (e.g. ``herald-diag``);
    ``detector_route`` names the detector that can see it, if any.
    """

    operator: LinearOp
    rate: float
    tag: str
    detector_route: str | None = None

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"jump rate must be >= 0, got {self.rate}")

    def scaled(self) -> np.ndarray:
        """sqrt(rate) * operator, the Lindblad collapse operator."""
        return np.sqrt(self.rate) * self.operator.entries


@dataclass(frozen=True, eq=False)
class Tone:
    """Harmonic drive term (amp/2)(op e^{-i(nu t + phase)} + h.c.).

    ``op`` is the raising-side operator (it multiplies e^{-i nu t}); ``nu`` is
    the tone frequency in rad/ns relative to the frame the Hamiltonian is
    written in.  Tone phases reference global time, not segment-local time.
    """

    op: LinearOp
    amp: float
    nu: float
    phase: float = 0.0


@dataclass(frozen=True, eq=False)
class OpenSystem:
    """Hamiltonian (rad/ns, rotating frame) plus tagged jump channels.

    ``frame`` optionally records per-level frequency offsets of this system's
    rotating frame relative to the scenario's canonical frame; schedule
    compilation uses it to insert boundary phase corrections.
    """

    hamiltonian: LinearOp
    jumps: tuple[JumpChannel, ...] = ()
    tones: tuple[Tone, ...] = ()
    frame: np.ndarray | None = None

    def __post_init__(self):
        dim = self.hamiltonian.dim
        object.__setattr__(self, "jumps", tuple(self.jumps))
        object.__setattr__(self, "tones", tuple(self.tones))
        for ch in self.jumps:
            if ch.operator.dim != dim:
                raise DimensionMismatchError("jump operator dim != system dim")
        for tone in self.tones:
            if tone.op.dim != dim:
                raise DimensionMismatchError("tone operator dim != system dim")
        if self.frame is not None:
            fr = np.asarray(self.frame, dtype=float)
            if fr.shape != (dim,):
                raise DimensionMismatchError("frame offsets length != dim")
            object.__setattr__(self, "frame", fr)
        # Total decay operator must be positive semidefinite (it is a sum of
        # rate * J^dag J terms; the check guards sign errors upstream).
        total = self.total_decay_operator()
        if total.size and float(np.min(scipy.linalg.eigvalsh(total))) < -1e-10:
            raise ValueError("total decay operator not positive semidefinite")

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim

    @property
    def is_static(self) -> bool:
        return len(self.tones) == 0

    def total_decay_operator(self) -> np.ndarray:
        dim = self.dim
        total = np.zeros((dim, dim), dtype=complex)
        for ch in self.jumps:
            op = ch.operator.entries
            total += ch.rate * (op.conj().T @ op)
        return total

    def effective_hamiltonian(self) -> np.ndarray:
        """H - (i/2) sum_k rate_k J_k^dag J_k (static part only)."""
        return self.hamiltonian.entries - 0.5j * self.total_decay_operator()

    def hamiltonian_at(self, t: float) -> np.ndarray:
        h = self.hamiltonian.entries
        if self.tones:
            h = h.copy()
            for tone in self.tones:
                ph = np.exp(-1j * (tone.nu * t + tone.phase))
                h += 0.5 * tone.amp * (tone.op.entries * ph + tone.op.entries.conj().T * ph.conjugate())
        return h

    def with_jumps(self, jumps) -> "OpenSystem":
        return OpenSystem(self.hamiltonian, tuple(jumps), self.tones, self.frame)


# -- superoperator helpers ---------------------------------------------------


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Matrix of rho -> -i [h, rho] acting on column-stacked rho."""
    dim = h.shape[0]
    eye = np.eye(dim)
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def dissipator_superop(channel: JumpChannel) -> np.ndarray:
    op = channel.scaled()
    dim = op.shape[0]
    eye = np.eye(dim)
    gain = np.kron(op, op.conj())
    opdop = op.conj().T @ op
    loss = 0.5 * (np.kron(opdop, eye) + np.kron(eye, opdop.T))
    return gain - loss


def jump_superop(channel: JumpChannel) -> np.ndarray:
    """Gain part rate * J rho J^dag only (photon-counting decomposition)."""
    op = channel.scaled()
    return np.kron(op, op.conj())


def liouvillian_matrix(sys: OpenSystem) -> np.ndarray:
    """Static Liouvillian as a dim^2 x dim^2 matrix (row-major vec. convention).

    Raises if the system carries drive tones; time-dependent evolution must go
    through :func:`evolve_master`.
    """
    if not sys.is_static:
        raise ValueError("Liouvillian matrix requires a static system (no tones)")
    lv = commutator_superop(sys.hamiltonian.entries)
    for ch in sys.jumps:
        lv = lv + dissipator_superop(ch)
    return lv


def _vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(-1)


def _unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return v.reshape(dim, dim)


# -- master equation ---------------------------------------------------------


def _check_state_system(state: QuantumState, sys: OpenSystem):
    if state.dim != sys.dim:
        raise DimensionMismatchError(f"state dim {state.dim} != system dim {sys.dim}")


def _tone_superops(sys: OpenSystem):
    pairs = []
    for tone in sys.tones:
        pairs.append(
            (
                tone,
                commutator_superop(tone.op.entries),
                commutator_superop(tone.op.entries.conj().T),
            )
        )
    return pairs


def evolve_master(state, sys, t_grid, *, atol=ODE_ATOL, rtol=ODE_RTOL, phase_origin=0.0):
    """Integrate the Lindblad master equation, returning rho(t) on ``t_grid``.

    ``t_grid`` must be strictly increasing and start at 0.  Internal stepping
    is adaptive and independent of the grid spacing.  Returns a list of
    density-form :class:`QuantumState`.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1:
        raise ValueError("t_grid must be a 1-d list of times")
    if t_grid[0] != 0.0:
        raise ValueError("t_grid must start at 0")
    if t_grid.size > 1 and not np.all(np.diff(t_grid) > 0):
        raise ValueError("t_grid must be strictly increasing")
    _check_state_system(state, sys)

    rho0 = state.to_density().astype(complex)
    if not np.all(np.isfinite(rho0.view(float))):
        raise ValueError("non-finite initial state")

    if t_grid.size == 1:
        return [QuantumState(sys.dim, density=rho0)]

    lv = commutator_superop(sys.hamiltonian.entries)
    for ch in sys.jumps:
        lv = lv + dissipator_superop(ch)
    tone_ops = _tone_superops(sys)

    if tone_ops:
        def rhs(t, y):
            out = lv @ y
            for tone, sup_low, sup_raise in tone_ops:
                ph = np.exp(-1j * (tone.nu * (t + phase_origin) + tone.phase))
                out = out + (0.5 * tone.amp) * (ph * (sup_low @ y) + ph.conjugate() * (sup_raise @ y))
            return out
    else:
        def rhs(t, y):
            return lv @ y

    sol = solve_ivp(
        rhs,
        (t_grid[0], t_grid[-1]),
        _vec(rho0),
        t_eval=t_grid,
        method="DOP853",
        atol=atol,
        rtol=rtol,
    )
    if not sol.success:
        raise IntegrationError(
            f"master-equation integration failed: {sol.message}",
            t_fail=float(sol.t[-1]) if sol.t.size else 0.0,
        )

    out = []
    for k in range(t_grid.size):
        rho = _unvec(sol.y[:, k], sys.dim)
        rho = 0.5 * (rho + rho.conj().T)
        out.append(QuantumState(sys.dim, density=rho))
    return out


def evolve_counting(sys, rho0, count_tags, t_grid, max_count, *, atol=ODE_ATOL, rtol=ODE_RTOL, phase_origin=0.0):
    """Photon-number-resolved master evolution for the channels in ``count_tags``.

    Propagates the stack (rho_0, ..., rho_max) where rho_n is the unnormalized
    state conditioned on exactly n jumps of the counted channels so far; the
    top block absorbs further jumps so that sum_n Tr rho_n = 1.  Returns an
    array of shape (len(t_grid), max_count+1, dim, dim).
    """
    if isinstance(count_tags, str):
        count_tags = {count_tags}
    count_tags = set(count_tags)
    dim = sys.dim
    counted = [ch for ch in sys.jumps if ch.tag in count_tags]
    if not counted:
        raise ValueError(f"no jump channel with tag in {sorted(count_tags)}")

    lv = commutator_superop(sys.hamiltonian.entries)
    for ch in sys.jumps:
        lv = lv + dissipator_superop(ch)
    feed = np.zeros((dim * dim, dim * dim), dtype=complex)
    for ch in counted:
        feed = feed + jump_superop(ch)
    lv0 = lv - feed  # evolution without a counted jump
    tone_ops = _tone_superops(sys)

    nblk = max_count + 1
    y0 = np.zeros(nblk * dim * dim, dtype=complex)
    y0[: dim * dim] = _vec(np.asarray(rho0, dtype=complex))

    def rhs(t, y):
        blocks = y.reshape(nblk, dim * dim)
        out = np.empty_like(blocks)
        for n in range(nblk):
            val = lv0 @ blocks[n]
            if n > 0:
                val = val + feed @ blocks[n - 1]
            if n == nblk - 1:
                # top block keeps its own re-fed jumps so trace is conserved
                val = val + feed @ blocks[n]
            out[n] = val
        if tone_ops:
            for tone, sup_low, sup_raise in tone_ops:
                ph = np.exp(-1j * (tone.nu * (t + phase_origin) + tone.phase))
                for n in range(nblk):
                    out[n] += (0.5 * tone.amp) * (
                        ph * (sup_low @ blocks[n]) + ph.conjugate() * (sup_raise @ blocks[n])
                    )
        return out.reshape(-1)

    t_grid = np.asarray(t_grid, dtype=float)
    sol = solve_ivp(rhs, (t_grid[0], t_grid[-1]), y0, t_eval=t_grid, method="DOP853", atol=atol, rtol=rtol)
    if not sol.success:
        raise IntegrationError(f"counting integration failed: {sol.message}")
    res = sol.y.T.reshape(t_grid.size, nblk, dim, dim)
    return res


# -- steady state ------------------------------------------------------------


def steady_state(sys: OpenSystem, *, residual_tol=1e-9) -> QuantumState:
    """Unique null vector of the Liouvillian, normalized to unit trace.

    Raises :class:`NonUniqueSteadyStateError` when the numerical null space is
    degenerate (decoupled sectors, dark manifolds).
    """
    lv = liouvillian_matrix(sys)
    w, vr = scipy.linalg.eig(lv)
    scale = max(1.0, float(np.max(np.abs(w))))
    null_idx = np.where(np.abs(w) < 1e-8 * scale)[0]
    if null_idx.size == 0:
        null_idx = np.array([int(np.argmin(np.abs(w)))])
    if null_idx.size > 1:
        raise NonUniqueSteadyStateError(
            f"{null_idx.size} near-zero Liouvillian eigenvalues; steady state not unique"
        )
    rho = _unvec(vr[:, null_idx[0]], sys.dim)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-14:
        raise NonUniqueSteadyStateError("null vector is traceless; no physical steady state")
    rho = rho / tr
    residual = float(np.max(np.abs(_unvec(lv @ _vec(rho), sys.dim))))
    if residual > residual_tol:
        raise IntegrationError(f"steady-state residual {residual:.3e} exceeds {residual_tol}")
    # Clip roundoff-negative eigenvalues within the documented floor.
    evals = scipy.linalg.eigvalsh(rho)
    if float(np.min(evals)) < EIGENVALUE_FLOOR:
        raise NonUniqueSteadyStateError("steady-state candidate not positive")
    return QuantumState(sys.dim, density=rho)


# -- trajectories ------------------------------------------------------------


class _StaticPropagator:
    """Binary-subdivision matrix-exponential propagator for exp(-i H_eff t).

    Eigendecomposition is unusable here: cascaded generators are defective at
    matched rates (the t e^{-Gamma t/2} amplitude is a Jordan block).  Instead
    a ladder of exact propagators exp(G delta / 2^j) supports full steps of
    size delta plus dyadic refinement of any partial step, which doubles as
    the bisection for norm-threshold jump location (resolution below 1e-12 ns).
    """

    def __init__(self, sys: OpenSystem):
        self.gen = -1j * sys.effective_hamiltonian()
        self._ladders: dict[float, list[np.ndarray]] = {}

    def ladder(self, delta: float) -> list[np.ndarray]:
        key = float(delta)
        lad = self._ladders.get(key)
        if lad is None:
            depth = max(1, int(np.ceil(np.log2(max(delta, 1e-12) / 1e-12))))
            lad = [scipy.linalg.expm(self.gen * (delta / 2.0**j)) for j in range(depth + 1)]
            if len(self._ladders) > 64:
                self._ladders.clear()
            self._ladders[key] = lad
        return lad

    def refine(self, psi_left, r, width, delta, ladder):
        """March along [0, width] in dyadic fractions of delta while the norm
        stays above r.  Returns (state, dt, crossed): the unnormalized state
        and offset just before the crossing, or at ~width if none occurs."""
        resolution = delta / 2.0 ** (len(ladder) - 1)
        t_acc = 0.0
        psi = psi_left
        for j in range(1, len(ladder)):
            step = delta / 2.0**j
            if t_acc + step > width:
                continue
            cand = ladder[j] @ psi
            if float(np.vdot(cand, cand).real) > r:
                psi = cand
                t_acc += step
        crossed = (width - t_acc) > 2.0 * resolution
        return psi, t_acc, crossed


def _propagator_for(sys: OpenSystem) -> _StaticPropagator:
    # Cached on the system object itself so the lifetime is tied to it.
    prop = sys.__dict__.get("_propagator")
    if prop is None:
        prop = _StaticPropagator(sys)
        object.__setattr__(sys, "_propagator", prop)
    return prop


def _select_jump(sys: OpenSystem, psi: np.ndarray, rng) -> int:
    weights = np.empty(len(sys.jumps))
    for k, ch in enumerate(sys.jumps):
        weights[k] = ch.rate * float(np.vdot(ch.operator.entries @ psi, ch.operator.entries @ psi).real)
    total = weights.sum()
    if total <= 0.0:
        raise NormUnderflowError("norm decayed but no jump channel has weight; tolerance too loose")
    return int(rng.choice(len(weights), p=weights / total))


def _trajectory_static(psi, sys, duration, rng, n_grid=16):
    prop = _propagator_for(sys)
    delta = duration / n_grid
    ladder = prop.ladder(delta)
    p_full = ladder[0]
    jumps = []
    t = 0.0

    def do_jump(psi_pre_unnorm, t_jump):
        nrm = np.linalg.norm(psi_pre_unnorm)
        if nrm == 0.0:
            raise NormUnderflowError(f"state norm underflow at t={t_jump:.6f} ns")
        psi_pre = psi_pre_unnorm / nrm
        ch = sys.jumps[_select_jump(sys, psi_pre, rng)]
        psi_post = ch.operator.entries @ psi_pre
        jumps.append((t_jump, ch.tag))
        return psi_post / np.linalg.norm(psi_post)

    while t < duration:
        r = rng.random()
        if r <= 0.0:
            r = np.finfo(float).tiny
        jumped = False
        # Full-step march; the norm is monotone, so the first step ending at
        # or below the threshold brackets the crossing.
        while duration - t >= delta:
            cand = p_full @ psi
            if float(np.vdot(cand, cand).real) <= r:
                psi_ref, dt, _ = prop.refine(psi, r, delta, delta, ladder)
                t += dt
                psi = do_jump(psi_ref, t)
                jumped = True
                break
            psi = cand
            t += delta
        if jumped:
            continue
        width = duration - t
        if width <= 0:
            break
        psi_ref, dt, crossed = prop.refine(psi, r, width, delta, ladder)
        if crossed:
            t += dt
            psi = do_jump(psi_ref, t)
            continue
        psi = psi_ref
        break
    return psi / np.linalg.norm(psi), jumps


def _trajectory_ode(psi, sys, duration, rng, t_offset, phase_origin):
    heff_static = sys.effective_hamiltonian()
    tones = sys.tones

    def rhs(t, y):
        h = heff_static
        if tones:
            h = h.copy()
            for tone in tones:
                ph = np.exp(-1j * (tone.nu * (t + phase_origin) + tone.phase))
                h = h + 0.5 * tone.amp * (tone.op.entries * ph + tone.op.entries.conj().T * ph.conjugate())
        return -1j * (h @ y)

    jumps = []
    t = 0.0
    while t < duration:
        r = rng.random()
        if r <= 0.0:
            r = np.finfo(float).tiny

        def crossing(tt, y, r=r):
            return float(np.vdot(y, y).real) - r

        crossing.terminal = True
        crossing.direction = -1
        sol = solve_ivp(
            rhs,
            (t, duration),
            psi,
            method="DOP853",
            events=crossing,
            atol=1e-11,
            rtol=1e-10,
            dense_output=True,
        )
        if not sol.success:
            raise IntegrationError(f"trajectory integration failed: {sol.message}", t_fail=t)
        if sol.t_events[0].size == 0:
            psi = sol.y[:, -1]
            psi = psi / np.linalg.norm(psi)
            break
        t_jump = float(sol.t_events[0][0])
        psi_pre = sol.y_events[0][0]
        nrm = np.linalg.norm(psi_pre)
        if nrm == 0.0:
            raise NormUnderflowError(f"state norm underflow at t={t_jump:.6f} ns")
        psi_pre = psi_pre / nrm
        k_ch = _select_jump(sys, psi_pre, rng)
        ch = sys.jumps[k_ch]
        psi_post = ch.operator.entries @ psi_pre
        psi = psi_post / np.linalg.norm(psi_post)
        t = t_jump
        jumps.append((t, ch.tag))
    return psi, jumps


def evolve_trajectory(state, sys, duration, rng, *, phase_origin=0.0):
    """One Monte Carlo wavefunction trajectory over [0, duration].

    First-jump sampling against the norm decay of the non-Hermitian effective
    evolution; jump times are located to 1e-10 ns.  Returns the final
    normalized pure state and the ordered list of (time, channel tag) jumps.
    """
    if not state.is_pure:
        raise ValueError("trajectories require a pure initial state")
    if duration <= 0:
        raise ValueError("duration must be > 0")
    _check_state_system(state, sys)
    psi = state.amplitudes.copy()
    if sys.is_static:
        psi, jumps = _trajectory_static(psi, sys, duration, rng)
    else:
        psi, jumps = _trajectory_ode(psi, sys, duration, rng, 0.0, phase_origin)
    return QuantumState(sys.dim, amplitudes=psi / np.linalg.norm(psi)), jumps


def substream(master_seed: int, shot_index: int) -> np.random.Generator:
    """Independent per-shot RNG stream; merging in shot order is bit-stable."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(shot_index,)))


# -- composite-system helpers -------------------------------------------------


def kron_op(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


def partial_trace(rho: np.ndarray, dims: tuple[int, int], keep: int) -> np.ndarray:
    """Trace out one factor of a bipartite system (keep=0 left, keep=1 right)."""
    d0, d1 = dims
    r = rho.reshape(d0, d1, d0, d1)
    if keep == 0:
        return np.einsum("ikjk->ij", r)
    return np.einsum("kikj->ij", r)


def expectation(rho: np.ndarray, op: np.ndarray) -> complex:
    return complex(np.trace(op @ rho))


def channel_intensity(sys: OpenSystem, rho: np.ndarray, tags) -> float:
    """Instantaneous emission rate (1/ns) summed over channels with given tags."""
    if isinstance(tags, str):
        tags = {tags}
    tags = set(tags)
    rate = 0.0
    for ch in sys.jumps:
        if ch.tag in tags:
            op = ch.operator.entries
            rate += ch.rate * float(np.real(np.trace(op.conj().T @ op @ rho)))
    return rate
