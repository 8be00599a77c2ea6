"""Timed pulse programs compiled to piecewise-stationary schedules.

A program is an ordered set of segments on one period: spin-pump drives,
instantaneous spin rotations, source excitation pulses and waits.  Compilation
produces a contiguous cover of [0, period] where each interval carries one
OpenSystem (laser drives enter as harmonic tones referenced to the interval
start, so the canonical rotating frame is kept throughout and no boundary
phase corrections are needed), plus the list of instantaneous unitaries.

Shot execution draws a fresh nuclear-field shift per shot, runs one quantum
trajectory through the schedule, samples background events by thinning, and
emits (shot, time, tag, route) records.  Each shot uses the RNG substream
``substream(master_seed, shot)`` and shots are concatenated in index order,
so results are independent of any parallel evaluation strategy.

When ``alternate_combinations`` is set, the four combinations of input photon
color and readout pump transition cycle deterministically with period 4, so
each occurs floor(n/4) or ceil(n/4) times.  The pump of shot k+1 doubles as
the readout of shot k.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cascade import CascadeSystem, background_intensity, build_cascade, sample_inhomogeneous
from .core import (
    JumpChannel,
    LinearOp,
    OpenSystem,
    QuantumState,
    Tone,
    evolve_master,
    evolve_trajectory,
    ghz_to_angular,
    substream,
)
from .emitters import (
    DOWN,
    G,
    T_DOWN,
    T_UP,
    UP,
    X_BLUE,
    X_RED,
    SpinRotationError,
    TRION_OCCUPATION_TOL,
    sample_overhauser,
    spin_rotation_matrix,
)


@dataclass(frozen=True)
class SpinPump:
    """Resonant drive of one vertical transition, shelving the other spin."""

    start: float
    duration: float
    transition: str = "vertical-blue"
    rabi_ghz: float = 0.4
    detuning_ghz: float = 0.0

    @property
    def end(self):
        return self.start + self.duration


@dataclass(frozen=True)
class Rotate:
    """Instantaneous spin rotation (the physical pulse is ps-scale)."""

    at: float
    angle: float
    axis: str = "y"

    @property
    def start(self):
        return self.at

    @property
    def end(self):
        return self.at


@dataclass(frozen=True)
class SourcePulse:
    """Two-color excitation pulse of the source dot.

    ``amplitudes`` are the (red, blue) Rabi amplitudes in GHz; shot-level
    color alternation overrides them.  Shape 'square' is exact; 'exp' decays
    with time constant duration/3 and is compiled as a staircase.
    """

    start: float
    duration: float
    amplitudes: tuple[float, float] = (1.25, 1.25)
    shape: str = "square"
    detuning_ghz: float = 0.0

    @property
    def end(self):
        return self.start + self.duration


@dataclass(frozen=True)
class Wait:
    start: float
    duration: float

    @property
    def end(self):
        return self.start + self.duration


Segment = SpinPump | Rotate | SourcePulse | Wait


class ProgramError(ValueError):
    pass


@dataclass(frozen=True)
class PulseProgram:
    """Segments on one period plus shot bookkeeping and analysis windows."""

    segments: tuple
    period_ns: float
    n_shots: int
    herald_window: tuple[float, float]
    readout_window: tuple[float, float]
    alternate_combinations: bool = False

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.period_ns <= 0:
            raise ProgramError("period must be > 0")
        if self.n_shots < 0:
            raise ProgramError("n_shots must be >= 0")
        spans = []
        for seg in self.segments:
            if seg.start < 0:
                raise ProgramError("segment times must be >= 0")
            if seg.end > self.period_ns + 1e-12:
                raise ProgramError("period must cover the last segment")
            if not isinstance(seg, Rotate):
                if seg.duration <= 0:
                    raise ProgramError("segment durations must be > 0")
                spans.append((seg.start, seg.end, seg))
        spans.sort(key=lambda s: s[0])
        for (a0, a1, sa), (b0, b1, sb) in zip(spans, spans[1:]):
            if b0 < a1 - 1e-12:
                raise ProgramError(
                    f"overlapping drive segments: {type(sa).__name__}@{a0} and {type(sb).__name__}@{b0}"
                )
        for name, (w0, w1) in (("herald", self.herald_window), ("readout", self.readout_window)):
            if not (0 <= w0 < w1 <= self.period_ns):
                raise ProgramError(f"{name} window must lie within the period")


COMBINATIONS = (("red", "up"), ("blue", "up"), ("red", "down"), ("blue", "down"))


def shot_combination(prog: PulseProgram, shot: int):
    """(input color, readout spin) label of a shot under the round-robin."""
    if not prog.alternate_combinations:
        return None
    return COMBINATIONS[shot % 4]


@dataclass(frozen=True)
class CompiledSchedule:
    intervals: tuple  # (t0, t1, OpenSystem)
    unitaries: tuple  # (t, joint unitary ndarray)
    program: PulseProgram
    cascade: CascadeSystem

    def route_for(self, tag: str):
        for ch in self.cascade.system.jumps:
            if ch.tag == tag:
                return ch.detector_route
        return None


def _pump_tone(cascade: CascadeSystem, seg: SpinPump) -> Tone:
    tgt = cascade.target_spec
    energies = tgt.level_energies()
    if seg.transition == "vertical-blue":
        op4 = np.zeros((4, 4), dtype=complex)
        op4[T_UP, UP] = 1.0
        nu = energies[T_UP] - energies[UP]
    elif seg.transition == "vertical-red":
        op4 = np.zeros((4, 4), dtype=complex)
        op4[T_DOWN, DOWN] = 1.0
        nu = energies[T_DOWN] - energies[DOWN]
    else:
        raise ProgramError(f"unknown pump transition {seg.transition!r}")
    op = cascade.embed_target(op4)
    return Tone(LinearOp.from_matrix(op), ghz_to_angular(seg.rabi_ghz), nu + ghz_to_angular(seg.detuning_ghz))


def _source_tones(cascade: CascadeSystem, seg: SourcePulse, amplitudes) -> tuple[Tone, ...]:
    if cascade.source_kind != "neutral":
        raise ProgramError("source pulses apply to the neutral-source cascade")
    src = cascade.source_spec
    from .emitters import source_level_energies

    energies = source_level_energies(src)
    tones = []
    for level, amp in ((X_RED, amplitudes[0]), (X_BLUE, amplitudes[1])):
        if amp == 0:
            continue
        op3 = np.zeros((3, 3), dtype=complex)
        op3[level, G] = 1.0
        tones.append(
            Tone(
                LinearOp.from_matrix(cascade.embed_source(op3)),
                ghz_to_angular(amp),
                energies[level] + ghz_to_angular(seg.detuning_ghz),
            )
        )
    return tuple(tones)


def _rotation_unitary(cascade: CascadeSystem, seg: Rotate) -> np.ndarray:
    u4 = np.eye(4, dtype=complex)
    u4[:2, :2] = spin_rotation_matrix(seg.angle, seg.axis)
    return cascade.embed_target(u4)


EXP_SHAPE_STEPS = 8


def compile_program(
    prog: PulseProgram,
    cascade: CascadeSystem,
    *,
    input_color: str | None = None,
    pump_transition: str | None = None,
) -> CompiledSchedule:
    """Compile one period into stationary intervals plus instantaneous unitaries.

    ``input_color`` ('red'/'blue') overrides source-pulse amplitudes for the
    combination round-robin; ``pump_transition`` overrides every pump segment.
    """
    edges = {0.0, prog.period_ns}
    staircase = {}  # segment -> list of (t0, t1, scale)
    for seg in prog.segments:
        if isinstance(seg, Rotate):
            continue
        edges.add(seg.start)
        edges.add(seg.end)
        if isinstance(seg, SourcePulse) and seg.shape == "exp":
            tau = seg.duration / 3.0
            steps = []
            for k in range(EXP_SHAPE_STEPS):
                t0 = seg.start + seg.duration * k / EXP_SHAPE_STEPS
                t1 = seg.start + seg.duration * (k + 1) / EXP_SHAPE_STEPS
                tm = 0.5 * (t0 + t1)
                steps.append((t0, t1, float(np.exp(-(tm - seg.start) / tau))))
                edges.add(t0)
            staircase[seg] = steps
        elif isinstance(seg, SourcePulse) and seg.shape != "square":
            raise ProgramError(f"unknown source pulse shape {seg.shape!r}")
    cut = sorted(edges)

    intervals = []
    for t0, t1 in zip(cut, cut[1:]):
        if t1 - t0 <= 1e-12:
            continue
        tm = 0.5 * (t0 + t1)
        tones = []
        for seg in prog.segments:
            if isinstance(seg, Rotate) or not (seg.start <= tm < seg.end):
                continue
            if isinstance(seg, SpinPump):
                pump = seg if pump_transition is None else replace(seg, transition=pump_transition)
                tones.append(_pump_tone(cascade, pump))
            elif isinstance(seg, SourcePulse):
                amps = seg.amplitudes
                if input_color == "red":
                    amps = (max(seg.amplitudes), 0.0)
                elif input_color == "blue":
                    amps = (0.0, max(seg.amplitudes))
                if seg.shape == "exp":
                    scale = next(s for (a, b, s) in staircase[seg] if a <= tm < b)
                    amps = (amps[0] * scale, amps[1] * scale)
                tones.extend(_source_tones(cascade, seg, amps))
        base = cascade.system
        system = OpenSystem(base.hamiltonian, base.jumps, tuple(tones)) if tones else base
        intervals.append((t0, t1, system))

    unitaries = tuple(
        (seg.at, _rotation_unitary(cascade, seg)) for seg in prog.segments if isinstance(seg, Rotate)
    )
    return CompiledSchedule(tuple(intervals), unitaries, prog, cascade)


@dataclass(frozen=True)
class EmissionEvent:
    """One emitted photon or background event before detector modeling."""

    shot: int
    time_ns: float  # within the shot period
    tag: str
    route: str | None
    physical: bool = True


@dataclass(frozen=True)
class ShotRun:
    events: tuple
    labels: tuple  # per-shot (color, readout) or None
    program: PulseProgram


def _excited_population(state: QuantumState, cascade: CascadeSystem) -> float:
    pops = state.populations()
    excited = set()
    for s in range(cascade.src_dim):
        for t_lvl in (T_DOWN, T_UP):
            excited.add(cascade.joint_index(s, t_lvl))
    if cascade.source_kind == "neutral":
        for x in (X_RED, X_BLUE):
            for t_lvl in range(cascade.tgt_dim):
                excited.add(cascade.joint_index(x, t_lvl))
    return float(sum(pops[i] for i in excited))


def run_trajectory_shot(schedule: CompiledSchedule, psi0: QuantumState, rng):
    """One trajectory through the compiled schedule; returns (final state,
    [(time, tag)]).  Rotations are applied at their instants and refuse to act
    on appreciable optical excitation."""
    state = psi0
    events = []
    pending_unitaries = sorted(schedule.unitaries, key=lambda u: u[0])
    ui = 0
    for (t0, t1, system) in schedule.intervals:
        while ui < len(pending_unitaries) and pending_unitaries[ui][0] <= t0 + 1e-12:
            t_u, u = pending_unitaries[ui]
            if _excited_population(state, schedule.cascade) > TRION_OCCUPATION_TOL:
                raise SpinRotationError(f"rotation at {t_u} ns with optical excitation present")
            state = QuantumState(state.dim, amplitudes=u @ state.amplitudes)
            ui += 1
        state, jumps = evolve_trajectory(state, system, t1 - t0, rng, phase_origin=t0)
        events.extend((t0 + tj, tag) for tj, tag in jumps)
    while ui < len(pending_unitaries):
        t_u, u = pending_unitaries[ui]
        state = QuantumState(state.dim, amplitudes=u @ state.amplitudes)
        ui += 1
    return state, events


def run_master_schedule(schedule: CompiledSchedule, rho0: np.ndarray, n_grid_per_interval=40):
    """Master-equation reference for one period: returns (times, rho list)."""
    rho = np.asarray(rho0, dtype=complex)
    times = [0.0]
    rhos = [rho]
    pending = sorted(schedule.unitaries, key=lambda u: u[0])
    ui = 0
    dim = schedule.cascade.dim
    for (t0, t1, system) in schedule.intervals:
        while ui < len(pending) and pending[ui][0] <= t0 + 1e-12:
            u = pending[ui][1]
            rho = u @ rho @ u.conj().T
            ui += 1
        grid = np.linspace(0.0, t1 - t0, n_grid_per_interval)
        states = evolve_master(QuantumState(dim, density=rho), system, grid, phase_origin=t0)
        for k, st in enumerate(states[1:], start=1):
            times.append(t0 + grid[k])
            rhos.append(st.density)
        rho = rhos[-1]
    return np.array(times), rhos


def run_shots(
    prog: PulseProgram,
    cascade: CascadeSystem,
    bg=None,
    overhauser=None,
    master_seed: int = 0,
    *,
    initial_spin=UP,
    background_windows=(),
    bg_lambda_max: float | None = None,
) -> ShotRun:
    """Execute the program shot by shot (full joint-trajectory physics).

    Each shot draws its own RNG substream and nuclear-field shift, runs one
    trajectory through the compiled schedule, and appends background events
    thinned from the background intensity.  Returns all events; the
    physical/background flag is dropped by detector modeling downstream.
    """
    compiled_cache: dict = {}
    events = []
    labels = []

    def schedule_for(color, pump, shift):
        key = (color, pump, round(shift, 12))
        sched = compiled_cache.get(key)
        if sched is None:
            cas = cascade
            if shift:
                cas = build_cascade(
                    cascade.source_spec,
                    cascade.target_spec,
                    cascade.channel,
                    overhauser_shift_ghz=shift,
                )
            sched = compile_program(prog, cas, input_color=color, pump_transition=pump)
            compiled_cache[key] = sched
        return sched

    if bg is not None and bg_lambda_max is None:
        probe = np.linspace(0.0, prog.period_ns, 400)
        bg_lambda_max = 1.5 * max(
            background_intensity(bg, background_windows, t, prog.period_ns) for t in probe
        )

    for shot in range(prog.n_shots):
        rng = substream(master_seed, shot)
        combo = shot_combination(prog, shot)
        labels.append(combo)
        shift = sample_overhauser(overhauser, rng) if overhauser is not None else 0.0
        if combo is None:
            color, pump = None, None
        else:
            color = combo[0]
            # This shot's pump realizes the previous shot's readout choice.
            prev_readout = COMBINATIONS[(shot - 1) % 4][1]
            pump = "vertical-blue" if prev_readout == "up" else "vertical-red"
        sched = schedule_for(color, pump, shift)

        src_vec = np.zeros(cascade.src_dim, dtype=complex)
        src_vec[G] = 1.0
        tgt_vec = np.zeros(cascade.tgt_dim, dtype=complex)
        tgt_vec[initial_spin] = 1.0
        psi0 = QuantumState.pure(np.kron(src_vec, tgt_vec))

        _, shot_events = run_trajectory_shot(sched, psi0, rng)
        for t, tag in shot_events:
            route = sched.route_for(tag)
            events.append(EmissionEvent(shot, t, tag, route))

        if bg is not None and bg_lambda_max > 0:
            times = sample_inhomogeneous(
                rng,
                lambda t: background_intensity(bg, background_windows, t, prog.period_ns),
                0.0,
                prog.period_ns,
                bg_lambda_max,
            )
            for t in times:
                events.append(EmissionEvent(shot, t, "background", "herald", physical=False))

    return ShotRun(tuple(events), tuple(labels), prog)
