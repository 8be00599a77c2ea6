"""Estimators over click streams and protocol figures of merit.

Contains the coincidence counting behind the classical-correlation
measurement, its fidelity estimator with binomial errors, normalized pulsed
autocorrelation (center-to-side peak ratio), the two-photon interference
reduction factor, the photon-budget calculator, and the heralded-protocol
metrics (transfer fidelity, two-spin concurrence).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cascade import (
    ChannelSpec,
    build_cascade,
    build_entangler_cascade,
    build_transfer_cascade,
    heralded_conditional_state,
    heralded_two_spin_state,
)
from .core import QuantumState
from .detection import ClickStream
from .emitters import SourceDotSpec, TargetDotSpec
from .fitting import FitResult, fit_lorentzian  # re-exported estimator surface
from .sequencer import COMBINATIONS, PulseProgram, shot_combination

__all__ = [
    "CoincidenceTable",
    "FidelityEstimate",
    "FitResult",
    "fit_lorentzian",
    "coincidences",
    "correlation_fidelity",
    "g2_pulsed",
    "hom_ratio",
    "efficiency_budget",
    "protocol_metrics",
    "concurrence",
]


@dataclass(frozen=True)
class CoincidenceTable:
    """Two-fold coincidences: herald (input color) x next-period readout."""

    counts: dict  # (color, readout) -> int
    exposure_hours: float = 0.0

    def __post_init__(self):
        for key in ((c, r) for c in ("red", "blue") for r in ("up", "down")):
            self.counts.setdefault(key, 0)
        if any(v < 0 or v != int(v) for v in self.counts.values()):
            raise ValueError("counts must be nonnegative integers")

    def total(self) -> int:
        return int(sum(self.counts.values()))

    def correct_incorrect(self):
        """Counts agreeing / disagreeing with red->up, blue->down."""
        correct = self.counts[("red", "up")] + self.counts[("blue", "down")]
        incorrect = self.counts[("red", "down")] + self.counts[("blue", "up")]
        return int(correct), int(incorrect)

    def scaled(self, factor: int) -> "CoincidenceTable":
        return CoincidenceTable({k: v * factor for k, v in self.counts.items()}, self.exposure_hours)

    def to_json(self) -> str:
        payload = {f"{c}_{r}": int(v) for (c, r), v in sorted(self.counts.items())}
        payload["exposure_hours"] = self.exposure_hours
        return json.dumps(payload, sort_keys=True)


@dataclass(frozen=True)
class FidelityEstimate:
    value: float
    sigma: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("fidelity must be in [0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def _window_click(clicks_by_shot, shot, window_ps):
    lo, hi = window_ps
    for c in clicks_by_shot.get(shot, ()):
        if lo <= c.time_ps < hi:
            return c
    return None


def coincidences(stream: ClickStream, prog: PulseProgram, *, detector_id=None) -> CoincidenceTable:
    """Pair each herald-window click with a readout-window click one period
    later; the shot's round-robin label fixes the (color, readout) cell.

    The detector dead time exceeds the window length, so at most one herald
    per period contributes (the first in-window click is taken).
    """
    if not prog.alternate_combinations:
        raise ValueError("coincidence analysis needs the four-combination round-robin")
    period_ps = stream.metadata.period_ps
    h_ps = (int(round(prog.herald_window[0] * 1000)), int(round(prog.herald_window[1] * 1000)))
    r_ps = (int(round(prog.readout_window[0] * 1000)), int(round(prog.readout_window[1] * 1000)))

    by_shot: dict[int, list] = {}
    for c in stream.clicks:
        if detector_id is not None and c.detector_id != detector_id:
            continue
        by_shot.setdefault(c.shot_index, []).append(c)

    counts = {(c, r): 0 for c in ("red", "blue") for r in ("up", "down")}
    for shot, clicks in by_shot.items():
        herald = _window_click(by_shot, shot, h_ps)
        if herald is None:
            continue
        readout = _window_click(by_shot, shot + 1, r_ps)
        if readout is None:
            continue
        combo = shot_combination(prog, shot)
        counts[combo] += 1
    exposure = stream.metadata.n_shots * period_ps * 1e-12 / 3600.0
    return CoincidenceTable(counts, exposure)


_BOUNDARY_FLOOR_DOC = """Binomial standard errors; at the p in {0, 1} boundary the
variance estimate p(1-p)/N vanishes, so the error uses the Laplace-smoothed
point (k+1)/(N+2) instead (documented rule, not the estimator itself)."""


def _binomial_sigma(k: int, n: int) -> float:
    p = k / n
    if k == 0 or k == n:
        p = (k + 1.0) / (n + 2.0)
    return float(np.sqrt(p * (1.0 - p) / n))


def correlation_fidelity(table: CoincidenceTable) -> FidelityEstimate:
    """Mean of the two conditional correct-readout probabilities.

    F = [N(red,up)/N(red,*) + N(blue,down)/N(blue,*)] / 2, balanced over the
    input colors so unequal exposures cancel; errors are binomial per
    conditional (see _BOUNDARY_FLOOR_DOC for the boundary rule).
    """
    n_red = table.counts[("red", "up")] + table.counts[("red", "down")]
    n_blue = table.counts[("blue", "up")] + table.counts[("blue", "down")]
    if n_red == 0 or n_blue == 0:
        raise ValueError("a zero-count input-color row leaves its conditional undefined")
    p_red = table.counts[("red", "up")] / n_red
    p_blue = table.counts[("blue", "down")] / n_blue
    sig = 0.5 * np.hypot(
        _binomial_sigma(table.counts[("red", "up")], n_red),
        _binomial_sigma(table.counts[("blue", "down")], n_blue),
    )
    return FidelityEstimate(0.5 * (p_red + p_blue), float(sig))


@dataclass(frozen=True)
class PeakRatio:
    ratio: float
    sigma: float
    center_counts: int
    side_counts: int
    n_side_peaks: int
    lower_bound: bool = False


def _cross_peak_counts(t0_ps, t1_ps, period_ps, n_periods, window_frac=0.5):
    """Coincidence counts in windows around multiples of the period.

    Returns dict k -> count of pairs with |t1 - t0 - k*period| < window.
    """
    t0 = np.sort(np.asarray(t0_ps, dtype=np.int64))
    t1 = np.sort(np.asarray(t1_ps, dtype=np.int64))
    window = int(round(period_ps * window_frac))
    out = {}
    for k in range(-n_periods, n_periods + 1):
        shift = k * period_ps
        lo = np.searchsorted(t1, t0 + shift - window)
        hi = np.searchsorted(t1, t0 + shift + window)
        out[k] = int(np.sum(hi - lo))
    return out


def g2_pulsed(stream: ClickStream, period_ns: float | None = None, *, n_side=6) -> PeakRatio:
    """Center-to-side peak ratio of the two-detector pulsed autocorrelation.

    The stream must carry two detector ids (a balanced split); the ratio of
    the zero-delay peak to the mean of the ``n_side`` side peaks on each side
    estimates the normalized same-pulse two-photon probability, with Poisson
    errors.
    """
    md = stream.metadata
    period_ps = md.period_ps if period_ns is None else int(round(period_ns * 1000))
    ids = sorted({c.detector_id for c in stream.clicks})
    if len(ids) != 2:
        raise ValueError(f"pulsed autocorrelation needs exactly 2 detector ids, got {ids}")
    t0 = [c.absolute_time_ps for c in stream.clicks if c.detector_id == ids[0]]
    t1 = [c.absolute_time_ps for c in stream.clicks if c.detector_id == ids[1]]
    peaks = _cross_peak_counts(t0, t1, period_ps, n_side)
    center = peaks[0]
    side = [peaks[k] for k in peaks if k != 0]
    if not side or sum(side) == 0:
        raise ValueError("no side-peak coincidences in range")
    side_mean = float(np.mean(side))
    ratio = center / side_mean
    rel = np.sqrt(1.0 / max(center, 1) + 1.0 / sum(side))
    return PeakRatio(float(ratio), float(ratio * rel) if center else float(rel / side_mean), center, int(sum(side)), len(side))


def hom_ratio(stream_parallel: ClickStream, stream_orthogonal: ClickStream, *, n_side=6) -> PeakRatio:
    """Two-photon interference reduction factor.

    Each stream is normalized by its own side peaks before the orthogonal to
    parallel center-peak ratio is formed, so two distinguishable-photon
    streams give 1 by construction.  A zero parallel center peak yields a
    lower bound (computed with one count in place of zero).
    """
    def norm_center(stream):
        md = stream.metadata
        ids = sorted({c.detector_id for c in stream.clicks})
        if len(ids) != 2:
            raise ValueError("interference streams need exactly 2 detector ids")
        t0 = [c.absolute_time_ps for c in stream.clicks if c.detector_id == ids[0]]
        t1 = [c.absolute_time_ps for c in stream.clicks if c.detector_id == ids[1]]
        peaks = _cross_peak_counts(t0, t1, md.period_ps, n_side)
        side = [peaks[k] for k in peaks if k != 0]
        return peaks[0], float(np.mean(side)), int(sum(side))

    c_par, s_par, n_par = norm_center(stream_parallel)
    c_ort, s_ort, n_ort = norm_center(stream_orthogonal)
    if s_par == 0 or s_ort == 0:
        raise ValueError("no side-peak normalization counts")
    lower = c_par == 0
    c_par_eff = max(c_par, 1)
    ratio = (c_ort / s_ort) / (c_par_eff / s_par)
    rel = np.sqrt(1.0 / max(c_ort, 1) + 1.0 / c_par_eff + 1.0 / n_ort + 1.0 / n_par)
    return PeakRatio(float(ratio), float(ratio * rel), c_ort, c_par, n_side * 2, lower_bound=lower)


# -- photon budget ---------------------------------------------------------------


@dataclass(frozen=True)
class BudgetResult:
    absorption_probability: float
    quantum_efficiency: float
    incident_rate_hz: float
    herald_chain: float
    reading: str


PAPER_CHAIN = {
    "transmission_ab": 0.003,
    "collection_lens": 0.20,
    "polarizer": 0.50,
    "spectral_filter": 0.85,
    "detector": 0.80,
}


def efficiency_budget(
    chain: dict,
    r_source_hz: float,
    r_herald_hz: float,
    *,
    spin_random: bool = True,
    reading: str = "input_only",
) -> BudgetResult:
    """Absorption probability and quantum efficiency from the rate chain.

    Two documented readings of the end-to-end transmission are implemented:

    * ``input_only`` (default): ``transmission_ab`` covers the input path
      only (source fiber output to the field at the target dot), so the
      incident rate is r_source * transmission_ab and the herald chain is
      collection_lens * polarizer * spectral_filter * detector.  The
      polarizer factor is the half of the scattered photons it passes, i.e.
      the diagonal-branching selection.
    * ``through_collection``: ``transmission_ab`` is an end-to-end number
      that already contains the collection chain; the chain factors then
      cancel out of the estimate (p_abs = r_herald / (r_source * T_ab)).

    With an unpolarized target spin, only half the incident photons find the
    absorbing ground state, so the per-attempt quantum efficiency doubles the
    absorption probability.
    """
    for key, val in chain.items():
        if not 0.0 < val <= 1.0:
            raise ValueError(f"chain factor {key} must be in (0, 1], got {val}")
    if r_source_hz <= 0 or r_herald_hz <= 0:
        raise ValueError("rates must be > 0")
    t_ab = chain["transmission_ab"]
    collect = (
        chain.get("collection_lens", 1.0)
        * chain.get("polarizer", 1.0)
        * chain.get("spectral_filter", 1.0)
        * chain.get("detector", 1.0)
    )
    if reading == "input_only":
        incident = r_source_hz * t_ab
        herald_chain = collect
    elif reading == "through_collection":
        incident = r_source_hz * t_ab / collect
        herald_chain = collect
    else:
        raise ValueError("reading must be 'input_only' or 'through_collection'")
    p_abs = r_herald_hz / (incident * herald_chain)
    qe = p_abs / 0.5 if spin_random else p_abs
    return BudgetResult(float(p_abs), float(qe), float(incident), float(herald_chain), reading)


# -- protocol metrics -------------------------------------------------------------


def concurrence(rho: np.ndarray) -> float:
    """Two-qubit concurrence (spin-flip construction)."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("concurrence needs a 4x4 two-qubit state")
    sy = np.array([[0.0, -1.0j], [1.0j, 0.0]])
    yy = np.kron(sy, sy)
    lam = np.linalg.eigvals(rho @ yy @ rho.conj() @ yy)
    lam = np.sort(np.sqrt(np.abs(lam.real)))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


@dataclass(frozen=True)
class ProtocolResult:
    kind: str
    fidelity: float | None
    concurrence: float | None
    herald_probability: float
    state: np.ndarray


def protocol_metrics(
    kind: str,
    *,
    target: TargetDotSpec | None = None,
    source: SourceDotSpec | None = None,
    channel: ChannelSpec | None = None,
    input_amplitudes=(1.0, 0.0),
    window=(0.0, 10.0),
    gamma1: float = 1.0 / 0.6,
) -> ProtocolResult:
    """Fidelity / concurrence of the heralded protocols in one call.

    ``photon_to_spin``: conditional spin fidelity against the color-encoded
    qubit alpha |up> + beta |down>.  ``spin_to_spin``: fidelity of the
    transferred spin against the level-scheme image alpha |down2> + beta
    |up2| with the source post-selected in |up1>.  ``entanglement``:
    concurrence of the heralded two-spin state.
    """
    tgt = target if target is not None else TargetDotSpec()
    plus = QuantumState.pure([1.0, 1.0])

    if kind == "photon_to_spin":
        src = source if source is not None else SourceDotSpec(
            fss_ghz=tgt.vertical_splitting_ghz, gamma1=gamma1
        )
        cas = build_cascade(src, tgt, channel)
        res = heralded_conditional_state(cas, input_amplitudes, plus, window)
        alpha, beta = input_amplitudes
        ideal = np.array([alpha, beta], dtype=complex)
        fid = float(np.real(ideal.conj() @ res.spin.density @ ideal))
        return ProtocolResult(kind, fid, None, res.herald_probability, res.spin.density)

    if kind == "spin_to_spin":
        cas = build_transfer_cascade(tgt, channel, gamma1=gamma1)
        alpha, beta = complex(input_amplitudes[0]), complex(input_amplitudes[1])
        src_prep = np.zeros(4, dtype=complex)
        src_prep[3] = alpha  # pi pulse up1 -> trion_blue
        src_prep[2] = beta  # pi pulse down1 -> trion_red
        rho, prob = heralded_two_spin_state(cas, window, source_prep=src_prep, target_prep=plus)
        # basis (u1u2, u1d2, d1u2, d1d2); ideal: source up1, target beta|u2>+alpha|d2>
        ideal = np.array([beta, alpha, 0.0, 0.0], dtype=complex)
        fid = float(np.real(ideal.conj() @ rho @ ideal))
        return ProtocolResult(kind, fid, concurrence(rho), prob, rho)

    if kind == "entanglement":
        cas = build_entangler_cascade(tgt, channel, gamma1=gamma1)
        src_prep = np.array([0.0, 0.0, 1.0], dtype=complex)  # excited trion
        rho, prob = heralded_two_spin_state(cas, window, source_prep=src_prep, target_prep=plus)
        bell = np.array([0.0, 1.0, 1.0, 0.0], dtype=complex) / np.sqrt(2.0)
        fid = float(np.real(bell.conj() @ rho @ bell))
        return ProtocolResult(kind, fid, concurrence(rho), prob, rho)

    raise ValueError("kind must be photon_to_spin, spin_to_spin or entanglement")


def estimate_to_json(value: float, sigma: float, inputs_digest: str = "") -> str:
    """Uniform JSON record for estimator outputs."""
    return json.dumps({"value": value, "sigma": sigma, "inputs_digest": inputs_digest}, sort_keys=True)
