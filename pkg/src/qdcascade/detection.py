"""Detector modeling and the click-stream interchange format.

Physical emission events become clicks through, in order: Bernoulli thinning
by the quantum efficiency, additive Gaussian timing jitter, homogeneous
Poisson dark counts, and dead-time pruning applied last in absolute-time
order.  Timestamps are integer picoseconds (TCSPC granularity), so equality
is exact in tests and files; shot periods must therefore be an integer number
of picoseconds.

The interchange format is plain text, one click per line as
``detector_id,shot_index,time_ps``, preceded by ``#`` metadata lines carrying
the period, shot count, seed and config digest.  Files are written with LF
line endings and locale-independent formatting, so identical streams are
byte-identical on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class StreamFormatError(ValueError):
    """Malformed stream file; carries the offending line number."""

    def __init__(self, message, line_no=None):
        super().__init__(message if line_no is None else f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class DetectorSpec:
    """Single-photon detector: efficiency, Gaussian jitter, dead time, darks.

    ``dark_rate`` is 0 by default; scenario configs wire detector darks either
    here or through the background model, never both.
    """

    efficiency: float = 1.0
    jitter_sigma_ps: float = 0.0
    dead_time_ns: float = 25.0
    dark_rate: float = 0.0  # 1/s

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must be in [0, 1]")
        if self.jitter_sigma_ps < 0 or self.dead_time_ns < 0 or self.dark_rate < 0:
            raise ValueError("jitter, dead time and dark rate must be >= 0")


@dataclass(frozen=True, eq=True)
class Click:
    detector_id: int
    shot_index: int
    time_ps: int  # within the shot period
    absolute_time_ps: int


@dataclass(frozen=True)
class StreamMetadata:
    period_ns: float
    n_shots: int
    seed: int
    config_digest: str = ""

    @property
    def period_ps(self) -> int:
        p = self.period_ns * 1000.0
        q = round(p)
        if abs(p - q) > 1e-6:
            raise ValueError("shot period must be an integer number of picoseconds")
        return int(q)


@dataclass(frozen=True)
class ClickStream:
    """Time-sorted clicks plus acquisition metadata.

    Invariants: sorted by absolute time (stable under ties), and no two
    clicks on one detector closer than that detector's dead time (enforced by
    :func:`detect`; the loader checks ordering only, since the file does not
    carry detector specs).
    """

    clicks: tuple
    metadata: StreamMetadata

    def __post_init__(self):
        object.__setattr__(self, "clicks", tuple(self.clicks))
        times = [c.absolute_time_ps for c in self.clicks]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("clicks must be sorted by absolute time")

    def times_ns(self, detector_id=None) -> np.ndarray:
        sel = (c for c in self.clicks if detector_id is None or c.detector_id == detector_id)
        return np.array([c.absolute_time_ps for c in sel], dtype=float) / 1000.0

    def fold_times_ps(self, detector_id=None) -> np.ndarray:
        sel = (c for c in self.clicks if detector_id is None or c.detector_id == detector_id)
        return np.array([c.time_ps for c in sel], dtype=np.int64)


def detect(events, det: DetectorSpec, rng, *, metadata: StreamMetadata, detector_id: int = 0) -> ClickStream:
    """Convert emission events to a click stream for one detector.

    ``events`` is an iterable of objects with ``shot`` and ``time_ns`` (or
    (shot, time_ns) pairs), already time-sorted.  With unit efficiency, zero
    jitter and no darks, clicks reproduce the events exactly (identity case).
    """
    period_ps = metadata.period_ps
    total_ps = metadata.n_shots * period_ps

    pairs = []
    for ev in events:
        if hasattr(ev, "shot"):
            pairs.append((ev.shot, ev.time_ns))
        else:
            pairs.append((ev[0], ev[1]))

    kept = []
    if pairs:
        keep = rng.random(len(pairs)) < det.efficiency if det.efficiency < 1.0 else np.ones(len(pairs), bool)
        jit = (
            rng.normal(0.0, det.jitter_sigma_ps, size=len(pairs))
            if det.jitter_sigma_ps > 0
            else np.zeros(len(pairs))
        )
        for (shot, t_ns), ok, dj in zip(pairs, keep, jit):
            if not ok:
                continue
            abs_ps = int(round(shot * period_ps + t_ns * 1000.0 + dj))
            if 0 <= abs_ps < total_ps:
                kept.append(abs_ps)

    if det.dark_rate > 0 and total_ps > 0:
        n_dark = rng.poisson(det.dark_rate * total_ps * 1e-12)
        kept.extend(int(t) for t in rng.integers(0, total_ps, size=n_dark))

    kept.sort()
    dead_ps = int(round(det.dead_time_ns * 1000.0))
    clicks = []
    last = None
    for abs_ps in kept:
        if last is not None and abs_ps - last < dead_ps:
            continue
        last = abs_ps
        shot = abs_ps // period_ps
        clicks.append(Click(detector_id, int(shot), int(abs_ps - shot * period_ps), int(abs_ps)))
    return ClickStream(tuple(clicks), metadata)


def merge_streams(*streams: ClickStream) -> ClickStream:
    """Stable merge of per-detector streams into one time-ordered stream."""
    if not streams:
        raise ValueError("nothing to merge")
    meta = streams[0].metadata
    clicks = sorted(
        (c for s in streams for c in s.clicks),
        key=lambda c: (c.absolute_time_ps, c.detector_id),
    )
    return ClickStream(tuple(clicks), meta)


def split_hbt(events, rng):
    """Route events through a balanced beamsplitter onto two detector arms."""
    arm0, arm1 = [], []
    for ev in events:
        (arm0 if rng.random() < 0.5 else arm1).append(ev)
    return arm0, arm1


def histogram(stream: ClickStream, bin_ps: int, fold_to_period: bool = True):
    """Integer-count histogram of click times; the counts sum to the number
    of clicks that fall inside the binned span."""
    if bin_ps <= 0:
        raise ValueError("bin_ps must be > 0")
    if fold_to_period:
        span = stream.metadata.period_ps
        values = stream.fold_times_ps()
    else:
        span = stream.metadata.n_shots * stream.metadata.period_ps
        values = np.array([c.absolute_time_ps for c in stream.clicks], dtype=np.int64)
    edges = np.arange(0, span + bin_ps, bin_ps, dtype=np.int64)
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts.astype(np.int64)


# -- interchange format --------------------------------------------------------

_HEADER_KEYS = ("period_ns", "n_shots", "seed", "config_digest")


def save_stream(stream: ClickStream, path) -> None:
    md = stream.metadata
    with open(path, "w", newline="\n") as fh:
        fh.write("# qdcascade clickstream v1\n")
        fh.write(f"# period_ns={md.period_ns!r}\n")
        fh.write(f"# n_shots={md.n_shots}\n")
        fh.write(f"# seed={md.seed}\n")
        fh.write(f"# config_digest={md.config_digest}\n")
        for c in stream.clicks:
            fh.write(f"{c.detector_id},{c.shot_index},{c.time_ps}\n")


def load_stream(path) -> ClickStream:
    """Parse a stream file; format violations report the line number."""
    header = {}
    clicks = []
    last_abs = None
    with open(path, "r", newline="") as fh:
        period_ps = None
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, val = body.partition("=")
                    header[key.strip()] = val.strip()
                continue
            if period_ps is None:
                for key in _HEADER_KEYS:
                    if key not in header:
                        raise StreamFormatError(f"missing metadata key {key}", line_no)
                try:
                    md = StreamMetadata(
                        period_ns=float(header["period_ns"]),
                        n_shots=int(header["n_shots"]),
                        seed=int(header["seed"]),
                        config_digest=header["config_digest"],
                    )
                    period_ps = md.period_ps
                except ValueError as exc:
                    raise StreamFormatError(f"bad metadata: {exc}", line_no) from exc
            parts = line.split(",")
            if len(parts) != 3:
                raise StreamFormatError("expected detector_id,shot_index,time_ps", line_no)
            try:
                det, shot, tps = (int(p) for p in parts)
            except ValueError as exc:
                raise StreamFormatError(f"non-integer field: {exc}", line_no) from exc
            if det < 0 or shot < 0 or tps < 0:
                raise StreamFormatError("fields must be nonnegative", line_no)
            if tps >= period_ps:
                raise StreamFormatError("time_ps outside the shot period", line_no)
            abs_ps = shot * period_ps + tps
            if last_abs is not None and abs_ps < last_abs:
                raise StreamFormatError("rows out of absolute-time order", line_no)
            last_abs = abs_ps
            clicks.append(Click(det, shot, tps, abs_ps))
    for key in _HEADER_KEYS:
        if key not in header:
            raise StreamFormatError(f"missing metadata key {key}")
    md = StreamMetadata(
        period_ns=float(header["period_ns"]),
        n_shots=int(header["n_shots"]),
        seed=int(header["seed"]),
        config_digest=header["config_digest"],
    )
    return ClickStream(tuple(clicks), md)
