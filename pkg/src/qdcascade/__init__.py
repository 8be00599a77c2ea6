"""Cascaded quantum-dot simulator: color-qubit source, heralded-absorption
target, detector modeling and photon-counting statistics."""

from .core import (
    JumpChannel,
    LinearOp,
    OpenSystem,
    QuantumState,
    Tone,
    evolve_master,
    evolve_trajectory,
    ghz_to_angular,
    steady_state,
    substream,
)
from .spectra import EmissionSpectrum, emission_spectrum

__all__ = [
    "JumpChannel",
    "LinearOp",
    "OpenSystem",
    "QuantumState",
    "Tone",
    "EmissionSpectrum",
    "emission_spectrum",
    "evolve_master",
    "evolve_trajectory",
    "ghz_to_angular",
    "steady_state",
    "substream",
]

__version__ = "0.1.0"
