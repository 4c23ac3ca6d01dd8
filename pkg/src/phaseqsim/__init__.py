"""Pulse-level simulator of a driven three-level phase qubit.

Covers shaped-microwave gate dynamics with decoherence, a phenomenological
tunneling readout with its error budget, and the room-temperature IQ signal
chain with sideband calibration and deconvolution.
"""

from .system import (
    DensityState,
    InvalidParameterError,
    QutritParams,
    TLSParams,
    build_hamiltonian,
    collapse_operators,
    populations,
    pure_state,
)
from .pulses import (
    PulseEnvelope,
    Waveform,
    gaussian_envelope,
    leakage_ratio,
    power_spectrum,
    slepian_envelope,
)
from .dynamics import apply_z_phase, calibrate_pi, evolve, propagate_grid

__all__ = [
    "DensityState",
    "InvalidParameterError",
    "QutritParams",
    "TLSParams",
    "PulseEnvelope",
    "Waveform",
    "apply_z_phase",
    "build_hamiltonian",
    "calibrate_pi",
    "collapse_operators",
    "evolve",
    "gaussian_envelope",
    "leakage_ratio",
    "populations",
    "power_spectrum",
    "propagate_grid",
    "pure_state",
    "slepian_envelope",
]

__version__ = "0.1.0"
