"""Five-level atoms and media driven by four laser pulses."""

from .core import (
    Grid,
    PulseEnvelope,
    PulseSet,
    ScaledUnits,
    SchemeKind,
    check_two_photon_resonance,
    compose_multiphoton_detunings,
)

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "PulseEnvelope",
    "PulseSet",
    "ScaledUnits",
    "SchemeKind",
    "check_two_photon_resonance",
    "compose_multiphoton_detunings",
]
