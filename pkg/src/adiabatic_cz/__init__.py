"""Simulation and calibration toolkit for an adiabatic CZ gate between two
fixed-frequency transmons mediated by a flux-tunable coupler."""

__version__ = "0.1.0"

from .device import (  # noqa: E402
    CouplingGraph,
    DeviceParams,
    FluxMap,
    ModeLabel,
    ModeSpec,
    annihilation_operator,
    build_hamiltonian,
)
from .errors import *  # noqa: E402,F401,F403

__all__ = [
    "CouplingGraph",
    "DeviceParams",
    "FluxMap",
    "ModeLabel",
    "ModeSpec",
    "annihilation_operator",
    "build_hamiltonian",
]
