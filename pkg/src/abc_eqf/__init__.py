"""Gyro-aided attitude estimation with gyro bias and online direction-sensor
calibration: an equivariant filter on (SO(3) x so(3)) x SO(3)^n, an
Imperfect-IEKF baseline, a sensor simulator and Monte-Carlo evaluation tools.
"""

from .eqf import (
    DirectionMeasurement,
    FilterState,
    NoiseConfig,
    SensorModel,
    eqf_init,
    eqf_propagate,
    eqf_update,
)
from .iekf import IekfState, iekf_init, iekf_propagate, iekf_update
from .symmetry import GroupElement, SystemState, state_from_group

__all__ = [
    "DirectionMeasurement",
    "FilterState",
    "GroupElement",
    "IekfState",
    "NoiseConfig",
    "SensorModel",
    "SystemState",
    "eqf_init",
    "eqf_propagate",
    "eqf_update",
    "iekf_init",
    "iekf_propagate",
    "iekf_update",
    "state_from_group",
]

__version__ = "0.1.0"
