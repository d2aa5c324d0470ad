"""
Exception hierarchy shared by every package of the simulator.
"""
from __future__ import annotations

from typing import Optional


class SimulationError(Exception):
    """Base class for all simulator errors."""


class ShapeError(SimulationError, ValueError):
    """Fields or ensembles live on different grids or spin dimensions."""


class GridError(SimulationError, ValueError):
    """A grid specification violates its invariants."""


class DegenerateDensityError(SimulationError):
    """A density carries no mass where mass is required."""


class ConfigurationError(SimulationError):
    """User supplied configuration cannot be executed as given."""

    def __init__(self, message: str, field: Optional[str] = None) -> None:
        super().__init__(message)
        self.field = field


class HamiltonianError(ConfigurationError):
    """Invalid masses, potentials or pulse schedules."""


class PhysicsValidationError(SimulationError):
    """The configured experiment is numerically unsafe (e.g. hits the box edge)."""

    def __init__(self, message: str, time: Optional[float] = None) -> None:
        super().__init__(message)
        self.time = time


class ExperimentGeometryError(PhysicsValidationError):
    """Too many runs ended with overlapping readout branches."""


class EnvironmentNodeError(SimulationError):
    """The environment configuration sits on a node: N(Q2) vanishes."""


class SpinMismatchError(SimulationError, ValueError):
    """A conditional wave function was requested for a spinful environment."""


class ToySizeError(SimulationError, ValueError):
    """Dense kernels are only built for toy-sized grids."""


class ValidationFailure(SimulationError):
    """Mixture weights or normalization are off beyond tolerance."""


__all__ = [
    "SimulationError",
    "ShapeError",
    "GridError",
    "DegenerateDensityError",
    "ConfigurationError",
    "HamiltonianError",
    "PhysicsValidationError",
    "ExperimentGeometryError",
    "EnvironmentNodeError",
    "SpinMismatchError",
    "ToySizeError",
    "ValidationFailure",
]
