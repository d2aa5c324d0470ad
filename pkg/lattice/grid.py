"""
Uniform periodic tensor grids over configuration space.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from lattice.errors import GridError


MIN_POINTS = 8
MAX_DIMENSIONS = 3

# A configuration point is a plain float vector with one entry per grid axis.
ConfigPoint = np.ndarray


def _is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


@dataclass(frozen=True)
class Axis:
    """One configuration coordinate: nodes at ``min + i * spacing``, i < points."""

    min: float
    max: float
    points: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.min) or not np.isfinite(self.max):
            raise GridError(f"axis bounds must be finite, got [{self.min}, {self.max}]")
        if self.max <= self.min:
            raise GridError(f"axis max ({self.max}) must exceed min ({self.min})")
        if int(self.points) != self.points or self.points < MIN_POINTS:
            raise GridError(f"axis needs at least {MIN_POINTS} points, got {self.points}")
        if not _is_power_of_two(int(self.points)):
            raise GridError(f"axis points must be a power of two, got {self.points}")

    @property
    def length(self) -> float:
        return self.max - self.min

    @property
    def spacing(self) -> float:
        return self.length / self.points

    def nodes(self) -> np.ndarray:
        return self.min + self.spacing * np.arange(self.points)


@dataclass(frozen=True)
class GridSpec:
    """Tensor product of periodic axes."""

    axes: Tuple[Axis, ...]

    def __post_init__(self) -> None:
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        if not 1 <= len(axes) <= MAX_DIMENSIONS:
            raise GridError(
                f"grids support 1 to {MAX_DIMENSIONS} configuration coordinates, got {len(axes)}"
            )

    @classmethod
    def from_bounds(cls, bounds: Iterable[Tuple[float, float, int]]) -> "GridSpec":
        return cls(tuple(Axis(float(lo), float(hi), int(n)) for lo, hi, n in bounds))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(axis.points for axis in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([axis.spacing for axis in self.axes])

    @property
    def lower(self) -> np.ndarray:
        return np.array([axis.min for axis in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([axis.max for axis in self.axes])

    @property
    def lengths(self) -> np.ndarray:
        return np.array([axis.length for axis in self.axes])

    @property
    def cell_volume(self) -> float:
        """Quadrature weight h^D of the Riemann sum."""
        return float(np.prod(self.spacing))

    def coordinates(self, dim: int) -> np.ndarray:
        return self.axes[dim].nodes()

    def mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*(axis.nodes() for axis in self.axes), indexing="ij"))

    def subgrid(self, dims: Sequence[int]) -> "GridSpec":
        return GridSpec(tuple(self.axes[d] for d in dims))

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map points periodically into ``[min, max)`` on every axis."""
        points = np.asarray(points, dtype=float)
        return self.lower + np.mod(points - self.lower, self.lengths)

    def edge_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance of (unwrapped) points to the nearest box face, per point."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.minimum(points - self.lower, self.upper - points).min(axis=-1)

    def describe(self) -> dict:
        return {
            "axes": [
                {"min": axis.min, "max": axis.max, "points": axis.points} for axis in self.axes
            ]
        }


__all__ = ["Axis", "GridSpec", "ConfigPoint", "MIN_POINTS", "MAX_DIMENSIONS"]
