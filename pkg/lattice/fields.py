"""
Spinor and scalar fields sampled on a GridSpec, with the grid quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass
from numbers import Number

import numpy as np

from lattice.errors import DegenerateDensityError, ShapeError, ValidationFailure
from lattice.grid import GridSpec


NORMALIZATION_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class SpinorField:
    """A C^k valued wave function; ``data`` has shape ``grid.shape + (k,)``."""

    grid: GridSpec
    data: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != self.grid.ndim + 1 or data.shape[:-1] != self.grid.shape:
            raise ShapeError(
                f"field data shape {data.shape} does not match grid {self.grid.shape} + (k,)"
            )
        if data.shape[-1] < 1:
            raise ShapeError("spin dimension must be positive")
        if not np.all(np.isfinite(data)):
            raise ValidationFailure("spinor field contains non-finite amplitudes")
        object.__setattr__(self, "data", data)
        if self.normalized:
            defect = abs(_norm_squared(self.grid, data) - 1.0)
            if defect > NORMALIZATION_TOLERANCE:
                raise ValidationFailure(f"field flagged normalized has norm defect {defect:.3e}")

    @property
    def spin_dim(self) -> int:
        return self.data.shape[-1]

    def with_data(self, data: np.ndarray, normalized: bool = False) -> "SpinorField":
        return SpinorField(self.grid, data, normalized=normalized)

    def density(self) -> np.ndarray:
        """Spin-traced |psi|^2 per node."""
        return np.sum(np.abs(self.data) ** 2, axis=-1)

    def __add__(self, other: "SpinorField") -> "SpinorField":
        _check_compatible(self, other)
        return SpinorField(self.grid, self.data + other.data)

    def __sub__(self, other: "SpinorField") -> "SpinorField":
        _check_compatible(self, other)
        return SpinorField(self.grid, self.data - other.data)

    def __mul__(self, scalar: Number) -> "SpinorField":
        if not isinstance(scalar, Number):
            return NotImplemented
        unit = bool(self.normalized and np.isclose(abs(scalar), 1.0, rtol=0, atol=1e-14))
        return SpinorField(self.grid, self.data * scalar, normalized=unit)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A real field on a grid (densities, residuals)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ShapeError(f"scalar field shape {values.shape} != grid {self.grid.shape}")
        object.__setattr__(self, "values", values)

    def integral(self) -> float:
        return float(self.grid.cell_volume * np.sum(self.values))

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.cell_volume * np.sum(self.values ** 2)))


def _norm_squared(grid: GridSpec, data: np.ndarray) -> float:
    return float(grid.cell_volume * np.vdot(data, data).real)


def _check_compatible(phi: SpinorField, psi: SpinorField) -> None:
    if phi.grid != psi.grid:
        raise ShapeError("fields live on different grids")
    if phi.spin_dim != psi.spin_dim:
        raise ShapeError(f"spin dimensions differ: {phi.spin_dim} != {psi.spin_dim}")


def inner_product(phi: SpinorField, psi: SpinorField) -> complex:
    """<phi, psi> = h^D sum_nodes sum_s conj(phi_s) psi^s."""
    _check_compatible(phi, psi)
    return complex(phi.grid.cell_volume * np.vdot(phi.data, psi.data))


def norm(psi: SpinorField) -> float:
    return float(np.sqrt(_norm_squared(psi.grid, psi.data)))


def normalize(psi: SpinorField) -> SpinorField:
    value = norm(psi)
    if value == 0.0:
        raise DegenerateDensityError("cannot normalize the zero field")
    return SpinorField(psi.grid, psi.data / value, normalized=True)


__all__ = [
    "SpinorField",
    "ScalarField",
    "inner_product",
    "norm",
    "normalize",
    "NORMALIZATION_TOLERANCE",
]
