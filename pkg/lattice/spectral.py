"""
Spectral calculus on periodic grids.

Transforms go through ``scipy.fft``; the worker count is taken from the
surrounding ``scipy.fft.set_workers`` context, so results never depend on it.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.fft

from lattice.errors import ShapeError
from lattice.fields import SpinorField
from lattice.grid import GridSpec


def wavenumbers(grid: GridSpec, dim: int) -> np.ndarray:
    axis = grid.axes[dim]
    return 2.0 * np.pi * np.fft.fftfreq(axis.points, d=axis.spacing)


def _derivative_wavenumbers(grid: GridSpec, dim: int) -> np.ndarray:
    # odd derivatives drop the unpaired Nyquist mode
    k = wavenumbers(grid, dim)
    k[grid.axes[dim].points // 2] = 0.0
    return k


def _broadcast(vector: np.ndarray, ndim_total: int, axis: int) -> np.ndarray:
    shape = [1] * ndim_total
    shape[axis] = vector.size
    return vector.reshape(shape)


def forward(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return scipy.fft.fftn(values, axes=tuple(range(grid.ndim)))


def inverse(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return scipy.fft.ifftn(values, axes=tuple(range(grid.ndim)))


def gradient_array(values: np.ndarray, grid: GridSpec, dim: int) -> np.ndarray:
    """d/dq_dim of an array shaped ``grid.shape + trailing`` (trailing axes untouched)."""
    if not 0 <= dim < grid.ndim:
        raise ShapeError(f"dimension {dim} outside grid with {grid.ndim} axes")
    k = _broadcast(1j * _derivative_wavenumbers(grid, dim), values.ndim, dim)
    return scipy.fft.ifft(k * scipy.fft.fft(values, axis=dim), axis=dim)


def gradients_array(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """All partial derivatives, stacked on a new leading axis (one forward transform)."""
    spectrum = forward(values, grid)
    result = np.empty((grid.ndim,) + values.shape, dtype=np.complex128)
    for dim in range(grid.ndim):
        k = _broadcast(1j * _derivative_wavenumbers(grid, dim), values.ndim, dim)
        result[dim] = inverse(k * spectrum, grid)
    return result


def gradient(psi: SpinorField, dim: int) -> SpinorField:
    """Componentwise spectral derivative of a spinor field along ``dim``."""
    return SpinorField(psi.grid, gradient_array(psi.data, psi.grid, dim))


def divergence(components: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Spectral divergence of a real vector field shaped ``grid.shape + (D,)``."""
    if components.shape != grid.shape + (grid.ndim,):
        raise ShapeError(f"vector field shape {components.shape} != {grid.shape + (grid.ndim,)}")
    total = np.zeros(grid.shape, dtype=np.complex128)
    for dim in range(grid.ndim):
        total += gradient_array(components[..., dim], grid, dim)
    return total.real


def kinetic_symbol(grid: GridSpec, masses: Sequence[float], hbar: float) -> np.ndarray:
    """hbar^2 |k|^2 / 2m summed over dimensions, on the spectral grid."""
    total = np.zeros(grid.shape)
    for dim, mass in enumerate(masses):
        k = _broadcast(wavenumbers(grid, dim), grid.ndim, dim)
        total = total + hbar ** 2 * k ** 2 / (2.0 * mass)
    return total


def apply_kinetic(values: np.ndarray, grid: GridSpec, masses: Sequence[float], hbar: float) -> np.ndarray:
    """Kinetic operator applied to a field with trailing spin axis."""
    symbol = kinetic_symbol(grid, masses, hbar)[..., np.newaxis]
    return inverse(symbol * forward(values, grid), grid)


__all__ = [
    "wavenumbers",
    "forward",
    "inverse",
    "gradient",
    "gradient_array",
    "gradients_array",
    "divergence",
    "kinetic_symbol",
    "apply_kinetic",
]
