"""
Multilinear periodic interpolation of grid arrays at off-grid points.
"""
from __future__ import annotations

import itertools
from typing import Sequence, Tuple

import numpy as np

from lattice.errors import ShapeError
from lattice.fields import SpinorField
from lattice.grid import GridSpec


def _bracket(grid: GridSpec, dim: int, coords: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    axis = grid.axes[dim]
    u = (np.asarray(coords, dtype=float) - axis.min) / axis.spacing
    base = np.floor(u)
    weight = u - base
    lower = np.mod(base.astype(np.int64), axis.points)
    upper = np.mod(lower + 1, axis.points)
    return lower, upper, weight


def interpolate_axes(values: np.ndarray, grid: GridSpec, dims: Sequence[int], coords: Sequence[float]) -> np.ndarray:
    """Interpolate ``values`` along ``dims`` at ``coords``; those axes are removed.

    ``values`` is shaped ``grid.shape + trailing``. Separable linear passes make
    the result independent of the order in which axes are eliminated.
    """
    if len(dims) != len(coords):
        raise ShapeError("one coordinate per interpolated axis is required")
    if len(set(dims)) != len(dims):
        raise ShapeError("interpolated axes must be distinct")
    result = values
    for dim, coord in sorted(zip(dims, coords), key=lambda pair: pair[0], reverse=True):
        lower, upper, weight = _bracket(grid, dim, np.asarray(coord))
        lo = np.take(result, int(lower), axis=dim)
        hi = np.take(result, int(upper), axis=dim)
        result = (1.0 - float(weight)) * lo + float(weight) * hi
    return result


def interpolate_points(values: np.ndarray, grid: GridSpec, points: np.ndarray) -> np.ndarray:
    """Vectorized interpolation over all axes at ``points`` of shape ``(n, D)``.

    Returns an array shaped ``(n,) + trailing``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[-1] != grid.ndim:
        raise ShapeError(f"points have {points.shape[-1]} coordinates, grid has {grid.ndim}")
    brackets = [_bracket(grid, dim, points[:, dim]) for dim in range(grid.ndim)]
    trailing = values.shape[grid.ndim:]
    result = np.zeros((points.shape[0],) + trailing, dtype=values.dtype)
    for corner in itertools.product((0, 1), repeat=grid.ndim):
        index = []
        weight = np.ones(points.shape[0])
        for dim, side in enumerate(corner):
            lower, upper, frac = brackets[dim]
            index.append(upper if side else lower)
            weight = weight * (frac if side else 1.0 - frac)
        result += weight.reshape((-1,) + (1,) * len(trailing)) * values[tuple(index)]
    return result


def interpolate(field: SpinorField, point: np.ndarray) -> np.ndarray:
    """C^k value of ``field`` at one configuration point."""
    return interpolate_points(field.data, field.grid, np.asarray(point, dtype=float)[np.newaxis])[0]


__all__ = ["interpolate", "interpolate_axes", "interpolate_points"]
