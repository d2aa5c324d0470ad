"""
Dense kernel form W^s_{s'}(q, q') of a density matrix, for toy grids only.

Rows and columns are indexed by ``node * k + s`` in row-major node order, the
same order as ``SpinorField.data.ravel()``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from densities.bipartition import Bipartition
from densities.ensemble import DensityEnsemble
from lattice.errors import ShapeError, ToySizeError
from lattice.grid import GridSpec


MAX_KERNEL_DIMENSION = 128
EIGENVALUE_CUTOFF = 1e-12


@dataclass(frozen=True, eq=False)
class KernelDensity:
    grid: GridSpec
    spin_dim: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.complex128)
        dim = self.grid.size * self.spin_dim
        if values.shape != (dim, dim):
            raise ShapeError(f"kernel must be {dim}x{dim}, got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def dimension(self) -> int:
        return self.values.shape[0]

    def operator(self) -> np.ndarray:
        """Matrix of W acting on node amplitudes (kernel times quadrature weight)."""
        return self.values * self.grid.cell_volume

    @classmethod
    def from_operator(cls, grid: GridSpec, spin_dim: int, operator: np.ndarray) -> "KernelDensity":
        return cls(grid, spin_dim, np.asarray(operator) / grid.cell_volume)

    def scaled(self, factor: float) -> "KernelDensity":
        return KernelDensity(self.grid, self.spin_dim, self.values * factor)

    def entry(self, q_index: int, s: int, q_prime_index: int, s_prime: int) -> complex:
        k = self.spin_dim
        return complex(self.values[q_index * k + s, q_prime_index * k + s_prime])


def _guard(dimension: int) -> None:
    if dimension > MAX_KERNEL_DIMENSION:
        raise ToySizeError(
            f"dense kernels are limited to {MAX_KERNEL_DIMENSION} node-spin entries, got {dimension}"
        )


def to_kernel(w: DensityEnsemble) -> KernelDensity:
    """W^s_{s'}(q, q') = sum_i p_i psi_i^s(q) conj(psi_i^{s'}(q'))."""
    _guard(w.dimension)
    flat = w.stacked().reshape(w.rank, -1)
    values = (flat.T * w.weights) @ flat.conj()
    return KernelDensity(w.grid, w.spin_dim, values)


def eigendecompose(kernel: KernelDensity, cutoff: float = EIGENVALUE_CUTOFF) -> DensityEnsemble:
    """Orthogonal eigen-ensemble of a kernel; eigenvalues below ``cutoff * max`` are dropped."""
    operator = kernel.operator()
    hermitian = 0.5 * (operator + operator.conj().T)
    eigenvalues, vectors = scipy.linalg.eigh(hermitian)
    keep = eigenvalues > cutoff * max(eigenvalues.max(), 0.0)
    if not np.any(keep):
        raise ShapeError("kernel has no positive eigenvalue")
    data = (vectors[:, keep] / np.sqrt(kernel.grid.cell_volume)).T
    return DensityEnsemble.from_arrays(
        kernel.grid,
        eigenvalues[keep],
        data.reshape((-1,) + kernel.grid.shape + (kernel.spin_dim,)),
    )


def kernel_distance(a: KernelDensity, b: KernelDensity) -> float:
    """Frobenius (Hilbert-Schmidt) distance of the operators."""
    if a.grid != b.grid or a.spin_dim != b.spin_dim:
        raise ShapeError("kernels act on different spaces")
    return float(np.linalg.norm(a.operator() - b.operator()))


def partial_trace(kernel: KernelDensity, split: Bipartition) -> KernelDensity:
    """Trace out S2 (its configuration axes and spin factor) from a full kernel."""
    grid = kernel.grid
    split.check(grid, kernel.spin_dim)
    ndim = grid.ndim
    tensor = kernel.values.reshape(grid.shape + (split.k1, split.k2) + grid.shape + (split.k1, split.k2))
    order = split.s1_dims + (ndim,) + split.s2_dims + (ndim + 1,)
    tensor = tensor.transpose(order + tuple(ndim + 2 + axis for axis in order))
    rows = split.s1_grid(grid).size * split.k1
    cols = split.s2_size(grid) * split.k2
    blocks = tensor.reshape(rows, cols, rows, cols)
    values = np.einsum("ajbj->ab", blocks) * split.s2_cell_volume(grid)
    return KernelDensity(split.s1_grid(grid), split.k1, values)


def kernel_purity(kernel: KernelDensity) -> float:
    operator = kernel.operator()
    return float(np.real(np.trace(operator @ operator)))


__all__ = [
    "KernelDensity",
    "to_kernel",
    "eigendecompose",
    "kernel_distance",
    "partial_trace",
    "kernel_purity",
    "MAX_KERNEL_DIMENSION",
]
