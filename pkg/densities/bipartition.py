"""
Splitting a configuration space and spin space into subsystems S1 and S2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from lattice.errors import ShapeError
from lattice.fields import SpinorField
from lattice.grid import GridSpec


@dataclass(frozen=True)
class Bipartition:
    """Assignment of grid axes and spin factors to S1 and S2.

    The composite spin index is ``s = s1 * k2 + s2`` (S1 is the leading
    tensor factor). S2 may own no configuration axes (a spin-only environment).
    """

    s1_dims: Tuple[int, ...]
    s2_dims: Tuple[int, ...]
    k1: int = 1
    k2: int = 1

    def __post_init__(self) -> None:
        s1 = tuple(sorted(int(d) for d in self.s1_dims))
        s2 = tuple(sorted(int(d) for d in self.s2_dims))
        object.__setattr__(self, "s1_dims", s1)
        object.__setattr__(self, "s2_dims", s2)
        if not s1:
            raise ShapeError("subsystem S1 needs at least one configuration axis")
        if set(s1) & set(s2):
            raise ShapeError(f"axes {sorted(set(s1) & set(s2))} assigned to both subsystems")
        if self.k1 < 1 or self.k2 < 1:
            raise ShapeError("spin factor dimensions must be positive")

    @property
    def spin_dim(self) -> int:
        return self.k1 * self.k2

    def check(self, grid: GridSpec, spin_dim: int) -> None:
        if sorted(self.s1_dims + self.s2_dims) != list(range(grid.ndim)):
            raise ShapeError(
                f"split {self.s1_dims}/{self.s2_dims} does not cover the {grid.ndim} grid axes"
            )
        if spin_dim != self.spin_dim:
            raise ShapeError(f"k1*k2 = {self.spin_dim} but the field has spin dimension {spin_dim}")

    def s1_grid(self, grid: GridSpec) -> GridSpec:
        return grid.subgrid(self.s1_dims)

    def s2_grid(self, grid: GridSpec) -> Optional[GridSpec]:
        return grid.subgrid(self.s2_dims) if self.s2_dims else None

    def s2_cell_volume(self, grid: GridSpec) -> float:
        s2 = self.s2_grid(grid)
        return s2.cell_volume if s2 is not None else 1.0

    def _permutation(self, ndim: int) -> Tuple[int, ...]:
        return self.s1_dims + (ndim,) + self.s2_dims + (ndim + 1,)

    def split_spin(self, data: np.ndarray) -> np.ndarray:
        """View ``(*shape, k)`` data as ``(*shape, k1, k2)``."""
        return data.reshape(data.shape[:-1] + (self.k1, self.k2))

    def as_matrix(self, psi: SpinorField) -> np.ndarray:
        """Raw amplitudes arranged as an ``(N1*k1, N2*k2)`` matrix."""
        self.check(psi.grid, psi.spin_dim)
        tensor = self.split_spin(psi.data).transpose(self._permutation(psi.grid.ndim))
        rows = psi.grid.subgrid(self.s1_dims).size * self.k1
        return tensor.reshape(rows, -1)

    def from_matrix(self, matrix: np.ndarray, grid: GridSpec) -> np.ndarray:
        """Inverse of :meth:`as_matrix`: field data shaped ``grid.shape + (k,)``."""
        s1_shape = tuple(grid.shape[d] for d in self.s1_dims)
        s2_shape = tuple(grid.shape[d] for d in self.s2_dims)
        tensor = np.asarray(matrix).reshape(s1_shape + (self.k1,) + s2_shape + (self.k2,))
        tensor = tensor.transpose(np.argsort(self._permutation(grid.ndim)))
        return tensor.reshape(grid.shape + (self.spin_dim,))

    def s1_field(self, vector: np.ndarray, grid: GridSpec, normalized: bool = False) -> SpinorField:
        """An S1 field from a flattened ``(N1*k1,)`` column."""
        s1 = self.s1_grid(grid)
        return SpinorField(s1, np.asarray(vector).reshape(s1.shape + (self.k1,)), normalized=normalized)

    def product(self, psi1: SpinorField, psi2: SpinorField, grid: GridSpec) -> SpinorField:
        """Tensor product state psi1 (x) psi2 on the full grid.

        ``psi2`` lives on the S2 grid; for a spin-only environment pass its
        ``k2`` spin amplitudes as a plain array.
        """
        if psi1.spin_dim != self.k1:
            raise ShapeError("first factor has the wrong spin dimension")
        left = psi1.data.reshape(-1)
        right = psi2.data.reshape(-1) if isinstance(psi2, SpinorField) else np.asarray(psi2).reshape(-1)
        if right.size != self.s2_size(grid) * self.k2:
            raise ShapeError("second factor does not match the S2 space")
        return SpinorField(grid, self.from_matrix(np.outer(left, right), grid))

    def s2_size(self, grid: GridSpec) -> int:
        s2 = self.s2_grid(grid)
        return s2.size if s2 is not None else 1

    def s1_components(self, vector: Sequence[float]) -> np.ndarray:
        """Select the S1 entries of a full configuration vector."""
        return np.asarray(vector, dtype=float)[..., list(self.s1_dims)]

    def s2_components(self, vector: Sequence[float]) -> np.ndarray:
        return np.asarray(vector, dtype=float)[..., list(self.s2_dims)]


__all__ = ["Bipartition"]
