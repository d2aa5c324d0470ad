"""
Density matrices in ensemble (low-rank) form: W = sum_i p_i |psi_i><psi_i|.

All traces, distances and purities are computed from inner products of the
components; dense kernels are never formed here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from lattice.errors import ShapeError, ValidationFailure
from lattice.fields import NORMALIZATION_TOLERANCE, ScalarField, SpinorField, norm
from lattice.grid import GridSpec


WEIGHT_TOLERANCE = 1e-10
COMPRESSION_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class DensityEnsemble:
    """A finite weighted collection of normalized spinor fields."""

    components: Tuple[Tuple[float, SpinorField], ...]

    def __post_init__(self) -> None:
        components = tuple((float(p), psi) for p, psi in self.components)
        if not components:
            raise ValidationFailure("a density ensemble needs at least one component")
        grid, spin_dim = components[0][1].grid, components[0][1].spin_dim
        for weight, psi in components:
            if psi.grid != grid or psi.spin_dim != spin_dim:
                raise ShapeError("ensemble components must share grid and spin dimension")
            if not weight > 0.0:
                raise ValidationFailure(f"ensemble weights must be positive, got {weight}")
            if not psi.normalized and abs(norm(psi) ** 2 - 1.0) > NORMALIZATION_TOLERANCE:
                raise ValidationFailure("ensemble components must be normalized")
        total = sum(p for p, _ in components)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ValidationFailure(f"ensemble weights sum to {total!r}, expected 1")
        object.__setattr__(self, "components", components)

    @classmethod
    def pure(cls, psi: SpinorField) -> "DensityEnsemble":
        return cls(((1.0, psi),))

    @classmethod
    def from_arrays(cls, grid: GridSpec, weights: np.ndarray, data: np.ndarray) -> "DensityEnsemble":
        """Build from weights ``(m,)`` and stacked unit-norm field data ``(m,) + grid.shape + (k,)``."""
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
        return cls(tuple(
            (float(p), SpinorField(grid, field, normalized=True)) for p, field in zip(weights, data)
        ))

    @property
    def grid(self) -> GridSpec:
        return self.components[0][1].grid

    @property
    def spin_dim(self) -> int:
        return self.components[0][1].spin_dim

    @property
    def dimension(self) -> int:
        return self.grid.size * self.spin_dim

    @property
    def weights(self) -> np.ndarray:
        return np.array([p for p, _ in self.components])

    @property
    def fields(self) -> List[SpinorField]:
        return [psi for _, psi in self.components]

    @property
    def rank(self) -> int:
        return len(self.components)

    def stacked(self) -> np.ndarray:
        """Component data stacked on a leading axis."""
        return np.stack([psi.data for psi in self.fields])

    def factor(self) -> np.ndarray:
        """Y with W = Y Y^dagger in orthonormal node coordinates, shape (dimension, m)."""
        scale = np.sqrt(self.grid.cell_volume * self.weights)
        return self.stacked().reshape(self.rank, -1).T * scale

    def gram(self) -> np.ndarray:
        """G_ij = <psi_i, psi_j>."""
        flat = self.stacked().reshape(self.rank, -1)
        return self.grid.cell_volume * (flat.conj() @ flat.T)

    def map_fields(self, transform) -> "DensityEnsemble":
        return DensityEnsemble(tuple((p, transform(psi)) for p, psi in self.components))

    def compressed(self, tolerance: float = COMPRESSION_TOLERANCE) -> "DensityEnsemble":
        """Orthogonal eigen-ensemble of the same operator (rank at most the dimension)."""
        u, s, _ = scipy.linalg.svd(self.factor(), full_matrices=False, lapack_driver="gesvd")
        eigenvalues = s ** 2
        keep = eigenvalues > tolerance * eigenvalues.max()
        data = (u[:, keep] / np.sqrt(self.grid.cell_volume)).T
        return DensityEnsemble.from_arrays(
            self.grid, eigenvalues[keep], data.reshape((-1,) + self.grid.shape + (self.spin_dim,))
        )


def _check_same_space(a: DensityEnsemble, b: DensityEnsemble) -> None:
    if a.grid != b.grid or a.spin_dim != b.spin_dim:
        raise ShapeError("density matrices act on different spaces")


def overlap(a: DensityEnsemble, b: DensityEnsemble) -> float:
    """tr(A B) = sum_ij p_i q_j |<a_i, b_j>|^2."""
    _check_same_space(a, b)
    fa = a.stacked().reshape(a.rank, -1)
    fb = b.stacked().reshape(b.rank, -1)
    cross = a.grid.cell_volume * (fa.conj() @ fb.T)
    return float(a.weights @ (np.abs(cross) ** 2) @ b.weights)


def purity(w: DensityEnsemble) -> float:
    """tr W^2 from the Gram matrix of the components."""
    return float(w.weights @ (np.abs(w.gram()) ** 2) @ w.weights)


def frobenius_distance(a: DensityEnsemble, b: DensityEnsemble) -> float:
    """Hilbert-Schmidt distance ||A - B||.

    The difference is written as Z S Z^dagger with Z the union of both factors
    and S = diag(+1, -1); a thin QR of Z reduces it to a small matrix whose
    entries are formed directly, so tiny distances keep full precision.
    """
    _check_same_space(a, b)
    z = np.concatenate([a.factor(), b.factor()], axis=1)
    signs = np.concatenate([np.ones(a.rank), -np.ones(b.rank)])
    if z.shape[1] >= z.shape[0]:
        difference = (z * signs) @ z.conj().T
        return float(np.linalg.norm(difference))
    _, r = np.linalg.qr(z, mode="reduced")
    return float(np.linalg.norm((r * signs) @ r.conj().T))


def fidelity_with_pure(w: DensityEnsemble, phi: SpinorField) -> float:
    """<phi|W|phi> for a normalized phi."""
    if phi.grid != w.grid or phi.spin_dim != w.spin_dim:
        raise ShapeError("reference field lives on a different space")
    flat = w.stacked().reshape(w.rank, -1)
    amplitudes = w.grid.cell_volume * (flat.conj() @ phi.data.ravel())
    return float(w.weights @ np.abs(amplitudes) ** 2)


def average(
    ensembles: Sequence[DensityEnsemble],
    weights: Optional[Sequence[float]] = None,
    compress: bool = True,
) -> DensityEnsemble:
    """Weighted mixture of density matrices, optionally compressed to eigen-form."""
    if not ensembles:
        raise ShapeError("nothing to average")
    if weights is None:
        weights = np.full(len(ensembles), 1.0 / len(ensembles))
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    components = []
    for outer, ensemble in zip(weights, ensembles):
        components.extend((outer * p, psi) for p, psi in ensemble.components)
    total = sum(p for p, _ in components)
    mixture = DensityEnsemble(tuple((p / total, psi) for p, psi in components))
    return mixture.compressed() if compress else mixture


def position_density(w: DensityEnsemble) -> ScalarField:
    """rho(q) = sum_i p_i sum_s |psi_i^s(q)|^2."""
    values = np.tensordot(w.weights, np.sum(np.abs(w.stacked()) ** 2, axis=-1), axes=1)
    return ScalarField(w.grid, values)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lower, upper)``; infinite bounds are allowed."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "lower", tuple(float(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(float(x) for x in self.upper))
        if len(self.lower) != len(self.upper):
            raise ShapeError("box bounds have different dimensions")

    @classmethod
    def everything(cls, ndim: int) -> "Box":
        return cls((-np.inf,) * ndim, (np.inf,) * ndim)

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        lower, upper = np.array(self.lower), np.array(self.upper)
        return np.all((points >= lower) & (points < upper), axis=-1)

    def node_mask(self, grid: GridSpec) -> np.ndarray:
        if len(self.lower) != grid.ndim:
            raise ShapeError(f"box has {len(self.lower)} dimensions, grid has {grid.ndim}")
        return self.contains(np.stack(grid.mesh(), axis=-1))


def union_mask(boxes: Iterable[Box], grid: GridSpec) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for box in boxes:
        mask |= box.node_mask(grid)
    return mask


def region_probability(w: DensityEnsemble, boxes: Iterable[Box]) -> float:
    """tr(W P(B)) for a union of boxes; boundary cells count by node membership."""
    if isinstance(boxes, Box):
        boxes = [boxes]
    rho = position_density(w)
    mask = union_mask(boxes, w.grid)
    value = w.grid.cell_volume * float(np.sum(rho.values[mask]))
    return min(max(value, 0.0), 1.0)


__all__ = [
    "DensityEnsemble",
    "Box",
    "overlap",
    "purity",
    "frobenius_distance",
    "fidelity_with_pure",
    "average",
    "position_density",
    "region_probability",
    "union_mask",
    "WEIGHT_TOLERANCE",
]
