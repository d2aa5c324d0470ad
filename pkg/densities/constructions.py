"""
The five density matrices in ensemble form.

statistical  - mixture of pure states
reduced      - partial trace of a pure state (Schmidt decomposition)
combined     - reduced matrix of a mixture
conditional  - environment configuration inserted, environment spin traced
fundamental  - any DensityEnsemble used as the dynamical state itself
"""
from __future__ import annotations

import logging
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import scipy.linalg

from densities.bipartition import Bipartition
from densities.ensemble import Box, DensityEnsemble
from lattice.errors import (
    DegenerateDensityError,
    EnvironmentNodeError,
    ShapeError,
    SpinMismatchError,
    ValidationFailure,
)
from lattice.fields import NORMALIZATION_TOLERANCE, SpinorField, norm
from lattice.interpolation import interpolate_axes


logger = logging.getLogger(__name__)

SCHMIDT_THRESHOLD = 1e-9
MIXTURE_TOLERANCE = 1e-8
NODE_THRESHOLD = 1e-30
NEGLIGIBLE_WEIGHT = 1e-14

Mixture = Sequence[Tuple[float, SpinorField]]


def _checked_weights(mixture: Mixture) -> np.ndarray:
    if not mixture:
        raise ValidationFailure("mixture is empty")
    weights = np.array([float(p) for p, _ in mixture])
    if np.any(weights <= 0.0):
        raise ValidationFailure("mixture weights must be positive")
    if abs(weights.sum() - 1.0) > MIXTURE_TOLERANCE:
        raise ValidationFailure(f"mixture weights sum to {weights.sum()!r}, expected 1")
    return weights / weights.sum()


def _check_normalized(psi: SpinorField) -> None:
    if not psi.normalized and abs(norm(psi) ** 2 - 1.0) > NORMALIZATION_TOLERANCE:
        raise ValidationFailure("density matrix components must be normalized")


def statistical(mixture: Mixture) -> DensityEnsemble:
    """W_stat = sum_j p_j |psi_j><psi_j|, keeping the given decomposition."""
    weights = _checked_weights(mixture)
    for _, psi in mixture:
        _check_normalized(psi)
    return DensityEnsemble(tuple((float(p), psi) for p, (_, psi) in zip(weights, mixture)))


def schmidt_decomposition(
    psi: SpinorField, split: Bipartition, threshold: float = SCHMIDT_THRESHOLD
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Schmidt coefficients and unit vectors in node coordinates.

    Returns ``(coefficients, left, right)``; ``left[:, i]`` is the i-th S1
    vector in orthonormal node coordinates (divide by sqrt(h1^D1) to get field
    values). Coefficients below ``threshold`` are dropped.
    """
    h1 = split.s1_grid(psi.grid).cell_volume
    h2 = split.s2_cell_volume(psi.grid)
    matrix = split.as_matrix(psi) * np.sqrt(h1 * h2)
    u, s, vh = scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesvd")
    keep = s > threshold
    if not np.any(keep):
        raise DegenerateDensityError("state has no Schmidt coefficient above threshold")
    return s[keep], u[:, keep], vh[keep].conj().T


def reduced(psi: SpinorField, split: Bipartition) -> DensityEnsemble:
    """W_red = tr_2 |Psi><Psi| as its Schmidt ensemble over S1."""
    _check_normalized(psi)
    coefficients, left, _ = schmidt_decomposition(psi, split)
    weights = coefficients ** 2
    h1 = split.s1_grid(psi.grid).cell_volume
    fields = [split.s1_field(left[:, i] / np.sqrt(h1), psi.grid) for i in range(left.shape[1])]
    return _ensemble(weights, fields)


def combined(mixture: Mixture, split: Bipartition) -> DensityEnsemble:
    """W_comb: reduced matrices of the mixture members, weighted by p_j."""
    weights = _checked_weights(mixture)
    components: List[Tuple[float, SpinorField]] = []
    for p, (_, psi) in zip(weights, mixture):
        for lam, phi in reduced(psi, split).components:
            components.append((p * lam, phi))
    return _ensemble(np.array([w for w, _ in components]), [phi for _, phi in components])


def _ensemble(weights: np.ndarray, fields: Sequence[SpinorField]) -> DensityEnsemble:
    """Normalize weights and fields and wrap them as an ensemble."""
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    components = []
    for w, field in zip(weights / total, fields):
        length = norm(field)
        components.append((float(w), SpinorField(field.grid, field.data / length, normalized=True)))
    return DensityEnsemble(tuple(components))


def environment_slice(psi: SpinorField, split: Bipartition, q2: Sequence[float]) -> np.ndarray:
    """Psi^{s1 s2}(q1, Q2) on the S1 grid, shape ``s1_shape + (k1, k2)``.

    The S2 coordinates are interpolated multilinearly.
    """
    split.check(psi.grid, psi.spin_dim)
    q2 = np.atleast_1d(np.asarray(q2, dtype=float))
    if q2.size != len(split.s2_dims):
        raise ShapeError(f"Q2 has {q2.size} coordinates, S2 has {len(split.s2_dims)} axes")
    tensor = split.split_spin(psi.data)
    if not split.s2_dims:
        return tensor
    return interpolate_axes(tensor, psi.grid, split.s2_dims, q2)


def _slice_norms(psi: SpinorField, split: Bipartition, values: np.ndarray) -> np.ndarray:
    h1 = split.s1_grid(psi.grid).cell_volume
    spatial_axes = tuple(range(values.ndim - 2))
    return h1 * np.sum(np.abs(values) ** 2, axis=spatial_axes + (values.ndim - 2,))


def conditional_normalizer(psi: SpinorField, split: Bipartition, q2: Sequence[float]) -> float:
    """N(Q2) = sum_{s1 s2} integral |Psi(q1, Q2)|^2 dq1."""
    values = environment_slice(psi, split, q2)
    return float(np.sum(_slice_norms(psi, split, values)))


def conditional(psi: SpinorField, split: Bipartition, q2: Sequence[float]) -> DensityEnsemble:
    """W_cond at the environment configuration Q2, with at most k2 components."""
    values = environment_slice(psi, split, q2)
    masses = _slice_norms(psi, split, values)
    total = float(masses.sum())
    if total <= NODE_THRESHOLD:
        raise EnvironmentNodeError(f"conditional normalizer N = {total:.3e} at Q2 = {list(np.atleast_1d(q2))}")
    keep = [s2 for s2 in range(split.k2) if masses[s2] / total > NEGLIGIBLE_WEIGHT]
    s1 = split.s1_grid(psi.grid)
    fields = [SpinorField(s1, values[..., s2]) for s2 in keep]
    return _ensemble(masses[keep], fields)


def conditional_wavefunction(psi: SpinorField, split: Bipartition, q2: Sequence[float]) -> SpinorField:
    """psi_cond(q1) = Psi(q1, Q2) / sqrt(N), for a spinless environment."""
    if split.k2 != 1:
        raise SpinMismatchError(
            f"environment carries spin (k2 = {split.k2}); the conditional wave function "
            "would not be a state of S1"
        )
    values = environment_slice(psi, split, q2)
    total = float(np.sum(_slice_norms(psi, split, values)))
    if total <= NODE_THRESHOLD:
        raise EnvironmentNodeError(f"conditional normalizer N = {total:.3e}")
    return SpinorField(split.s1_grid(psi.grid), values[..., 0] / np.sqrt(total), normalized=True)


def macro_conditional(psi: SpinorField, split: Bipartition, cell: Box) -> DensityEnsemble:
    """Collapse Psi to ``{q2 in cell}``, renormalize, then reduce."""
    split.check(psi.grid, psi.spin_dim)
    if not split.s2_dims:
        return reduced(psi, split)
    s2 = split.s2_grid(psi.grid)
    inside = cell.node_mask(s2)
    shape = [1] * psi.grid.ndim
    for dim in split.s2_dims:
        shape[dim] = psi.grid.shape[dim]
    mask = np.zeros(psi.grid.shape, dtype=bool) | inside.reshape(shape)
    collapsed = psi.data * mask[..., np.newaxis]
    mass = psi.grid.cell_volume * float(np.vdot(collapsed, collapsed).real)
    if mass <= NODE_THRESHOLD:
        raise DegenerateDensityError(f"cell {cell} carries no probability (mass {mass:.3e})")
    logger.debug("Macro-conditioning on %s keeps mass %.6f", cell, mass)
    return reduced(SpinorField(psi.grid, collapsed / np.sqrt(mass), normalized=True), split)


def branch_weights(psi: SpinorField, split: Bipartition, regions: Iterable[Box]) -> np.ndarray:
    """Probability of each S1 spin value jointly with Q in each region.

    Returns an array ``(n_regions, k1)``; rows sum to the region probability.
    """
    tensor = np.abs(split.split_spin(psi.data)) ** 2
    per_s1 = tensor.sum(axis=-1)
    nodes = np.stack(psi.grid.mesh(), axis=-1)
    rows = []
    for region in regions:
        mask = region.contains(nodes)
        rows.append(psi.grid.cell_volume * per_s1[mask].sum(axis=0))
    return np.array(rows)


__all__ = [
    "statistical",
    "reduced",
    "combined",
    "conditional",
    "conditional_normalizer",
    "conditional_wavefunction",
    "macro_conditional",
    "branch_weights",
    "environment_slice",
    "schmidt_decomposition",
    "SCHMIDT_THRESHOLD",
    "NODE_THRESHOLD",
]
