"""
Guidance velocities from wave functions and density matrices.

Two evaluation paths exist:

* ``VelocityField``: the velocity computed at every grid node, then
  interpolated. Trajectory integration uses it.
* ``GuidanceState``: component amplitudes and their spectral gradients,
  interpolated separately and combined at the query point. The guidance
  ratio at an off-grid point is then the exact ratio of interpolated
  numerator and denominator, which is what conditional velocities need.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from densities.bipartition import Bipartition
from densities.constructions import conditional
from densities.ensemble import DensityEnsemble
from evolution.hamiltonian import Hamiltonian
from lattice.errors import ShapeError
from lattice.fields import SpinorField
from lattice.grid import GridSpec
from lattice.interpolation import interpolate_points
from lattice.spectral import gradients_array


logger = logging.getLogger(__name__)

REGULARIZATION = 1e-12

State = Union[SpinorField, DensityEnsemble]


@dataclass(frozen=True, eq=False)
class VelocityField:
    grid: GridSpec
    values: np.ndarray
    epsilon: float
    flagged: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape + (self.grid.ndim,):
            raise ShapeError(f"velocity field shape {values.shape} does not match the grid")
        object.__setattr__(self, "values", values)

    @property
    def regularized_nodes(self) -> int:
        return int(np.count_nonzero(self.flagged))

    def at(self, points: np.ndarray) -> np.ndarray:
        """Multilinear interpolation at ``(n, D)`` points."""
        return interpolate_points(self.values, self.grid, points)

    def flagged_at(self, points: np.ndarray) -> np.ndarray:
        """True where any corner node of the enclosing cell was regularized."""
        if not self.flagged.any():
            return np.zeros(np.atleast_2d(points).shape[0], dtype=bool)
        return interpolate_points(self.flagged.astype(float), self.grid, points) > 0.0


def _inverse_masses(hamiltonian: Hamiltonian) -> np.ndarray:
    return hamiltonian.hbar / np.asarray(hamiltonian.masses)


def _components(state: State) -> Tuple[np.ndarray, np.ndarray]:
    """Weights ``(m,)`` and amplitudes laid out as ``grid.shape + (m, k)``."""
    if isinstance(state, SpinorField):
        return np.ones(1), state.data[..., np.newaxis, :]
    if isinstance(state, DensityEnsemble):
        return state.weights, np.moveaxis(state.stacked(), 0, -2)
    raise TypeError(f"cannot guide with a {type(state).__name__}")


def _grid_of(state: State) -> GridSpec:
    return state.grid


class GuidanceState:
    """A state prepared for velocity evaluation: weights, amplitudes, gradients."""

    def __init__(self, grid: GridSpec, weights: np.ndarray, amplitudes: np.ndarray, hamiltonian: Hamiltonian, epsilon: float = REGULARIZATION):
        if hamiltonian.grid != grid:
            raise ShapeError("state and Hamiltonian live on different grids")
        self.grid = grid
        self.weights = np.asarray(weights, dtype=float)
        self.amplitudes = amplitudes
        self.gradients = np.moveaxis(gradients_array(amplitudes, grid), 0, grid.ndim)
        self.scale = _inverse_masses(hamiltonian)
        self.epsilon = epsilon
        self.density = np.einsum("m,...mk->...", self.weights, np.abs(amplitudes) ** 2)
        self.density_max = float(self.density.max())

    @classmethod
    def from_state(cls, state: State, hamiltonian: Hamiltonian, epsilon: float = REGULARIZATION) -> "GuidanceState":
        weights, amplitudes = _components(state)
        return cls(_grid_of(state), weights, amplitudes, hamiltonian, epsilon)

    @classmethod
    def from_batch(cls, grid: GridSpec, weights: np.ndarray, data: np.ndarray, hamiltonian: Hamiltonian) -> "GuidanceState":
        """From batched field data shaped ``(m,) + grid.shape + (k,)``."""
        return cls(grid, weights, np.moveaxis(data, 0, -2), hamiltonian)

    def current(self) -> np.ndarray:
        """Probability current per node, shape ``grid.shape + (D,)``."""
        numerator = np.einsum(
            "m,...mk,...dmk->...d", self.weights, self.amplitudes.conj(), self.gradients
        ).imag
        return numerator * self.scale

    def field(self) -> VelocityField:
        floor = self.epsilon * self.density_max
        flagged = self.density < floor
        denominator = np.maximum(self.density, floor)
        values = self.current() / denominator[..., np.newaxis]
        if flagged.any():
            logger.debug("Regularized %d of %d nodes", int(flagged.sum()), flagged.size)
        return VelocityField(self.grid, values, self.epsilon, flagged)

    def at(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Velocities ``(n, D)`` and regularization flags ``(n,)`` at off-grid points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        amplitudes = interpolate_points(self.amplitudes, self.grid, points)
        gradients = interpolate_points(self.gradients, self.grid, points)
        numerator = np.einsum("m,nmk,ndmk->nd", self.weights, amplitudes.conj(), gradients).imag
        density = np.einsum("m,nmk->n", self.weights, np.abs(amplitudes) ** 2)
        floor = self.epsilon * self.density_max
        flagged = density < floor
        velocity = numerator / np.maximum(density, floor)[:, np.newaxis] * self.scale
        return velocity, flagged


def velocity_from_wavefunction(psi: SpinorField, hamiltonian: Hamiltonian) -> VelocityField:
    """v_j = (hbar/m_j) Im(psi^* grad_j psi) / (psi^* psi), spin contracted."""
    return GuidanceState.from_state(psi, hamiltonian).field()


def velocity_from_density(w: DensityEnsemble, hamiltonian: Hamiltonian) -> VelocityField:
    """v_j = (hbar/m_j) Im sum_i p_i psi_i^* grad_j psi_i / sum_i p_i |psi_i|^2."""
    return GuidanceState.from_state(w, hamiltonian).field()


def velocity_at(state: State, hamiltonian: Hamiltonian, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return GuidanceState.from_state(state, hamiltonian).at(points)


def probability_current(state: State, hamiltonian: Hamiltonian) -> np.ndarray:
    return GuidanceState.from_state(state, hamiltonian).current()


def conditional_velocity(
    psi: SpinorField,
    split: Bipartition,
    hamiltonian: Hamiltonian,
    point: Sequence[float],
) -> np.ndarray:
    """Velocity of Q1 from the conditional density matrix at Q2.

    Returns one component per S1 axis, in the order of ``split.s1_dims``.
    """
    point = np.asarray(point, dtype=float)
    w_cond = conditional(psi, split, split.s2_components(point))
    h1 = hamiltonian.restrict(split.s1_dims, split.k1)
    velocity, flagged = GuidanceState.from_state(w_cond, h1).at(split.s1_components(point)[np.newaxis])
    if flagged[0]:
        logger.warning("Conditional velocity at %s was regularized", point.tolist())
    return velocity[0]


@dataclass(frozen=True)
class BellDecomposition:
    """Per-realization velocities of a random wave function at one point."""

    realization_velocities: np.ndarray
    prior_weights: np.ndarray
    posterior_weights: np.ndarray
    statistical_velocity: np.ndarray

    @property
    def posterior_average(self) -> np.ndarray:
        return self.posterior_weights @ self.realization_velocities

    @property
    def prior_average(self) -> np.ndarray:
        return self.prior_weights @ self.realization_velocities


def bell_velocity_decomposition(
    mixture: Sequence[Tuple[float, SpinorField]],
    hamiltonian: Hamiltonian,
    point: Sequence[float],
) -> BellDecomposition:
    """Compare the W_stat velocity with the velocities of the individual realizations.

    The W_stat velocity equals the average of the realization velocities
    weighted by p_j |psi_j(Q)|^2, not by p_j alone.
    """
    point = np.atleast_2d(np.asarray(point, dtype=float))
    priors = np.array([p for p, _ in mixture], dtype=float)
    velocities = []
    densities = []
    for _, psi in mixture:
        state = GuidanceState.from_state(psi, hamiltonian)
        velocity, _ = state.at(point)
        velocities.append(velocity[0])
        amplitude = interpolate_points(psi.data, psi.grid, point)[0]
        densities.append(float(np.sum(np.abs(amplitude) ** 2)))
    posterior = priors * np.array(densities)
    posterior = posterior / posterior.sum()
    ensemble = DensityEnsemble(tuple((float(p), psi) for p, (_, psi) in zip(priors / priors.sum(), mixture)))
    statistical, _ = velocity_at(ensemble, hamiltonian, point)
    return BellDecomposition(np.array(velocities), priors / priors.sum(), posterior, statistical[0])


__all__ = [
    "VelocityField",
    "GuidanceState",
    "velocity_from_wavefunction",
    "velocity_from_density",
    "velocity_at",
    "probability_current",
    "conditional_velocity",
    "BellDecomposition",
    "bell_velocity_decomposition",
    "REGULARIZATION",
]
