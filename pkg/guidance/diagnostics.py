"""
Equivariance and continuity checks for guided ensembles.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from densities.ensemble import DensityEnsemble, position_density
from evolution.hamiltonian import Hamiltonian
from evolution.propagator import step_array
from guidance.trajectory import EnsembleRun, integrate_ensemble
from guidance.velocity import GuidanceState, State
from lattice.errors import ConfigurationError
from lattice.fields import ScalarField, SpinorField
from lattice.grid import GridSpec
from lattice.sampling import StreamId, sample_density
from lattice.spectral import divergence


logger = logging.getLogger(__name__)

MIN_TRAJECTORIES = 1000
DEFAULT_BINS = 64


def state_density(state: State) -> ScalarField:
    if isinstance(state, SpinorField):
        return ScalarField(state.grid, state.density())
    return position_density(state)


def _bins_per_axis(grid: GridSpec, bins: Union[int, Sequence[int]]) -> Tuple[int, ...]:
    counts = (bins,) * grid.ndim if isinstance(bins, int) else tuple(int(b) for b in bins)
    for axis, count in zip(grid.axes, counts):
        if count < 1 or axis.points % count:
            raise ConfigurationError(
                f"{count} bins do not tile an axis of {axis.points} nodes", field="bins"
            )
    return counts


def bin_density(rho: ScalarField, bins: Union[int, Sequence[int]] = DEFAULT_BINS) -> np.ndarray:
    """Probability per bin; each bin is a block of whole node cells."""
    counts = _bins_per_axis(rho.grid, bins)
    shape = []
    for axis, count in zip(rho.grid.axes, counts):
        shape.extend([count, axis.points // count])
    blocks = rho.values.reshape(shape)
    mass = blocks.sum(axis=tuple(range(1, 2 * rho.grid.ndim, 2))) * rho.grid.cell_volume
    return mass / mass.sum()


def bin_points(points: np.ndarray, grid: GridSpec, bins: Union[int, Sequence[int]] = DEFAULT_BINS) -> np.ndarray:
    """Empirical distribution of points over the same bins as :func:`bin_density`."""
    counts = np.array(_bins_per_axis(grid, bins))
    points = np.atleast_2d(points)
    origin = grid.lower - 0.5 * grid.spacing
    shifted = np.mod(points - origin, grid.lengths)
    index = np.minimum((shifted / (grid.lengths / counts)).astype(np.int64), counts - 1)
    flat = np.ravel_multi_index(tuple(index.T), tuple(counts))
    histogram = np.bincount(flat, minlength=int(np.prod(counts))).astype(float)
    return (histogram / histogram.sum()).reshape(tuple(counts))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


@dataclass
class EquivarianceResult:
    distance: float
    sampling_floor: float
    run: EnsembleRun


def equivariance_run(
    state: State,
    hamiltonian: Hamiltonian,
    n_traj: int,
    t1: float,
    dt: float,
    stream: StreamId,
    bins: Union[int, Sequence[int]] = DEFAULT_BINS,
    t0: float = 0.0,
    record_stride: int = 1,
    progress: bool = False,
) -> EquivarianceResult:
    """Sample from the initial density, guide to t1, compare histograms."""
    if n_traj < MIN_TRAJECTORIES:
        raise ConfigurationError(
            f"equivariance needs at least {MIN_TRAJECTORIES} trajectories, got {n_traj}", field="n_traj"
        )
    points = sample_density(state_density(state), n_traj, stream)
    run = integrate_ensemble(points, state, hamiltonian, t0, t1, dt, record_stride=record_stride, progress=progress)
    expected = bin_density(state_density(run.final_state), bins)
    observed = bin_points(run.final_points, hamiltonian.grid, bins)
    distance = total_variation(observed, expected)
    floor = float(np.sqrt(expected.size / n_traj))
    logger.info("Equivariance TV distance %.4f (sampling floor %.4f)", distance, floor)
    return EquivarianceResult(distance, floor, run)


def equivariance_distance(
    state: State,
    hamiltonian: Hamiltonian,
    n_traj: int,
    t1: float,
    bins: Union[int, Sequence[int]] = DEFAULT_BINS,
    dt: Optional[float] = None,
    stream: Optional[StreamId] = None,
    t0: float = 0.0,
) -> float:
    """TV distance between guided samples and the evolved density at t1."""
    dt = dt if dt is not None else (t1 - t0) / 200.0
    stream = stream or StreamId(0, "equivariance")
    return equivariance_run(state, hamiltonian, n_traj, t1, dt, stream, bins=bins, t0=t0).distance


def _batch(state: State) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(state, SpinorField):
        return np.ones(1), state.data[np.newaxis]
    return state.weights, state.stacked()


def continuity_residual(
    state: State,
    hamiltonian: Hamiltonian,
    t: float,
    dt: float,
) -> Tuple[ScalarField, float]:
    """[rho(t+dt) - rho(t-dt)] / (2 dt) + div(rho v) at time t, and its L2 norm."""
    grid = hamiltonian.grid
    weights, data = _batch(state)

    def density(values: np.ndarray) -> np.ndarray:
        return np.einsum("m,m...k->...", weights, np.abs(values) ** 2)

    forward = density(step_array(data, hamiltonian, t, dt))
    backward = density(step_array(data, hamiltonian, t, -dt))
    guidance = GuidanceState.from_batch(grid, weights, data, hamiltonian)
    velocity = guidance.field()
    flux = guidance.density[..., np.newaxis] * velocity.values
    residual = ScalarField(grid, (forward - backward) / (2.0 * dt) + divergence(flux, grid))
    return residual, residual.l2_norm()


__all__ = [
    "EquivarianceResult",
    "equivariance_run",
    "equivariance_distance",
    "continuity_residual",
    "bin_density",
    "bin_points",
    "total_variation",
    "state_density",
]
