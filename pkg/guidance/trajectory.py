"""
Co-integration of wave functions (or density matrices) and configurations.

One field pipeline advances the state step by step; every trajectory in the
batch reads the same frozen velocity field, the mean of the fields at the two
step boundaries, so many trajectories cost little more than one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from densities.ensemble import DensityEnsemble
from evolution.hamiltonian import Hamiltonian
from evolution.propagator import step_array, step_count
from guidance.velocity import GuidanceState, State, VelocityField
from lattice.errors import ShapeError
from lattice.fields import SpinorField
from lattice.grid import GridSpec


logger = logging.getLogger(__name__)

SAFE_FRACTION = 0.05


@dataclass
class Trajectory:
    """Q(t) for one run, with subsystem labels and integration metadata."""

    times: np.ndarray
    points: np.ndarray
    labels: Dict[str, Tuple[int, ...]] = field(default_factory=dict)
    metadata: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, np.newaxis]
        if self.times.shape[0] != self.points.shape[0]:
            raise ShapeError("a trajectory needs one point per time")
        if np.any(np.diff(self.times) <= 0):
            raise ShapeError("trajectory times must be strictly increasing")

    @property
    def final(self) -> np.ndarray:
        return self.points[-1]

    def subsystem(self, label: str) -> np.ndarray:
        return self.points[:, list(self.labels[label])]


@dataclass
class StepSnapshot:
    """Pipeline state at a step boundary, handed to observers."""

    t: float
    grid: GridSpec
    weights: np.ndarray
    data: np.ndarray
    points: np.ndarray
    pure: bool
    normalized: bool = True

    def state(self) -> State:
        if self.pure:
            return SpinorField(self.grid, self.data[0], normalized=self.normalized)
        return DensityEnsemble.from_arrays(self.grid, self.weights, self.data)


Observer = Callable[[StepSnapshot], None]


@dataclass
class EnsembleRun:
    """Result of integrating a batch of trajectories."""

    times: np.ndarray
    points: np.ndarray
    boundary_excursions: np.ndarray
    regularized_steps: np.ndarray
    final_state: State

    @property
    def final_points(self) -> np.ndarray:
        return self.points[-1]

    def trajectory(self, index: int, labels: Optional[Dict[str, Tuple[int, ...]]] = None) -> Trajectory:
        excursion = self.boundary_excursions[index]
        metadata = {
            "run_id": int(index),
            "boundary_excursion_time": None if np.isnan(excursion) else float(excursion),
            "regularized_steps": int(self.regularized_steps[index]),
        }
        return Trajectory(self.times, self.points[:, index, :], labels or {}, metadata)

    @property
    def warnings(self) -> Dict[str, int]:
        return {
            "boundary_excursions": int(np.count_nonzero(~np.isnan(self.boundary_excursions))),
            "regularized_trajectories": int(np.count_nonzero(self.regularized_steps)),
        }


def _batch(state: State) -> Tuple[np.ndarray, np.ndarray, bool, bool]:
    if isinstance(state, SpinorField):
        return np.ones(1), state.data[np.newaxis], True, state.normalized
    if isinstance(state, DensityEnsemble):
        return state.weights, state.stacked(), False, True
    raise TypeError(f"cannot integrate a {type(state).__name__}")


def rk4_frozen(points: np.ndarray, velocity: VelocityField, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Classical RK4 in a velocity field held fixed over the step."""
    k1 = velocity.at(points)
    k2 = velocity.at(points + 0.5 * dt * k1)
    k3 = velocity.at(points + 0.5 * dt * k2)
    k4 = velocity.at(points + dt * k3)
    flagged = velocity.flagged_at(points)
    return points + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), flagged


def midpoint_field(start: VelocityField, end: VelocityField) -> VelocityField:
    """Mean of the fields at t and t + dt; a node is flagged if either end flagged it."""
    return VelocityField(start.grid, 0.5 * (start.values + end.values), start.epsilon, start.flagged | end.flagged)


class CoIntegrator:
    """Advances (state, configurations) together on a fixed step lattice."""

    def __init__(
        self,
        hamiltonian: Hamiltonian,
        dt: float,
        padding: Optional[Sequence[float]] = None,
        progress: bool = False,
    ) -> None:
        self.hamiltonian = hamiltonian
        self.dt = float(dt)
        grid = hamiltonian.grid
        self.padding = np.asarray(padding if padding is not None else SAFE_FRACTION * grid.lengths, dtype=float)
        self.progress = progress

    def _outside_safe_region(self, points: np.ndarray) -> np.ndarray:
        grid = self.hamiltonian.grid
        lower = grid.lower + self.padding
        upper = grid.upper - self.padding
        return np.any((points < lower) | (points > upper), axis=-1)

    def run(
        self,
        points: np.ndarray,
        state: State,
        t0: float,
        t1: float,
        observer: Optional[Observer] = None,
        record_stride: int = 1,
    ) -> EnsembleRun:
        grid = self.hamiltonian.grid
        if state.grid != grid:
            raise ShapeError("state and Hamiltonian live on different grids")
        points = grid.wrap(np.atleast_2d(np.asarray(points, dtype=float)))
        if points.shape[-1] != grid.ndim:
            raise ShapeError(f"points have {points.shape[-1]} coordinates, grid has {grid.ndim}")
        steps = step_count(t0, t1, self.dt, self.hamiltonian)
        weights, data, pure, normalized = _batch(state)
        n = points.shape[0]
        excursions = np.full(n, np.nan)
        regularized = np.zeros(n, dtype=np.int64)
        times = [t0]
        recorded = [points.copy()]
        self._mark(excursions, points, t0)

        logger.info("Co-integrating %d trajectories over %d steps (dt=%g)", n, steps, self.dt)
        if observer is not None:
            observer(StepSnapshot(t0, grid, weights, data, points, pure, normalized))
        current = GuidanceState.from_batch(grid, weights, data, self.hamiltonian).field()
        for step in tqdm(range(steps), disable=not self.progress, desc="steps", leave=False):
            t = t0 + step * self.dt
            data = step_array(data, self.hamiltonian, t, self.dt)
            following = GuidanceState.from_batch(grid, weights, data, self.hamiltonian).field()
            points, flagged = rk4_frozen(points, midpoint_field(current, following), self.dt)
            current = following
            points = grid.wrap(points)
            regularized += flagged
            t_next = t0 + (step + 1) * self.dt
            self._mark(excursions, points, t_next)
            if (step + 1) % record_stride == 0 or step + 1 == steps:
                times.append(t_next)
                recorded.append(points.copy())
            if observer is not None:
                observer(StepSnapshot(t_next, grid, weights, data, points, pure, normalized))

        flagged_runs = int(np.count_nonzero(~np.isnan(excursions)))
        if flagged_runs:
            logger.warning("%d of %d trajectories left the padded safe region", flagged_runs, n)
        if np.any(regularized):
            logger.warning("%d trajectories passed regularized nodes", int(np.count_nonzero(regularized)))
        final = SpinorField(grid, data[0], normalized=normalized) if pure else DensityEnsemble.from_arrays(grid, weights, data)
        return EnsembleRun(np.array(times), np.stack(recorded), excursions, regularized, final)

    def _mark(self, excursions: np.ndarray, points: np.ndarray, t: float) -> None:
        outside = self._outside_safe_region(points) & np.isnan(excursions)
        excursions[outside] = t


def integrate_ensemble(
    points: np.ndarray,
    state: State,
    hamiltonian: Hamiltonian,
    t0: float,
    t1: float,
    dt: float,
    observer: Optional[Observer] = None,
    record_stride: int = 1,
    padding: Optional[Sequence[float]] = None,
    progress: bool = False,
) -> EnsembleRun:
    return CoIntegrator(hamiltonian, dt, padding=padding, progress=progress).run(
        points, state, t0, t1, observer=observer, record_stride=record_stride
    )


def integrate_trajectory(
    initial: Sequence[float],
    state: State,
    hamiltonian: Hamiltonian,
    t0: float,
    t1: float,
    dt: float,
    labels: Optional[Dict[str, Tuple[int, ...]]] = None,
) -> Trajectory:
    """Single trajectory from ``initial``; each step evolves the field then moves Q by RK4."""
    run = integrate_ensemble(np.atleast_2d(initial), state, hamiltonian, t0, t1, dt)
    return run.trajectory(0, labels)


__all__ = [
    "Trajectory",
    "StepSnapshot",
    "EnsembleRun",
    "CoIntegrator",
    "rk4_frozen",
    "midpoint_field",
    "integrate_ensemble",
    "integrate_trajectory",
    "SAFE_FRACTION",
]
