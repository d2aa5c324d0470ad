"""
Monte Carlo studies of the density-matrix identities and of guidance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Sequence

import numpy as np
from joblib import Parallel, delayed

from densities.bipartition import Bipartition
from densities.constructions import Mixture, combined, conditional, reduced
from densities.ensemble import DensityEnsemble, average, frobenius_distance, purity
from evolution.hamiltonian import Hamiltonian
from guidance.diagnostics import EquivarianceResult, equivariance_run
from guidance.velocity import State, conditional_velocity, velocity_at
from lattice.errors import ConfigurationError
from lattice.fields import ScalarField, SpinorField
from lattice.grid import GridSpec
from lattice.sampling import StreamId, rng_for, sample_density
from scenarios.builders.entangled import random_entangled


logger = logging.getLogger(__name__)

IDENTITY_FLOOR = 0.05
ERROR_BARS = 3.0
DEFAULT_REPLICATES = 64


@dataclass
class IdentityStudy:
    """Distance of a Monte Carlo average of W_cond to its exact counterpart."""

    distance: float
    standard_error: float
    samples: int
    average: DensityEnsemble = field(repr=False)

    @property
    def tolerance(self) -> float:
        return max(IDENTITY_FLOOR, ERROR_BARS * self.standard_error)

    @property
    def passed(self) -> bool:
        return self.distance <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "distance": self.distance,
            "standard_error": self.standard_error,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "passed": self.passed,
        }


def environment_marginal(psi: SpinorField, split: Bipartition) -> ScalarField:
    """Normalized density of Q2: |Psi|^2 summed over spin and integrated over S1."""
    s2 = split.s2_grid(psi.grid)
    if s2 is None:
        raise ConfigurationError("the environment has no configuration axes to condition on", field="split.s2_dims")
    h1 = split.s1_grid(psi.grid).cell_volume
    density = np.sum(np.abs(psi.data) ** 2, axis=-1)
    values = h1 * density.sum(axis=split.s1_dims)
    return ScalarField(s2, values / (s2.cell_volume * values.sum()))


def _conditionals(psi: SpinorField, split: Bipartition, q2: np.ndarray, n_jobs: int) -> List[DensityEnsemble]:
    if n_jobs > 1:
        return list(Parallel(n_jobs=n_jobs, backend="threading")(
            delayed(conditional)(psi, split, point) for point in q2
        ))
    return [conditional(psi, split, point) for point in q2]


def _standard_error(ensembles: Sequence[DensityEnsemble], mean: DensityEnsemble) -> float:
    # E||C_i - C_bar||^2 = mean tr(C_i^2) - tr(C_bar^2)
    spread = float(np.mean([purity(w) for w in ensembles])) - purity(mean)
    return float(np.sqrt(max(spread, 0.0) / len(ensembles)))


def averaging_identity_study(
    psi: SpinorField,
    split: Bipartition,
    samples: int,
    stream: StreamId,
    n_jobs: int = 1,
) -> IdentityStudy:
    """Average W_cond over Q2 drawn from the S2 marginal and compare with W_red.

    Q2 is drawn at grid nodes, so the discrete average is unbiased for the
    discrete partial trace.
    """
    marginal = environment_marginal(psi, split)
    q2 = sample_density(marginal, samples, stream, jitter=False)
    ensembles = _conditionals(psi, split, q2, n_jobs)
    mean = average(ensembles)
    distance = frobenius_distance(mean, reduced(psi, split))
    study = IdentityStudy(distance, _standard_error(ensembles, mean), samples, mean)
    logger.info(
        "Averaging identity: distance %.4e with standard error %.4e over %d samples",
        distance, study.standard_error, samples,
    )
    return study


def combined_identity_study(
    mixture: Mixture,
    split: Bipartition,
    samples: int,
    stream: StreamId,
    n_jobs: int = 1,
) -> IdentityStudy:
    """Average W_cond over the mixture member and Q2, compare with W_comb."""
    weights = np.array([p for p, _ in mixture], dtype=float)
    counts = rng_for(stream.child(0)).multinomial(samples, weights / weights.sum())
    ensembles: List[DensityEnsemble] = []
    for member, ((_, psi), count) in enumerate(zip(mixture, counts)):
        if count == 0:
            continue
        q2 = sample_density(environment_marginal(psi, split), int(count), stream.child(member + 1), jitter=False)
        ensembles.extend(_conditionals(psi, split, q2, n_jobs))
    mean = average(ensembles)
    distance = frobenius_distance(mean, combined(mixture, split))
    study = IdentityStudy(distance, _standard_error(ensembles, mean), samples, mean)
    logger.info("Combined identity: distance %.4e over %d samples", distance, samples)
    return study


@dataclass
class ConvergenceResult:
    samples: int
    rms_distance: float
    rms_distance_doubled: float
    replicates: int

    @property
    def ratio(self) -> float:
        return self.rms_distance / self.rms_distance_doubled


def convergence_ratio(
    study: Callable[[int, StreamId], IdentityStudy],
    samples: int,
    stream: StreamId,
    replicates: int = DEFAULT_REPLICATES,
) -> ConvergenceResult:
    """RMS distance at ``samples`` over RMS distance at ``2 * samples``.

    ``study(samples, stream)`` runs one replicate; a 1/sqrt(M) error law
    gives a ratio near sqrt(2).
    """
    small = np.array([study(samples, StreamId(stream.seed, f"{stream.purpose}/M", r)).distance for r in range(replicates)])
    large = np.array([study(2 * samples, StreamId(stream.seed, f"{stream.purpose}/2M", r)).distance for r in range(replicates)])
    result = ConvergenceResult(samples, float(np.sqrt(np.mean(small ** 2))), float(np.sqrt(np.mean(large ** 2))), replicates)
    logger.info("Convergence ratio %.3f at M=%d over %d replicates", result.ratio, samples, replicates)
    return result


@dataclass
class ConditionalVelocityStudy:
    relative_errors: np.ndarray
    regularized: int
    queries: int

    @property
    def max_relative_error(self) -> float:
        return float(self.relative_errors.max()) if self.relative_errors.size else 0.0

    @property
    def regularized_fraction(self) -> float:
        return self.regularized / self.queries if self.queries else 0.0

    def as_dict(self) -> dict:
        return {
            "max_relative_error": self.max_relative_error,
            "median_relative_error": float(np.median(self.relative_errors)) if self.relative_errors.size else 0.0,
            "regularized": self.regularized,
            "queries": self.queries,
        }


def conditional_velocity_study(
    grid: GridSpec,
    split: Bipartition,
    hamiltonian: Hamiltonian,
    n_states: int,
    n_points: int,
    stream: StreamId,
    schmidt_rank: int = 2,
    bandwidth: int = 4,
) -> ConditionalVelocityStudy:
    """Full Bohm velocity (S1 components) versus the W_cond velocity at random points."""
    errors = []
    regularized = 0
    for index in range(n_states):
        psi = random_entangled(grid, split, schmidt_rank, bandwidth, StreamId(stream.seed, f"{stream.purpose}/state", index))
        points = sample_density(ScalarField(grid, psi.density()), n_points, StreamId(stream.seed, f"{stream.purpose}/points", index))
        full, flags = velocity_at(psi, hamiltonian, points)
        for point, velocity, flagged in zip(points, full, flags):
            if flagged:
                regularized += 1
                continue
            expected = split.s1_components(velocity)
            observed = conditional_velocity(psi, split, hamiltonian, point)
            scale = max(float(np.linalg.norm(expected)), np.finfo(float).tiny)
            errors.append(float(np.linalg.norm(observed - expected)) / scale)
    study = ConditionalVelocityStudy(np.array(errors), regularized, n_states * n_points)
    logger.info(
        "Conditional velocity: max relative error %.3e, %d regularized of %d queries",
        study.max_relative_error, regularized, study.queries,
    )
    return study


def equivariance_experiment(
    state: State,
    hamiltonian: Hamiltonian,
    n_traj: int,
    t1: float,
    dt: float,
    seed: int,
    bins: int = 64,
    record_stride: int = 1,
    progress: bool = False,
) -> EquivarianceResult:
    """Equivariance check with the trajectories kept for output."""
    return equivariance_run(
        state, hamiltonian, n_traj, t1, dt, StreamId(seed, "equivariance"),
        bins=bins, record_stride=record_stride, progress=progress,
    )


__all__ = [
    "IdentityStudy",
    "ConvergenceResult",
    "ConditionalVelocityStudy",
    "environment_marginal",
    "averaging_identity_study",
    "combined_identity_study",
    "convergence_ratio",
    "conditional_velocity_study",
    "equivariance_experiment",
]
