"""
Strang split-step propagation of spinor fields and density ensembles.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.fft
from joblib import Parallel, delayed

from densities.ensemble import DensityEnsemble
from evolution.hamiltonian import Hamiltonian
from lattice.errors import ConfigurationError
from lattice.fields import NORMALIZATION_TOLERANCE, SpinorField


logger = logging.getLogger(__name__)

STEP_TOLERANCE = 1e-9
DRIFT_WARNING = 1e-10


@dataclass(frozen=True)
class PropagationResult:
    field: SpinorField
    norm_drift: float
    steps: int


def _spatial_axes(grid_ndim: int):
    # works for data with or without leading batch axes
    return tuple(range(-(grid_ndim + 1), -1))


def _half_potential(values: np.ndarray, hamiltonian: Hamiltonian, t_mid: float, dt: float) -> np.ndarray:
    index = hamiltonian.active_index(t_mid)
    if index is None:
        return values
    factor = hamiltonian.potential_factor(index, 0.5 * dt)
    if factor.ndim == hamiltonian.grid.ndim + 1:
        return factor * values
    return np.einsum("...ij,...j->...i", factor, values)


def step_array(values: np.ndarray, hamiltonian: Hamiltonian, t: float, dt: float) -> np.ndarray:
    """One Strang step on raw data shaped ``[batch,] grid.shape + (k,)``.

    The potential active at the step midpoint is used for both half steps.
    """
    axes = _spatial_axes(hamiltonian.grid.ndim)
    t_mid = t + 0.5 * dt
    values = _half_potential(values, hamiltonian, t_mid, dt)
    spectrum = scipy.fft.fftn(values, axes=axes)
    spectrum *= hamiltonian.kinetic_phase(dt)
    values = scipy.fft.ifftn(spectrum, axes=axes)
    return _half_potential(values, hamiltonian, t_mid, dt)


def step_schrodinger(psi: SpinorField, hamiltonian: Hamiltonian, t: float, dt: float) -> SpinorField:
    """Advance psi from t to t + dt."""
    if not dt > 0:
        raise ConfigurationError(f"time step must be positive, got {dt}", field="dt")
    hamiltonian.check_field(psi)
    data = step_array(psi.data, hamiltonian, t, dt)
    return SpinorField(psi.grid, data, normalized=_still_normalized(psi, data))


def _still_normalized(psi: SpinorField, data: np.ndarray) -> bool:
    if not psi.normalized:
        return False
    defect = abs(psi.grid.cell_volume * float(np.vdot(data, data).real) - 1.0)
    return defect <= NORMALIZATION_TOLERANCE


def step_count(t0: float, t1: float, dt: float, hamiltonian: Optional[Hamiltonian] = None) -> int:
    """Number of steps from t0 to t1; breakpoints must sit on the step lattice."""
    if not dt > 0:
        raise ConfigurationError(f"time step must be positive, got {dt}", field="dt")
    if t1 < t0:
        raise ConfigurationError(f"end time {t1} precedes start time {t0}", field="t_final")
    span = t1 - t0
    steps = int(round(span / dt))
    if abs(steps * dt - span) > STEP_TOLERANCE * max(1.0, abs(span)):
        raise ConfigurationError(
            f"dt = {dt} does not divide the interval [{t0}, {t1}]", field="dt"
        )
    if hamiltonian is not None:
        for breakpoint in hamiltonian.breakpoints:
            if t0 < breakpoint < t1:
                offset = (breakpoint - t0) / dt
                if abs(offset - round(offset)) > STEP_TOLERANCE * max(1.0, abs(offset)):
                    raise ConfigurationError(
                        f"potential breakpoint t = {breakpoint} is not on a step boundary of dt = {dt}",
                        field="schedule",
                    )
    return steps


def evolve_array(values: np.ndarray, hamiltonian: Hamiltonian, t0: float, t1: float, dt: float) -> np.ndarray:
    steps = step_count(t0, t1, dt, hamiltonian)
    for n in range(steps):
        values = step_array(values, hamiltonian, t0 + n * dt, dt)
    return values


def propagate(psi: SpinorField, hamiltonian: Hamiltonian, t0: float, t1: float, dt: float) -> PropagationResult:
    """evolve_field with norm-drift bookkeeping."""
    hamiltonian.check_field(psi)
    steps = step_count(t0, t1, dt, hamiltonian)
    h = psi.grid.cell_volume
    values = psi.data
    previous = math.sqrt(h * float(np.vdot(values, values).real))
    drift = 0.0
    for n in range(steps):
        values = step_array(values, hamiltonian, t0 + n * dt, dt)
        current = math.sqrt(h * float(np.vdot(values, values).real))
        drift += abs(current - previous)
        previous = current
    if drift > DRIFT_WARNING:
        logger.warning("Norm drift %.3e over %d steps", drift, steps)
    field = SpinorField(psi.grid, values, normalized=_still_normalized(psi, values))
    return PropagationResult(field=field, norm_drift=drift, steps=steps)


def evolve_field(psi: SpinorField, hamiltonian: Hamiltonian, t0: float, t1: float, dt: float) -> SpinorField:
    """Compose Strang steps from t0 to t1."""
    hamiltonian.check_field(psi)
    values = evolve_array(psi.data, hamiltonian, t0, t1, dt)
    return SpinorField(psi.grid, values, normalized=_still_normalized(psi, values))


def evolve_ensemble(
    w: DensityEnsemble,
    hamiltonian: Hamiltonian,
    t0: float,
    t1: float,
    dt: float,
    n_jobs: Optional[int] = None,
) -> DensityEnsemble:
    """Evolve every component; weights are unchanged."""
    step_count(t0, t1, dt, hamiltonian)
    if w.rank == 1 or not n_jobs or n_jobs == 1:
        fields = [evolve_field(psi, hamiltonian, t0, t1, dt) for psi in w.fields]
    else:
        fields = Parallel(n_jobs=n_jobs, backend="threading")(
            delayed(evolve_field)(psi, hamiltonian, t0, t1, dt) for psi in w.fields
        )
    return DensityEnsemble(tuple(zip(w.weights.tolist(), fields)))


__all__ = [
    "PropagationResult",
    "step_schrodinger",
    "step_array",
    "step_count",
    "evolve_array",
    "evolve_field",
    "evolve_ensemble",
    "propagate",
]
