"""
How far sequences of density matrices are from unitary evolution under H1.
"""
from __future__ import annotations

import logging
from typing import List, Sequence, Tuple

import numpy as np

from densities.ensemble import DensityEnsemble, frobenius_distance
from evolution.hamiltonian import Hamiltonian
from evolution.propagator import evolve_array
from lattice.errors import ShapeError


logger = logging.getLogger(__name__)

Snapshots = Sequence[Tuple[float, DensityEnsemble]]


def unitarity_deviations(series: Sequence[Snapshots], hamiltonian: Hamiltonian, dt: float) -> np.ndarray:
    """Deviation of every snapshot series from unitary evolution of its first member.

    All series must share the same snapshot times. The components of all
    reference ensembles are evolved together as one batch, incrementally from
    one snapshot time to the next.
    """
    if not series:
        return np.zeros(0)
    ordered = [sorted(snapshots, key=lambda item: item[0]) for snapshots in series]
    times = [t for t, _ in ordered[0]]
    if len(times) < 2:
        raise ShapeError("unitarity deviation needs at least two snapshots")
    for snapshots in ordered:
        if [t for t, _ in snapshots] != times:
            raise ShapeError("snapshot series do not share the same times")
        for _, w in snapshots:
            if w.grid != hamiltonian.grid or w.spin_dim != hamiltonian.spin_dim:
                raise ShapeError("snapshot does not live on the subsystem space of the Hamiltonian")

    firsts = [snapshots[0][1] for snapshots in ordered]
    offsets = np.cumsum([0] + [w.rank for w in firsts])
    data = np.concatenate([w.stacked() for w in firsts])
    worst = np.zeros(len(ordered))
    for index in range(1, len(times)):
        data = evolve_array(data, hamiltonian, times[index - 1], times[index], dt)
        for run, snapshots in enumerate(ordered):
            reference = DensityEnsemble.from_arrays(
                hamiltonian.grid, firsts[run].weights, data[offsets[run]:offsets[run + 1]]
            )
            distance = frobenius_distance(snapshots[index][1], reference)
            worst[run] = max(worst[run], distance)
        logger.debug("Unitarity check at t=%.4f, worst so far %.3e", times[index], worst.max())
    return worst


def unitarity_deviation(snapshots: Snapshots, hamiltonian: Hamiltonian, dt: float) -> float:
    """max_t || W(t) - U(t, t_first) W(t_first) U^dagger || over the snapshots."""
    return float(unitarity_deviations([snapshots], hamiltonian, dt)[0])


__all__ = ["unitarity_deviation", "unitarity_deviations"]
