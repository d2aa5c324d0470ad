"""
Hamiltonians H = sum_j -hbar^2/(2 m_j) d^2/dq_j^2 + V(q, t) with a
piecewise-constant, k x k Hermitian matrix valued potential schedule.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from lattice.errors import HamiltonianError, ShapeError
from lattice.fields import SpinorField
from lattice.grid import GridSpec
from lattice.spectral import apply_kinetic, kinetic_symbol


logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class PotentialPulse:
    """V(q) held constant on ``[t_start, t_end)``; ``values`` is ``grid.shape + (k, k)``."""

    t_start: float
    t_end: float
    values: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.complex128))
        if math.isnan(self.t_start) or self.t_start == math.inf:
            raise HamiltonianError(f"pulse {self.label!r} has an invalid start time", field="t_start")
        if not self.t_end > self.t_start:
            raise HamiltonianError(
                f"pulse {self.label!r} ends at {self.t_end} before it starts at {self.t_start}",
                field="t_end",
            )

    @classmethod
    def static(cls, values: np.ndarray, label: str = "static") -> "PotentialPulse":
        """A potential switched on for all times."""
        return cls(-math.inf, math.inf, values, label)

    def active(self, t: float) -> bool:
        return self.t_start <= t < self.t_end

    @property
    def is_diagonal(self) -> bool:
        k = self.values.shape[-1]
        off = self.values * (1.0 - np.eye(k))
        return not np.any(off)


def spin_coupling(grid: GridSpec, dim: int, strength: float, matrix: np.ndarray) -> np.ndarray:
    """V(q) = strength * q_dim * matrix at every node."""
    coordinate = grid.mesh()[dim]
    return strength * coordinate[..., np.newaxis, np.newaxis] * np.asarray(matrix, dtype=np.complex128)


def scalar_potential(values: np.ndarray, spin_dim: int = 1) -> np.ndarray:
    """Spin-independent V(q) times the identity on C^k."""
    values = np.asarray(values, dtype=np.complex128)
    return values[..., np.newaxis, np.newaxis] * np.eye(spin_dim)


class Hamiltonian:
    """Kinetic masses plus an ordered, disjoint schedule of potential pulses.

    Between pulses the potential vanishes. Propagation factors are cached per
    (pulse, dt); the schedule is immutable after construction.
    """

    def __init__(
        self,
        grid: GridSpec,
        spin_dim: int,
        masses: Sequence[float],
        hbar: float = 1.0,
        schedule: Sequence[PotentialPulse] = (),
    ) -> None:
        self.grid = grid
        self.spin_dim = int(spin_dim)
        self.masses = tuple(float(m) for m in masses)
        self.hbar = float(hbar)
        if self.spin_dim < 1:
            raise HamiltonianError("spin dimension must be positive", field="spin_dim")
        if len(self.masses) != grid.ndim:
            raise HamiltonianError(
                f"{len(self.masses)} masses given for {grid.ndim} configuration axes", field="masses"
            )
        if any(not m > 0 or not math.isfinite(m) for m in self.masses):
            raise HamiltonianError("masses must be positive and finite", field="masses")
        if not self.hbar > 0:
            raise HamiltonianError("hbar must be positive", field="hbar")
        self.schedule: Tuple[PotentialPulse, ...] = tuple(sorted(schedule, key=lambda p: p.t_start))
        self._validate_schedule()
        self._cache: Dict[Tuple[Optional[int], float, str], np.ndarray] = {}
        self._lock = threading.Lock()

    def _validate_schedule(self) -> None:
        expected = self.grid.shape + (self.spin_dim, self.spin_dim)
        for pulse in self.schedule:
            if pulse.values.shape != expected:
                raise HamiltonianError(
                    f"pulse {pulse.label!r} potential has shape {pulse.values.shape}, expected {expected}",
                    field="schedule",
                )
            if not np.all(np.isfinite(pulse.values)):
                raise HamiltonianError(f"pulse {pulse.label!r} potential is not finite", field="schedule")
            defect = float(np.max(np.abs(pulse.values - np.swapaxes(pulse.values, -1, -2).conj())))
            if defect > HERMITIAN_TOLERANCE * max(1.0, float(np.max(np.abs(pulse.values)))):
                raise HamiltonianError(
                    f"pulse {pulse.label!r} potential is not Hermitian (defect {defect:.3e})",
                    field="schedule",
                )
        for earlier, later in zip(self.schedule, self.schedule[1:]):
            if later.t_start < earlier.t_end:
                raise HamiltonianError(
                    f"pulses {earlier.label!r} and {later.label!r} overlap", field="schedule"
                )

    def __repr__(self) -> str:
        return (
            f"Hamiltonian(shape={self.grid.shape}, k={self.spin_dim}, masses={self.masses}, "
            f"hbar={self.hbar}, pulses={len(self.schedule)})"
        )

    @property
    def breakpoints(self) -> List[float]:
        points = set()
        for pulse in self.schedule:
            for point in (pulse.t_start, pulse.t_end):
                if math.isfinite(point):
                    points.add(point)
        return sorted(points)

    @property
    def is_time_independent(self) -> bool:
        return not self.schedule or (
            len(self.schedule) == 1 and math.isinf(self.schedule[0].t_start) and math.isinf(self.schedule[0].t_end)
        )

    def active_index(self, t: float) -> Optional[int]:
        for index, pulse in enumerate(self.schedule):
            if pulse.active(t):
                return index
        return None

    def potential_at(self, t: float) -> Optional[np.ndarray]:
        index = self.active_index(t)
        return None if index is None else self.schedule[index].values

    def check_field(self, psi: SpinorField) -> None:
        if psi.grid != self.grid:
            raise ShapeError("field and Hamiltonian live on different grids")
        if psi.spin_dim != self.spin_dim:
            raise ShapeError(f"field has spin dimension {psi.spin_dim}, Hamiltonian expects {self.spin_dim}")

    def kinetic_phase(self, dt: float) -> np.ndarray:
        """exp(-i T(k) dt / hbar) on the spectral grid, with a trailing spin axis."""
        key = (None, float(dt), "kinetic")
        with self._lock:
            cached = self._cache.get(key)
        if cached is None:
            symbol = kinetic_symbol(self.grid, self.masses, self.hbar)
            cached = np.exp(-1j * symbol * dt / self.hbar)[..., np.newaxis]
            with self._lock:
                self._cache[key] = cached
        return cached

    def potential_factor(self, index: int, dt: float) -> np.ndarray:
        """exp(-i V dt / hbar) per node for pulse ``index``.

        Diagonal potentials return a ``grid.shape + (k,)`` array of phases,
        others a ``grid.shape + (k, k)`` stack of unitaries built from the
        eigendecomposition of each Hermitian V(q).
        """
        key = (index, float(dt), "potential")
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        pulse = self.schedule[index]
        if pulse.is_diagonal:
            diagonal = np.real(np.diagonal(pulse.values, axis1=-2, axis2=-1))
            cached = np.exp(-1j * diagonal * dt / self.hbar)
        else:
            hermitian = 0.5 * (pulse.values + np.swapaxes(pulse.values, -1, -2).conj())
            eigenvalues, vectors = np.linalg.eigh(hermitian)
            phases = np.exp(-1j * eigenvalues * dt / self.hbar)
            cached = np.einsum("...ij,...j,...kj->...ik", vectors, phases, vectors.conj())
        logger.debug("Cached potential factor for pulse %d at dt=%g", index, dt)
        with self._lock:
            self._cache[key] = cached
        return cached

    def apply_potential(self, values: np.ndarray, t: float) -> np.ndarray:
        """V(t) applied to field data (leading batch axes allowed)."""
        potential = self.potential_at(t)
        if potential is None:
            return np.zeros_like(values)
        return np.einsum("...ij,...j->...i", potential, values)

    def apply(self, psi: SpinorField, t: float) -> np.ndarray:
        """H psi as raw field data."""
        self.check_field(psi)
        kinetic = apply_kinetic(psi.data, self.grid, self.masses, self.hbar)
        return kinetic + self.apply_potential(psi.data, t)

    def restrict(
        self,
        dims: Sequence[int],
        spin_dim: int,
        schedule: Sequence[PotentialPulse] = (),
    ) -> "Hamiltonian":
        """Subsystem Hamiltonian on the axes ``dims`` with its own potential schedule."""
        dims = tuple(sorted(dims))
        return Hamiltonian(
            self.grid.subgrid(dims),
            spin_dim,
            [self.masses[d] for d in dims],
            hbar=self.hbar,
            schedule=schedule,
        )

    def free(self) -> "Hamiltonian":
        return Hamiltonian(self.grid, self.spin_dim, self.masses, hbar=self.hbar)


def energy_expectation(psi: SpinorField, hamiltonian: Hamiltonian, t: float = 0.0) -> float:
    """<psi|H(t)|psi> for a normalized psi."""
    h_psi = hamiltonian.apply(psi, t)
    return float(np.real(psi.grid.cell_volume * np.vdot(psi.data, h_psi)))


__all__ = [
    "PotentialPulse",
    "Hamiltonian",
    "energy_expectation",
    "spin_coupling",
    "scalar_potential",
    "HERMITIAN_TOLERANCE",
]
