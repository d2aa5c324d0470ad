"""
Dense-matrix reference dynamics for small grids.

These build the propagators explicitly and are meant for checking the
split-step and ensemble code, not for production runs.
"""
from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from densities.kernels import KernelDensity
from evolution.hamiltonian import Hamiltonian
from evolution.propagator import step_array, step_count
from lattice.errors import ConfigurationError, ToySizeError
from lattice.fields import SpinorField, normalize
from lattice.spectral import apply_kinetic


logger = logging.getLogger(__name__)

MAX_STEP_OPERATOR_DIMENSION = 4096
MAX_SUPEROPERATOR_DIMENSION = 64


def _basis_images(hamiltonian: Hamiltonian, transform) -> np.ndarray:
    dimension = hamiltonian.grid.size * hamiltonian.spin_dim
    if dimension > MAX_STEP_OPERATOR_DIMENSION:
        raise ToySizeError(f"dense operators are limited to dimension {MAX_STEP_OPERATOR_DIMENSION}")
    basis = np.eye(dimension, dtype=np.complex128).reshape(
        (dimension,) + hamiltonian.grid.shape + (hamiltonian.spin_dim,)
    )
    images = transform(basis)
    return images.reshape(dimension, dimension).T


def dense_step_operator(hamiltonian: Hamiltonian, t: float, dt: float) -> np.ndarray:
    """Matrix of one Strang step in node-spin coordinates."""
    return _basis_images(hamiltonian, lambda basis: step_array(basis, hamiltonian, t, dt))


def dense_hamiltonian(hamiltonian: Hamiltonian, t: float) -> np.ndarray:
    """Matrix of H(t); the kinetic part uses the same spectral symbol as the stepper."""
    def transform(basis: np.ndarray) -> np.ndarray:
        kinetic = np.stack([
            apply_kinetic(column, hamiltonian.grid, hamiltonian.masses, hamiltonian.hbar) for column in basis
        ])
        return kinetic + hamiltonian.apply_potential(basis, t)

    matrix = _basis_images(hamiltonian, transform)
    return 0.5 * (matrix + matrix.conj().T)


def stationary_state(
    hamiltonian: Hamiltonian,
    dt: float,
    guess: SpinorField,
    t: float = 0.0,
) -> Tuple[SpinorField, float]:
    """Eigenvector of the discrete one-step propagator closest to ``guess``.

    For a spinless Hamiltonian with a real potential the step operator is
    complex symmetric, so its eigenvectors can be chosen real: the returned
    state has an identically vanishing Bohm velocity and is reproduced by
    every step up to the returned quasi-energy phase.
    """
    if hamiltonian.spin_dim != 1:
        raise ConfigurationError("stationary states are built for spinless Hamiltonians only")
    unitary = dense_step_operator(hamiltonian, t, dt)
    symmetric = np.real(0.5 * (unitary + unitary.T))
    _, vectors = scipy.linalg.eigh(symmetric)
    overlaps = np.abs(vectors.T @ guess.data.ravel())
    vector = vectors[:, int(np.argmax(overlaps))]
    vector = vector * np.sign(vector[int(np.argmax(np.abs(vector)))])
    phase = complex(vector @ unitary @ vector)
    energy = -float(np.angle(phase)) * hamiltonian.hbar / dt
    state = normalize(SpinorField(guess.grid, vector.reshape(guess.data.shape)))
    logger.debug("Stationary state with quasi-energy %.12f", energy)
    return state, energy


def von_neumann_kernel(
    kernel: KernelDensity,
    hamiltonian: Hamiltonian,
    t0: float,
    t1: float,
    dt: Optional[float] = None,
) -> KernelDensity:
    """Evolve a dense kernel with the commutator generator -i/hbar [H, .].

    The superoperator exponential is applied once per constant-potential
    segment between schedule breakpoints.
    """
    dimension = kernel.dimension
    if dimension > MAX_SUPEROPERATOR_DIMENSION:
        raise ToySizeError(f"von Neumann oracle is limited to dimension {MAX_SUPEROPERATOR_DIMENSION}")
    if dt is not None:
        step_count(t0, t1, dt, hamiltonian)
    cuts = [t0] + [b for b in hamiltonian.breakpoints if t0 < b < t1] + [t1]
    rho = kernel.operator()
    identity = np.eye(dimension)
    for start, end in zip(cuts, cuts[1:]):
        h = dense_hamiltonian(hamiltonian, 0.5 * (start + end))
        generator = -1j / hamiltonian.hbar * (np.kron(h, identity) - np.kron(identity, h.T))
        vector = scipy.linalg.expm(generator * (end - start)) @ rho.reshape(-1)
        rho = vector.reshape(dimension, dimension)
    return KernelDensity.from_operator(kernel.grid, kernel.spin_dim, rho)


__all__ = [
    "dense_step_operator",
    "dense_hamiltonian",
    "stationary_state",
    "von_neumann_kernel",
]
