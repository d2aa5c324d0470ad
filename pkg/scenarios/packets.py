"""
Analytic wave packets and their closed-form evolution, used as fixtures
and as reference values.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from lattice.fields import SpinorField, normalize
from lattice.grid import GridSpec


SPIN_UP = np.array([1.0, 0.0], dtype=np.complex128)
SPIN_DOWN = np.array([0.0, 1.0], dtype=np.complex128)
SIGMA_Z = np.diag([1.0, -1.0]).astype(np.complex128)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)

# |psi|^2 mass of a Gaussian beyond 5.73 standard deviations is below 1e-8
TAIL_SIGMAS = 5.73


def _per_axis(value, ndim: int) -> np.ndarray:
    array = np.atleast_1d(np.asarray(value, dtype=float))
    return np.full(ndim, array[0]) if array.size == 1 else array


def gaussian_profile(
    grid: GridSpec,
    center: Sequence[float],
    sigma,
    momentum: Optional[Sequence[float]] = None,
    hbar: float = 1.0,
) -> np.ndarray:
    """Gaussian amplitude whose |psi|^2 has standard deviation ``sigma`` per axis.

    Normalized under the grid quadrature; ``momentum`` gives the mean momentum.
    """
    center = _per_axis(center, grid.ndim)
    sigma = _per_axis(sigma, grid.ndim)
    momentum = np.zeros(grid.ndim) if momentum is None else _per_axis(momentum, grid.ndim)
    exponent = np.zeros(grid.shape, dtype=np.complex128)
    for dim, q in enumerate(grid.mesh()):
        exponent += -((q - center[dim]) ** 2) / (4.0 * sigma[dim] ** 2) + 1j * momentum[dim] * q / hbar
    values = np.exp(exponent)
    return values / np.sqrt(grid.cell_volume * np.sum(np.abs(values) ** 2))


def gaussian_packet(
    grid: GridSpec,
    center: Sequence[float],
    sigma,
    momentum: Optional[Sequence[float]] = None,
    spin: Optional[Sequence[complex]] = None,
    hbar: float = 1.0,
) -> SpinorField:
    """Spinor packet ``spin (x) gaussian``; spinless when ``spin`` is None."""
    profile = gaussian_profile(grid, center, sigma, momentum, hbar)
    spinor = np.array([1.0], dtype=np.complex128) if spin is None else np.asarray(spin, dtype=np.complex128)
    spinor = spinor / np.linalg.norm(spinor)
    return normalize(SpinorField(grid, profile[..., np.newaxis] * spinor))


def plane_wave(grid: GridSpec, modes: Sequence[int], spin: Optional[Sequence[complex]] = None) -> SpinorField:
    """exp(i k.q) with k on the reciprocal lattice (``modes`` integer per axis)."""
    phase = np.zeros(grid.shape)
    for dim, (q, mode) in enumerate(zip(grid.mesh(), modes)):
        phase = phase + 2.0 * np.pi * mode * (q - grid.axes[dim].min) / grid.axes[dim].length
    spinor = np.array([1.0], dtype=np.complex128) if spin is None else np.asarray(spin, dtype=np.complex128)
    spinor = spinor / np.linalg.norm(spinor)
    return normalize(SpinorField(grid, np.exp(1j * phase)[..., np.newaxis] * spinor))


def reciprocal_wavenumber(grid: GridSpec, dim: int, mode: int) -> float:
    return 2.0 * np.pi * mode / grid.axes[dim].length


def free_width(sigma0: float, t: float, mass: float, hbar: float = 1.0) -> float:
    """Standard deviation of |psi|^2 for a free Gaussian after time t."""
    return float(np.sqrt(sigma0 ** 2 + (hbar * t / (2.0 * mass * sigma0)) ** 2))


def oscillator_width(mass: float, omega: float, hbar: float = 1.0) -> float:
    """|psi|^2 standard deviation of the oscillator ground state."""
    return float(np.sqrt(hbar / (2.0 * mass * omega)))


def oscillator_potential(grid: GridSpec, masses: Sequence[float], omega, spin_dim: int = 1) -> np.ndarray:
    """V = sum_j m_j omega_j^2 q_j^2 / 2 as ``grid.shape + (k, k)``."""
    omega = _per_axis(omega, grid.ndim)
    values = np.zeros(grid.shape)
    for dim, q in enumerate(grid.mesh()):
        values = values + 0.5 * masses[dim] * omega[dim] ** 2 * q ** 2
    return values[..., np.newaxis, np.newaxis] * np.eye(spin_dim)


def coherent_state(
    grid: GridSpec,
    masses: Sequence[float],
    omega,
    displacement: Sequence[float],
    hbar: float = 1.0,
) -> SpinorField:
    """Oscillator ground state displaced by ``displacement``, at rest."""
    omega = _per_axis(omega, grid.ndim)
    widths = [oscillator_width(masses[d], omega[d], hbar) for d in range(grid.ndim)]
    return gaussian_packet(grid, displacement, widths, hbar=hbar)


def coherent_center(displacement: float, omega: float, t: float) -> float:
    return float(displacement * np.cos(omega * t))


def gaussian_overlap(sigma: float, distance: float) -> float:
    """<g_0, g_d> for two real unit Gaussians of |psi|^2 deviation sigma."""
    return float(np.exp(-distance ** 2 / (8.0 * sigma ** 2)))


__all__ = [
    "SPIN_UP",
    "SPIN_DOWN",
    "SIGMA_Z",
    "SIGMA_X",
    "TAIL_SIGMAS",
    "gaussian_profile",
    "gaussian_packet",
    "plane_wave",
    "reciprocal_wavenumber",
    "free_width",
    "oscillator_width",
    "oscillator_potential",
    "coherent_state",
    "coherent_center",
    "gaussian_overlap",
]
