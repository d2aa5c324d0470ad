from __future__ import annotations

import logging
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from evolution.hamiltonian import Hamiltonian
from lattice.errors import ConfigurationError, PhysicsValidationError
from lattice.fields import SpinorField, normalize
from lattice.grid import GridSpec
from scenarios.builders.base import BuiltScenario, ScenarioBuilder, ScenarioContext
from scenarios.packets import TAIL_SIGMAS, free_width, gaussian_profile


logger = logging.getLogger(__name__)


def check_free_flight(
    grid: GridSpec,
    center: Sequence[float],
    sigma: float,
    velocity: Sequence[float],
    masses: Sequence[float],
    t_final: float,
    hbar: float = 1.0,
    samples: int = 64,
) -> None:
    """Fail if a freely spreading packet reaches the box edge before ``t_final``."""
    for t in np.linspace(0.0, t_final, samples + 1):
        for dim in range(grid.ndim):
            width = free_width(sigma, t, masses[dim], hbar)
            position = center[dim] + velocity[dim] * t
            low, high = position - TAIL_SIGMAS * width, position + TAIL_SIGMAS * width
            if low <= grid.lower[dim] or high >= grid.upper[dim]:
                raise PhysicsValidationError(
                    f"packet reaches the edge of axis {dim} at t = {t:.4f}", time=float(t)
                )


def spin_resolved_packet(
    grid: GridSpec,
    center: Sequence[float],
    sigma: float,
    momenta: Sequence[Sequence[float]],
    amplitudes: Optional[Sequence[complex]] = None,
    hbar: float = 1.0,
) -> SpinorField:
    """Gaussian whose spin component s moves with its own mean momentum ``momenta[s]``."""
    k = len(momenta)
    amplitudes = np.full(k, 1.0 / np.sqrt(k)) if amplitudes is None else np.asarray(amplitudes, dtype=np.complex128)
    data = np.stack(
        [amplitudes[s] * gaussian_profile(grid, center, sigma, momenta[s], hbar) for s in range(k)], axis=-1
    )
    return normalize(SpinorField(grid, data))


class FreeGaussianBuilder(ScenarioBuilder):
    name = "free_gaussian"
    description = "Free Gaussian packet, optionally with a separate momentum per spin component"

    def _parse(self, context: ScenarioContext, params: Mapping[str, Any]):
        """Center, sigma and one momentum row per spin component.

        ``momentum`` is required unless ``spin_momenta`` is given, in which case
        ``amplitudes`` must name the weight of every spin component.
        """
        grid = context.grid
        center = [float(c) for c in self.require(params, "center")]
        sigma = float(self.require(params, "sigma"))
        if len(center) != grid.ndim:
            raise ConfigurationError("center needs one coordinate per axis", field="scenario.params.center")
        if sigma <= 0:
            raise ConfigurationError("sigma must be positive", field="scenario.params.sigma")
        if "spin_momenta" in params:
            momenta = [[float(p) for p in row] for row in params["spin_momenta"]]
            amplitudes = self.require(params, "amplitudes")
            if len(amplitudes) != len(momenta):
                raise ConfigurationError(
                    "amplitudes need one entry per spin component", field="scenario.params.amplitudes"
                )
        else:
            momenta = [[float(p) for p in self.require(params, "momentum")]]
            if "amplitudes" in params:
                raise ConfigurationError(
                    "amplitudes only apply together with spin_momenta", field="scenario.params.amplitudes"
                )
            amplitudes = None
        if any(len(row) != grid.ndim for row in momenta):
            raise ConfigurationError("momenta need one entry per axis", field="scenario.params.spin_momenta")
        return center, sigma, momenta, amplitudes

    def preflight(self, context: ScenarioContext, params: Mapping[str, Any]) -> None:
        center, sigma, momenta, _ = self._parse(context, params)
        for row in momenta:
            velocity = [row[d] / context.masses[d] for d in range(context.grid.ndim)]
            check_free_flight(context.grid, center, sigma, velocity, context.masses, context.t_final, context.hbar)

    def build(self, context: ScenarioContext, params: Mapping[str, Any]) -> BuiltScenario:
        self.preflight(context, params)
        grid = context.grid
        center, sigma, momenta, amplitudes = self._parse(context, params)
        psi = spin_resolved_packet(grid, center, sigma, momenta, amplitudes, context.hbar)
        hamiltonian = Hamiltonian(grid, psi.spin_dim, context.masses, hbar=context.hbar)
        logger.info("Built free Gaussian at %s with %d spin component(s)", center, psi.spin_dim)
        return BuiltScenario(
            psi, hamiltonian, metadata={"center": center, "sigma": sigma, "momenta": momenta}
        )


__all__ = ["FreeGaussianBuilder", "check_free_flight", "spin_resolved_packet"]
