from __future__ import annotations

import logging
from typing import Any, Mapping

import numpy as np

from evolution.hamiltonian import Hamiltonian, PotentialPulse
from evolution.oracles import stationary_state
from lattice.errors import ConfigurationError, PhysicsValidationError, ToySizeError
from scenarios.builders.base import BuiltScenario, ScenarioBuilder, ScenarioContext
from scenarios.packets import TAIL_SIGMAS, coherent_state, oscillator_potential, oscillator_width


logger = logging.getLogger(__name__)


class OscillatorCoherentBuilder(ScenarioBuilder):
    """Displaced ground state of a harmonic trap.

    With zero displacement the exact stationary state of the discrete
    propagator is returned instead of the analytic Gaussian.
    """

    name = "oscillator_coherent"
    description = "Coherent state of a harmonic oscillator; a = 0 gives the stationary ground state"

    def build(self, context: ScenarioContext, params: Mapping[str, Any]) -> BuiltScenario:
        grid = context.grid
        omega = np.atleast_1d(np.asarray(self.require(params, "omega"), dtype=float))
        omega = np.full(grid.ndim, omega[0]) if omega.size == 1 else omega
        displacement = [float(a) for a in self.require(params, "displacement")]
        if len(displacement) != grid.ndim or omega.size != grid.ndim:
            raise ConfigurationError("one displacement and frequency per axis", field="scenario.params.displacement")
        if np.any(omega <= 0):
            raise ConfigurationError("omega must be positive", field="scenario.params.omega")

        for dim in range(grid.ndim):
            width = oscillator_width(context.masses[dim], omega[dim], context.hbar)
            reach = abs(displacement[dim]) + TAIL_SIGMAS * width
            if -reach <= grid.lower[dim] or reach >= grid.upper[dim]:
                raise PhysicsValidationError(f"coherent state on axis {dim} reaches the box edge", time=0.0)

        potential = PotentialPulse.static(oscillator_potential(grid, context.masses, omega), label="trap")
        hamiltonian = Hamiltonian(grid, 1, context.masses, hbar=context.hbar, schedule=[potential])
        psi = coherent_state(grid, context.masses, omega, displacement, context.hbar)
        metadata = {"omega": omega.tolist(), "displacement": displacement, "stationary": False}
        if not any(displacement):
            try:
                psi, energy = stationary_state(hamiltonian, context.dt, psi)
            except ToySizeError as exc:
                raise ConfigurationError(f"ground state needs a smaller grid: {exc}", field="grid.axes") from exc
            metadata.update(stationary=True, quasi_energy=energy)
            logger.info("Ground state with quasi-energy %.10f", energy)
        return BuiltScenario(psi, hamiltonian, metadata=metadata)


__all__ = ["OscillatorCoherentBuilder"]
