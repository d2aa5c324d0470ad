from __future__ import annotations

import logging
from typing import Any, Mapping

from densities.constructions import statistical
from evolution.hamiltonian import Hamiltonian
from lattice.errors import ConfigurationError
from scenarios.builders.base import BuiltScenario, ScenarioBuilder, ScenarioContext
from scenarios.builders.free_gaussian import check_free_flight
from scenarios.packets import gaussian_packet


logger = logging.getLogger(__name__)


class MixedFundamentalBuilder(ScenarioBuilder):
    """Fundamental density matrix assembled from weighted Gaussian packets.

    Each entry of ``components`` carries ``weight``, ``center``, ``sigma``,
    ``momentum`` and ``spin`` (``[1]`` for a spinless packet); all spins must
    have the same length.
    """

    name = "mixed_w_fundamental"
    description = "Mixed fundamental density matrix built from weighted Gaussian packets"

    def build(self, context: ScenarioContext, params: Mapping[str, Any]) -> BuiltScenario:
        entries = self.require(params, "components")
        if not entries:
            raise ConfigurationError("at least one component is required", field="scenario.params.components")
        grid = context.grid
        mixture = []
        for index, entry in enumerate(entries):
            where = f"scenario.params.components[{index}]"
            weight = float(self.require(entry, "weight", where))
            center = [float(c) for c in self.require(entry, "center", where)]
            sigma = float(self.require(entry, "sigma", where))
            momentum = [float(p) for p in self.require(entry, "momentum", where)]
            spin = self.require(entry, "spin", where)
            if weight <= 0 or sigma <= 0 or len(center) != grid.ndim or len(momentum) != grid.ndim:
                raise ConfigurationError("component needs a positive weight and sigma and one center and momentum per axis", field=where)
            velocity = [momentum[d] / context.masses[d] for d in range(grid.ndim)]
            check_free_flight(grid, center, sigma, velocity, context.masses, context.t_final, context.hbar)
            psi = gaussian_packet(grid, center, sigma, momentum, spin, context.hbar)
            mixture.append((weight, psi))

        spin_dims = {psi.spin_dim for _, psi in mixture}
        if len(spin_dims) != 1:
            raise ConfigurationError("all components need the same spin dimension", field="scenario.params.components")
        total = sum(weight for weight, _ in mixture)
        w = statistical([(weight / total, psi) for weight, psi in mixture])
        hamiltonian = Hamiltonian(grid, w.spin_dim, context.masses, hbar=context.hbar)
        logger.info("Built fundamental density matrix of rank %d", w.rank)
        return BuiltScenario(w, hamiltonian, metadata={"weights": w.weights.tolist()})


__all__ = ["MixedFundamentalBuilder"]
