from __future__ import annotations

from typing import Any, Mapping

from lattice.errors import ConfigurationError
from scenarios.builders.base import BuiltScenario, ScenarioBuilder, ScenarioContext
from scenarios.epr import EPRSetup, build_epr, check_geometry


def epr_setup(context: ScenarioContext, params: Mapping[str, Any]) -> EPRSetup:
    def pair(key: str):
        value = ScenarioBuilder.require(params, key)
        if len(value) != 2:
            raise ConfigurationError(f"{key} needs one entry per particle", field=f"scenario.params.{key}")
        return value

    windows = pair("windows")
    return EPRSetup(
        grid=context.grid,
        hbar=context.hbar,
        masses=tuple(float(m) for m in context.masses),
        centers=tuple(float(c) for c in pair("centers")),
        sigmas=tuple(float(s) for s in pair("sigmas")),
        couplings=tuple(float(c) for c in pair("couplings")),
        windows=tuple((float(a), float(b)) for a, b in windows),
        t_final=context.t_final,
        dt=context.dt,
        n_runs=context.n_runs,
        seed=context.seed,
        snapshot_stride=context.snapshot_stride,
        unitarity_snapshots=int(params.get("unitarity_snapshots", 7)),
    )


class EPRBuilder(ScenarioBuilder):
    name = "epr"
    description = "Singlet pair through two sequential Stern-Gerlach magnets"

    def preflight(self, context: ScenarioContext, params: Mapping[str, Any]) -> None:
        check_geometry(epr_setup(context, params))

    def build(self, context: ScenarioContext, params: Mapping[str, Any]) -> BuiltScenario:
        setup = epr_setup(context, params)
        psi, hamiltonian = build_epr(setup)
        return BuiltScenario(psi, hamiltonian, split=setup.split, metadata={"setup": setup})


__all__ = ["EPRBuilder", "epr_setup"]
