"""
Verb implementations: run, validate, list-scenarios.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from cli.outputs import OutputWriter
from cli.preflight import context_for, preflight
from cli.schema import ScenarioConfig
from cli.summary import RunSummary, metric
from densities.diagnostics import validate
from densities.ensemble import DensityEnsemble, position_density
from guidance.diagnostics import continuity_residual, state_density
from guidance.velocity import State
from lattice.fields import SpinorField, norm
from lattice.sampling import StreamId
from scenarios.builders.base import BuiltScenario, ScenarioContext, get_builder, list_scenarios
from scenarios.builders.epr import epr_setup
from scenarios.epr import build_epr, run_epr_ensemble
from scenarios.packets import coherent_center
from scenarios.studies import averaging_identity_study, conditional_velocity_study, equivariance_experiment


logger = logging.getLogger(__name__)

DEFAULT_BINS = 64


def _as_ensemble(state: State) -> DensityEnsemble:
    return DensityEnsemble.pure(state) if isinstance(state, SpinorField) else state


def _fields(state: State) -> List[SpinorField]:
    return [state] if isinstance(state, SpinorField) else state.fields


def _record_validation(summary: RunSummary, state: State) -> None:
    report = validate(_as_ensemble(state))
    summary.metrics["initial_state_validation"] = metric(
        report.passed,
        "every initial state is a valid density matrix",
        failures=[check.as_dict() for check in report.failures],
    )
    if not report.passed:
        summary.warn(f"initial state failed validation: {[c.name for c in report.failures]}")


def _bins(config: ScenarioConfig) -> int:
    requested = int(config.scenario.params.get("bins", DEFAULT_BINS))
    return min([requested] + [axis.points for axis in config.grid.axes])


class ScenarioRunner:
    """Runs one scenario family and fills the summary."""

    def __init__(self, config: ScenarioConfig, threads: int, progress: bool, writer: OutputWriter, summary: RunSummary):
        self.config = config
        self.threads = threads
        self.progress = progress
        self.writer = writer
        self.summary = summary
        self.context: ScenarioContext = context_for(config)

    def snapshot(self, state: State, t: float, index: int) -> None:
        if self.config.output.density_snapshots:
            self.writer.density_snapshot(state_density(state), t, index)

    def epr(self) -> None:
        setup = epr_setup(self.context, self.config.scenario.params)
        with self.summary.phase("build"):
            prepared = build_epr(setup)
            psi0 = prepared[0]
            _record_validation(self.summary, psi0)
            self.snapshot(psi0, 0.0, 0)
        with self.summary.phase("ensemble"):
            result = run_epr_ensemble(setup, n_jobs=self.threads, progress=self.progress, prepared=prepared)
        self.summary.metrics.update(result.summary)
        self.summary.metrics["norm_drift"] = metric(
            abs(norm(result.run.final_state) ** 2 - 1.0), "the propagator conserves the norm"
        )
        self._excursions(result.run)
        undefined = result.summary["undefined_outcomes"]["count"]
        if undefined:
            self.summary.warn(f"{undefined} runs have undefined outcomes")
        with self.summary.phase("output"):
            if self.config.output.trajectories:
                self.writer.trajectories(result.run)
            self.snapshot(result.run.final_state, setup.t_final, 1)

    def guided(self, built: BuiltScenario) -> None:
        """Equivariance, continuity and norm checks for a guided state."""
        context = self.context
        _record_validation(self.summary, built.state)
        self.snapshot(built.state, 0.0, 0)
        with self.summary.phase("continuity"):
            _, residual = continuity_residual(built.state, built.hamiltonian, 0.0, context.dt)
        self.summary.metrics["continuity_residual"] = metric(
            residual, "d rho/dt + div(rho v) vanishes up to O(dt^2)", dt=context.dt
        )
        with self.summary.phase("trajectories"):
            result = equivariance_experiment(
                built.state, built.hamiltonian, self.config.ensemble.n_runs, context.t_final, context.dt,
                context.seed, bins=_bins(self.config), record_stride=self.config.time.snapshot_stride,
                progress=self.progress,
            )
        run = result.run
        self.summary.metrics["equivariance_tv_distance"] = metric(
            result.distance, "guided samples stay distributed like the evolved density",
            sampling_floor=result.sampling_floor, bins=_bins(self.config),
        )
        drift = max(abs(norm(field) ** 2 - 1.0) for field in _fields(run.final_state))
        self.summary.metrics["norm_drift"] = metric(drift, "the propagator conserves the norm")
        regularized = run.warnings["regularized_trajectories"]
        if regularized:
            self.summary.warn(f"{regularized} trajectories passed through regularized nodes")
        self._excursions(run)
        if "omega" in built.metadata:
            self._classical_tracking(built, run)
        with self.summary.phase("output"):
            if self.config.output.trajectories:
                self.writer.trajectories(run)
            self.snapshot(run.final_state, context.t_final, 1)

    def _classical_tracking(self, built: BuiltScenario, run) -> None:
        omega = np.asarray(built.metadata["omega"])
        displacement = np.asarray(built.metadata["displacement"])
        expected = np.array([
            coherent_center(a, w, t) - a for t in run.times for a, w in zip(displacement, omega)
        ]).reshape(len(run.times), 1, -1)
        moved = run.points - run.points[0]
        error = float(np.max(np.abs(moved - expected)))
        self.summary.metrics["classical_tracking_error"] = metric(
            error, "coherent-state trajectories follow the classical sinusoid"
        )

    def entangled(self, built: BuiltScenario) -> None:
        _record_validation(self.summary, built.state)
        self.snapshot(built.state, 0.0, 0)
        params = self.config.scenario.params
        with self.summary.phase("averaging_identity"):
            study = averaging_identity_study(
                built.state, built.split, self.config.ensemble.n_runs,
                StreamId(self.context.seed, "averaging_identity"), n_jobs=self.threads,
            )
        self.summary.metrics["averaging_identity"] = metric(
            study.distance, "the average conditional density matrix is the reduced one", **study.as_dict()
        )
        reduced_report = validate(study.average)
        self.summary.metrics["average_validation"] = metric(
            reduced_report.passed, "averaged conditional matrices are valid density matrices"
        )
        with self.summary.phase("conditional_velocity"):
            velocity = conditional_velocity_study(
                self.context.grid, built.split, built.hamiltonian,
                n_states=int(params.get("velocity_states", 10)), n_points=int(params.get("velocity_points", 10)),
                stream=StreamId(self.context.seed, "conditional_velocity"),
                schmidt_rank=int(params["schmidt_rank"]), bandwidth=int(params["bandwidth"]),
            )
        self.summary.metrics["conditional_velocity"] = metric(
            velocity.max_relative_error,
            "conditional density matrix velocity equals the S1 part of the full velocity",
            **velocity.as_dict(),
        )
        if velocity.regularized:
            self.summary.warn(f"{velocity.regularized} conditional-velocity queries hit regularized nodes")

    def _excursions(self, run) -> None:
        excursions = int(np.sum(~np.isnan(run.boundary_excursions)))
        self.summary.metrics["boundary_excursions"] = metric(
            excursions, "trajectories stay inside the padded safe region"
        )
        if excursions:
            self.summary.warn(f"{excursions} trajectories left the safe region")

    def run(self) -> None:
        name = self.config.scenario.name
        if name == "epr":
            self.epr()
            return
        builder = get_builder(name)
        with self.summary.phase("build"):
            built = builder.build_safe(self.context, self.config.scenario.params)
        if name == "random_entangled":
            self.entangled(built)
        else:
            self.guided(built)


def output_directory(config: Optional[ScenarioConfig], override: Optional[str], default: str) -> Path:
    if override:
        return Path(override)
    if config is not None and config.output.directory:
        return Path(config.output.directory)
    return Path(default)


def handle_run(config: ScenarioConfig, directory: Path, threads: int, progress: bool) -> Dict[str, Any]:
    preflight(config, threads)
    writer = OutputWriter(directory)
    summary = RunSummary.for_config(config)
    logger.info("Running %s (config %s) into %s", config.scenario.name, summary.config_hash[:12], directory)
    ScenarioRunner(config, threads, progress, writer, summary).run()
    if config.output.summary:
        writer.summary(summary.as_dict())
    return {"status": "ok", "output_dir": str(directory), "files": sorted(str(p) for p in writer.written.values())}


def handle_validate(config: ScenarioConfig, threads: int) -> Dict[str, Any]:
    return preflight(config, threads)


def handle_list() -> List[Dict[str, str]]:
    return [{"name": name, "description": description} for name, description in list_scenarios()]


__all__ = ["ScenarioRunner", "handle_run", "handle_validate", "handle_list", "output_directory"]
