from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict

from cli.schema import ScenarioConfig
from scenarios.builders.base import ScenarioContext, get_builder


logger = logging.getLogger(__name__)

COMPLEX_BYTES = 16
FLOAT_BYTES = 8
# sustained throughput assumed for FFT-dominated work on one core
FLOPS_PER_SECOND = 1.0e9


@dataclass
class ResourceEstimate:
    nodes: int
    spin_dim: int
    components: int
    steps: int
    memory_bytes: int
    seconds: float

    def as_dict(self) -> Dict[str, Any]:
        report = asdict(self)
        report["memory_mib"] = round(self.memory_bytes / 2 ** 20, 1)
        report["seconds"] = round(self.seconds, 1)
        return report


def _spin_dim(config: ScenarioConfig) -> int:
    params = config.scenario.params
    name = config.scenario.name
    if name == "epr":
        return 4
    if name == "random_entangled":
        return int(params.get("k1", 1)) * int(params.get("k2", 1))
    if name == "free_gaussian" and "spin_momenta" in params:
        return len(params["spin_momenta"])
    if name == "mixed_w_fundamental" and params.get("components"):
        return len(params["components"][0].get("spin") or [1])
    return 1


def estimate_resources(config: ScenarioConfig, threads: int = 1) -> ResourceEstimate:
    """Rough memory and time needs of a run, from sizes alone."""
    nodes = math.prod(axis.points for axis in config.grid.axes)
    ndim = len(config.grid.axes)
    spin_dim = _spin_dim(config)
    components = len(config.scenario.params.get("components", [])) or 1
    steps = int(round(config.time.t_final / config.time.dt))
    field = nodes * spin_dim * components * COMPLEX_BYTES
    # state, next state, gradients and the FFT work buffers, plus velocity fields at both step ends
    pipeline = field * (4 + ndim) + 2 * nodes * ndim * FLOAT_BYTES
    records = (steps // config.time.snapshot_stride + 2) * config.ensemble.n_runs * ndim * FLOAT_BYTES
    fft = 5.0 * nodes * max(math.log2(nodes), 1.0) * spin_dim * components
    # one Strang step and one gradient set per step
    seconds = steps * fft * (3 + ndim) / (FLOPS_PER_SECOND * max(threads, 1))
    return ResourceEstimate(nodes, spin_dim, components, steps, int(pipeline + records), seconds)


def context_for(config: ScenarioConfig) -> ScenarioContext:
    return ScenarioContext(
        grid=config.grid_spec(),
        hbar=config.physics.hbar,
        masses=tuple(config.physics.masses),
        dt=config.time.dt,
        t_final=config.time.t_final,
        seed=config.seed,
        n_runs=config.ensemble.n_runs,
        snapshot_stride=config.time.snapshot_stride,
    )


def preflight(config: ScenarioConfig, threads: int = 1) -> Dict[str, Any]:
    """Schema-valid config in, physics pre-flight report out; computes no fields."""
    builder = get_builder(config.scenario.name)
    builder.preflight_safe(context_for(config), config.scenario.params)
    estimate = estimate_resources(config, threads)
    logger.info(
        "Pre-flight ok: %s, about %.1f MiB and %.0f s",
        config.scenario.name, estimate.memory_bytes / 2 ** 20, estimate.seconds,
    )
    return {"status": "ok", "scenario": config.scenario.name, "estimate": estimate.as_dict()}


__all__ = ["ResourceEstimate", "estimate_resources", "context_for", "preflight"]
