from __future__ import annotations

import abc
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple, Type, Union

from densities.bipartition import Bipartition
from densities.ensemble import DensityEnsemble
from evolution.hamiltonian import Hamiltonian
from lattice.errors import ConfigurationError, DegenerateDensityError, SimulationError, ValidationFailure
from lattice.fields import SpinorField
from lattice.grid import GridSpec


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioContext:
    """Everything a builder may depend on besides its own parameters."""

    grid: GridSpec
    hbar: float
    masses: Tuple[float, ...]
    dt: float
    t_final: float
    seed: int
    n_runs: int = 1
    snapshot_stride: int = 1


@dataclass
class BuiltScenario:
    state: Union[SpinorField, DensityEnsemble]
    hamiltonian: Hamiltonian
    split: Optional[Bipartition] = None
    metadata: Dict[str, Any] = field(default_factory=dict)


_REGISTRY: Dict[str, Type["ScenarioBuilder"]] = {}


class ScenarioBuilder(abc.ABC):
    """Base class for declarative scenario builders.

    Subclasses set ``name`` and register themselves on definition.
    """

    name: str
    description: str = ""

    def __init_subclass__(cls, **kwargs) -> None:
        super().__init_subclass__(**kwargs)
        if getattr(cls, "name", None):
            _REGISTRY[cls.name] = cls

    @abc.abstractmethod
    def build(self, context: ScenarioContext, params: Mapping[str, Any]) -> BuiltScenario:
        """Return the initial state and Hamiltonian for ``params``."""

    def preflight(self, context: ScenarioContext, params: Mapping[str, Any]) -> None:
        """Cheap geometric checks that need no field computation."""

    def build_safe(self, context: ScenarioContext, params: Mapping[str, Any]) -> BuiltScenario:
        return self._guarded(self.build, context, params)

    def preflight_safe(self, context: ScenarioContext, params: Mapping[str, Any]) -> None:
        self._guarded(self.preflight, context, params)

    def _guarded(self, step, context: ScenarioContext, params: Mapping[str, Any]):
        try:
            return step(context, params)
        except (DegenerateDensityError, ValidationFailure) as exc:
            raise ConfigurationError(f"{self.name}: {exc}", field="scenario.params") from exc
        except SimulationError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            logger.error("[%s] invalid parameters: %s", self.name, exc)
            raise ConfigurationError(f"{self.name}: invalid parameters ({exc})", field="scenario.params") from exc

    @staticmethod
    def require(params: Mapping[str, Any], key: str, prefix: str = "scenario.params") -> Any:
        if key not in params:
            raise ConfigurationError(f"missing scenario parameter {key!r}", field=f"{prefix}.{key}")
        return params[key]


def _load_builders() -> None:
    # defining a builder class registers it
    from scenarios.builders import entangled, epr, free_gaussian, mixed, oscillator  # noqa: F401


def get_builder(name: str) -> ScenarioBuilder:
    _load_builders()
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ConfigurationError(
            f"unknown scenario {name!r}; available: {', '.join(sorted(_REGISTRY))}", field="scenario.name"
        ) from None


def list_scenarios() -> List[Tuple[str, str]]:
    _load_builders()
    return sorted((name, builder.description) for name, builder in _REGISTRY.items())


ORACLE_KINDS = ("free_gaussian", "oscillator_coherent", "mixed_w_fundamental", "random_entangled")


def build_oracle_scenario(kind: str, params: Mapping[str, Any], context: ScenarioContext) -> BuiltScenario:
    """Analytic-oracle fixture of the given kind, reproducible from ``context.seed``."""
    if kind not in ORACLE_KINDS:
        raise ConfigurationError(
            f"unknown oracle kind {kind!r}; expected one of {', '.join(ORACLE_KINDS)}", field="scenario.name"
        )
    return get_builder(kind).build_safe(context, params)


__all__ = [
    "ScenarioContext",
    "BuiltScenario",
    "ScenarioBuilder",
    "get_builder",
    "list_scenarios",
    "build_oracle_scenario",
    "ORACLE_KINDS",
]
