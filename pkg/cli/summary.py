from __future__ import annotations

import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List

import numpy as np

from cli.schema import ScenarioConfig


logger = logging.getLogger(__name__)


def config_hash(config: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON dump of the validated config."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def plain(value: Any) -> Any:
    """Convert numpy scalars and arrays into YAML-friendly Python values."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def metric(value: Any, invariant: str, **extra: Any) -> Dict[str, Any]:
    entry = {"value": value, "invariant": invariant}
    entry.update(extra)
    return entry


@dataclass
class RunSummary:
    config: Dict[str, Any]
    config_hash: str
    status: str = "ok"
    metrics: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @classmethod
    def for_config(cls, config: ScenarioConfig) -> "RunSummary":
        return cls(config=config.model_dump(mode="json"), config_hash=config_hash(config))

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        """Record the wall-clock time of a pipeline phase."""
        started = time.perf_counter()
        logger.info("Phase %s started", name)
        try:
            yield
        finally:
            self.timings[name] = round(time.perf_counter() - started, 3)
            logger.info("Phase %s finished in %.3fs", name, self.timings[name])

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)

    def as_dict(self) -> Dict[str, Any]:
        return plain({
            "status": self.status,
            "config_hash": self.config_hash,
            "config": self.config,
            "metrics": self.metrics,
            "timings": self.timings,
            "warnings": self.warnings,
        })


__all__ = ["RunSummary", "config_hash", "metric", "plain"]
