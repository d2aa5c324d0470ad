"""
Atomic output files: write to a temporary sibling, fsync, rename.
"""
from __future__ import annotations

import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import yaml
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from guidance.trajectory import EnsembleRun
from lattice.fields import ScalarField


logger = logging.getLogger(__name__)


@retry(
    retry=retry_if_exception_type(OSError),
    stop=stop_after_attempt(3),
    wait=wait_exponential(multiplier=0.1, max=2),
    reraise=True,
)
def _commit(temporary: str, destination: Path) -> None:
    os.replace(temporary, destination)


def atomic_write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as stream:
            stream.write(text)
            stream.flush()
            os.fsync(stream.fileno())
        _commit(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise
    logger.debug("Wrote %s (%d bytes)", path, len(text))
    return path


def write_yaml(path: Path, document: Dict[str, Any]) -> Path:
    return atomic_write_text(path, yaml.safe_dump(document, sort_keys=False, default_flow_style=None))


def trajectories_csv(run: EnsembleRun, run_ids: Optional[Sequence[int]] = None) -> str:
    """One row per (run_id, t) with the configuration coordinates."""
    n_times, n_runs, ndim = run.points.shape
    run_ids = np.arange(n_runs) if run_ids is None else np.asarray(run_ids)
    header = ",".join(["run_id", "t[time]"] + [f"q{d}[length]" for d in range(ndim)])
    ids = np.repeat(run_ids, n_times)
    times = np.tile(run.times, n_runs)
    coordinates = run.points.transpose(1, 0, 2).reshape(-1, ndim)
    buffer = io.StringIO()
    buffer.write(header + "\n")
    table = np.column_stack([ids, times, coordinates])
    np.savetxt(buffer, table, delimiter=",", fmt=["%d", "%.10g"] + ["%.15g"] * ndim)
    return buffer.getvalue()


def density_csv(rho: ScalarField, t: float, label: str = "position_density") -> str:
    """Grid metadata as ``#`` lines, then one row per node in row-major order."""
    grid = rho.grid
    lines = [
        f"# quantity: {label}",
        f"# t: {t!r}",
        f"# shape: {','.join(str(n) for n in grid.shape)}",
        f"# lower: {','.join(repr(float(x)) for x in grid.lower)}",
        f"# spacing: {','.join(repr(float(x)) for x in grid.spacing)}",
        ",".join([f"q{d}[length]" for d in range(grid.ndim)] + ["rho[1/length^D]"]),
    ]
    nodes = np.stack([axis.ravel() for axis in grid.mesh()], axis=-1)
    buffer = io.StringIO()
    buffer.write("\n".join(lines) + "\n")
    np.savetxt(buffer, np.column_stack([nodes, rho.values.ravel()]), delimiter=",", fmt="%.15g")
    return buffer.getvalue()


class OutputWriter:
    """Single writer for everything a run produces."""

    def __init__(self, directory: Path) -> None:
        self.directory = Path(directory)
        self.written: Dict[str, Path] = {}

    def _record(self, key: str, path: Path) -> Path:
        self.written[key] = path
        return path

    def trajectories(self, run: EnsembleRun) -> Path:
        return self._record("trajectories", atomic_write_text(self.directory / "trajectories.csv", trajectories_csv(run)))

    def density_snapshot(self, rho: ScalarField, t: float, index: int) -> Path:
        path = self.directory / f"density_{index:04d}.csv"
        return self._record(f"density_{index:04d}", atomic_write_text(path, density_csv(rho, t)))

    def summary(self, document: Dict[str, Any]) -> Path:
        return self._record("summary", write_yaml(self.directory / "summary.yaml", document))

    def error(self, record: Dict[str, Any]) -> Path:
        return self._record("error", write_yaml(self.directory / "error.yaml", record))


__all__ = ["OutputWriter", "atomic_write_text", "write_yaml", "trajectories_csv", "density_csv"]
