"""
Counter-based random streams and sampling from grid densities.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from lattice.errors import ConfigurationError, DegenerateDensityError
from lattice.fields import ScalarField


@dataclass(frozen=True)
class StreamId:
    """Key of one independent random stream: (global seed, purpose tag, index)."""

    seed: int
    purpose: str
    index: int = 0

    def child(self, index: int) -> "StreamId":
        return StreamId(self.seed, self.purpose, index)


def rng_for(stream: StreamId) -> np.random.Generator:
    if stream.seed < 0 or stream.index < 0:
        raise ConfigurationError("stream seed and index must be non-negative", field="seed")
    tag = zlib.crc32(stream.purpose.encode("utf-8"))
    key = np.random.SeedSequence([int(stream.seed), tag, int(stream.index)])
    return np.random.Generator(np.random.Philox(key))


def sample_density(rho: ScalarField, n: int, stream: StreamId, jitter: bool = True) -> np.ndarray:
    """Draw ``n`` configuration points distributed like ``rho``.

    A node is picked with probability proportional to rho(node); with
    ``jitter`` the point is then moved uniformly inside the node's cell
    ``[x - h/2, x + h/2)``, wrapped back into the periodic box. Returns an
    array of shape ``(n, D)``.
    """
    grid = rho.grid
    weights = rho.values.ravel()
    if not np.all(np.isfinite(weights)):
        raise DegenerateDensityError("density contains non-finite values")
    if weights.min(initial=0.0) < -1e-14 * max(weights.max(initial=0.0), 1.0):
        raise DegenerateDensityError("density has negative entries")
    weights = np.clip(weights, 0.0, None)
    total = weights.sum()
    if total <= 0.0:
        raise DegenerateDensityError("cannot sample from an all-zero density")

    rng = rng_for(stream)
    flat = rng.choice(weights.size, size=int(n), p=weights / total)
    nodes = np.stack(np.unravel_index(flat, grid.shape), axis=-1).astype(float)
    points = grid.lower + nodes * grid.spacing
    if jitter:
        points = points + rng.uniform(-0.5, 0.5, size=points.shape) * grid.spacing
        points = grid.wrap(points)
    return points


__all__ = ["StreamId", "rng_for", "sample_density"]
