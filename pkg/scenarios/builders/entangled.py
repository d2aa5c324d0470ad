from __future__ import annotations

import logging
from typing import Any, Mapping, Optional, Sequence

import numpy as np
import scipy.fft
import scipy.linalg

from densities.bipartition import Bipartition
from evolution.hamiltonian import Hamiltonian
from lattice.errors import ConfigurationError
from lattice.fields import SpinorField
from lattice.grid import GridSpec
from lattice.sampling import StreamId, rng_for
from scenarios.builders.base import BuiltScenario, ScenarioBuilder, ScenarioContext


logger = logging.getLogger(__name__)


def band_limited_columns(grid: GridSpec, spin_dim: int, count: int, bandwidth: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` orthonormal random vectors built from Fourier modes |m| <= bandwidth.

    Returned as a ``(grid.size * spin_dim, count)`` matrix with unit l2 columns.
    """
    shape = grid.shape + (spin_dim,)
    modes = np.ix_(*[np.abs(scipy.fft.fftfreq(n, 1.0 / n)) <= bandwidth for n in grid.shape])
    mask = np.zeros(grid.shape, dtype=bool)
    mask[modes] = True
    columns = []
    for _ in range(count):
        spectrum = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        spectrum = spectrum * mask[..., np.newaxis]
        values = scipy.fft.ifftn(spectrum, axes=tuple(range(grid.ndim)))
        columns.append(values.reshape(-1))
    q, _ = scipy.linalg.qr(np.stack(columns, axis=1), mode="economic")
    return q


def random_entangled(
    grid: GridSpec,
    split: Bipartition,
    schmidt_rank: int,
    bandwidth: int,
    stream: StreamId,
    coefficients: Optional[Sequence[float]] = None,
) -> SpinorField:
    """Band-limited random state with exactly ``schmidt_rank`` Schmidt terms.

    Psi = sum_i lambda_i u_i (x) v_i with orthonormal band-limited u_i on S1
    and v_i on S2.
    """
    split.check(grid, split.spin_dim)
    s1 = split.s1_grid(grid)
    s2 = split.s2_grid(grid)
    n1 = s1.size * split.k1
    n2 = split.s2_size(grid) * split.k2
    if not 1 <= schmidt_rank <= min(n1, n2):
        raise ConfigurationError(
            f"Schmidt rank {schmidt_rank} is not possible for dimensions {n1} x {n2}",
            field="scenario.params.schmidt_rank",
        )
    rng = rng_for(stream)
    left = band_limited_columns(s1, split.k1, schmidt_rank, bandwidth, rng)
    if s2 is None:
        right, _ = scipy.linalg.qr(
            rng.standard_normal((split.k2, schmidt_rank)) + 1j * rng.standard_normal((split.k2, schmidt_rank)),
            mode="economic",
        )
    else:
        right = band_limited_columns(s2, split.k2, schmidt_rank, bandwidth, rng)
    if coefficients is None:
        coefficients = np.sort(rng.uniform(0.2, 1.0, schmidt_rank))[::-1]
    coefficients = np.asarray(coefficients, dtype=float)
    coefficients = coefficients / np.linalg.norm(coefficients)
    matrix = (left * coefficients) @ right.T
    matrix = matrix / np.sqrt(s1.cell_volume * split.s2_cell_volume(grid))
    return SpinorField(grid, split.from_matrix(matrix, grid), normalized=True)


class RandomEntangledBuilder(ScenarioBuilder):
    name = "random_entangled"
    description = "Band-limited random bipartite state with a requested Schmidt rank"

    def build(self, context: ScenarioContext, params: Mapping[str, Any]) -> BuiltScenario:
        grid = context.grid
        s1_dims = tuple(int(d) for d in self.require(params, "s1_dims"))
        s2_dims = tuple(d for d in range(grid.ndim) if d not in s1_dims)
        split = Bipartition(s1_dims, s2_dims, int(self.require(params, "k1")), int(self.require(params, "k2")))
        bandwidth = int(self.require(params, "bandwidth"))
        if bandwidth < 1 or any(2 * bandwidth + 1 > n for n in grid.shape):
            raise ConfigurationError("bandwidth must resolve on the grid", field="scenario.params.bandwidth")
        rank = int(self.require(params, "schmidt_rank"))
        stream = StreamId(context.seed, "random_entangled", int(self.require(params, "index")))
        psi = random_entangled(grid, split, rank, bandwidth, stream, params.get("coefficients"))
        hamiltonian = Hamiltonian(grid, split.spin_dim, context.masses, hbar=context.hbar)
        logger.debug("Random entangled state: rank %d, split %s/%s", rank, s1_dims, s2_dims)
        return BuiltScenario(psi, hamiltonian, split=split, metadata={"schmidt_rank": rank})


__all__ = ["RandomEntangledBuilder", "random_entangled", "band_limited_columns"]
