"""Tests for grids, fields, spectral derivatives, interpolation and sampling."""
import numpy as np
import pytest
import scipy.stats
from numpy.testing import assert_allclose

from lattice.errors import ConfigurationError, DegenerateDensityError, GridError, ShapeError, ValidationFailure
from lattice.fields import ScalarField, SpinorField, inner_product, norm, normalize
from lattice.grid import Axis, GridSpec
from lattice.interpolation import interpolate, interpolate_axes, interpolate_points
from lattice.sampling import StreamId, rng_for, sample_density
from lattice.spectral import divergence, gradient, gradient_array, gradients_array
from scenarios.packets import gaussian_packet


class TestGrid:
    def test_axis_requires_power_of_two(self):
        """Non power-of-two node counts are rejected."""
        with pytest.raises(GridError, match="power of two"):
            Axis(-1.0, 1.0, 100)

    def test_axis_rejects_inverted_bounds(self):
        with pytest.raises(GridError):
            Axis(1.0, -1.0, 16)

    def test_spacing_and_cell_volume(self, plane_grid):
        assert_allclose(plane_grid.spacing, [0.5, 0.5])
        assert plane_grid.cell_volume == pytest.approx(0.25)
        assert plane_grid.shape == (32, 32)
        assert plane_grid.size == 1024

    def test_nodes_exclude_upper_edge(self, line_grid):
        nodes = line_grid.coordinates(0)
        assert nodes[0] == pytest.approx(-10.0)
        assert nodes[-1] == pytest.approx(10.0 - line_grid.spacing[0])

    def test_wrap_is_periodic(self, line_grid):
        wrapped = line_grid.wrap(np.array([[10.5], [-10.25], [3.0]]))
        assert_allclose(wrapped[:, 0], [-9.5, 9.75, 3.0])

    def test_subgrid_keeps_axes(self, plane_grid):
        sub = plane_grid.subgrid((1,))
        assert sub.ndim == 1
        assert sub.axes[0] == plane_grid.axes[1]

    def test_too_many_dimensions(self):
        with pytest.raises(GridError):
            GridSpec.from_bounds([(-1.0, 1.0, 8)] * 4)


class TestFields:
    def test_shape_mismatch(self, line_grid):
        with pytest.raises(ShapeError):
            SpinorField(line_grid, np.zeros((64, 1)))

    def test_normalized_flag_is_checked(self, line_grid):
        with pytest.raises(ValidationFailure):
            SpinorField(line_grid, np.ones((128, 1)), normalized=True)

    def test_normalize(self, line_grid):
        psi = normalize(SpinorField(line_grid, np.ones((128, 2))))
        assert norm(psi) == pytest.approx(1.0, abs=1e-12)
        assert inner_product(psi, psi) == pytest.approx(1.0, abs=1e-12)

    def test_normalize_zero_field(self, line_grid):
        with pytest.raises(DegenerateDensityError, match="zero field"):
            normalize(SpinorField(line_grid, np.zeros((128, 1))))

    def test_non_finite_amplitudes(self, line_grid):
        data = np.ones((128, 1))
        data[5] = np.nan
        with pytest.raises(ValidationFailure, match="non-finite"):
            SpinorField(line_grid, data)

    def test_scalar_field_integral(self, line_grid):
        rho = ScalarField(line_grid, np.full(128, 0.05))
        assert rho.integral() == pytest.approx(1.0)

    def test_inner_product_conjugates_first_argument(self, line_grid):
        psi = gaussian_packet(line_grid, [0.0], 1.0)
        assert inner_product(psi * 1j, psi) == pytest.approx(-1j, abs=1e-12)


class TestSpectral:
    def test_derivative_of_resolved_sine(self, line_grid):
        """Spectral derivative is exact for band-limited periodic data."""
        q = line_grid.coordinates(0)
        k = 2.0 * np.pi * 3 / 20.0
        values = np.sin(k * (q + 10.0))[:, np.newaxis]
        derivative = gradient_array(values, line_grid, 0)
        assert_allclose(derivative[:, 0].real, k * np.cos(k * (q + 10.0)), atol=1e-10)

    def test_gaussian_gradient_matches_the_closed_form(self, line_grid):
        psi = gaussian_packet(line_grid, [0.5], 1.0, momentum=[1.3])
        q = line_grid.coordinates(0)
        expected = (-(q - 0.5) / 2.0 + 1.3j)[:, np.newaxis] * psi.data
        assert_allclose(gradient(psi, 0).data, expected, atol=1e-9)

    def test_gradients_match_single_axis(self, plane_grid):
        rng = np.random.default_rng(0)
        values = rng.standard_normal(plane_grid.shape + (2,))
        stacked = gradients_array(values, plane_grid)
        for dim in range(2):
            assert_allclose(stacked[dim], gradient_array(values, plane_grid, dim), atol=1e-12)

    def test_gradient_field_wrapper(self, line_grid):
        psi = gaussian_packet(line_grid, [0.0], 1.0, momentum=[0.5])
        assert gradient(psi, 0).data.shape == psi.data.shape

    def test_divergence_of_linear_flow(self, plane_grid):
        x, y = plane_grid.mesh()
        components = np.stack([np.sin(np.pi * x / 8.0), np.cos(np.pi * y / 8.0)], axis=-1)
        expected = np.pi / 8.0 * np.cos(np.pi * x / 8.0) - np.pi / 8.0 * np.sin(np.pi * y / 8.0)
        assert_allclose(divergence(components, plane_grid), expected, atol=1e-10)

    def test_divergence_shape_check(self, plane_grid):
        with pytest.raises(ShapeError):
            divergence(np.zeros(plane_grid.shape), plane_grid)


class TestInterpolation:
    def test_exact_at_nodes(self, plane_grid):
        rng = np.random.default_rng(1)
        values = rng.standard_normal(plane_grid.shape + (3,))
        x, y = plane_grid.mesh()
        nodes = np.stack([x[3, 7], y[3, 7]])
        assert_allclose(interpolate_points(values, plane_grid, nodes[np.newaxis])[0], values[3, 7])

    def test_linear_data_reproduced(self, plane_grid):
        x, y = plane_grid.mesh()
        values = (2.0 * x - 0.5 * y)[..., np.newaxis]
        points = np.array([[0.13, -2.71], [3.3, 1.01]])
        result = interpolate_points(values, plane_grid, points)[:, 0]
        assert_allclose(result, 2.0 * points[:, 0] - 0.5 * points[:, 1], atol=1e-12)

    def test_axis_order_does_not_matter(self, plane_grid):
        rng = np.random.default_rng(2)
        values = rng.standard_normal(plane_grid.shape)
        both = interpolate_axes(values, plane_grid, (0, 1), (0.3, -1.7))
        swapped = interpolate_axes(values, plane_grid, (1, 0), (-1.7, 0.3))
        point = interpolate_points(values, plane_grid, np.array([[0.3, -1.7]]))[0]
        assert float(both) == pytest.approx(float(swapped))
        assert float(both) == pytest.approx(float(point))

    def test_interpolate_field(self, line_grid):
        psi = gaussian_packet(line_grid, [0.0], 1.0)
        node = line_grid.coordinates(0)[64]
        assert_allclose(interpolate(psi, [node]), psi.data[64])


class TestSampling:
    def test_streams_are_reproducible(self):
        a = rng_for(StreamId(7, "x", 2)).standard_normal(5)
        b = rng_for(StreamId(7, "x", 2)).standard_normal(5)
        assert_allclose(a, b)

    def test_streams_differ_by_purpose_and_index(self):
        base = rng_for(StreamId(7, "x", 0)).standard_normal(5)
        assert not np.allclose(base, rng_for(StreamId(7, "y", 0)).standard_normal(5))
        assert not np.allclose(base, rng_for(StreamId(7, "x", 1)).standard_normal(5))

    def test_samples_follow_density(self, line_grid, stream):
        psi = gaussian_packet(line_grid, [1.5], 1.0)
        points = sample_density(ScalarField(line_grid, psi.density()), 20000, stream)
        assert points.shape == (20000, 1)
        assert points.mean() == pytest.approx(1.5, abs=0.05)
        assert points.std() == pytest.approx(1.0, abs=0.05)

    def test_exact_nodes_without_jitter(self, line_grid, stream):
        psi = gaussian_packet(line_grid, [0.0], 1.0)
        points = sample_density(ScalarField(line_grid, psi.density()), 100, stream, jitter=False)
        offsets = (points[:, 0] - line_grid.lower[0]) / line_grid.spacing[0]
        assert_allclose(offsets, np.round(offsets), atol=1e-9)

    def test_zero_density(self, line_grid, stream):
        with pytest.raises(DegenerateDensityError):
            sample_density(ScalarField(line_grid, np.zeros(128)), 10, stream)

    def test_jitter_fills_cells_uniformly(self, toy_grid, stream):
        """Test jittered samples of a flat density against a uniform law on quarter-cell bins."""
        points = sample_density(ScalarField(toy_grid, np.ones(16)), 32_000, stream)
        counts, _ = np.histogram(points[:, 0], bins=64, range=(toy_grid.lower[0], toy_grid.upper[0]))
        assert counts.sum() == 32_000
        assert scipy.stats.chisquare(counts).pvalue > 1e-3

    def test_edge_node_samples_stay_in_the_box(self, toy_grid, stream):
        values = np.zeros(16)
        values[0] = 1.0
        points = sample_density(ScalarField(toy_grid, values), 2000, stream)[:, 0]
        lower, upper = toy_grid.lower[0], toy_grid.upper[0]
        half = 0.5 * toy_grid.spacing[0]
        assert np.all((points >= lower) & (points < upper))
        wrapped = points >= upper - half
        assert np.all(wrapped | (points < lower + half))
        assert 0.4 < wrapped.mean() < 0.6

    def test_negative_seed(self):
        with pytest.raises(ConfigurationError) as excinfo:
            rng_for(StreamId(-1, "tests"))
        assert excinfo.value.field == "seed"
