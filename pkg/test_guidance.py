"""Tests for guidance velocities, trajectory co-integration and equivariance."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from densities.constructions import statistical
from densities.ensemble import DensityEnsemble
from evolution.hamiltonian import Hamiltonian, PotentialPulse
from evolution.oracles import stationary_state
from evolution.propagator import evolve_field
from guidance.diagnostics import (
    bin_density,
    bin_points,
    continuity_residual,
    equivariance_distance,
    equivariance_run,
    state_density,
    total_variation,
)
from guidance.trajectory import Trajectory, integrate_ensemble, integrate_trajectory, midpoint_field
from guidance.velocity import (
    VelocityField,
    bell_velocity_decomposition,
    conditional_velocity,
    velocity_at,
    velocity_from_density,
    velocity_from_wavefunction,
)
from lattice.errors import ConfigurationError, ShapeError
from lattice.fields import SpinorField, normalize
from lattice.grid import GridSpec
from lattice.sampling import StreamId, rng_for, sample_density
from scenarios.builders.entangled import band_limited_columns
from scenarios.builders.free_gaussian import spin_resolved_packet
from scenarios.packets import (
    SPIN_DOWN,
    SPIN_UP,
    coherent_state,
    gaussian_packet,
    gaussian_profile,
    oscillator_potential,
    plane_wave,
    reciprocal_wavenumber,
)
from scenarios.studies import conditional_velocity_study


def _trap(grid, omega=1.0):
    masses = [1.0] * grid.ndim
    return Hamiltonian(grid, 1, masses, schedule=[PotentialPulse.static(oscillator_potential(grid, masses, omega), "trap")])


@pytest.fixture
def wide_line():
    return GridSpec.from_bounds([(-20.0, 20.0, 512)])


class TestVelocityFields:
    def test_real_field_has_no_velocity(self, line_grid, free_line):
        psi = gaussian_packet(line_grid, [0.5], 1.0)
        assert_allclose(velocity_from_wavefunction(psi, free_line).values, 0.0, atol=1e-12)

    def test_plane_wave_velocity(self, free_line):
        psi = plane_wave(free_line.grid, [3])
        k = reciprocal_wavenumber(free_line.grid, 0, 3)
        assert_allclose(velocity_from_wavefunction(psi, free_line).values, k, atol=1e-10)

    def test_velocity_scales_with_mass_and_hbar(self, line_grid):
        psi = plane_wave(line_grid, [2])
        k = reciprocal_wavenumber(line_grid, 0, 2)
        heavy = Hamiltonian(line_grid, 1, [4.0], hbar=2.0)
        assert_allclose(velocity_from_wavefunction(psi, heavy).values, 2.0 * k / 4.0, atol=1e-10)

    def test_coherent_state_moves_uniformly(self, line_grid):
        """Test the coherent-state velocity -a w sin(w t) over the bulk of the packet."""
        hamiltonian = _trap(line_grid)
        psi = evolve_field(coherent_state(line_grid, [1.0], 1.0, [2.0]), hamiltonian, 0.0, 1.0, 0.001)
        field = velocity_from_wavefunction(psi, hamiltonian)
        q = line_grid.coordinates(0)
        bulk = np.abs(q - 2.0 * np.cos(1.0)) < 1.5
        assert_allclose(field.values[bulk, 0], -2.0 * np.sin(1.0), atol=1e-4)

    def test_global_phase_and_scale(self, line_grid):
        psi = gaussian_packet(line_grid, [0.0], 1.0, momentum=[0.8], spin=[1, 1j])
        hamiltonian = Hamiltonian(line_grid, 2, [1.0])
        reference = velocity_from_wavefunction(psi, hamiltonian).values
        rotated = SpinorField(line_grid, np.exp(0.7j) * psi.data)
        scaled = SpinorField(line_grid, 3.5 * psi.data)
        assert_allclose(velocity_from_wavefunction(rotated, hamiltonian).values, reference, atol=1e-12)
        assert_allclose(velocity_from_wavefunction(scaled, hamiltonian).values, reference, atol=1e-12)

    def test_pure_ensemble_reduces_to_the_wavefunction(self, toy_plane):
        """Test pure-state reduction on random band-limited spinor fields."""
        hamiltonian = Hamiltonian(toy_plane, 2, [1.0, 0.5])
        rng = rng_for(StreamId(3, "pure-reduction"))
        columns = band_limited_columns(toy_plane, 2, 25, 2, rng)
        for column in columns.T:
            psi = normalize(SpinorField(toy_plane, column.reshape(toy_plane.shape + (2,))))
            expected = velocity_from_wavefunction(psi, hamiltonian).values
            observed = velocity_from_density(DensityEnsemble.pure(psi), hamiltonian).values
            assert_allclose(observed, expected, atol=1e-10, rtol=1e-10)

    def test_counter_propagating_mixture_has_no_velocity(self, free_line):
        grid = free_line.grid
        w = statistical([(0.5, plane_wave(grid, [2])), (0.5, plane_wave(grid, [-2]))])
        assert_allclose(velocity_from_density(w, free_line).values, 0.0, atol=1e-12)

    def test_maximally_mixed_spin_follows_the_spatial_part(self, line_grid):
        profile = gaussian_profile(line_grid, [0.0], 1.0, momentum=[1.2])
        w = statistical([
            (0.5, SpinorField(line_grid, profile[:, None] * SPIN_UP, normalized=True)),
            (0.5, SpinorField(line_grid, profile[:, None] * SPIN_DOWN, normalized=True)),
        ])
        hamiltonian = Hamiltonian(line_grid, 2, [1.0])
        spatial = velocity_from_wavefunction(SpinorField(line_grid, profile[:, None]), Hamiltonian(line_grid, 1, [1.0]))
        assert_allclose(velocity_from_density(w, hamiltonian).values, spatial.values, atol=1e-12)

    def test_nodes_are_regularized_not_infinite(self, line_grid, free_line):
        q = line_grid.coordinates(0)
        psi = normalize(SpinorField(line_grid, ((q - 0.0) * np.exp(-q ** 2) * np.exp(0.5j * q))[:, None]))
        field = velocity_from_wavefunction(psi, free_line)
        assert np.all(np.isfinite(field.values))
        assert field.regularized_nodes > 0

    def test_state_on_another_grid(self, toy_grid, free_line):
        with pytest.raises(ShapeError):
            velocity_from_wavefunction(gaussian_packet(toy_grid, [0.0], 1.0), free_line)


class TestBellContrast:
    def test_statistical_velocity_is_the_posterior_average(self, line_grid, free_line):
        mixture = [
            (0.4, gaussian_packet(line_grid, [-1.0], 1.0, momentum=[1.0])),
            (0.6, gaussian_packet(line_grid, [1.5], 0.8, momentum=[-0.5])),
        ]
        decomposition = bell_velocity_decomposition(mixture, free_line, [0.3])
        assert_allclose(decomposition.statistical_velocity, decomposition.posterior_average, atol=1e-10)
        assert abs(decomposition.prior_average[0] - decomposition.statistical_velocity[0]) > 1e-3


class TestConditionalVelocity:
    def test_product_state(self, plane_grid, scalar_split):
        psi1 = gaussian_packet(plane_grid.subgrid((0,)), [0.5], 1.0, momentum=[0.9])
        psi2 = gaussian_packet(plane_grid.subgrid((1,)), [-1.0], 1.3, momentum=[-0.4])
        psi = normalize(scalar_split.product(psi1, psi2, plane_grid))
        hamiltonian = Hamiltonian(plane_grid, 1, [1.0, 1.0])
        observed = conditional_velocity(psi, scalar_split, hamiltonian, [0.2, -0.7])
        expected, _ = velocity_at(psi1, hamiltonian.restrict((0,), 1), [[0.2]])
        assert_allclose(observed, expected[0], atol=1e-12)

    def test_singlet_before_any_field(self, plane_grid, spin_split, singlet):
        psi, psi1, _ = singlet
        hamiltonian = Hamiltonian(plane_grid, 4, [1.0, 1.0])
        observed = conditional_velocity(psi, spin_split, hamiltonian, [0.4, -0.6])
        psi1_field = SpinorField(plane_grid.subgrid((0,)), psi1[:, None], normalized=True)
        expected, _ = velocity_at(psi1_field, Hamiltonian(psi1_field.grid, 1, [1.0]), [[0.4]])
        assert_allclose(observed, expected[0], atol=1e-12)

    def test_matches_the_full_velocity_for_random_states(self, plane_grid, spin_split, stream):
        """Test the S1 part of the full guidance law against the conditional velocity."""
        hamiltonian = Hamiltonian(plane_grid, 4, [1.0, 2.0])
        study = conditional_velocity_study(plane_grid, spin_split, hamiltonian, 10, 5, stream, schmidt_rank=3)
        assert study.queries == 50
        assert study.relative_errors.size + study.regularized == 50
        assert study.max_relative_error <= 1e-9


class TestTrajectories:
    def test_standing_wave_does_not_move(self, free_line):
        grid = free_line.grid
        phase = 4.0 * np.pi * (grid.coordinates(0) - grid.lower[0]) / grid.lengths[0]
        state = normalize(SpinorField(grid, np.cos(phase)[:, None]))
        trajectory = integrate_trajectory([0.3], state, free_line, 0.0, 1.0, 0.01)
        assert_allclose(trajectory.points[:, 0], 0.3, atol=1e-10)

    def test_trapped_ground_state_does_not_move(self, line_grid):
        """Test the stationary state of the discrete propagator: every step boundary carries a zero velocity field."""
        hamiltonian = _trap(line_grid)
        state, _ = stationary_state(hamiltonian, 0.01, gaussian_packet(line_grid, [0.0], np.sqrt(0.5)))
        trajectory = integrate_trajectory([0.3], state, hamiltonian, 0.0, 1.0, 0.01)
        assert_allclose(trajectory.points[:, 0], 0.3, atol=1e-10)

    def test_midpoint_field_averages_the_step_boundaries(self, line_grid):
        shape = line_grid.shape + (1,)
        start_flags = np.zeros(line_grid.shape, dtype=bool)
        end_flags = np.zeros(line_grid.shape, dtype=bool)
        start_flags[3] = True
        end_flags[7] = True
        start = VelocityField(line_grid, np.full(shape, 1.0), 1e-12, start_flags)
        end = VelocityField(line_grid, np.full(shape, 3.0), 1e-12, end_flags)
        middle = midpoint_field(start, end)
        assert_allclose(middle.values, 2.0)
        assert middle.regularized_nodes == 2

    def test_plane_wave_drifts_uniformly(self, free_line):
        psi = plane_wave(free_line.grid, [3])
        k = reciprocal_wavenumber(free_line.grid, 0, 3)
        trajectory = integrate_trajectory([0.0], psi, free_line, 0.0, 1.0, 0.01)
        assert_allclose(trajectory.points[:, 0], k * trajectory.times, atol=1e-8)

    def test_coherent_state_follows_the_classical_orbit(self, line_grid):
        omega = np.pi
        hamiltonian = _trap(line_grid, omega)
        psi = coherent_state(line_grid, [1.0], omega, [2.0])
        trajectory = integrate_trajectory([2.0], psi, hamiltonian, 0.0, 2.0, 0.001)
        classical = 2.0 * np.cos(omega * trajectory.times)
        assert np.max(np.abs(trajectory.points[:, 0] - classical)) <= 1e-3

    def test_boundary_excursions_are_recorded(self, free_line):
        psi = gaussian_packet(free_line.grid, [0.0], 1.0)
        run = integrate_ensemble(np.array([[0.0], [9.6]]), psi, free_line, 0.0, 0.1, 0.01)
        assert run.warnings["boundary_excursions"] == 1
        assert run.trajectory(1).metadata["boundary_excursion_time"] == pytest.approx(0.0)
        assert run.trajectory(0).metadata["boundary_excursion_time"] is None

    def test_record_stride(self, free_line):
        psi = gaussian_packet(free_line.grid, [0.0], 1.0, momentum=[1.0])
        run = integrate_ensemble(np.zeros((3, 1)), psi, free_line, 0.0, 0.1, 0.01, record_stride=4)
        assert_allclose(run.times, [0.0, 0.04, 0.08, 0.1])
        assert run.points.shape == (4, 3, 1)

    def test_observer_sees_every_step(self, free_line):
        seen = []
        psi = gaussian_packet(free_line.grid, [0.0], 1.0)
        integrate_ensemble(np.zeros((1, 1)), psi, free_line, 0.0, 0.05, 0.01, observer=lambda snap: seen.append(snap.t))
        assert_allclose(seen, [0.0, 0.01, 0.02, 0.03, 0.04, 0.05])

    def test_repeated_runs_are_identical(self, free_line, stream):
        psi = gaussian_packet(free_line.grid, [0.0], 1.0, momentum=[0.5])
        first = integrate_ensemble(sample_density(state_density(psi), 50, stream), psi, free_line, 0.0, 0.2, 0.01)
        second = integrate_ensemble(sample_density(state_density(psi), 50, stream), psi, free_line, 0.0, 0.2, 0.01)
        assert np.array_equal(first.points, second.points)

    def test_points_must_match_the_grid(self, free_line):
        psi = gaussian_packet(free_line.grid, [0.0], 1.0)
        with pytest.raises(ShapeError):
            integrate_ensemble(np.zeros((2, 2)), psi, free_line, 0.0, 0.1, 0.01)

    def test_trajectory_times_must_increase(self):
        with pytest.raises(ShapeError, match="increasing"):
            Trajectory(np.array([0.0, 0.0]), np.zeros((2, 1)))


class TestEquivariance:
    def test_binning_matches_for_a_point_mass(self, line_grid):
        rho = state_density(gaussian_packet(line_grid, [0.0], 1.0))
        expected = bin_density(rho, 16)
        assert expected.shape == (16,)
        assert expected.sum() == pytest.approx(1.0)
        points = np.array([[line_grid.coordinates(0)[0]]])
        observed = bin_points(points, line_grid, 16)
        assert observed[0] == 1.0
        assert total_variation(observed, observed) == 0.0

    def test_bins_must_tile_the_axis(self, line_grid):
        with pytest.raises(ConfigurationError):
            bin_density(state_density(gaussian_packet(line_grid, [0.0], 1.0)), 48)

    def test_too_few_trajectories(self, free_line, stream):
        with pytest.raises(ConfigurationError):
            equivariance_run(gaussian_packet(free_line.grid, [0.0], 1.0), free_line, 100, 0.1, 0.01, stream)

    def test_stationary_state_stays_in_equilibrium(self, line_grid, stream):
        hamiltonian = _trap(line_grid)
        state, _ = stationary_state(hamiltonian, 0.01, gaussian_packet(line_grid, [0.0], np.sqrt(0.5)))
        result = equivariance_run(state, hamiltonian, 1000, 0.5, 0.01, stream, bins=16)
        assert result.distance <= result.sampling_floor

    @pytest.mark.slow
    def test_spin_dependent_momenta(self, wide_line):
        """Test equivariance for a spin-1/2 packet whose components separate."""
        hamiltonian = Hamiltonian(wide_line, 2, [1.0])
        psi = spin_resolved_packet(wide_line, [0.0], 1.0, [[2.0], [-2.0]])
        distance = equivariance_distance(psi, hamiltonian, 10_000, 1.0, bins=64, dt=0.005, stream=StreamId(11, "equivariance"))
        assert distance <= 0.05

    @pytest.mark.slow
    def test_fundamental_density_matrix(self, wide_line):
        hamiltonian = Hamiltonian(wide_line, 2, [1.0])
        w = statistical([
            (0.7, gaussian_packet(wide_line, [-3.0], 1.0, momentum=[1.0], spin=[1, 0])),
            (0.3, gaussian_packet(wide_line, [3.0], 1.0, momentum=[-1.0], spin=[0, 1])),
        ])
        distance = equivariance_distance(w, hamiltonian, 10_000, 1.0, bins=64, dt=0.005, stream=StreamId(5, "equivariance"))
        assert distance <= 0.05


class TestContinuity:
    def test_stationary_state(self, line_grid):
        hamiltonian = _trap(line_grid)
        state, _ = stationary_state(hamiltonian, 0.01, gaussian_packet(line_grid, [0.0], np.sqrt(0.5)))
        _, residual = continuity_residual(state, hamiltonian, 0.0, 0.01)
        assert residual <= 1e-8

    def test_plane_wave(self, free_line):
        _, residual = continuity_residual(plane_wave(free_line.grid, [2]), free_line, 0.0, 0.01)
        assert residual <= 1e-10

    def test_second_order_in_dt(self, free_line):
        """Test that halving dt shrinks the free-Gaussian residual about fourfold."""
        psi = gaussian_packet(free_line.grid, [0.0], 1.0, momentum=[1.0])
        _, coarse = continuity_residual(psi, free_line, 0.0, 0.1)
        _, fine = continuity_residual(psi, free_line, 0.0, 0.05)
        assert 3.5 <= coarse / fine <= 4.5

    def test_mixed_state(self, free_line):
        grid = free_line.grid
        w = statistical([
            (0.5, gaussian_packet(grid, [-2.0], 1.0, momentum=[1.0])),
            (0.5, gaussian_packet(grid, [2.0], 1.0, momentum=[-1.0])),
        ])
        _, coarse = continuity_residual(w, free_line, 0.0, 0.1)
        _, fine = continuity_residual(w, free_line, 0.0, 0.05)
        assert fine < coarse
