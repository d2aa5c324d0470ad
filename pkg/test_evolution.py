"""Tests for Hamiltonians, split-step propagation and the dense reference dynamics."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import singlet_on
from densities.constructions import reduced, statistical
from densities.ensemble import DensityEnsemble, frobenius_distance, position_density
from densities.kernels import kernel_distance, to_kernel
from evolution.hamiltonian import (
    Hamiltonian,
    PotentialPulse,
    energy_expectation,
    scalar_potential,
    spin_coupling,
)
from evolution.oracles import dense_step_operator, stationary_state, von_neumann_kernel
from evolution.propagator import (
    evolve_ensemble,
    evolve_field,
    propagate,
    step_array,
    step_count,
    step_schrodinger,
)
from evolution.unitarity import unitarity_deviation, unitarity_deviations
from lattice.errors import ConfigurationError, HamiltonianError, ShapeError
from lattice.fields import SpinorField, inner_product, norm, normalize
from lattice.spectral import wavenumbers
from scenarios.packets import (
    SIGMA_X,
    SIGMA_Z,
    coherent_center,
    coherent_state,
    free_width,
    gaussian_packet,
    oscillator_potential,
    plane_wave,
    reciprocal_wavenumber,
)


def _oscillator(grid, omega=1.0, spin_dim=1):
    masses = [1.0] * grid.ndim
    trap = PotentialPulse.static(oscillator_potential(grid, masses, omega, spin_dim), label="trap")
    return Hamiltonian(grid, spin_dim, masses, schedule=[trap])


def _mean_momentum(psi):
    weights = np.sum(np.abs(np.fft.fft(psi.data, axis=0)) ** 2, axis=-1)
    return float(np.sum(wavenumbers(psi.grid, 0) * weights) / np.sum(weights))


def _mean_and_width(psi):
    q = psi.grid.coordinates(0)
    rho = psi.density() * psi.grid.cell_volume
    mean = float(np.sum(q * rho))
    return mean, float(np.sqrt(np.sum((q - mean) ** 2 * rho)))


class TestHamiltonian:
    def test_mass_count_must_match_axes(self, line_grid):
        with pytest.raises(HamiltonianError) as excinfo:
            Hamiltonian(line_grid, 1, [1.0, 2.0])
        assert excinfo.value.field == "masses"

    def test_nonpositive_mass(self, line_grid):
        with pytest.raises(HamiltonianError):
            Hamiltonian(line_grid, 1, [0.0])

    def test_non_hermitian_potential(self, toy_grid):
        values = np.zeros(toy_grid.shape + (2, 2), dtype=np.complex128)
        values[..., 0, 1] = 1.0
        with pytest.raises(HamiltonianError, match="Hermitian"):
            Hamiltonian(toy_grid, 2, [1.0], schedule=[PotentialPulse(0.0, 1.0, values)])

    def test_potential_shape(self, toy_grid):
        with pytest.raises(HamiltonianError):
            Hamiltonian(toy_grid, 2, [1.0], schedule=[PotentialPulse(0.0, 1.0, np.zeros((16, 1, 1)))])

    def test_overlapping_pulses(self, toy_grid):
        values = scalar_potential(np.zeros(toy_grid.shape))
        first = PotentialPulse(0.0, 1.0, values, "first")
        second = PotentialPulse(0.5, 2.0, values, "second")
        with pytest.raises(HamiltonianError, match="overlap"):
            Hamiltonian(toy_grid, 1, [1.0], schedule=[first, second])

    def test_pulse_must_end_after_start(self, toy_grid):
        with pytest.raises(HamiltonianError):
            PotentialPulse(1.0, 1.0, scalar_potential(np.zeros(toy_grid.shape)))

    def test_schedule_lookup(self, toy_grid):
        values = scalar_potential(np.ones(toy_grid.shape))
        hamiltonian = Hamiltonian(
            toy_grid, 1, [1.0],
            schedule=[PotentialPulse(2.0, 3.0, values, "late"), PotentialPulse(0.0, 1.0, values, "early")],
        )
        assert hamiltonian.breakpoints == [0.0, 1.0, 2.0, 3.0]
        assert hamiltonian.active_index(0.5) == 0
        assert hamiltonian.active_index(1.5) is None
        assert hamiltonian.active_index(2.0) == 1
        assert not hamiltonian.is_time_independent

    def test_spin_coupling_is_linear_in_coordinate(self, toy_grid):
        values = spin_coupling(toy_grid, 0, 2.0, SIGMA_Z)
        q = toy_grid.coordinates(0)
        assert_allclose(values[:, 0, 0], 2.0 * q)
        assert_allclose(values[:, 1, 1], -2.0 * q)

    def test_field_on_wrong_space(self, line_grid, toy_grid):
        hamiltonian = Hamiltonian(line_grid, 1, [1.0])
        with pytest.raises(ShapeError):
            step_schrodinger(gaussian_packet(toy_grid, [0.0], 1.0), hamiltonian, 0.0, 0.1)
        with pytest.raises(ShapeError):
            step_schrodinger(gaussian_packet(line_grid, [0.0], 1.0, spin=[1, 0]), hamiltonian, 0.0, 0.1)


class TestStepCount:
    def test_exact_division(self):
        assert step_count(0.0, 1.0, 0.01) == 100

    def test_dt_must_divide_interval(self):
        with pytest.raises(ConfigurationError) as excinfo:
            step_count(0.0, 1.0, 0.3)
        assert excinfo.value.field == "dt"

    def test_nonpositive_dt(self):
        with pytest.raises(ConfigurationError):
            step_count(0.0, 1.0, 0.0)
        with pytest.raises(ConfigurationError):
            step_count(0.0, 1.0, -0.1)

    def test_reversed_interval(self):
        with pytest.raises(ConfigurationError):
            step_count(1.0, 0.0, 0.1)

    def test_breakpoint_off_the_step_lattice(self, toy_grid):
        pulse = PotentialPulse(0.25, 0.55, scalar_potential(np.ones(toy_grid.shape)))
        hamiltonian = Hamiltonian(toy_grid, 1, [1.0], schedule=[pulse])
        with pytest.raises(ConfigurationError) as excinfo:
            step_count(0.0, 1.0, 0.1, hamiltonian)
        assert excinfo.value.field == "schedule"
        assert step_count(0.0, 1.0, 0.05, hamiltonian) == 20


class TestPropagation:
    def test_norm_drift_over_a_thousand_steps(self, line_grid):
        """Test split-step unitarity: accumulated norm drift stays at round-off."""
        psi = coherent_state(line_grid, [1.0], 1.0, [2.0])
        result = propagate(psi, _oscillator(line_grid), 0.0, 1.0, 0.001)
        assert result.steps == 1000
        assert result.norm_drift <= 1e-12
        assert result.field.normalized

    def test_free_gaussian_spreads_like_the_closed_form(self, free_line):
        psi = gaussian_packet(free_line.grid, [0.0], 1.0)
        evolved = evolve_field(psi, free_line, 0.0, 2.0, 0.01)
        mean, width = _mean_and_width(evolved)
        assert mean == pytest.approx(0.0, abs=1e-8)
        assert width == pytest.approx(free_width(1.0, 2.0, 1.0), rel=1e-6)

    def test_moving_gaussian_center(self, free_line):
        psi = gaussian_packet(free_line.grid, [-2.0], 1.0, momentum=[1.5])
        evolved = evolve_field(psi, free_line, 0.0, 2.0, 0.05)
        mean, _ = _mean_and_width(evolved)
        assert mean == pytest.approx(1.0, abs=1e-6)

    def test_plane_wave_picks_up_a_phase(self, free_line):
        psi = plane_wave(free_line.grid, [3])
        k = reciprocal_wavenumber(free_line.grid, 0, 3)
        evolved = evolve_field(psi, free_line, 0.0, 1.0, 0.1)
        assert_allclose(evolved.data, np.exp(-0.5j * k ** 2) * psi.data, atol=1e-12)

    def test_step_is_reversible(self, line_grid):
        """Test a forward step followed by a backward step returns the data."""
        coupling = PotentialPulse(0.0, 1.0, spin_coupling(line_grid, 0, 0.7, SIGMA_X), "kick")
        hamiltonian = Hamiltonian(line_grid, 2, [1.0], schedule=[coupling])
        psi = gaussian_packet(line_grid, [0.5], 1.0, momentum=[1.0], spin=[1, 1j])
        forward = step_array(psi.data, hamiltonian, 0.2, 0.01)
        back = step_array(forward, hamiltonian, 0.21, -0.01)
        assert_allclose(back, psi.data, atol=1e-12)

    def test_oscillator_energy_and_center(self, line_grid):
        hamiltonian = _oscillator(line_grid)
        psi = coherent_state(line_grid, [1.0], 1.0, [2.0])
        before = energy_expectation(psi, hamiltonian)
        evolved = evolve_field(psi, hamiltonian, 0.0, 2.0, 0.001)
        assert energy_expectation(evolved, hamiltonian) == pytest.approx(before, rel=1e-4)
        mean, width = _mean_and_width(evolved)
        assert mean == pytest.approx(coherent_center(2.0, 1.0, 2.0), abs=1e-3)
        assert width == pytest.approx(np.sqrt(0.5), rel=1e-3)

    def test_spin_coupling_splits_the_packet(self, line_grid):
        kick = PotentialPulse(0.0, 0.5, spin_coupling(line_grid, 0, -2.0, SIGMA_Z), "gradient")
        hamiltonian = Hamiltonian(line_grid, 2, [1.0], schedule=[kick])
        psi = gaussian_packet(line_grid, [0.0], 0.8, spin=[1, 1])
        evolved = evolve_field(psi, hamiltonian, 0.0, 2.0, 0.01)
        up = SpinorField(line_grid, evolved.data * [1, 0])
        down = SpinorField(line_grid, evolved.data * [0, 1])
        q = line_grid.coordinates(0)
        h = line_grid.cell_volume
        assert np.sum(q * up.density()) * h > 0.5
        assert np.sum(q * down.density()) * h < -0.5
        assert norm(up) ** 2 == pytest.approx(0.5, abs=1e-10)

    def test_ensemble_weights_are_kept(self, free_line):
        grid = free_line.grid
        w = statistical([(0.25, gaussian_packet(grid, [-2.0], 1.0)), (0.75, gaussian_packet(grid, [2.0], 0.8))])
        serial = evolve_ensemble(w, free_line, 0.0, 0.5, 0.05)
        threaded = evolve_ensemble(w, free_line, 0.0, 0.5, 0.05, n_jobs=2)
        assert_allclose(serial.weights, [0.25, 0.75])
        assert frobenius_distance(serial, threaded) < 1e-14


class TestDynamicalInvariants:
    def test_evolution_is_linear(self, line_grid):
        kick = PotentialPulse(0.1, 0.3, spin_coupling(line_grid, 0, 1.5, SIGMA_X), "kick")
        hamiltonian = Hamiltonian(line_grid, 2, [1.0], schedule=[kick])
        first = gaussian_packet(line_grid, [-1.0], 1.0, momentum=[0.7], spin=[1, 0])
        second = gaussian_packet(line_grid, [1.5], 0.8, spin=[1, 1j])
        alpha, beta = 0.6 - 0.2j, -0.3 + 0.9j
        combined = evolve_field(alpha * first + beta * second, hamiltonian, 0.0, 0.5, 0.01)
        separate = alpha * evolve_field(first, hamiltonian, 0.0, 0.5, 0.01).data + beta * evolve_field(
            second, hamiltonian, 0.0, 0.5, 0.01
        ).data
        assert_allclose(combined.data, separate, atol=1e-12)

    def test_split_interval_is_bit_identical(self, line_grid):
        kick = PotentialPulse(0.2, 0.6, spin_coupling(line_grid, 0, -1.0, SIGMA_Z), "gradient")
        hamiltonian = Hamiltonian(line_grid, 2, [1.0], schedule=[kick])
        psi = gaussian_packet(line_grid, [0.0], 1.0, momentum=[0.5], spin=[1, 1])
        whole = evolve_field(psi, hamiltonian, 0.0, 1.0, 0.01)
        halfway = evolve_field(psi, hamiltonian, 0.0, 0.4, 0.01)
        pieces = evolve_field(halfway, hamiltonian, 0.4, 1.0, 0.01)
        assert np.array_equal(whole.data, pieces.data)

    def test_splitting_error_is_second_order(self, line_grid):
        """Test that halving dt cuts the error against a fine-step reference by four."""
        hamiltonian = _oscillator(line_grid)
        psi = gaussian_packet(line_grid, [2.0], np.sqrt(0.5), momentum=[1.0])
        reference = evolve_field(psi, hamiltonian, 0.0, 0.4, 0.0005).data
        errors = [
            norm(SpinorField(line_grid, evolve_field(psi, hamiltonian, 0.0, 0.4, dt).data - reference))
            for dt in (0.02, 0.01)
        ]
        assert errors[1] > 1e-8
        assert 3.5 <= errors[0] / errors[1] <= 4.5

    def test_energy_drift_over_a_thousand_steps(self, line_grid):
        hamiltonian = _oscillator(line_grid)
        psi = coherent_state(line_grid, [1.0], 1.0, [2.0])
        evolved = evolve_field(psi, hamiltonian, 0.0, 0.1, 1e-4)
        assert energy_expectation(evolved, hamiltonian) == pytest.approx(energy_expectation(psi, hamiltonian), rel=1e-8)

    def test_constant_force_pulse_gives_the_classical_impulse(self, line_grid):
        """Test that mean momentum changes by F times the pulse duration and is flat outside the pulse."""
        force = 1.2
        push = PotentialPulse(0.2, 0.7, scalar_potential(-force * line_grid.coordinates(0)), "push")
        hamiltonian = Hamiltonian(line_grid, 1, [1.0], schedule=[push])
        psi = gaussian_packet(line_grid, [0.0], 1.0, momentum=[0.3])
        before = evolve_field(psi, hamiltonian, 0.0, 0.2, 0.01)
        after = evolve_field(before, hamiltonian, 0.2, 1.0, 0.01)
        assert _mean_momentum(before) == pytest.approx(0.3, abs=1e-8)
        assert _mean_momentum(after) == pytest.approx(0.3 + force * 0.5, abs=1e-6)

    def test_stationary_mixture_keeps_its_density(self, line_grid):
        hamiltonian = _oscillator(line_grid)
        q = line_grid.coordinates(0)
        ground, _ = stationary_state(hamiltonian, 0.01, gaussian_packet(line_grid, [0.0], np.sqrt(0.5)))
        odd = normalize(SpinorField(line_grid, (q * np.exp(-0.5 * q ** 2))[:, np.newaxis]))
        excited, _ = stationary_state(hamiltonian, 0.01, odd)
        w = statistical([(0.7, ground), (0.3, excited)])
        evolved = evolve_ensemble(w, hamiltonian, 0.0, 1.0, 0.01)
        assert_allclose(position_density(evolved).values, position_density(w).values, atol=1e-8)


class TestReducedDynamics:
    def test_decoupled_subsystem_evolves_unitarily(self, plane_grid, spin_split):
        """Test that without interaction the reduced matrix follows H1 alone."""
        psi, _, _ = singlet_on(plane_grid)
        kron = np.kron(SIGMA_Z, np.eye(2))
        full = Hamiltonian(
            plane_grid, 4, [1.0, 2.0],
            schedule=[PotentialPulse.static(spin_coupling(plane_grid, 0, 0.8, kron), "field on particle 1")],
        )
        sub = spin_split.s1_grid(plane_grid)
        h1 = full.restrict(
            (0,), 2, schedule=[PotentialPulse.static(spin_coupling(sub, 0, 0.8, SIGMA_Z), "field")]
        )
        evolved = evolve_field(psi, full, 0.0, 0.5, 0.01)
        expected = evolve_ensemble(reduced(psi, spin_split), h1, 0.0, 0.5, 0.01)
        assert frobenius_distance(reduced(evolved, spin_split), expected) < 1e-10

    def test_unitarity_of_a_true_unitary_series(self, free_line):
        psi = gaussian_packet(free_line.grid, [0.0], 1.0, momentum=[0.5])
        snapshots = [(0.0, DensityEnsemble.pure(psi))]
        current = psi
        for t in (0.2, 0.4, 0.6):
            current = evolve_field(current, free_line, t - 0.2, t, 0.02)
            snapshots.append((t, DensityEnsemble.pure(current)))
        assert unitarity_deviation(snapshots, free_line, 0.02) < 1e-10

    def test_unitarity_detects_a_changed_state(self, free_line):
        grid = free_line.grid
        start = gaussian_packet(grid, [0.0], 1.0)
        moved = gaussian_packet(grid, [3.0], 1.0)
        honest = [(0.0, DensityEnsemble.pure(start)), (0.2, DensityEnsemble.pure(evolve_field(start, free_line, 0.0, 0.2, 0.02)))]
        broken = [(0.0, DensityEnsemble.pure(start)), (0.2, DensityEnsemble.pure(moved))]
        deviations = unitarity_deviations([honest, broken], free_line, 0.02)
        assert deviations[0] < 1e-10
        assert deviations[1] > 0.5

    def test_series_must_share_times(self, free_line):
        w = DensityEnsemble.pure(gaussian_packet(free_line.grid, [0.0], 1.0))
        with pytest.raises(ShapeError):
            unitarity_deviations([[(0.0, w), (0.2, w)], [(0.0, w), (0.4, w)]], free_line, 0.02)


class TestOracles:
    def test_step_operator_is_unitary(self, toy_grid):
        unitary = dense_step_operator(_oscillator(toy_grid), 0.0, 0.05)
        assert_allclose(unitary @ unitary.conj().T, np.eye(16), atol=1e-12)

    def test_stationary_state_is_reproduced(self, toy_grid):
        hamiltonian = _oscillator(toy_grid)
        guess = gaussian_packet(toy_grid, [0.0], np.sqrt(0.5))
        state, energy = stationary_state(hamiltonian, 0.01, guess)
        assert np.all(np.abs(state.data.imag) < 1e-14)
        stepped = step_schrodinger(state, hamiltonian, 0.0, 0.01)
        assert_allclose(stepped.data, np.exp(-1j * energy * 0.01) * state.data, atol=1e-10)
        assert abs(inner_product(guess, state)) > 0.9

    def test_stationary_state_needs_a_spinless_hamiltonian(self, toy_grid):
        hamiltonian = _oscillator(toy_grid, spin_dim=2)
        with pytest.raises(ConfigurationError):
            stationary_state(hamiltonian, 0.01, gaussian_packet(toy_grid, [0.0], 1.0, spin=[1, 0]))

    def test_von_neumann_kernel_matches_ensemble_evolution(self, toy_grid):
        """Test the commutator dynamics of a mixed W against component-wise evolution."""
        constant = np.broadcast_to(0.4 * SIGMA_X, toy_grid.shape + (2, 2)).copy()
        hamiltonian = Hamiltonian(toy_grid, 2, [1.0], schedule=[PotentialPulse.static(constant, "precession")])
        w = statistical([
            (0.6, gaussian_packet(toy_grid, [-0.5], 0.9, momentum=[0.5], spin=[1, 0])),
            (0.4, gaussian_packet(toy_grid, [0.5], 1.1, spin=[1, 1j])),
        ])
        evolved = evolve_ensemble(w, hamiltonian, 0.0, 0.5, 0.05)
        kernel = von_neumann_kernel(to_kernel(w), hamiltonian, 0.0, 0.5, 0.05)
        assert kernel_distance(kernel, to_kernel(evolved)) < 1e-9
