"""
Sequential Stern-Gerlach experiment on a spin singlet.

Two particles, one configuration coordinate each, spin 2 (x) 2. Particle 1
passes its magnet (V = lambda_1 q_1 sigma_z^(1)) first, particle 2 passes
its magnet afterwards; both then fly freely until readout. The conditional
density matrix of particle 1 is tracked along every Bohmian run.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from densities.bipartition import Bipartition
from densities.constructions import branch_weights, conditional
from densities.ensemble import Box, DensityEnsemble, fidelity_with_pure, frobenius_distance, purity, region_probability
from evolution.hamiltonian import Hamiltonian, PotentialPulse, spin_coupling
from evolution.propagator import evolve_field, step_count
from evolution.unitarity import unitarity_deviations
from guidance.trajectory import EnsembleRun, StepSnapshot, integrate_ensemble
from lattice.errors import ConfigurationError, ExperimentGeometryError, PhysicsValidationError
from lattice.fields import ScalarField, SpinorField
from lattice.grid import Axis, GridSpec
from lattice.interpolation import interpolate_points
from lattice.sampling import StreamId, sample_density
from scenarios.packets import SIGMA_Z, SPIN_DOWN, SPIN_UP, TAIL_SIGMAS, free_width, gaussian_profile


logger = logging.getLogger(__name__)

UP, DOWN = "up", "down"
MINORITY_THRESHOLD = 1e-3
UNDEFINED_LIMIT = 0.01
COLLAPSE_FIDELITY = 0.99
READOUT_SEPARATION = 6.0
SINGLET = np.array([0.0, 1.0, -1.0, 0.0], dtype=np.complex128) / math.sqrt(2.0)


@dataclass(frozen=True)
class EPRSetup:
    grid: GridSpec
    hbar: float
    masses: Tuple[float, float]
    centers: Tuple[float, float]
    sigmas: Tuple[float, float]
    couplings: Tuple[float, float]
    windows: Tuple[Tuple[float, float], Tuple[float, float]]
    t_final: float
    dt: float
    n_runs: int
    seed: int
    snapshot_stride: int = 40
    unitarity_snapshots: int = 7

    def __post_init__(self) -> None:
        if self.grid.ndim != 2:
            raise ConfigurationError("the EPR experiment needs exactly two configuration axes", field="grid.axes")
        (t1a, t1b), (t2a, t2b) = self.windows
        for label, (start, end) in (("first", (t1a, t1b)), ("second", (t2a, t2b))):
            if not 0.0 <= start < end <= self.t_final:
                raise ConfigurationError(
                    f"{label} magnet window [{start}, {end}] is not inside [0, {self.t_final}]",
                    field="scenario.params.windows",
                )
        if not t1b < t2a:
            raise ConfigurationError(
                "particle 1 must leave its magnet before particle 2 reaches its own",
                field="scenario.params.windows",
            )
        if any(c == 0 for c in self.couplings):
            raise ConfigurationError("magnet couplings must be nonzero", field="scenario.params.couplings")
        if self.n_runs < 1:
            raise ConfigurationError("n_runs must be positive", field="ensemble.n_runs")
        if self.snapshot_stride < 1 or self.unitarity_snapshots < 2:
            raise ConfigurationError("snapshot settings out of range", field="time.snapshot_stride")

    @classmethod
    def desk_scale(cls, n_runs: int = 500, seed: int = 0, points: int = 256) -> "EPRSetup":
        axis = Axis(-20.0, 20.0, points)
        return cls(
            grid=GridSpec((axis, axis)),
            hbar=1.0,
            masses=(4.0, 4.0),
            centers=(0.0, 0.0),
            sigmas=(1.0, 1.0),
            couplings=(10.0, 10.0),
            windows=((0.5, 1.0), (3.0, 3.5)),
            t_final=8.0,
            dt=2.5e-3,
            n_runs=n_runs,
            seed=seed,
        )

    @property
    def split(self) -> Bipartition:
        return Bipartition((0,), (1,), k1=2, k2=2)

    def up_direction(self, particle: int) -> float:
        """Direction in which the spin-up branch of ``particle`` is deflected."""
        return -math.copysign(1.0, self.couplings[particle])

    def branch_offset(self, particle: int, t: float) -> float:
        """Distance of each branch center from the undeflected center at time t."""
        start, end = self.windows[particle]
        acceleration = abs(self.couplings[particle]) / self.masses[particle]
        if t <= start:
            return 0.0
        if t <= end:
            return 0.5 * acceleration * (t - start) ** 2
        duration = end - start
        return 0.5 * acceleration * duration ** 2 + acceleration * duration * (t - end)

    def width(self, particle: int, t: float) -> float:
        return free_width(self.sigmas[particle], t, self.masses[particle], self.hbar)


def check_geometry(setup: EPRSetup, samples: int = 400) -> None:
    """Classical drift estimate: both branches keep their tails inside the box."""
    grid = setup.grid
    times = np.unique(np.concatenate([
        np.linspace(0.0, setup.t_final, samples + 1),
        np.ravel(setup.windows),
    ]))
    for particle in range(2):
        lower, upper = grid.lower[particle], grid.upper[particle]
        for t in times:
            offset = setup.branch_offset(particle, t)
            reach = TAIL_SIGMAS * setup.width(particle, t)
            low = setup.centers[particle] - offset - reach
            high = setup.centers[particle] + offset + reach
            if low <= lower or high >= upper:
                raise PhysicsValidationError(
                    f"particle {particle + 1} packet reaches the box edge at t = {t:.4f} "
                    f"(extent [{low:.3f}, {high:.3f}] vs box [{lower}, {upper}])",
                    time=float(t),
                )
        separation = 2.0 * setup.branch_offset(particle, setup.t_final)
        width = setup.width(particle, setup.t_final)
        if separation < READOUT_SEPARATION * width:
            raise ExperimentGeometryError(
                f"particle {particle + 1} branches are only {separation / width:.2f} widths apart at readout",
                time=setup.t_final,
            )


def _pulses(setup: EPRSetup) -> List[PotentialPulse]:
    identity = np.eye(2)
    (t1a, t1b), (t2a, t2b) = setup.windows
    return [
        PotentialPulse(t1a, t1b, spin_coupling(setup.grid, 0, setup.couplings[0], np.kron(SIGMA_Z, identity)), "magnet-1"),
        PotentialPulse(t2a, t2b, spin_coupling(setup.grid, 1, setup.couplings[1], np.kron(identity, SIGMA_Z)), "magnet-2"),
    ]


def build_epr(setup: EPRSetup) -> Tuple[SpinorField, Hamiltonian]:
    """Singlet spin state times a product of Gaussian packets, plus both magnet pulses."""
    check_geometry(setup)
    grid = setup.grid
    psi1 = gaussian_profile(grid.subgrid((0,)), [setup.centers[0]], setup.sigmas[0], hbar=setup.hbar)
    psi2 = gaussian_profile(grid.subgrid((1,)), [setup.centers[1]], setup.sigmas[1], hbar=setup.hbar)
    spatial = np.multiply.outer(psi1, psi2)
    state = SpinorField(grid, spatial[..., np.newaxis] * SINGLET, normalized=True)
    hamiltonian = Hamiltonian(grid, 4, setup.masses, hbar=setup.hbar, schedule=_pulses(setup))
    step_count(0.0, setup.t_final, setup.dt, hamiltonian)
    logger.info(
        "Built EPR setup on %s nodes: magnets %s, readout at t=%.3f",
        grid.shape, setup.windows, setup.t_final,
    )
    return state, hamiltonian


def subsystem_hamiltonian(setup: EPRSetup) -> Hamiltonian:
    """H1 for particle 1 alone: free flight plus its own magnet."""
    s1 = setup.grid.subgrid((0,))
    start, end = setup.windows[0]
    pulse = PotentialPulse(start, end, spin_coupling(s1, 0, setup.couplings[0], SIGMA_Z), "magnet-1")
    return Hamiltonian(s1, 2, (setup.masses[0],), hbar=setup.hbar, schedule=[pulse])


def particle_one_references(setup: EPRSetup, t: float) -> Dict[str, SpinorField]:
    """|up> (x) psi_1 and |down> (x) psi_1 evolved under H1 to time t."""
    s1 = setup.grid.subgrid((0,))
    profile = gaussian_profile(s1, [setup.centers[0]], setup.sigmas[0], hbar=setup.hbar)
    h1 = subsystem_hamiltonian(setup)
    references = {}
    for label, spin in ((UP, SPIN_UP), (DOWN, SPIN_DOWN)):
        start = SpinorField(s1, profile[..., np.newaxis] * spin, normalized=True)
        references[label] = evolve_field(start, h1, 0.0, t, setup.dt) if t > 0 else start
    return references


def half_identity_target(setup: EPRSetup) -> DensityEnsemble:
    """(1/2) I_2 (x) |psi_1><psi_1|."""
    references = particle_one_references(setup, 0.0)
    return DensityEnsemble(((0.5, references[UP]), (0.5, references[DOWN])))


@dataclass
class EPRRunRecord:
    run_id: int
    outcome1: Optional[str]
    outcome2: Optional[str]
    purity_series: np.ndarray
    collapse_target: Optional[str]
    final_fidelity: Optional[float]
    unitarity_deviation: float
    crossing_deviation: float
    initial_kernel_distance: float
    mid_purity: float
    mid_fidelity: float
    minority_fractions: Tuple[float, float]

    @property
    def defined(self) -> bool:
        return self.outcome1 is not None and self.outcome2 is not None


@dataclass
class EPRResult:
    records: List[EPRRunRecord]
    summary: Dict[str, object]
    run: EnsembleRun
    snapshot_times: np.ndarray


class _ConditionalCollector:
    """Observer recording W_cond of particle 1 for every run at chosen steps."""

    def __init__(
        self,
        setup: EPRSetup,
        purity_steps,
        unitarity_steps,
        crossing_steps,
        mid_step: int,
        final_step: int,
        n_jobs: int,
    ):
        self.setup = setup
        self.split = setup.split
        self.purity_steps = set(purity_steps)
        self.unitarity_steps = set(unitarity_steps)
        self.crossing_steps = set(crossing_steps)
        self.mid_step = mid_step
        self.final_step = final_step
        self.n_jobs = n_jobs
        self.purity_times: List[float] = []
        self.purities: List[np.ndarray] = []
        self.unitarity: List[List[Tuple[float, DensityEnsemble]]] = [[] for _ in range(setup.n_runs)]
        self.crossing: List[List[Tuple[float, DensityEnsemble]]] = [[] for _ in range(setup.n_runs)]
        self.mid: List[DensityEnsemble] = []
        self.final: List[DensityEnsemble] = []

    def _conditionals(self, psi: SpinorField, points: np.ndarray) -> List[DensityEnsemble]:
        q2 = points[:, 1]
        if self.n_jobs and self.n_jobs > 1:
            return Parallel(n_jobs=self.n_jobs, backend="threading")(
                delayed(conditional)(psi, self.split, [value]) for value in q2
            )
        return [conditional(psi, self.split, [value]) for value in q2]

    def __call__(self, snapshot: StepSnapshot) -> None:
        step = int(round(snapshot.t / self.setup.dt))
        wanted = {self.mid_step, self.final_step} | self.purity_steps | self.unitarity_steps | self.crossing_steps
        if step not in wanted:
            return
        psi = snapshot.state()
        ensembles = self._conditionals(psi, snapshot.points)
        if step in self.purity_steps:
            self.purity_times.append(snapshot.t)
            self.purities.append(np.array([purity(w) for w in ensembles]))
        if step in self.unitarity_steps:
            for run, w in enumerate(ensembles):
                self.unitarity[run].append((snapshot.t, w))
        if step in self.crossing_steps:
            for run, w in enumerate(ensembles):
                self.crossing[run].append((snapshot.t, w))
        if step == self.mid_step:
            self.mid = ensembles
        if step == self.final_step:
            self.final = ensembles


def _marginal_fractions(psi: SpinorField, particle: int, coordinate: np.ndarray) -> np.ndarray:
    """Spin-resolved marginal of one particle at its coordinate, as fractions (n, 2)."""
    tensor = np.abs(psi.data.reshape(psi.grid.shape + (2, 2))) ** 2
    other = 1 - particle
    h_other = psi.grid.spacing[other]
    if particle == 0:
        marginal = h_other * tensor.sum(axis=(1, 3))
    else:
        marginal = h_other * tensor.sum(axis=(0, 2))
    values = interpolate_points(marginal, psi.grid.subgrid((particle,)), coordinate[:, np.newaxis])
    values = np.clip(values, 0.0, None)
    return values / np.maximum(values.sum(axis=1, keepdims=True), 1e-300)


def _classify(setup: EPRSetup, psi: SpinorField, points: np.ndarray):
    outcomes = []
    minorities = []
    for particle in range(2):
        fractions = _marginal_fractions(psi, particle, points[:, particle])
        displacement = points[:, particle] - setup.centers[particle]
        went_up = np.sign(displacement) == setup.up_direction(particle)
        majority_up = fractions[:, 0] >= fractions[:, 1]
        minority = fractions.min(axis=1)
        defined = (minority < MINORITY_THRESHOLD) & (went_up == majority_up)
        outcomes.append([(UP if up else DOWN) if ok else None for up, ok in zip(went_up, defined)])
        minorities.append(minority)
    return outcomes, np.stack(minorities, axis=1)


def _component_fidelity(w: DensityEnsemble, references: Dict[str, SpinorField]) -> float:
    """Worst, over the two references, of the best overlap with any component."""
    worst = 1.0
    for reference in references.values():
        best = max(abs(complex(np.vdot(reference.data, psi.data))) ** 2 * reference.grid.cell_volume ** 2
                   for psi in w.fields)
        worst = min(worst, best)
    return float(worst)


def run_epr_ensemble(
    setup: EPRSetup,
    n_jobs: int = 1,
    progress: bool = False,
    prepared: Optional[Tuple[SpinorField, Hamiltonian]] = None,
) -> EPRResult:
    """Sample runs from |Psi|^2, co-integrate, classify, and summarize.

    ``prepared`` is the ``(psi0, hamiltonian)`` pair from ``build_epr(setup)``
    when the caller has already built it.
    """
    psi0, hamiltonian = build_epr(setup) if prepared is None else prepared
    dt = setup.dt
    steps = step_count(0.0, setup.t_final, dt, hamiltonian)
    (t1a, t1b), (t2a, _) = setup.windows
    t2a_step = int(round(t2a / dt))
    mid_step = int(round(0.5 * (t1b + t2a) / dt))
    purity_steps = list(range(0, steps + 1, setup.snapshot_stride)) + [t2a_step, steps]
    unitarity_steps = sorted(set(int(round(s)) for s in np.linspace(0, t2a_step, setup.unitarity_snapshots)))

    points = sample_density(ScalarField(setup.grid, psi0.density()), setup.n_runs, StreamId(setup.seed, "epr_initial"))
    collector = _ConditionalCollector(setup, purity_steps, unitarity_steps, crossing_steps, mid_step, steps, n_jobs)
    logger.info("Running %d EPR runs over %d steps", setup.n_runs, steps)
    run = integrate_ensemble(
        points, psi0, hamiltonian, 0.0, setup.t_final, dt,
        observer=collector, record_stride=setup.snapshot_stride, progress=progress,
    )
    final_psi = run.final_state

    h1 = subsystem_hamiltonian(setup)
    deviations = unitarity_deviations(collector.unitarity, h1, dt)
    crossing = unitarity_deviations(collector.crossing, h1, dt)
    target = half_identity_target(setup)
    initial = [series[0][1] for series in collector.unitarity]
    initial_distances = np.array([frobenius_distance(w, target) for w in initial])
    mid_references = particle_one_references(setup, mid_step * dt)
    final_references = particle_one_references(setup, setup.t_final)

    outcomes, minorities = _classify(setup, final_psi, run.final_points)
    purity_series = np.stack(collector.purities, axis=0) if collector.purities else np.zeros((0, setup.n_runs))
    records = []
    for index in range(setup.n_runs):
        outcome1, outcome2 = outcomes[0][index], outcomes[1][index]
        defined = outcome1 is not None and outcome2 is not None
        collapse = None
        fidelity = None
        if defined:
            # particle 2 going up leaves particle 1 in the spin-down branch
            collapse = "W_down" if outcome2 == UP else "W_up"
            reference = final_references[DOWN if outcome2 == UP else UP]
            fidelity = fidelity_with_pure(collector.final[index], reference)
        mid = collector.mid[index]
        records.append(EPRRunRecord(
            run_id=index,
            outcome1=outcome1 if defined else None,
            outcome2=outcome2 if defined else None,
            purity_series=purity_series[:, index],
            collapse_target=collapse,
            final_fidelity=fidelity,
            unitarity_deviation=float(deviations[index]),
            crossing_deviation=float(crossing[index]),
            initial_kernel_distance=float(initial_distances[index]),
            mid_purity=purity(mid),
            mid_fidelity=_component_fidelity(mid, mid_references),
            minority_fractions=(float(minorities[index, 0]), float(minorities[index, 1])),
        ))

    times = np.array(collector.purity_times)
    summary = summarize(setup, records, times, final_psi)
    undefined = summary["undefined_outcomes"]
    if undefined["fraction"] > UNDEFINED_LIMIT:
        raise ExperimentGeometryError(
            f"{undefined['count']} of {setup.n_runs} runs have undefined outcomes "
            f"(limit {UNDEFINED_LIMIT:.0%})",
            time=setup.t_final,
        )
    return EPRResult(records, summary, run, times)


def summarize(setup: EPRSetup, records: Sequence[EPRRunRecord], times: np.ndarray, final_psi: SpinorField) -> Dict[str, object]:
    defined = [r for r in records if r.defined]
    n_defined = len(defined)
    t2a = setup.windows[1][0]
    before = times <= t2a + 0.5 * setup.dt
    series = np.stack([r.purity_series for r in records], axis=1) if records else np.zeros((len(times), 0))
    mean_series = series.mean(axis=1) if series.size else np.zeros(len(times))
    purity_defect = float(np.max(np.abs(series[before] - 0.5))) if series.size and before.any() else 0.0

    up_fraction = float(np.mean([r.outcome1 == UP for r in defined])) if defined else float("nan")
    anti = float(np.mean([r.outcome1 != r.outcome2 for r in defined])) if defined else float("nan")
    error_bar = 3.0 * math.sqrt(0.25 / n_defined) if n_defined else float("nan")
    collapsed = [r.final_fidelity >= COLLAPSE_FIDELITY for r in defined]

    up_side = _up_side_box(setup)
    predicted_up = region_probability(DensityEnsemble.pure(final_psi), up_side)
    spin_up_on_up_side = float(branch_weights(final_psi, setup.split, [up_side])[0, 0])

    return {
        "runs": len(records),
        "undefined_outcomes": {
            "count": len(records) - n_defined,
            "fraction": (len(records) - n_defined) / max(len(records), 1),
            "invariant": "undefined outcomes at most 1% of runs",
        },
        "anti_correlation_rate": {"value": anti, "invariant": "perfect anti-correlation of same-axis singlet outcomes"},
        "up_fraction": {
            "value": up_fraction,
            "error_bar": error_bar,
            "invariant": "Born rule for the singlet: up fraction 0.5 within 3 binomial sigma",
        },
        "initial_kernel_distance": {
            "value": float(max(r.initial_kernel_distance for r in records)),
            "invariant": "initial W_cond equals (1/2) I (x) |psi_1><psi_1|",
        },
        "purity_before_second_magnet": {
            "max_defect": purity_defect,
            "invariant": "W_cond purity 0.5 until particle 2 reaches its magnet",
        },
        "mid_experiment": {
            "max_purity_defect": float(max(abs(r.mid_purity - 0.5) for r in records)),
            "min_component_fidelity": float(min(r.mid_fidelity for r in records)),
            "invariant": "W_cond = (W_up + W_down)/2 between the magnets",
        },
        "unitarity_deviation": {
            "mean": float(np.mean([r.unitarity_deviation for r in records])),
            "max": float(np.max([r.unitarity_deviation for r in records])),
            "window": [0.0, t2a],
            "invariant": "W_cond evolves unitarily under H1 before the second magnet",
        },
        "unitarity_across_second_magnet": {
            "mean": float(np.mean([r.crossing_deviation for r in records])),
            "min": float(np.min([r.crossing_deviation for r in records])),
            "window": [t2a, setup.t_final],
            "invariant": "W_cond stops evolving unitarily under H1 once particle 2 passes its magnet",
        },
        "collapse": {
            "success_fraction": float(np.mean(collapsed)) if collapsed else float("nan"),
            "min_fidelity": float(min(r.final_fidelity for r in defined)) if defined else float("nan"),
            "invariant": "W_cond collapses to W_up or W_down after readout",
        },
        "readout_consistency": {
            "predicted_up_probability": predicted_up,
            "spin_up_probability_on_up_side": spin_up_on_up_side,
            "observed_up_fraction": up_fraction,
            "consistent": bool(n_defined and abs(up_fraction - predicted_up) <= error_bar),
            "invariant": "sign readout agrees with branch weights",
        },
        "purity_series": {
            "times": [float(t) for t in times],
            "mean": [float(v) for v in mean_series],
        },
    }


def _up_side_box(setup: EPRSetup) -> Box:
    center = setup.centers[0]
    if setup.up_direction(0) < 0:
        return Box((-np.inf, -np.inf), (center, np.inf))
    return Box((center, -np.inf), (np.inf, np.inf))


__all__ = [
    "EPRSetup",
    "EPRRunRecord",
    "EPRResult",
    "build_epr",
    "check_geometry",
    "subsystem_hamiltonian",
    "particle_one_references",
    "half_identity_target",
    "run_epr_ensemble",
    "summarize",
]
