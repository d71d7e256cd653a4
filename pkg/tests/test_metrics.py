import numpy as np
import pytest

from app.solver.errors import NotPureStateError, ZeroHamiltonianError
from app.experiments import run_trials
from app.solver.linalg import NumericPolicy, commutator, hs_norm, op_norm
from app.solver.mask_solver import apply_mask, build_mask, solve
from app.solver.metrics import (
    bloch_angle,
    efficiency_eta,
    efficiency_eta_speed,
    efficiency_eta_star,
    energy_stddev,
    evolution_speed_hs,
    fubini_study_distance,
    normalize_energy,
    qsl_mixed,
    qsl_pure,
    qsl_report,
    rescale,
)
from app.solver.models import Ensemble, QslStatus, RngSeed, SolverConfig
from app.solver.states import (
    density_from_matrix,
    random_hamiltonian,
    sample_bures_mixed,
    sample_haar_pure,
    sample_pair,
)
from app.types import ExperimentPlan

A = np.sqrt(2) * np.pi / 4


def _state(paulis, p, axis):
    return density_from_matrix((paulis["I"] + p * paulis[axis]) / 2)


def test_fubini_study_distance_on_the_qubit(paulis):
    plus_x = _state(paulis, 1.0, "X")
    plus_y = _state(paulis, 1.0, "Y")
    minus_x = _state(paulis, -1.0, "X")
    assert fubini_study_distance(plus_x, plus_y) == pytest.approx(np.pi / 4)
    assert fubini_study_distance(plus_x, minus_x) == pytest.approx(np.pi / 2)
    assert fubini_study_distance(plus_x, plus_x) == pytest.approx(0.0, abs=1e-7)


def test_fubini_study_needs_pure_states(paulis):
    with pytest.raises(NotPureStateError):
        fubini_study_distance(_state(paulis, 0.5, "X"), _state(paulis, 0.5, "Y"))


@pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
def test_energy_stddev_on_the_qubit(paulis, p):
    rho = _state(paulis, p, "X")
    assert energy_stddev(np.pi / 4 * paulis["Z"], rho) == pytest.approx(np.pi / 4)
    assert energy_stddev(A * (paulis["X"] + paulis["Y"]), rho) == pytest.approx(A * np.sqrt(2 - p**2))


def test_mandelstam_tamm_on_the_qubit(paulis):
    plus_x = _state(paulis, 1.0, "X")
    plus_y = _state(paulis, 1.0, "Y")
    report = qsl_pure(plus_x, plus_y, np.pi / 4 * paulis["Z"])
    assert report.t_qsl == pytest.approx(1.0)
    assert report.time_ratio == pytest.approx(1.0)
    assert report.status is QslStatus.OK


@pytest.mark.parametrize("p", [0.3, 0.7, 1.0])
def test_bloch_angle_bound_on_the_qubit(paulis, p):
    rho = _state(paulis, p, "X")
    sigma = _state(paulis, p, "Y")
    radius, angle = bloch_angle(rho, sigma)
    assert radius == pytest.approx(p / np.sqrt(2))
    assert angle == pytest.approx(np.pi / 2)
    assert evolution_speed_hs(np.pi / 4 * paulis["Z"], rho) == pytest.approx(np.pi * p * np.sqrt(2) / 4)
    assert qsl_mixed(rho, sigma, np.pi / 4 * paulis["Z"]).time_ratio == pytest.approx(1.0)


def test_coincident_states_are_excluded(paulis):
    rho = _state(paulis, 0.5, "X")
    report = qsl_mixed(rho, rho, paulis["Z"])
    assert report.status is QslStatus.COINCIDENT
    assert report.t_qsl == 0.0
    assert report.time_ratio == float("inf")
    assert report.excluded
    assert report.to_json()["time_ratio"] is None


def test_zero_speed_between_distinct_states_is_unreachable(paulis):
    plus_x = _state(paulis, 1.0, "X")
    plus_y = _state(paulis, 1.0, "Y")
    report = qsl_pure(plus_x, plus_y, paulis["I"])
    assert report.status is QslStatus.UNREACHABLE
    assert report.excluded


def test_qsl_report_picks_the_bound(qubit_pair, paulis):
    h = np.pi / 4 * paulis["Z"]
    assert qsl_report(qubit_pair(1.0), h).bound_kind.value == "mandelstam_tamm_pure"
    assert qsl_report(qubit_pair(0.5), h).bound_kind.value == "bloch_angle_mixed"


def test_efficiency_eta_on_the_qubit(paulis):
    plus_x = _state(paulis, 1.0, "X")
    assert efficiency_eta(np.pi / 4 * paulis["Z"], plus_x) == pytest.approx(1.0)
    assert efficiency_eta(A * (paulis["X"] + paulis["Y"]), plus_x) == pytest.approx(1 / np.sqrt(2))


@pytest.mark.parametrize("p", [0.3, 0.7])
def test_efficiency_readings_on_mixed_qubits(paulis, p):
    # Neither reading reproduces p/2 for the optimal generator: the variance
    # form is p-independent and the speed form is linear in p.
    rho = _state(paulis, p, "X")
    h_opt = np.pi / 4 * paulis["Z"]
    h_xy = A * (paulis["X"] + paulis["Y"])
    assert efficiency_eta(h_opt, rho) == pytest.approx(1.0)
    assert efficiency_eta_speed(h_opt, rho) == pytest.approx(p)
    assert efficiency_eta_speed(h_xy, rho) == pytest.approx(p / np.sqrt(2))
    assert efficiency_eta_speed(h_opt, rho) != pytest.approx(p / 2)


def test_eta_star_on_the_qubit(paulis):
    rho = _state(paulis, 1.0, "X")
    assert efficiency_eta_star(np.pi / 4 * paulis["Z"], rho) == pytest.approx(1.0)
    assert efficiency_eta_star(A * (paulis["X"] + paulis["Y"]), rho) == pytest.approx(1 / np.sqrt(2))


def test_eta_star_matches_commutator_form():
    rho = sample_bures_mixed(5, RngSeed(1, "rho"))
    h = random_hamiltonian(5, RngSeed(1, "h"))
    numerator_sq = hs_norm(commutator(h, rho.matrix)) ** 2 / 2
    mean = np.trace(rho.matrix @ h).real
    assert efficiency_eta_star(h, rho) == pytest.approx(np.sqrt(numerator_sq / (numerator_sq + mean**2)))


@pytest.mark.parametrize("d", [2, 4, 7])
def test_eta_star_in_unit_interval(d):
    gen = RngSeed(d, "eta").generator()
    for _ in range(50):
        rho = sample_bures_mixed(d, gen)
        value = efficiency_eta_star(random_hamiltonian(d, gen), rho)
        assert 0.0 < value <= 1.0


def test_eta_star_of_zero_hamiltonian_raises(paulis):
    with pytest.raises(ZeroHamiltonianError):
        efficiency_eta_star(np.zeros((2, 2)), _state(paulis, 0.5, "X"))
    with pytest.raises(ZeroHamiltonianError):
        efficiency_eta(np.zeros((2, 2)), _state(paulis, 0.5, "X"))


def test_speed_ignores_the_parallel_component():
    pair = sample_pair(Ensemble.BURES_MIXED, 4, RngSeed(3, "pair"))
    h = random_hamiltonian(4, RngSeed(3, "h"))
    perpendicular = h - apply_mask(h, build_mask(pair.rho))
    assert evolution_speed_hs(h, pair.rho) == pytest.approx(evolution_speed_hs(perpendicular, pair.rho))
    assert efficiency_eta_star(perpendicular, pair.rho) == pytest.approx(1.0)


def test_time_ratio_is_invariant_under_rescaling():
    pair = sample_pair(Ensemble.BURES_MIXED, 4, RngSeed(8, "pair"))
    h = random_hamiltonian(4, RngSeed(8, "h"))
    baseline = qsl_report(pair, h).time_ratio
    for c in (0.1, 3.0, 250.0):
        scaled, tau = rescale(h, 1.0, c)
        assert qsl_report(pair, scaled, tau).time_ratio == pytest.approx(baseline)
    with pytest.raises(ValueError):
        rescale(h, 1.0, 0.0)


@pytest.mark.parametrize("constraint", ["stddev", "hs", "op"])
def test_normalize_energy(constraint):
    pair = sample_pair(Ensemble.BURES_MIXED, 3, RngSeed(2, "pair"))
    h = random_hamiltonian(3, RngSeed(2, "h"))
    scaled, tau = normalize_energy(h, pair.rho, constraint, value=2.0)
    measure = {"stddev": energy_stddev(scaled, pair.rho), "hs": hs_norm(scaled), "op": op_norm(scaled)}[constraint]
    assert measure == pytest.approx(2.0)
    assert qsl_report(pair, scaled, tau).time_ratio == pytest.approx(qsl_report(pair, h).time_ratio)
    with pytest.raises(ValueError):
        normalize_energy(h, pair.rho, "trace")


@pytest.mark.parametrize("ensemble", list(Ensemble))
def test_time_ratio_never_beats_the_bound(ensemble):
    for trial in range(3):
        pair = sample_pair(ensemble, 4, RngSeed(trial, f"bound/{ensemble.value}"))
        run = solve(pair, SolverConfig(epsilon=1e-2, rng=RngSeed(trial, "phases")))
        report = qsl_report(pair, run.final_hamiltonian)
        if not report.excluded:
            assert report.time_ratio >= 1 - 1e-6


def test_perpendicular_generator_on_a_pure_state_is_fully_efficient():
    psi = sample_haar_pure(4, RngSeed(4, "psi"))
    h = random_hamiltonian(4, RngSeed(4, "h"))
    perpendicular = h - apply_mask(h, build_mask(psi))
    assert efficiency_eta_star(perpendicular, psi) == pytest.approx(1.0)
    assert efficiency_eta(perpendicular, psi) == pytest.approx(1.0)
    assert efficiency_eta(h, psi) < 1.0


def test_bloch_angle_bound_holds_on_pure_pairs():
    for trial in range(100):
        d = 2 + trial % 3
        pair = sample_pair(Ensemble.HAAR_PURE, d, RngSeed(trial, "cross/pair"))
        run = solve(pair, SolverConfig(epsilon=1e-2, rng=RngSeed(trial, "cross/phases")))
        mixed = qsl_mixed(pair.rho, pair.sigma, run.final_hamiltonian)
        pure = qsl_pure(pair.rho, pair.sigma, run.final_hamiltonian)
        assert mixed.status is QslStatus.OK and pure.status is QslStatus.OK
        assert np.isfinite(mixed.time_ratio)
        assert mixed.time_ratio >= 1 - 1e-6
        assert pure.time_ratio >= 1 - 1e-6


def test_zero_tolerance_comes_from_the_policy(paulis):
    angle = 1e-3
    rho = _state(paulis, 0.5, "X")
    sigma = density_from_matrix((paulis["I"] + 0.5 * (np.cos(angle) * paulis["X"] + np.sin(angle) * paulis["Y"])) / 2)
    h = np.pi / 4 * paulis["Z"]
    loose = NumericPolicy(zero_tol=1e-2)
    assert qsl_mixed(rho, sigma, h).status is QslStatus.OK
    assert qsl_mixed(rho, sigma, h, policy=loose).status is QslStatus.COINCIDENT

    tiny = 1e-8 * paulis["Z"]
    assert efficiency_eta_star(tiny, rho) == pytest.approx(1.0)
    with pytest.raises(ZeroHamiltonianError):
        efficiency_eta_star(tiny, rho, policy=NumericPolicy(zero_tol=1e-6))


@pytest.mark.slow
def test_time_ratio_never_beats_the_bound_on_mixed_pairs():
    plan = ExperimentPlan(dims=[3, 4, 5, 6, 7, 8], samples_per_dim=84, epsilon=1e-2, ensemble=Ensemble.BURES_MIXED, base_seed=5)
    records = run_trials(plan)
    converged = [r for r in records if r.usable]
    assert len(records) == 504
    assert converged
    tau = 1.0
    for record in converged:
        assert record.t_qsl <= tau * (1 + 1e-6)
