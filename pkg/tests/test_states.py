import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.solver.errors import InvalidDensityMatrixError, SpectraMismatchError
from app.solver.linalg import NumericPolicy, is_unitary
from app.solver.models import Ensemble, PairingMode, RngSeed
from app.solver.states import (
    degeneracy_groups,
    density_from_eigensystem,
    density_from_matrix,
    isospectral_pair,
    make_isospectral_target,
    perturb_convex,
    perturb_unitary,
    project_spectrum,
    sample_bures_mixed,
    sample_haar_pure,
    sample_haar_unitary,
    sample_pair,
)


def test_maximally_mixed_qubit_is_one_group():
    rho = density_from_matrix(np.eye(2) / 2)
    assert_allclose(rho.spectrum, [0.5, 0.5])
    assert rho.degeneracy_groups == ((0, 1),)
    assert not rho.is_nondegenerate


def test_qubit_eigenbasis_gauge(paulis):
    rho = density_from_matrix((paulis["I"] + 0.8 * paulis["X"]) / 2)
    assert_allclose(rho.spectrum, [0.9, 0.1])
    assert_allclose(rho.eigenbasis[:, 0], np.array([1, 1]) / np.sqrt(2), atol=1e-14)
    assert_allclose(rho.eigenbasis[:, 1], np.array([-1, 1]) / np.sqrt(2), atol=1e-14)


def test_distinct_spectrum_gives_singletons():
    rho = density_from_matrix(np.diag([0.2, 0.5, 0.3]))
    assert_allclose(rho.spectrum, [0.5, 0.3, 0.2])
    assert rho.degeneracy_groups == ((0,), (1,), (2,))


@pytest.mark.parametrize(
    "matrix",
    [
        np.array([[0.5, 0.1], [0.0, 0.5]]),
        np.eye(2),
        np.diag([1.2, -0.2]),
    ],
    ids=["non-hermitian", "trace-two", "negative-eigenvalue"],
)
def test_invalid_states_are_rejected(matrix):
    with pytest.raises(InvalidDensityMatrixError):
        density_from_matrix(matrix)


def test_tiny_negative_eigenvalue_is_clamped():
    rho = density_from_matrix(np.diag([1.0 + 1e-13, -1e-13]))
    assert rho.spectrum.min() == 0.0
    assert rho.spectrum.sum() == pytest.approx(1.0)
    assert_allclose(rho.matrix, (rho.eigenbasis * rho.spectrum) @ rho.eigenbasis.conj().T, atol=1e-15)
    assert_allclose(rho.matrix, np.diag([1.0, 0.0]), atol=1e-15)


def test_purity_tolerance_comes_from_the_policy():
    nearly_pure = np.diag([1.0 - 1e-6, 1e-6])
    assert not density_from_matrix(nearly_pure).is_pure
    assert density_from_matrix(nearly_pure, policy=NumericPolicy(purity_tol=1e-5)).is_pure
    basis = np.eye(2)
    assert density_from_eigensystem([1.0 - 1e-6, 1e-6], basis, policy=NumericPolicy(purity_tol=1e-5)).is_pure


def test_near_ties_merge_transitively():
    spectrum = [0.5 + 1.2e-8, 0.5 + 0.6e-8, 0.5, 0.1]
    assert degeneracy_groups(spectrum, 1e-8) == ((0, 1, 2), (3,))


def test_groups_partition_indices():
    spectrum = np.array([0.4, 0.3, 0.3, 0.0])
    groups = degeneracy_groups(spectrum, 1e-8)
    assert sorted(i for group in groups for i in group) == [0, 1, 2, 3]


def test_haar_unitary_is_unitary():
    assert is_unitary(sample_haar_unitary(6, RngSeed(1, "u")))
    u1 = sample_haar_unitary(1, RngSeed(1, "u1"))
    assert abs(u1[0, 0]) == pytest.approx(1.0)


@pytest.mark.parametrize("d", [2, 16])
def test_haar_pure_is_rank_one(d):
    psi = sample_haar_pure(d, RngSeed(4, "psi"))
    assert psi.is_pure
    assert psi.purity == pytest.approx(1.0)
    assert_allclose(psi.spectrum[1:], 0.0, atol=1e-12)


def test_bures_state_is_valid_and_generic():
    rho = sample_bures_mixed(3, RngSeed(9, "bures"))
    assert np.trace(rho.matrix).real == pytest.approx(1.0)
    assert rho.spectrum.min() >= 0.0
    assert rho.is_nondegenerate


def test_same_seed_and_label_reproduce_samples():
    a = sample_bures_mixed(4, RngSeed(12, "x"))
    b = sample_bures_mixed(4, RngSeed(12, "x"))
    c = sample_bures_mixed(4, RngSeed(12, "y"))
    assert np.array_equal(a.matrix, b.matrix)
    assert not np.allclose(a.matrix, c.matrix)


def test_rng_seed_must_fit_in_64_bits():
    with pytest.raises(ValueError):
        RngSeed(2**64)
    with pytest.raises(ValueError):
        RngSeed(-1)


def test_isospectral_target_of_maximally_mixed_state():
    rho = density_from_matrix(np.eye(3) / 3)
    pair = make_isospectral_target(rho, RngSeed(0, "t"))
    assert_allclose(pair.sigma.matrix, np.eye(3) / 3, atol=1e-14)


def test_isospectral_target_keeps_spectrum():
    rho = sample_bures_mixed(5, RngSeed(3, "rho"))
    pair = make_isospectral_target(rho, RngSeed(3, "target"))
    assert_allclose(pair.sigma.spectrum, rho.spectrum, atol=1e-12)


def test_non_isospectral_pair_is_rejected(paulis):
    rho = density_from_matrix((paulis["I"] + 0.5 * paulis["X"]) / 2)
    sigma = density_from_matrix((paulis["I"] + 0.8 * paulis["Y"]) / 2)
    with pytest.raises(SpectraMismatchError):
        isospectral_pair(rho, sigma)
    projected = project_spectrum(sigma, rho.spectrum)
    assert_allclose(projected.eigenbasis, sigma.eigenbasis)
    isospectral_pair(rho, projected)


@pytest.mark.parametrize("ensemble", list(Ensemble))
@pytest.mark.parametrize("pairing", list(PairingMode))
def test_sample_pair_is_isospectral(ensemble, pairing):
    pair = sample_pair(ensemble, 4, RngSeed(21, "pair"), pairing)
    assert_allclose(pair.rho.spectrum, pair.sigma.spectrum, atol=1e-9)
    if ensemble is Ensemble.HAAR_PURE:
        assert pair.is_pure


def test_density_from_eigensystem_sorts_and_validates():
    u = sample_haar_unitary(3, RngSeed(2, "basis"))
    rho = density_from_eigensystem([0.2, 0.7, 0.1], u)
    assert_allclose(rho.spectrum, [0.7, 0.2, 0.1])
    assert_allclose(rho.eigenbasis[:, 0], u[:, 1])
    with pytest.raises(InvalidDensityMatrixError):
        density_from_eigensystem([0.5, 0.6, -0.1], u)
    with pytest.raises(InvalidDensityMatrixError):
        density_from_eigensystem([0.5, 0.5, 0.5], u)


def test_convex_perturbation_endpoints():
    rho = density_from_matrix(np.diag([0.7, 0.2, 0.1]))
    chi = sample_bures_mixed(3, RngSeed(5, "chi"))
    assert perturb_convex(rho, 0.0, RngSeed(5, "chi")) is rho
    assert_allclose(perturb_convex(rho, 1.0, RngSeed(5, "chi")).matrix, chi.matrix)
    halfway = perturb_convex(rho, 0.5, RngSeed(5, "chi"))
    assert_allclose(halfway.matrix, 0.5 * (rho.matrix + chi.matrix), atol=1e-14)
    with pytest.raises(ValueError):
        perturb_convex(rho, 1.5, RngSeed(5, "chi"))


def test_unitary_perturbation_preserves_spectrum():
    rho = sample_bures_mixed(4, RngSeed(8, "rho"))
    moved = perturb_unitary(rho, 1e-2, RngSeed(8, "v"))
    assert_allclose(moved.spectrum, rho.spectrum, atol=1e-10)
    assert not np.allclose(moved.matrix, rho.matrix)
    assert perturb_unitary(rho, 0.0, RngSeed(8, "v")) is rho


def test_convex_perturbation_breaks_isospectrality():
    rho = sample_bures_mixed(4, RngSeed(8, "rho"))
    moved = perturb_convex(rho, 0.3, RngSeed(8, "chi"))
    assert not np.allclose(moved.spectrum, rho.spectrum, atol=1e-6)


@pytest.mark.slow
def test_haar_pure_first_moment_is_maximally_mixed():
    d, n = 4, 10_000
    gen = RngSeed(2024, "moment").generator()
    mean = sum(sample_haar_pure(d, gen).matrix for _ in range(n)) / n
    assert_allclose(mean, np.eye(d) / d, atol=0.02)


@pytest.mark.slow
def test_haar_unitary_columns_are_uniform():
    gen = RngSeed(77, "columns").generator()
    weights = [abs(sample_haar_unitary(4, gen)[0, 0]) ** 2 for _ in range(10_000)]
    assert np.mean(weights) == pytest.approx(0.25, rel=0.05)


@pytest.mark.slow
def test_bures_purity_agrees_across_independent_streams():
    first = RngSeed(5, "purity/a").generator()
    second = RngSeed(5, "purity/b").generator()
    a = np.mean([sample_bures_mixed(2, first).purity for _ in range(10_000)])
    b = np.mean([sample_bures_mixed(2, second).purity for _ in range(10_000)])
    assert a == pytest.approx(b, rel=0.02)
    assert 0.5 < a < 1.0
