import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.solver.errors import (
    BranchCutError,
    DimensionMismatchError,
    NonFiniteMatrixError,
    NotHermitianError,
    NotUnitaryError,
)
from app.solver.linalg import (
    as_matrix,
    commutator,
    eig_hermitian,
    eig_unitary,
    expm_hermitian,
    fix_eigenvector_phases,
    hs_inner,
    hs_norm,
    is_unitary,
    logm_unitary_principal,
    nearest_unitary,
    op_norm,
    principal_phases,
)
from app.solver.models import RngSeed
from app.solver.states import random_hamiltonian, sample_haar_unitary


def test_as_matrix_rejects_bad_input():
    with pytest.raises(DimensionMismatchError):
        as_matrix(np.zeros((2, 3)))
    with pytest.raises(NonFiniteMatrixError):
        as_matrix(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_norms_of_pauli_matrices(paulis):
    assert hs_norm(paulis["X"]) == pytest.approx(np.sqrt(2))
    assert op_norm(paulis["Y"]) == pytest.approx(1.0)
    assert hs_inner(paulis["X"], paulis["Y"]) == pytest.approx(0.0)
    assert_allclose(commutator(paulis["X"], paulis["Y"]), 2j * paulis["Z"])


def test_dimension_mismatch_is_reported():
    with pytest.raises(DimensionMismatchError):
        commutator(np.eye(2), np.eye(3))


def test_eig_hermitian_descending_and_reconstructs():
    h = random_hamiltonian(5, RngSeed(3, "h"))
    spec = eig_hermitian(h)
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    assert_allclose(spec.reconstruct(), h, atol=1e-12)


def test_eig_hermitian_rejects_non_hermitian():
    with pytest.raises(NotHermitianError):
        eig_hermitian(np.array([[0, 1], [0, 0]]))


def test_fix_eigenvector_phases_anchor_is_real_positive():
    u = sample_haar_unitary(4, RngSeed(1, "u"))
    fixed = fix_eigenvector_phases(u)
    last = fixed[-1, :]
    assert_allclose(last.imag, 0.0, atol=1e-14)
    assert np.all(last.real > 0)
    assert is_unitary(fixed)
    assert_allclose(fix_eigenvector_phases(fixed), fixed)


def test_expm_hermitian_is_unitary_and_trivial_at_zero_scale():
    h = random_hamiltonian(4, RngSeed(2, "h"))
    assert is_unitary(expm_hermitian(h, -1j))
    assert_allclose(expm_hermitian(h, 0), np.eye(4))


@pytest.mark.parametrize("d", [2, 3, 6])
def test_logm_inverts_exponential_inside_branch(d):
    h = random_hamiltonian(d, RngSeed(d, "log"))
    h = 2.5 * h / op_norm(h)
    o = expm_hermitian(h, -1j)
    assert_allclose(logm_unitary_principal(o), h, atol=1e-10)


def test_logm_of_minus_identity_takes_plus_pi_phase():
    h = logm_unitary_principal(-np.eye(3))
    assert_allclose(h, -np.pi * np.eye(3), atol=1e-12)


def test_phases_at_minus_pi_snap_to_plus_pi():
    theta = principal_phases(np.exp(-1j * np.pi) * np.ones(2))
    assert_allclose(theta, [np.pi, np.pi])


def test_phases_straddling_the_cut_raise():
    eps = 1e-10
    o = np.diag([np.exp(1j * (np.pi - eps)), np.exp(-1j * (np.pi - eps))])
    with pytest.raises(BranchCutError):
        logm_unitary_principal(o)


def test_eig_unitary_rejects_non_unitary():
    with pytest.raises(NotUnitaryError):
        eig_unitary(2 * np.eye(2))


def test_eig_unitary_handles_clustered_eigenvalues():
    u = sample_haar_unitary(4, RngSeed(5, "basis"))
    o = u @ np.diag(np.exp(1j * np.array([0.3, 0.3, 0.3 + 1e-13, -1.0]))) @ u.conj().T
    spec = eig_unitary(o)
    assert is_unitary(spec.eigenvectors)
    assert_allclose(spec.reconstruct(), o, atol=1e-12)


def test_nearest_unitary_clears_drift():
    u = sample_haar_unitary(3, RngSeed(7, "u"))
    drifted = u + 1e-9 * np.ones((3, 3))
    assert not is_unitary(drifted, tol=1e-12)
    fixed = nearest_unitary(drifted)
    assert is_unitary(fixed, tol=1e-12)
    assert_allclose(fixed, u, atol=1e-8)
