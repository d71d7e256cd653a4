"""Dense complex matrix arithmetic and the spectral primitives used by the solver."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from .errors import (
    BranchCutError,
    DimensionMismatchError,
    EigensolverError,
    NonFiniteMatrixError,
    NotHermitianError,
    NotUnitaryError,
)

logger = logging.getLogger(__name__)

ComplexMatrix = NDArray[np.complex128]


@dataclass(frozen=True)
class NumericPolicy:
    """Every tolerance used by the package, in one place."""
    hermitian_tol: float = 1e-10      # ‖A − A†‖_HS, relative to max(1, ‖A‖_HS)
    unitary_tol: float = 1e-10        # ‖U†U − I‖_HS
    state_tol: float = 1e-12          # hermiticity and trace of density matrices
    negative_eig_tol: float = 1e-12   # eigenvalues in [−tol, 0) are clamped to 0
    degeneracy_tol: float = 1e-8      # |λi − λj| below this share a group
    isospectral_tol: float = 1e-9     # entrywise agreement of sorted spectra
    branch_snap_tol: float = 1e-12    # eigenphases this close to −π become +π
    branch_cluster_tol: float = 1e-8  # eigenphases this close to ±π on both sides are reported
    gauge_tol: float = 1e-6           # smallest entry modulus used as a phase anchor
    zero_tol: float = 1e-12           # norms, distances and speeds below this count as zero
    purity_tol: float = 1e-9          # largest eigenvalue within this of 1 marks a pure state


DEFAULT_POLICY = NumericPolicy()


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues with the matching columns of a unitary eigenvector matrix."""
    eigenvalues: NDArray
    eigenvectors: ComplexMatrix

    @property
    def dim(self) -> int:
        return self.eigenvectors.shape[0]

    def reconstruct(self) -> ComplexMatrix:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_matrix(a: ArrayLike) -> ComplexMatrix:
    """Coerce to a square, finite complex128 array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatchError(f"Expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteMatrixError("Matrix contains NaN or Inf entries")
    return m


def _check_same_dim(a: ComplexMatrix, b: ComplexMatrix) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Dimension mismatch: {a.shape} vs {b.shape}")


def hs_inner(a: ArrayLike, b: ArrayLike) -> complex:
    """Hilbert-Schmidt inner product tr(a† b)."""
    a, b = as_matrix(a), as_matrix(b)
    _check_same_dim(a, b)
    return complex(np.vdot(a, b))


def hs_norm(a: ArrayLike) -> float:
    return float(np.linalg.norm(as_matrix(a), "fro"))


def op_norm(a: ArrayLike) -> float:
    """Largest singular value."""
    return float(np.linalg.norm(as_matrix(a), 2))


def commutator(a: ArrayLike, b: ArrayLike) -> ComplexMatrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_same_dim(a, b)
    return a @ b - b @ a


def hadamard(a: ArrayLike, b: ArrayLike) -> ComplexMatrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_same_dim(a, b)
    return a * b


def dagger(a: ComplexMatrix) -> ComplexMatrix:
    return a.conj().T


def hermitian_part(a: ComplexMatrix) -> ComplexMatrix:
    return (a + a.conj().T) / 2


def is_hermitian(a: ArrayLike, tol: Optional[float] = None, policy: NumericPolicy = DEFAULT_POLICY) -> bool:
    m = as_matrix(a)
    tol = policy.hermitian_tol if tol is None else tol
    return float(np.linalg.norm(m - m.conj().T, "fro")) <= tol * max(1.0, float(np.linalg.norm(m, "fro")))


def unitarity_error(u: ArrayLike) -> float:
    m = as_matrix(u)
    return float(np.linalg.norm(m.conj().T @ m - np.eye(m.shape[0]), "fro"))


def is_unitary(u: ArrayLike, tol: Optional[float] = None, policy: NumericPolicy = DEFAULT_POLICY) -> bool:
    tol = policy.unitary_tol if tol is None else tol
    return unitarity_error(u) <= tol


def fix_eigenvector_phases(v: ArrayLike, policy: NumericPolicy = DEFAULT_POLICY) -> ComplexMatrix:
    """
    Fix the phase of each eigenvector column deterministically.

    Each column is rotated so that its last entry with modulus at least
    `policy.gauge_tol` is real and positive. Columns stay orthonormal.
    """
    v = np.array(v, dtype=np.complex128)
    for k in range(v.shape[1]):
        column = v[:, k]
        anchors = np.nonzero(np.abs(column) >= policy.gauge_tol)[0]
        if anchors.size == 0:
            continue
        anchor = column[anchors[-1]]
        v[:, k] = column * (np.conj(anchor) / np.abs(anchor))
    return v


def eig_hermitian(a: ArrayLike, policy: NumericPolicy = DEFAULT_POLICY) -> SpectralDecomposition:
    """
    Eigendecomposition of a Hermitian matrix.

    Returns:
        SpectralDecomposition with real eigenvalues sorted in descending order

    Raises:
        NotHermitianError: if `a` is not Hermitian to `policy.hermitian_tol`
        EigensolverError: if LAPACK fails to converge
    """
    m = as_matrix(a)
    if not is_hermitian(m, policy=policy):
        raise NotHermitianError(
            f"Matrix is not Hermitian: ‖A − A†‖_HS = {np.linalg.norm(m - m.conj().T, 'fro'):.3e}"
        )
    try:
        w, v = scipy.linalg.eigh(hermitian_part(m))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
        raise EigensolverError(f"Hermitian eigensolver did not converge: {e}") from e
    return SpectralDecomposition(eigenvalues=w[::-1].copy(), eigenvectors=v[:, ::-1].copy())


def expm_hermitian(h: ArrayLike, scale: complex, policy: NumericPolicy = DEFAULT_POLICY) -> ComplexMatrix:
    """Return exp(scale·h) = V diag(exp(scale·λ)) V† for Hermitian h."""
    if scale == 0:
        return np.eye(as_matrix(h).shape[0], dtype=np.complex128)
    spec = eig_hermitian(h, policy=policy)
    v = spec.eigenvectors
    return (v * np.exp(scale * spec.eigenvalues)) @ v.conj().T


def eig_unitary(o: ArrayLike, policy: NumericPolicy = DEFAULT_POLICY) -> SpectralDecomposition:
    """
    Eigendecomposition of a unitary through its complex Schur form.

    For a normal matrix the triangular Schur factor is diagonal, so its
    diagonal holds the eigenvalues and the Schur vectors are an orthonormal
    eigenbasis even when eigenvalues cluster.
    """
    m = as_matrix(o)
    if not is_unitary(m, policy=policy):
        raise NotUnitaryError(f"Matrix is not unitary: ‖U†U − I‖_HS = {unitarity_error(m):.3e}")
    try:
        t, z = scipy.linalg.schur(m, output="complex")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as e:
        raise EigensolverError(f"Schur decomposition failed: {e}") from e
    off_diagonal = float(np.linalg.norm(np.triu(t, k=1), "fro"))
    if off_diagonal > policy.unitary_tol:
        logger.debug(f"Schur factor of unitary has off-diagonal mass {off_diagonal:.3e}")
    return SpectralDecomposition(eigenvalues=np.diag(t).copy(), eigenvectors=z)


def principal_phases(eigenvalues: NDArray, policy: NumericPolicy = DEFAULT_POLICY) -> NDArray:
    """Arguments in (−π, π], with values within `branch_snap_tol` of −π mapped to +π."""
    theta = np.angle(eigenvalues)
    theta = np.where(theta <= -np.pi + policy.branch_snap_tol, np.pi, theta)
    return theta


def logm_unitary_principal(o: ArrayLike, policy: NumericPolicy = DEFAULT_POLICY) -> ComplexMatrix:
    """
    Principal-branch generator H = i log O, so that O = exp(−iH).

    Args:
        o: unitary matrix

    Returns:
        Hermitian H whose eigenvalues −θ_k come from eigenphases θ_k ∈ (−π, π]

    Raises:
        NotUnitaryError: if `o` is not unitary
        BranchCutError: if eigenphases sit on both sides of the cut at ±π
    """
    spec = eig_unitary(o, policy=policy)
    theta = principal_phases(spec.eigenvalues, policy=policy)
    near_plus = theta >= np.pi - policy.branch_cluster_tol
    near_minus = theta <= -np.pi + policy.branch_cluster_tol
    if np.any(near_plus) and np.any(near_minus):
        raise BranchCutError(
            "Eigenphases cluster across the branch cut at ±π; the principal logarithm is ill-conditioned"
        )
    z = spec.eigenvectors
    h = (z * (-theta)) @ z.conj().T
    return hermitian_part(h)


def nearest_unitary(a: ArrayLike) -> ComplexMatrix:
    """Unitary polar factor, used to clear accumulated rounding drift."""
    u, _ = scipy.linalg.polar(as_matrix(a))
    return u
