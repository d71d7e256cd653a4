"""Density matrices: validation, degeneracy analysis, random ensembles and perturbations."""

import logging
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.sparse.csgraph import connected_components

from .errors import InvalidDensityMatrixError, NotHermitianError, SpectraMismatchError
from .linalg import (
    DEFAULT_POLICY,
    ComplexMatrix,
    NumericPolicy,
    as_matrix,
    eig_hermitian,
    expm_hermitian,
    fix_eigenvector_phases,
    hermitian_part,
    hs_norm,
    is_hermitian,
    is_unitary,
    unitarity_error,
)
from .models import (
    DensityMatrix,
    Ensemble,
    IsospectralPair,
    PairingMode,
    RandomSource,
    as_generator,
)

logger = logging.getLogger(__name__)


def degeneracy_groups(spectrum: ArrayLike, tol: float) -> Tuple[Tuple[int, ...], ...]:
    """
    Partition eigenvalue indices into degeneracy groups.

    Two indices are linked when |λi − λj| ≤ tol; groups are the connected
    components of that graph, so near-ties merge transitively.
    """
    values = np.asarray(spectrum, dtype=np.float64)
    adjacency = np.abs(values[:, None] - values[None, :]) <= tol
    _, labels = connected_components(adjacency, directed=False)
    groups = {}
    for index, label in enumerate(labels):
        groups.setdefault(label, []).append(index)
    return tuple(sorted((tuple(members) for members in groups.values()), key=lambda g: g[0]))


def _build_state(
    matrix: ComplexMatrix,
    spectrum: NDArray,
    eigenbasis: ComplexMatrix,
    degeneracy_tol: float,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> DensityMatrix:
    return DensityMatrix(
        matrix=matrix,
        spectrum=spectrum,
        eigenbasis=eigenbasis,
        degeneracy_groups=degeneracy_groups(spectrum, degeneracy_tol),
        degeneracy_tol=degeneracy_tol,
        purity_tol=policy.purity_tol,
    )


def density_from_matrix(
    m: ArrayLike,
    degeneracy_tol: Optional[float] = None,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> DensityMatrix:
    """
    Validate a matrix as a density matrix and cache its eigensystem.

    Args:
        m: candidate d×d matrix
        degeneracy_tol: absolute tolerance for grouping eigenvalues

    Returns:
        DensityMatrix with descending spectrum and phase-fixed eigenbasis

    Raises:
        InvalidDensityMatrixError: if m is not Hermitian, not unit trace, or
            has an eigenvalue below −policy.negative_eig_tol
    """
    matrix = as_matrix(m)
    tol = policy.degeneracy_tol if degeneracy_tol is None else degeneracy_tol
    if not is_hermitian(matrix, tol=policy.state_tol, policy=policy):
        raise InvalidDensityMatrixError(
            f"State is not Hermitian: ‖ρ − ρ†‖_HS = {np.linalg.norm(matrix - matrix.conj().T, 'fro'):.3e}"
        )
    trace = np.trace(matrix)
    if abs(trace - 1.0) > policy.state_tol:
        raise InvalidDensityMatrixError(f"State trace is {trace.real:.15g}, expected 1")
    matrix = hermitian_part(matrix)
    try:
        spec = eig_hermitian(matrix, policy=policy)
    except NotHermitianError as e:
        raise InvalidDensityMatrixError(str(e)) from e
    spectrum = spec.eigenvalues.real
    if spectrum[-1] < -policy.negative_eig_tol:
        raise InvalidDensityMatrixError(f"State has negative eigenvalue {spectrum[-1]:.3e}")
    clamped = bool(spectrum[-1] < 0)
    if clamped:
        spectrum = np.clip(spectrum, 0.0, None)
        spectrum = spectrum / spectrum.sum()
    eigenbasis = fix_eigenvector_phases(spec.eigenvectors, policy=policy)
    if clamped:
        # matrix must agree with the cached spectrum
        matrix = hermitian_part((eigenbasis * spectrum) @ eigenbasis.conj().T)
    return _build_state(matrix, spectrum, eigenbasis, tol, policy)


def density_from_eigensystem(
    spectrum: ArrayLike,
    eigenbasis: ArrayLike,
    degeneracy_tol: Optional[float] = None,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> DensityMatrix:
    """Build a state from an explicit eigensystem, keeping the eigenvector gauge as given."""
    values = np.asarray(spectrum, dtype=np.float64)
    basis = as_matrix(eigenbasis)
    tol = policy.degeneracy_tol if degeneracy_tol is None else degeneracy_tol
    if values.shape != (basis.shape[0],):
        raise InvalidDensityMatrixError(
            f"Spectrum of length {values.shape} does not match eigenbasis of shape {basis.shape}"
        )
    if not is_unitary(basis, policy=policy):
        raise InvalidDensityMatrixError(f"Eigenbasis is not unitary: error {unitarity_error(basis):.3e}")
    if np.any(values < -policy.negative_eig_tol):
        raise InvalidDensityMatrixError(f"Spectrum has negative entry {values.min():.3e}")
    if abs(values.sum() - 1.0) > policy.state_tol:
        raise InvalidDensityMatrixError(f"Spectrum sums to {values.sum():.15g}, expected 1")
    order = np.argsort(-values, kind="stable")
    values = np.clip(values[order], 0.0, None)
    basis = basis[:, order]
    matrix = hermitian_part((basis * values) @ basis.conj().T)
    return _build_state(matrix, values, basis, tol, policy)


def isospectral_pair(
    rho: DensityMatrix,
    sigma: DensityMatrix,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> IsospectralPair:
    if rho.dim != sigma.dim:
        raise SpectraMismatchError(f"States have different dimensions: {rho.dim} vs {sigma.dim}")
    gap = float(np.max(np.abs(rho.spectrum - sigma.spectrum)))
    if gap > policy.isospectral_tol:
        raise SpectraMismatchError(
            f"States are not isospectral: spectra differ by {gap:.3e} (tolerance {policy.isospectral_tol:.0e})"
        )
    return IsospectralPair(rho=rho, sigma=sigma)


def project_spectrum(sigma: DensityMatrix, spectrum: ArrayLike, policy: NumericPolicy = DEFAULT_POLICY) -> DensityMatrix:
    """Replace the spectrum of sigma, keeping its eigenbasis."""
    return density_from_eigensystem(spectrum, sigma.eigenbasis, sigma.degeneracy_tol, policy=policy)


def _ginibre(d: int, rng: np.random.Generator, ncols: Optional[int] = None) -> ComplexMatrix:
    ncols = d if ncols is None else ncols
    return (rng.normal(size=(d, ncols)) + 1j * rng.normal(size=(d, ncols))) / np.sqrt(2)


def sample_haar_unitary(d: int, rng: RandomSource) -> ComplexMatrix:
    """Haar-distributed unitary: Ginibre matrix, QR, then phase-normalized diagonal of R."""
    if d < 1:
        raise ValueError(f"Dimension must be at least 1, got {d}")
    gen = as_generator(rng)
    q, r = np.linalg.qr(_ginibre(d, gen))
    diagonal = np.diagonal(r)
    return q * (diagonal / np.abs(diagonal))


def sample_haar_pure(d: int, rng: RandomSource, policy: NumericPolicy = DEFAULT_POLICY) -> DensityMatrix:
    """Projector onto a normalized vector of i.i.d. standard complex Gaussians."""
    if d < 2:
        raise ValueError(f"Dimension must be at least 2, got {d}")
    gen = as_generator(rng)
    psi = gen.normal(size=d) + 1j * gen.normal(size=d)
    psi = psi / np.linalg.norm(psi)
    return density_from_matrix(np.outer(psi, psi.conj()), policy=policy)


def sample_bures_mixed(d: int, rng: RandomSource, policy: NumericPolicy = DEFAULT_POLICY) -> DensityMatrix:
    """Bures-random state ρ ∝ (I + U) G G† (I + U†), G Ginibre and U Haar."""
    if d < 2:
        raise ValueError(f"Dimension must be at least 2, got {d}")
    gen = as_generator(rng)
    a = (np.eye(d) + sample_haar_unitary(d, gen)) @ _ginibre(d, gen)
    m = a @ a.conj().T
    m = hermitian_part(m / np.trace(m).real)
    return density_from_matrix(m, policy=policy)


def sample_state(ensemble: Ensemble, d: int, rng: RandomSource, policy: NumericPolicy = DEFAULT_POLICY) -> DensityMatrix:
    if ensemble is Ensemble.HAAR_PURE:
        return sample_haar_pure(d, rng, policy=policy)
    return sample_bures_mixed(d, rng, policy=policy)


def conjugate(rho: DensityMatrix, u: ComplexMatrix, policy: NumericPolicy = DEFAULT_POLICY) -> DensityMatrix:
    """The state U ρ U†, revalidated."""
    m = hermitian_part(u @ rho.matrix @ u.conj().T)
    return density_from_matrix(m / np.trace(m).real, rho.degeneracy_tol, policy=policy)


def make_isospectral_target(rho: DensityMatrix, rng: RandomSource, policy: NumericPolicy = DEFAULT_POLICY) -> IsospectralPair:
    """Pair rho with sigma = U rho U† for a Haar-random U."""
    u = sample_haar_unitary(rho.dim, rng)
    return isospectral_pair(rho, conjugate(rho, u, policy=policy), policy=policy)


def sample_pair(
    ensemble: Ensemble,
    d: int,
    rng: RandomSource,
    pairing: PairingMode = PairingMode.CONJUGATE,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> IsospectralPair:
    """
    Draw a random problem instance.

    Pure pairs are two independent Haar states. Mixed pairs use sigma = U rho U†
    (conjugate) or an independent Bures draw projected onto rho's spectrum.
    """
    gen = as_generator(rng)
    rho = sample_state(ensemble, d, gen, policy=policy)
    if ensemble is Ensemble.HAAR_PURE:
        sigma = sample_haar_pure(d, gen, policy=policy)
        return isospectral_pair(rho, project_spectrum(sigma, rho.spectrum, policy=policy), policy=policy)
    if pairing is PairingMode.INDEPENDENT:
        sigma = sample_state(ensemble, d, gen, policy=policy)
        return isospectral_pair(rho, project_spectrum(sigma, rho.spectrum, policy=policy), policy=policy)
    return make_isospectral_target(rho, gen, policy=policy)


def random_hamiltonian(d: int, rng: RandomSource) -> ComplexMatrix:
    """GUE draw rescaled to unit Hilbert-Schmidt norm."""
    gen = as_generator(rng)
    g = _ginibre(d, gen)
    v = hermitian_part(g)
    return v / hs_norm(v)


def perturb_convex(
    rho: DensityMatrix,
    delta: float,
    rng: RandomSource,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> DensityMatrix:
    """(1 − δ) ρ + δ χ with χ a Bures-random state drawn from `rng`."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"Convex mixing weight must lie in [0, 1], got {delta}")
    if delta == 0.0:
        return rho
    chi = sample_bures_mixed(rho.dim, rng, policy=policy)
    if delta == 1.0:
        return chi
    mixed = (1.0 - delta) * rho.matrix + delta * chi.matrix
    return density_from_matrix(mixed, rho.degeneracy_tol, policy=policy)


def perturb_unitary(
    rho: DensityMatrix,
    delta: float,
    rng: RandomSource,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> DensityMatrix:
    """exp(iVδ) ρ exp(−iVδ) with V a random Hamiltonian of unit HS norm."""
    if delta == 0.0:
        return rho
    v = random_hamiltonian(rho.dim, rng)
    u = expm_hermitian(v, 1j * delta, policy=policy)
    return conjugate(rho, u, policy=policy)
