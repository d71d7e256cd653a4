"""Quantum speed limits, evolution-time accounting and Hamiltonian efficiency."""

import logging
from typing import Tuple

import numpy as np
from numpy.typing import ArrayLike

from .errors import DimensionMismatchError, NotPureStateError, ZeroHamiltonianError
from .linalg import DEFAULT_POLICY, ComplexMatrix, NumericPolicy, as_matrix, commutator, hs_norm, op_norm
from .models import BoundKind, DensityMatrix, IsospectralPair, QslReport, QslStatus

logger = logging.getLogger(__name__)


def _check_dims(h: ComplexMatrix, rho: DensityMatrix) -> ComplexMatrix:
    h = as_matrix(h)
    if h.shape != rho.matrix.shape:
        raise DimensionMismatchError(f"Hamiltonian shape {h.shape} does not match state dimension {rho.dim}")
    return h


def energy_stddev(h: ArrayLike, rho: DensityMatrix) -> float:
    """ΔH_ρ = sqrt(tr ρH² − (tr ρH)²)."""
    h = _check_dims(h, rho)
    rh = rho.matrix @ h
    variance = np.trace(rh @ h).real - np.trace(rh).real ** 2
    return float(np.sqrt(max(variance, 0.0)))


def evolution_speed_hs(h: ArrayLike, rho: DensityMatrix) -> float:
    """‖[H, ρ]‖_HS, the HS speed of ρ̇ = −i[H, ρ]."""
    h = _check_dims(h, rho)
    return hs_norm(commutator(h, rho.matrix))


def fubini_study_distance(psi: DensityMatrix, phi: DensityMatrix) -> float:
    """arccos |⟨ψ|φ⟩| between two pure states, in [0, π/2]."""
    if not (psi.is_pure and phi.is_pure):
        raise NotPureStateError("Fubini-Study distance needs two rank-one states")
    overlap = abs(np.vdot(psi.state_vector, phi.state_vector))
    return float(np.arccos(np.clip(overlap, 0.0, 1.0)))


def _report(
    distance_over_speed: Tuple[float, float],
    tau: float,
    kind: BoundKind,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> QslReport:
    distance, speed = distance_over_speed
    if distance <= policy.zero_tol:
        return QslReport(t_qsl=0.0, tau=tau, time_ratio=float("inf"), bound_kind=kind, status=QslStatus.COINCIDENT)
    if speed <= policy.zero_tol:
        logger.warning(f"Zero speed between distinct states ({kind.value}); no valid generator")
        return QslReport(t_qsl=float("inf"), tau=tau, time_ratio=float("inf"), bound_kind=kind, status=QslStatus.UNREACHABLE)
    t_qsl = distance / speed
    return QslReport(t_qsl=t_qsl, tau=tau, time_ratio=tau / t_qsl, bound_kind=kind)


def qsl_pure(
    psi: DensityMatrix,
    phi: DensityMatrix,
    h: ArrayLike,
    tau: float = 1.0,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> QslReport:
    """Mandelstam-Tamm bound T = d_FS(ψ, φ) / ΔH_ψ for the evolution exp(−iHτ)."""
    distance = fubini_study_distance(psi, phi)
    return _report((distance, energy_stddev(h, psi)), tau, BoundKind.MANDELSTAM_TAMM_PURE, policy)


def bloch_angle(rho: DensityMatrix, sigma: DensityMatrix, policy: NumericPolicy = DEFAULT_POLICY) -> Tuple[float, float]:
    """
    Radius and angle of two states on the generalized Bloch sphere.

    Returns:
        (R, Θ) with R = sqrt(tr ρ² − 1/d) and Θ the HS angle between the
        traceless parts of rho and sigma
    """
    d = rho.dim
    radius_sq = rho.purity - 1.0 / d
    if radius_sq <= policy.zero_tol:
        return 0.0, 0.0
    overlap = np.trace(rho.matrix @ sigma.matrix).real - 1.0 / d
    return float(np.sqrt(radius_sq)), float(np.arccos(np.clip(overlap / radius_sq, -1.0, 1.0)))


def qsl_mixed(
    rho: DensityMatrix,
    sigma: DensityMatrix,
    h: ArrayLike,
    tau: float = 1.0,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> QslReport:
    """
    Generalized-Bloch-angle bound T = R·Θ / ‖[H, ρ]‖_HS.

    The traceless part of ρ moves on a sphere of HS radius R at the constant
    speed ‖[H, ρ]‖_HS, so the arc R·Θ bounds the time from below.
    """
    radius, angle = bloch_angle(rho, sigma, policy)
    if hs_norm(rho.matrix - sigma.matrix) <= policy.zero_tol:
        angle = 0.0
    return _report((radius * angle, evolution_speed_hs(h, rho)), tau, BoundKind.BLOCH_ANGLE_MIXED, policy)


def qsl_report(
    pair: IsospectralPair,
    h: ArrayLike,
    tau: float = 1.0,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> QslReport:
    """Mandelstam-Tamm for pure pairs, Bloch-angle bound otherwise."""
    if pair.is_pure:
        return qsl_pure(pair.rho, pair.sigma, h, tau, policy)
    return qsl_mixed(pair.rho, pair.sigma, h, tau, policy)


def efficiency_eta(h: ArrayLike, rho: DensityMatrix, policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """η = ΔH_ρ / ‖H‖_op."""
    h = _check_dims(h, rho)
    norm = op_norm(h)
    if norm <= policy.zero_tol:
        raise ZeroHamiltonianError("Efficiency is undefined for the zero Hamiltonian")
    return float(np.clip(energy_stddev(h, rho) / norm, 0.0, 1.0))


def efficiency_eta_speed(h: ArrayLike, rho: DensityMatrix, policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """‖[H, ρ]‖_HS / (√2 ‖H‖_op); coincides with η on pure states."""
    h = _check_dims(h, rho)
    norm = op_norm(h)
    if norm <= policy.zero_tol:
        raise ZeroHamiltonianError("Efficiency is undefined for the zero Hamiltonian")
    return evolution_speed_hs(h, rho) / (np.sqrt(2.0) * norm)


def _eta_star_terms(h: ComplexMatrix, rho: DensityMatrix) -> Tuple[float, float]:
    r = rho.matrix
    rh = r @ h
    rho2_h2 = np.trace(r @ rh @ h).real
    rh_sq = np.trace(rh @ rh).real
    mean = np.trace(rh).real
    numerator_sq = max(rho2_h2 - rh_sq, 0.0)
    return numerator_sq, numerator_sq + mean ** 2


def efficiency_eta_star(h: ArrayLike, rho: DensityMatrix, policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """
    η★ = sqrt(tr[ρ²H²] − tr[(ρH)²]) / sqrt(tr[ρ²H²] − tr[(ρH)²] + tr[ρH]²).

    Equals 1 when H has no component commuting with ρ.

    Raises:
        ZeroHamiltonianError: if the denominator vanishes
    """
    h = _check_dims(h, rho)
    numerator_sq, denominator_sq = _eta_star_terms(h, rho)
    if denominator_sq <= policy.zero_tol ** 2:
        raise ZeroHamiltonianError("η★ is undefined: the Hamiltonian acts trivially on the state")
    return float(np.sqrt(numerator_sq / denominator_sq))


def rescale(h: ArrayLike, tau: float, c: float) -> Tuple[ComplexMatrix, float]:
    """(H, τ) → (H/c, τ·c); the same unitary exp(−iHτ)."""
    if c <= 0:
        raise ValueError(f"Rescaling factor must be positive, got {c}")
    return as_matrix(h) / c, tau * c


def normalize_energy(
    h: ArrayLike,
    rho: DensityMatrix,
    constraint: str = "stddev",
    value: float = 1.0,
    tau: float = 1.0,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> Tuple[ComplexMatrix, float]:
    """
    Rescale H so that its energy measure equals `value`.

    Args:
        constraint: "stddev" (ΔH_ρ), "hs" (‖H‖_HS) or "op" (‖H‖_op)
    """
    measures = {
        "stddev": lambda: energy_stddev(h, rho),
        "hs": lambda: hs_norm(h),
        "op": lambda: op_norm(h),
    }
    if constraint not in measures:
        raise ValueError(f"Unknown energy constraint {constraint!r}")
    measure = measures[constraint]()
    if measure <= policy.zero_tol:
        raise ZeroHamiltonianError(f"Cannot normalize a Hamiltonian with zero {constraint}")
    return rescale(h, tau, measure / value)
