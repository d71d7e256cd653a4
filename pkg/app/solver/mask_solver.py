import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateSpectrumError, DimensionMismatchError, PhaseArityError, ZeroHamiltonianError
from .linalg import (
    DEFAULT_POLICY,
    ComplexMatrix,
    NumericPolicy,
    as_matrix,
    expm_hermitian,
    hermitian_part,
    hs_norm,
    is_unitary,
    logm_unitary_principal,
    nearest_unitary,
    principal_phases,
)
from .metrics import efficiency_eta_star
from .models import (
    DensityMatrix,
    InitialPhases,
    IsospectralPair,
    IterationRecord,
    MaskSide,
    MaskSpec,
    RandomSource,
    SignConvention,
    SolverConfig,
    SolverRun,
    as_generator,
)
from .states import sample_haar_unitary

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SolverStep:
    o_next: ComplexMatrix
    hamiltonian: ComplexMatrix
    parallel: ComplexMatrix
    final_parallel: Optional[ComplexMatrix] = None


def build_mask(state: DensityMatrix) -> MaskSpec:
    d = state.dim
    m = np.zeros((d, d))
    for group in state.degeneracy_groups:
        m[np.ix_(group, group)] = 1.0
    return MaskSpec(reference=state, matrix=m)


def apply_mask(h: ComplexMatrix, mask: MaskSpec) -> ComplexMatrix:
    """
    Parallel component D (M ∘ D† H D) D† of a Hamiltonian.

    This is the HS-orthogonal projection onto the operators commuting with
    the mask's reference state.
    """
    h = as_matrix(h)
    if h.shape != mask.matrix.shape:
        raise DimensionMismatchError(f"Hamiltonian shape {h.shape} does not match mask {mask.matrix.shape}")
    dmat = mask.reference.eigenbasis
    inner = mask.matrix * (dmat.conj().T @ h @ dmat)
    return hermitian_part(dmat @ inner @ dmat.conj().T)


def _is_phase_vector(phases: InitialPhases) -> bool:
    if isinstance(phases, np.ndarray):
        return phases.ndim == 1
    return all(np.ndim(p) == 0 for p in phases)


def _phase_blocks(pair: IsospectralPair, phases: InitialPhases) -> List[ComplexMatrix]:
    groups = pair.rho.degeneracy_groups
    if _is_phase_vector(phases):
        values = np.asarray(phases, dtype=np.float64)
        if values.shape != (pair.dim,):
            raise PhaseArityError(f"Expected {pair.dim} phases, got {values.shape[0]}")
        return [np.diag(np.exp(1j * values[list(group)])) for group in groups]
    blocks = [as_matrix(block) for block in phases]
    if len(blocks) != len(groups):
        raise PhaseArityError(f"Expected {len(groups)} unitary blocks (one per degeneracy group), got {len(blocks)}")
    for block, group in zip(blocks, groups):
        if block.shape != (len(group), len(group)):
            raise PhaseArityError(f"Block of shape {block.shape} does not fit a group of size {len(group)}")
        if not is_unitary(block):
            raise PhaseArityError("Degenerate-group blocks must be unitary")
    return blocks


def initial_unitary(pair: IsospectralPair, phases: InitialPhases) -> ComplexMatrix:
    """
    O(φ) = Σ_k e^{iφ_k} |s_k⟩⟨r_k|, with unitary blocks on degenerate groups.

    Eigenvectors are paired by their position in the descending spectra.
    """
    rho, sigma = pair.rho, pair.sigma
    o = np.zeros((pair.dim, pair.dim), dtype=np.complex128)
    for block, group in zip(_phase_blocks(pair, phases), rho.degeneracy_groups):
        idx = list(group)
        o += sigma.eigenbasis[:, idx] @ block @ rho.eigenbasis[:, idx].conj().T
    return o


def random_initial_phases(pair: IsospectralPair, rng: RandomSource) -> InitialPhases:
    """Uniform phases in [0, 2π); Haar-random blocks for degenerate groups."""
    gen = as_generator(rng)
    if pair.rho.is_nondegenerate:
        return gen.uniform(0.0, 2.0 * np.pi, size=pair.dim)
    return tuple(
        np.exp(1j * gen.uniform(0.0, 2.0 * np.pi, size=(1, 1))) if len(group) == 1
        else sample_haar_unitary(len(group), gen)
        for group in pair.rho.degeneracy_groups
    )


def mapping_error(o: ComplexMatrix, pair: IsospectralPair) -> float:
    return hs_norm(o @ pair.rho.matrix @ o.conj().T - pair.sigma.matrix)


def extract_geometric_phases(o: ComplexMatrix, pair: IsospectralPair) -> NDArray:
    """
    Phases φ_k = arg⟨s_k|O|r_k⟩ in (−π, π].

    Raises:
        DegenerateSpectrumError: if rho has a degenerate spectrum
    """
    if not pair.rho.is_nondegenerate:
        raise DegenerateSpectrumError("Geometric phases are undefined for a degenerate spectrum")
    overlaps = np.einsum("ik,ij,jk->k", pair.sigma.eigenbasis.conj(), as_matrix(o), pair.rho.eigenbasis)
    return principal_phases(overlaps)


def _ratio(part: ComplexMatrix, h_norm: float, policy: NumericPolicy) -> float:
    if h_norm <= policy.zero_tol:
        return 0.0
    return hs_norm(part) / h_norm


def solver_step(
    o_current: ComplexMatrix,
    mask: MaskSpec,
    sign: SignConvention = SignConvention.PLUS,
    side: MaskSide = MaskSide.INITIAL,
    final_mask: Optional[MaskSpec] = None,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> SolverStep:
    """
    One update of the connecting unitary.

    Args:
        o_current: unitary mapping rho to sigma
        mask: mask of rho (side=initial or both) or of sigma (side=final)
        sign: orientation s of the correction exp(s·i·H∥)
        side: compose on the right (initial), on the left (final), or split
            between both sides
        final_mask: mask of sigma, required for side=both

    Returns:
        SolverStep with the next unitary, H = i log O and its parallel part(s)
    """
    scale = sign.factor * 1j
    h = logm_unitary_principal(o_current, policy=policy)
    parallel = apply_mask(h, mask)
    final_parallel = None
    if side is MaskSide.INITIAL:
        o_next = o_current @ expm_hermitian(parallel, scale, policy=policy)
    elif side is MaskSide.FINAL:
        o_next = expm_hermitian(parallel, scale, policy=policy) @ o_current
    else:
        if final_mask is None:
            raise ValueError("side=both needs the mask of the final state")
        final_parallel = apply_mask(h, final_mask)
        o_next = (
            expm_hermitian(final_parallel, scale / 2, policy=policy)
            @ o_current
            @ expm_hermitian(parallel, scale / 2, policy=policy)
        )
    return SolverStep(
        o_next=nearest_unitary(o_next),
        hamiltonian=h,
        parallel=parallel,
        final_parallel=final_parallel,
    )


class MaskSolver:
    """Iterates the masked update until the parallel component falls below ε."""

    def __init__(self, config: Optional[SolverConfig] = None, policy: NumericPolicy = DEFAULT_POLICY):
        self.config = config or SolverConfig()
        self.policy = policy

    def _record(
        self,
        index: int,
        o: ComplexMatrix,
        step: SolverStep,
        pair: IsospectralPair,
    ) -> IterationRecord:
        h_norm = hs_norm(step.hamiltonian)
        try:
            eta_star = efficiency_eta_star(step.hamiltonian, pair.rho, self.policy)
        except ZeroHamiltonianError:
            eta_star = None
        phases = None
        if pair.rho.is_nondegenerate:
            phases = tuple(float(x) for x in extract_geometric_phases(o, pair))
        final_ratio = None
        if step.final_parallel is not None:
            final_ratio = _ratio(step.final_parallel, h_norm, self.policy)
        return IterationRecord(
            index=index,
            parallel_ratio=_ratio(step.parallel, h_norm, self.policy),
            hamiltonian_hs_norm=h_norm,
            mapping_error=mapping_error(o, pair),
            efficiency_star=eta_star,
            geometric_phases=phases,
            final_parallel_ratio=final_ratio,
        )

    def _is_converged(self, record: IterationRecord) -> bool:
        epsilon = self.config.epsilon
        if record.final_parallel_ratio is not None and record.final_parallel_ratio > epsilon:
            return False
        return record.parallel_ratio <= epsilon

    def solve(self, pair: IsospectralPair) -> SolverRun:
        """
        Run the iteration on an isospectral pair.

        Returns:
            SolverRun with one IterationRecord per step, including j = 0.
            Non-convergence within max_iterations is reported through
            `converged=False`.
        """
        config = self.config
        phases = config.initial_phases
        if phases is None:
            phases = random_initial_phases(pair, config.rng)
        max_iterations = config.resolved_max_iterations(pair.dim)
        side = config.mask_side

        rho_mask = build_mask(pair.rho)
        sigma_mask = build_mask(pair.sigma)
        primary_mask = sigma_mask if side is MaskSide.FINAL else rho_mask

        o = initial_unitary(pair, phases)
        records: List[IterationRecord] = []
        converged = False
        logger.info(
            f"Solving d={pair.dim} pair (epsilon={config.epsilon}, sign={config.sign_convention.value}, "
            f"side={side.value}, max_iterations={max_iterations})"
        )
        for j in range(max_iterations + 1):
            step = solver_step(o, primary_mask, config.sign_convention, side, sigma_mask, policy=self.policy)
            record = self._record(j, o, step, pair)
            records.append(record)
            logger.debug(
                f"j={j} parallel_ratio={record.parallel_ratio:.3e} "
                f"eta_star={record.efficiency_star} mapping_error={record.mapping_error:.2e}"
            )
            if self._is_converged(record):
                converged = True
                break
            if j == max_iterations:
                break
            o = step.o_next

        if converged:
            logger.info(f"Converged after {len(records) - 1} iterations")
        else:
            logger.warning(
                f"No convergence within {max_iterations} iterations "
                f"(last parallel ratio {records[-1].parallel_ratio:.3e})"
            )
        return SolverRun(
            pair=pair,
            config=config,
            iterations=records,
            converged=converged,
            final_hamiltonian=step.hamiltonian,
            final_unitary=o,
            initial_phases=phases,
        )


def solve(pair: IsospectralPair, config: Optional[SolverConfig] = None) -> SolverRun:
    return MaskSolver(config).solve(pair)
