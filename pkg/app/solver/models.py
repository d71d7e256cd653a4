import hashlib
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from .linalg import DEFAULT_POLICY, ComplexMatrix


class SignConvention(str, Enum):
    """Orientation of the masked correction: exp(+iH∥) or exp(−iH∥)."""
    PLUS = "plus"
    MINUS = "minus"

    @property
    def factor(self) -> int:
        return 1 if self is SignConvention.PLUS else -1


class MaskSide(str, Enum):
    INITIAL = "initial"
    FINAL = "final"
    BOTH = "both"


class Ensemble(str, Enum):
    HAAR_PURE = "haar_pure"
    BURES_MIXED = "bures_mixed"


class PairingMode(str, Enum):
    """How the target state of a random pair is drawn."""
    CONJUGATE = "conjugate"      # sigma = U rho U†, U Haar
    INDEPENDENT = "independent"  # independent draw, projected onto rho's spectrum


class PerturbationKind(str, Enum):
    CONVEX = "convex"
    UNITARY = "unitary"


class BoundKind(str, Enum):
    MANDELSTAM_TAMM_PURE = "mandelstam_tamm_pure"
    BLOCH_ANGLE_MIXED = "bloch_angle_mixed"


class QslStatus(str, Enum):
    OK = "ok"
    COINCIDENT = "coincident"    # rho == sigma, t_qsl = 0
    UNREACHABLE = "unreachable"  # zero speed with distinct states


# One phase per eigenvector, or one unitary block per degeneracy group.
InitialPhases = Union[NDArray, Tuple[NDArray, ...]]


def matrix_to_json(m: NDArray) -> Dict[str, Any]:
    """Row-major re/im layout shared by state files and run files."""
    m = np.asarray(m, dtype=np.complex128)
    return {
        "dim": int(m.shape[0]),
        "re": m.real.tolist(),
        "im": m.imag.tolist(),
    }


def matrix_from_json(data: Dict[str, Any]) -> ComplexMatrix:
    return np.asarray(data["re"], dtype=np.float64) + 1j * np.asarray(data["im"], dtype=np.float64)


@dataclass(frozen=True)
class RngSeed:
    """Seed plus stream label; equal pairs reproduce identical sample sequences."""
    seed: int
    label: str = "default"

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")

    def seed_sequence(self) -> np.random.SeedSequence:
        digest = hashlib.md5(self.label.encode("utf-8")).digest()
        words = tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))
        return np.random.SeedSequence(entropy=int(self.seed), spawn_key=words)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def child(self, name: str) -> "RngSeed":
        return RngSeed(self.seed, f"{self.label}/{name}")


RandomSource = Union[RngSeed, np.random.Generator]


def as_generator(rng: RandomSource) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return rng.generator()


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated quantum state with its cached, descending eigensystem."""
    matrix: ComplexMatrix
    spectrum: NDArray
    eigenbasis: ComplexMatrix
    degeneracy_groups: Tuple[Tuple[int, ...], ...]
    degeneracy_tol: float
    purity_tol: float = DEFAULT_POLICY.purity_tol

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def purity(self) -> float:
        return float(np.sum(self.spectrum ** 2))

    @property
    def is_pure(self) -> bool:
        return bool(self.spectrum[0] >= 1.0 - self.purity_tol)

    @property
    def is_nondegenerate(self) -> bool:
        return all(len(group) == 1 for group in self.degeneracy_groups)

    @property
    def state_vector(self) -> NDArray:
        """Leading eigenvector; the state itself when the state is pure."""
        return self.eigenbasis[:, 0]

    def to_json(self) -> Dict[str, Any]:
        return matrix_to_json(self.matrix)


@dataclass(frozen=True, eq=False)
class IsospectralPair:
    rho: DensityMatrix
    sigma: DensityMatrix

    @property
    def dim(self) -> int:
        return self.rho.dim

    @property
    def is_pure(self) -> bool:
        return self.rho.is_pure and self.sigma.is_pure


@dataclass(frozen=True, eq=False)
class MaskSpec:
    """0/1 mask in the reference state's eigenbasis: M_ij = 1 iff i, j share a degeneracy group."""
    reference: DensityMatrix
    matrix: NDArray


@dataclass(frozen=True, eq=False)
class SolverConfig:
    epsilon: float = 1e-2
    max_iterations: Optional[int] = None
    sign_convention: SignConvention = SignConvention.PLUS
    mask_side: MaskSide = MaskSide.INITIAL
    initial_phases: Optional[InitialPhases] = None
    rng: RngSeed = field(default_factory=lambda: RngSeed(0, "phases"))

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError(f"max_iterations must be at least 1, got {self.max_iterations}")

    def resolved_max_iterations(self, dim: int) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return default_max_iterations(dim, self.epsilon)

    def with_overrides(self, **changes) -> "SolverConfig":
        return replace(self, **changes)

    def to_json(self) -> Dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "max_iterations": self.max_iterations,
            "sign_convention": self.sign_convention.value,
            "mask_side": self.mask_side.value,
            "initial_phases": phases_to_json(self.initial_phases),
            "seed": self.rng.seed,
            "label": self.rng.label,
        }


def default_max_iterations(dim: int, epsilon: float) -> int:
    """10·⌈log₂ d⌉·⌈ε^(−1/2)⌉, capped at 10⁴."""
    log_term = max(1, math.ceil(math.log2(max(dim, 2))))
    return min(10_000, 10 * log_term * math.ceil((1.0 / epsilon) ** 0.5))


def phases_to_json(phases: Optional[InitialPhases]) -> Any:
    if phases is None:
        return None
    if not isinstance(phases, np.ndarray) and all(np.ndim(block) == 2 for block in phases):
        return {"kind": "blocks", "values": [matrix_to_json(block) for block in phases]}
    return {"kind": "phases", "values": np.asarray(phases, dtype=np.float64).tolist()}


def phases_from_json(data: Any) -> Optional[InitialPhases]:
    if data is None:
        return None
    if data["kind"] == "phases":
        return np.asarray(data["values"], dtype=np.float64)
    return tuple(matrix_from_json(block) for block in data["values"])


@dataclass(frozen=True)
class IterationRecord:
    """One step j of the iteration."""
    index: int
    parallel_ratio: float       # ‖H∥‖_HS / ‖H‖_HS
    hamiltonian_hs_norm: float
    mapping_error: float        # ‖O ρ O† − σ‖_HS
    efficiency_star: Optional[float] = None
    geometric_phases: Optional[Tuple[float, ...]] = None
    final_parallel_ratio: Optional[float] = None

    def to_json(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "parallel_ratio": self.parallel_ratio,
            "hamiltonian_hs_norm": self.hamiltonian_hs_norm,
            "mapping_error": self.mapping_error,
            "efficiency_star": self.efficiency_star,
            "geometric_phases": None if self.geometric_phases is None else list(self.geometric_phases),
            "final_parallel_ratio": self.final_parallel_ratio,
        }


@dataclass(frozen=True, eq=False)
class SolverRun:
    pair: IsospectralPair
    config: SolverConfig
    iterations: List[IterationRecord]
    converged: bool
    final_hamiltonian: ComplexMatrix
    final_unitary: ComplexMatrix
    initial_phases: InitialPhases

    @property
    def n_iterations(self) -> int:
        """Number of updates applied after the initial unitary."""
        return len(self.iterations) - 1

    @property
    def last(self) -> IterationRecord:
        return self.iterations[-1]

    def phase_trajectory(self) -> Optional[NDArray]:
        """
        Geometric phases per iteration with the first phase subtracted.

        Returns None when the spectrum is degenerate and phases are undefined.
        """
        if any(record.geometric_phases is None for record in self.iterations):
            return None
        phases = np.array([record.geometric_phases for record in self.iterations])
        relative = phases - phases[:, :1]
        return np.angle(np.exp(1j * relative))

    def to_json(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_json(),
            "rho": self.pair.rho.to_json(),
            "sigma": self.pair.sigma.to_json(),
            "initial_phases": phases_to_json(self.initial_phases),
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "iterations": [record.to_json() for record in self.iterations],
            "final_hamiltonian": matrix_to_json(self.final_hamiltonian),
            "final_unitary": matrix_to_json(self.final_unitary),
        }


@dataclass(frozen=True)
class QslReport:
    t_qsl: float
    tau: float
    time_ratio: float
    bound_kind: BoundKind
    status: QslStatus = QslStatus.OK

    @property
    def excluded(self) -> bool:
        """Excluded from aggregate statistics (t_qsl = 0 or no valid generator)."""
        return self.status is not QslStatus.OK

    def to_json(self) -> Dict[str, Any]:
        # JSON has no infinity; sentinels become null
        return {
            "t_qsl": self.t_qsl if math.isfinite(self.t_qsl) else None,
            "tau": self.tau,
            "time_ratio": self.time_ratio if math.isfinite(self.time_ratio) else None,
            "bound_kind": self.bound_kind.value,
            "status": self.status.value,
        }
