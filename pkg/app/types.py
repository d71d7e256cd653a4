import hashlib
import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .solver.linalg import DEFAULT_POLICY, NumericPolicy
from .solver.models import (
    DensityMatrix,
    Ensemble,
    IterationRecord,
    MaskSide,
    PairingMode,
    PerturbationKind,
    QslStatus,
    RngSeed,
    SignConvention,
    SolverConfig,
    SolverRun,
    phases_from_json,
)
from .solver.states import density_from_matrix, isospectral_pair


class MatrixFile(BaseModel):
    """Complex d×d matrix as row-major real and imaginary parts"""
    dim: int = Field(ge=1)
    re: List[List[float]]
    im: List[List[float]]

    @model_validator(mode="after")
    def check_shape(self) -> "MatrixFile":
        for name, rows in (("re", self.re), ("im", self.im)):
            if len(rows) != self.dim or any(len(row) != self.dim for row in rows):
                raise ValueError(f"'{name}' must be a {self.dim}x{self.dim} array")
        return self

    def to_array(self) -> np.ndarray:
        return np.asarray(self.re, dtype=np.float64) + 1j * np.asarray(self.im, dtype=np.float64)


class StateFile(MatrixFile):
    """Density matrix on disk; validated on the way in"""

    def to_domain(self, policy: NumericPolicy = DEFAULT_POLICY) -> DensityMatrix:
        return density_from_matrix(self.to_array(), policy=policy)


class PhasesPayload(BaseModel):
    kind: Literal["phases", "blocks"]
    values: List[Any]


class SolverConfigPayload(BaseModel):
    epsilon: float
    max_iterations: Optional[int] = None
    sign_convention: SignConvention = SignConvention.PLUS
    mask_side: MaskSide = MaskSide.INITIAL
    initial_phases: Optional[PhasesPayload] = None
    seed: int = 0
    label: str = "phases"

    def to_domain(self) -> SolverConfig:
        phases = None if self.initial_phases is None else phases_from_json(self.initial_phases.model_dump())
        return SolverConfig(
            epsilon=self.epsilon,
            max_iterations=self.max_iterations,
            sign_convention=self.sign_convention,
            mask_side=self.mask_side,
            initial_phases=phases,
            rng=RngSeed(self.seed, self.label),
        )


class IterationPayload(BaseModel):
    index: int
    parallel_ratio: float
    hamiltonian_hs_norm: float
    mapping_error: float
    efficiency_star: Optional[float] = None
    geometric_phases: Optional[List[float]] = None
    final_parallel_ratio: Optional[float] = None

    def to_domain(self) -> IterationRecord:
        return IterationRecord(
            index=self.index,
            parallel_ratio=self.parallel_ratio,
            hamiltonian_hs_norm=self.hamiltonian_hs_norm,
            mapping_error=self.mapping_error,
            efficiency_star=self.efficiency_star,
            geometric_phases=None if self.geometric_phases is None else tuple(self.geometric_phases),
            final_parallel_ratio=self.final_parallel_ratio,
        )


class SolverRunFile(BaseModel):
    """Serialized SolverRun, optionally with the CLI flags that produced it"""
    config: SolverConfigPayload
    rho: StateFile
    sigma: StateFile
    initial_phases: PhasesPayload
    converged: bool
    n_iterations: int
    iterations: List[IterationPayload]
    final_hamiltonian: MatrixFile
    final_unitary: MatrixFile
    flags: Optional[Dict[str, Any]] = None
    qsl: Optional[Dict[str, Any]] = None

    @model_validator(mode="after")
    def check_counts(self) -> "SolverRunFile":
        if self.n_iterations != len(self.iterations) - 1:
            raise ValueError(f"n_iterations={self.n_iterations} disagrees with {len(self.iterations)} iteration records")
        return self

    def to_domain(self, policy: NumericPolicy = DEFAULT_POLICY) -> SolverRun:
        pair = isospectral_pair(self.rho.to_domain(policy), self.sigma.to_domain(policy), policy=policy)
        return SolverRun(
            pair=pair,
            config=self.config.to_domain(),
            iterations=[record.to_domain() for record in self.iterations],
            converged=self.converged,
            final_hamiltonian=self.final_hamiltonian.to_array(),
            final_unitary=self.final_unitary.to_array(),
            initial_phases=phases_from_json(self.initial_phases.model_dump()),
        )


class ExperimentPlan(BaseModel):
    """Seeded description of a benchmark sweep; every trial is reproducible from it"""
    dims: List[int]
    samples_per_dim: int = Field(ge=1)
    epsilon: float = Field(gt=0, lt=1)
    ensemble: Ensemble = Ensemble.BURES_MIXED
    base_seed: int = Field(default=0, ge=0, lt=2**64)
    pairing: PairingMode = PairingMode.CONJUGATE
    sign_convention: SignConvention = SignConvention.PLUS
    mask_side: MaskSide = MaskSide.INITIAL
    max_iterations: Optional[int] = Field(default=None, ge=1)

    @field_validator("dims")
    @classmethod
    def check_dims(cls, dims: List[int]) -> List[int]:
        if not dims:
            raise ValueError("at least one dimension is required")
        if any(d < 2 for d in dims):
            raise ValueError(f"every dimension must be at least 2, got {dims}")
        return dims

    def plan_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.md5(canonical.encode()).hexdigest()

    def trial_seed(self, dim: int, trial: int) -> RngSeed:
        """Stream for one trial, derived from the plan alone (never from other trials)."""
        return RngSeed(self.base_seed, f"{self.ensemble.value}/{self.pairing.value}/d{dim}/t{trial}")

    def solver_config(self, rng: RngSeed) -> SolverConfig:
        return SolverConfig(
            epsilon=self.epsilon,
            max_iterations=self.max_iterations,
            sign_convention=self.sign_convention,
            mask_side=self.mask_side,
            rng=rng,
        )


# CSV column order; wall_time is JSON-only so reruns stay byte-identical.
RECORD_CSV_FIELDS = (
    "dim",
    "trial",
    "seed",
    "stream",
    "ensemble",
    "epsilon",
    "iterations",
    "converged",
    "time_ratio",
    "t_qsl",
    "qsl_status",
    "efficiency_star",
)


class ExperimentRecord(BaseModel):
    """One solved trial"""
    dim: int
    trial: int
    seed: int
    stream: str
    ensemble: Ensemble
    epsilon: float
    iterations: int
    converged: bool
    time_ratio: Optional[float] = None  # None when the QSL status is not ok
    t_qsl: Optional[float] = None
    qsl_status: QslStatus = QslStatus.OK
    efficiency_star: Optional[float] = None
    wall_time: Optional[float] = None

    @property
    def usable(self) -> bool:
        return self.converged and self.qsl_status is QslStatus.OK


class ConfidenceInterval(BaseModel):
    level: float
    low: Optional[float] = None
    high: Optional[float] = None


class PerformanceSummary(BaseModel):
    dim: int
    n_trials: int
    n_converged: int
    n_excluded: int  # converged, but coincident or unreachable
    mean_ratio: Optional[float] = None
    median_ratio: Optional[float] = None
    min_ratio: Optional[float] = None
    ci90: ConfidenceInterval
    ci99: ConfidenceInterval
    ci90_smoothed: Optional[ConfidenceInterval] = None
    mean_efficiency_star: Optional[float] = None


class PerformanceReport(BaseModel):
    plan: ExperimentPlan
    plan_hash: str
    smoother: Optional[str] = None
    summaries: List[PerformanceSummary]
    records: List[ExperimentRecord]


class HistogramBin(BaseModel):
    iterations: int
    count: int


class IterationSummary(BaseModel):
    dim: int
    n_trials: int
    n_converged: int
    mean_iterations: float
    histogram: List[HistogramBin]


class LogFit(BaseModel):
    """n̄(d) ≈ intercept + slope·ln d"""
    intercept: float
    slope: float
    r_squared: float
    residuals: List[float]


class MonotonicityStep(BaseModel):
    dim_low: int
    dim_high: int
    mean_gap: float
    upper_bound_95: Optional[float] = None  # one-sided bound on n̄(high) − n̄(low)


class IterationReport(BaseModel):
    plan: ExperimentPlan
    plan_hash: str
    summaries: List[IterationSummary]
    log_fit: Optional[LogFit] = None
    monotonicity: List[MonotonicityStep]
    nondecreasing: bool
    records: List[ExperimentRecord]


class StartResult(BaseModel):
    start: int
    iterations: int
    converged: bool
    time_ratio: Optional[float] = None
    efficiency_star: Optional[float] = None


class MultistartSummary(BaseModel):
    dim: int
    num_starts: int
    n_run: int
    n_converged: int
    early_stop: bool
    min_iterations: Optional[int] = None
    p20_iterations: Optional[float] = None
    median_iterations: Optional[float] = None
    time_ratio_spread: Optional[float] = None
    consistent: bool = True
    winner: Optional[int] = None
    starts: List[StartResult]


class PerturbationPoint(BaseModel):
    delta: float
    kind: PerturbationKind
    converged: bool
    iterations: int
    deviation: Optional[float] = None


class PerturbationSummary(BaseModel):
    dim: int
    kind: PerturbationKind
    baseline_iterations: int
    baseline_converged: bool
    points: List[PerturbationPoint]
    spearman_rho: Optional[float] = None
    spearman_pvalue: Optional[float] = None  # one-sided, alternative: positive trend


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class InvalidFlagError(ValueError):
    """A command-line flag failed validation"""

    def __init__(self, flag: str, message: str):
        super().__init__(f"Invalid value for {flag}: {message}")
        self.flag = flag


FLAG_NAMES = {
    "max_iterations": "--max-iter",
    "sign_convention": "--sign",
    "mask_side": "--mask-side",
    "output_format": "--format",
    "random_dim": "--random",
    "rho_path": "RHO",
    "sigma_path": "SIGMA",
}


def flag_name(field: str) -> str:
    return FLAG_NAMES.get(field, "--" + field.replace("_", "-"))


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class CliConfig(BaseModel):
    """Parsed and validated command-line flags, echoed into every output file"""
    command: str
    rho_path: Optional[Path] = None
    sigma_path: Optional[Path] = None
    random_dim: Optional[int] = Field(default=None, ge=2)
    epsilon: Optional[float] = Field(default=None, gt=0, lt=1)
    max_iterations: Optional[int] = Field(default=None, ge=1)
    sign_convention: SignConvention = SignConvention.PLUS
    mask_side: MaskSide = MaskSide.INITIAL
    phases: Optional[List[float]] = None
    seed: int = Field(default=0, ge=0, lt=2**64)
    dims: Optional[List[int]] = None
    samples: Optional[int] = Field(default=None, ge=1)
    dim: Optional[int] = Field(default=None, ge=2)
    count: Optional[int] = Field(default=None, ge=1)
    starts: Optional[int] = Field(default=None, ge=1)
    deltas: Optional[List[float]] = None
    kind: PerturbationKind = PerturbationKind.UNITARY
    ensemble: Ensemble = Ensemble.BURES_MIXED
    pairing: PairingMode = PairingMode.CONJUGATE
    jobs: int = Field(default=1, ge=1)
    output_format: Optional[OutputFormat] = None
    output: Optional[Path] = None
    project_spectrum: bool = False
    early_stop: bool = False
    log_level: Optional[str] = None

    @field_validator("phases", "dims", "deltas", mode="before")
    @classmethod
    def split_lists(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("phases")
    @classmethod
    def check_phases(cls, phases: Optional[List[float]]) -> Optional[List[float]]:
        if phases is not None and not all(math.isfinite(p) for p in phases):
            raise ValueError("phases must be finite radians")
        return phases

    @field_validator("dims")
    @classmethod
    def check_dims(cls, dims: Optional[List[int]]) -> Optional[List[int]]:
        if dims is None:
            return dims
        if not dims:
            raise ValueError("at least one dimension is required")
        if any(d < 2 for d in dims):
            raise ValueError(f"every dimension must be at least 2, got {dims}")
        return dims

    @field_validator("deltas")
    @classmethod
    def check_deltas(cls, deltas: Optional[List[float]]) -> Optional[List[float]]:
        if deltas is not None and any(not math.isfinite(d) or d < 0 for d in deltas):
            raise ValueError("perturbation strengths must be finite and non-negative")
        return deltas

    @field_validator("log_level")
    @classmethod
    def check_log_level(cls, level: Optional[str]) -> Optional[str]:
        if level is None:
            return level
        if not isinstance(logging.getLevelName(level.upper()), int):
            raise ValueError(f"unknown log level {level!r}")
        return level.upper()

    @model_validator(mode="after")
    def check_combination(self) -> "CliConfig":
        if self.command == "solve":
            has_files = self.rho_path is not None or self.sigma_path is not None
            if has_files and self.random_dim is not None:
                raise InvalidFlagError("--random", "state files and --random are mutually exclusive")
            if not has_files and self.random_dim is None:
                raise InvalidFlagError("--random", "give RHO and SIGMA state files or --random d")
            if has_files and (self.rho_path is None or self.sigma_path is None):
                raise InvalidFlagError("SIGMA", "both RHO and SIGMA are required")
        if self.command == "sample" and self.dim is None:
            raise InvalidFlagError("--dim", "a dimension is required")
        if self.kind is PerturbationKind.CONVEX and self.deltas and max(self.deltas) > 1:
            raise InvalidFlagError("--deltas", "convex mixing weights must lie in [0, 1]")
        return self

    @classmethod
    def from_flags(cls, **flags: Any) -> "CliConfig":
        """
        Build a config from raw flag values, dropping unset ones.

        Raises:
            InvalidFlagError: naming the first offending flag
        """
        try:
            return cls(**{key: value for key, value in flags.items() if value is not None})
        except ValidationError as e:
            error = e.errors()[0]
            ctx_error = error.get("ctx", {}).get("error")
            if isinstance(ctx_error, InvalidFlagError):
                raise ctx_error from None
            field = str(error["loc"][0]) if error["loc"] else "command"
            raise InvalidFlagError(flag_name(field), error["msg"]) from None

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude_none=True)

