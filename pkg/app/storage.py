"""Reading and writing state files, solver runs and experiment results."""

import csv
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from pydantic import BaseModel

from .solver.linalg import DEFAULT_POLICY, NumericPolicy
from .solver.models import DensityMatrix, IsospectralPair, SolverRun
from .solver.states import isospectral_pair, project_spectrum
from .types import RECORD_CSV_FIELDS, ExperimentRecord, SolverRunFile, StateFile

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def hash_payload(payload: Any) -> str:
    """md5 of the canonical (sorted-key) JSON encoding of `payload`."""
    canonical = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.md5(canonical.encode()).hexdigest()


def output_stem(kind: str, digest: str, seed: int) -> str:
    return f"{kind}-{digest[:12]}-seed{seed}"


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, allow_nan=False)
        f.write("\n")
    logger.info(f"Saved {path}")
    return path


def read_json(path: PathLike) -> Any:
    with open(path, "r") as f:
        return json.load(f)


def write_state(path: PathLike, state: DensityMatrix) -> Path:
    """Write {"dim", "re", "im"}; floats use the shortest lossless repr."""
    return write_json(path, state.to_json())


def read_state(path: PathLike, policy: NumericPolicy = DEFAULT_POLICY) -> DensityMatrix:
    """
    Raises:
        pydantic.ValidationError: if the file does not have the state layout
        InvalidDensityMatrixError: if the matrix is not a valid state
    """
    return StateFile.model_validate(read_json(path)).to_domain(policy)


def read_pair(
    rho_path: PathLike,
    sigma_path: PathLike,
    project: bool = False,
    policy: NumericPolicy = DEFAULT_POLICY,
) -> IsospectralPair:
    """Load two state files as an isospectral pair, optionally forcing sigma onto rho's spectrum."""
    rho = read_state(rho_path, policy)
    sigma = read_state(sigma_path, policy)
    if project:
        sigma = project_spectrum(sigma, rho.spectrum, policy=policy)
    return isospectral_pair(rho, sigma, policy=policy)


def write_solver_run(
    path: PathLike,
    run: SolverRun,
    flags: Optional[Dict[str, Any]] = None,
    qsl: Optional[Dict[str, Any]] = None,
) -> Path:
    payload = run.to_json()
    if flags is not None:
        payload["flags"] = flags
    if qsl is not None:
        payload["qsl"] = qsl
    return write_json(path, payload)


def read_solver_run(path: PathLike, policy: NumericPolicy = DEFAULT_POLICY) -> SolverRun:
    return SolverRunFile.model_validate(read_json(path)).to_domain(policy)


def _csv_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def write_csv(path: PathLike, rows: Iterable[BaseModel], fields: Sequence[str]) -> Path:
    """One row per model in the order given."""
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_csv_value(getattr(row, name)) for name in fields])
    logger.info(f"Saved {path}")
    return path


def write_records_csv(path: PathLike, records: Iterable[ExperimentRecord]) -> Path:
    return write_csv(path, records, RECORD_CSV_FIELDS)


def read_records_csv(path: PathLike) -> List[ExperimentRecord]:
    with open(path, "r", newline="") as f:
        rows = list(csv.DictReader(f))
    return [
        ExperimentRecord.model_validate({key: value for key, value in row.items() if value != ""})
        for row in rows
    ]


def write_manifest(directory: PathLike, files: List[str], flags: Dict[str, Any], **extra: Any) -> Path:
    payload = {"files": files, "flags": flags}
    payload.update(extra)
    return write_json(Path(directory) / "manifest.json", payload)
