import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import click
import numpy as np
import typer

from .config import Settings, get_settings
from .experiments import run_iteration_sweep, run_multistart, run_performance_sweep, run_perturbation_sweep
from .solver.mask_solver import MaskSolver
from .solver.metrics import qsl_report
from .solver.models import Ensemble, RngSeed, SolverConfig
from .solver.states import sample_pair, sample_state
from .storage import (
    hash_payload,
    output_stem,
    read_pair,
    write_csv,
    write_json,
    write_manifest,
    write_records_csv,
    write_solver_run,
    write_state,
)
from .types import CliConfig, ExperimentPlan, InvalidFlagError, OutputFormat

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2

DEFAULT_DIMS = "2,3,4,5,6,8,12,16,24,32"
DEFAULT_SAMPLES = 100

# Flags that do not change results and stay out of output-name hashes.
NON_RESULT_FLAGS = {"output", "log_level", "jobs", "output_format"}

app = typer.Typer(
    name="brachisto",
    help="Time-optimal Hamiltonians between isospectral quantum states.",
    no_args_is_help=True,
    add_completion=False,
)
bench_app = typer.Typer(help="Reproducible benchmark studies; emit tidy CSV and JSON.", no_args_is_help=True)
app.add_typer(bench_app, name="bench")


def _fail(message: str) -> typer.Exit:
    typer.echo(f"Error: {message}", err=True)
    return typer.Exit(code=EXIT_INPUT_ERROR)


def _configure(**flags: Any) -> Tuple[CliConfig, Settings]:
    """Validate flags before any computation and set up logging."""
    settings = get_settings()
    if flags.get("seed") is None and settings.seed is not None:
        flags["seed"] = settings.seed
    if "jobs" in flags and flags["jobs"] is None:
        flags["jobs"] = settings.jobs
    try:
        cli = CliConfig.from_flags(**flags)
    except InvalidFlagError as e:
        raise _fail(str(e))
    logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(cli.log_level or settings.effective_log_level())
    return cli, settings


def _default_epsilon(cli: CliConfig, settings: Settings, pure: bool) -> float:
    if cli.epsilon is not None:
        return cli.epsilon
    return settings.epsilon_pure if pure else settings.epsilon_mixed


def _digest(cli: CliConfig) -> str:
    return hash_payload({key: value for key, value in cli.echo().items() if key not in NON_RESULT_FLAGS})


def _formats(cli: CliConfig) -> List[OutputFormat]:
    return [cli.output_format] if cli.output_format else [OutputFormat.JSON, OutputFormat.CSV]


def _write_outputs(
    cli: CliConfig,
    settings: Settings,
    stem: str,
    payload: Dict[str, Any],
    rows: List[Any],
    fields: Optional[Tuple[str, ...]] = None,
) -> List[Path]:
    directory = cli.output or Path(settings.output_dir)
    paths = []
    try:
        if OutputFormat.JSON in _formats(cli):
            paths.append(write_json(directory / f"{stem}.json", {"flags": cli.echo(), **payload}))
        if OutputFormat.CSV in _formats(cli):
            csv_path = directory / f"{stem}.csv"
            paths.append(write_records_csv(csv_path, rows) if fields is None else write_csv(csv_path, rows, fields))
    except OSError as e:
        raise _fail(f"cannot write results to {directory}: {e}")
    for path in paths:
        typer.echo(f"wrote {path}")
    return paths


def _fmt(value: Optional[float], spec: str = ".4f") -> str:
    return "n/a" if value is None else format(value, spec)


@app.command()
def solve(
    rho: Optional[Path] = typer.Argument(None, help="Initial state JSON file"),
    sigma: Optional[Path] = typer.Argument(None, help="Target state JSON file"),
    random: Optional[str] = typer.Option(None, "--random", help="Sample a random pair of this dimension instead of reading files"),
    ensemble: str = typer.Option("bures_mixed", "--ensemble", help="haar_pure or bures_mixed (with --random)"),
    pairing: str = typer.Option("conjugate", "--pairing", help="conjugate or independent (with --random)"),
    epsilon: Optional[str] = typer.Option(None, "--epsilon", help="Stop when ‖H∥‖/‖H‖ ≤ epsilon"),
    max_iter: Optional[str] = typer.Option(None, "--max-iter", help="Iteration cap"),
    sign: str = typer.Option("plus", "--sign", help="plus or minus"),
    mask_side: str = typer.Option("initial", "--mask-side", help="initial, final or both"),
    phases: Optional[str] = typer.Option(None, "--phases", help="Comma-separated initial phases in radians"),
    seed: Optional[str] = typer.Option(None, "--seed", help="Seed; falls back to BRACHISTO_SEED"),
    project_spectrum: bool = typer.Option(False, "--project-spectrum", help="Force SIGMA onto RHO's spectrum"),
    output: Optional[Path] = typer.Option(None, "--output", help="SolverRun JSON file to write"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """Find a time-efficient Hamiltonian mapping RHO to SIGMA."""
    cli, settings = _configure(
        command="solve",
        rho_path=rho,
        sigma_path=sigma,
        random_dim=random,
        ensemble=ensemble,
        pairing=pairing,
        epsilon=epsilon,
        max_iterations=max_iter,
        sign_convention=sign,
        mask_side=mask_side,
        phases=phases,
        seed=seed,
        project_spectrum=project_spectrum,
        output=output,
        log_level=log_level,
    )
    try:
        if cli.random_dim is not None:
            pair = sample_pair(cli.ensemble, cli.random_dim, RngSeed(cli.seed, "solve/pair"), cli.pairing)
        else:
            pair = read_pair(cli.rho_path, cli.sigma_path, project=cli.project_spectrum)
    except (OSError, ValueError) as e:
        raise _fail(f"could not load states: {e}")

    try:
        config = SolverConfig(
            epsilon=_default_epsilon(cli, settings, pair.is_pure),
            max_iterations=cli.max_iterations,
            sign_convention=cli.sign_convention,
            mask_side=cli.mask_side,
            initial_phases=None if cli.phases is None else np.asarray(cli.phases, dtype=np.float64),
            rng=RngSeed(cli.seed, "solve/phases"),
        )
        run = MaskSolver(config).solve(pair)
    except (ValueError, ArithmeticError) as e:
        raise _fail(str(e))

    report = qsl_report(pair, run.final_hamiltonian)
    path = cli.output or Path(settings.output_dir) / f"{output_stem('solve', _digest(cli), cli.seed)}.json"
    try:
        write_solver_run(path, run, flags=cli.echo(), qsl=report.to_json())
    except OSError as e:
        raise _fail(f"cannot write {path}: {e}")

    ratio = None if report.excluded else report.time_ratio
    typer.echo(
        f"n={run.n_iterations} converged={str(run.converged).lower()} "
        f"time_ratio={_fmt(ratio, '.6f')} eta_star={_fmt(run.last.efficiency_star, '.6f')}"
    )
    typer.echo(f"wrote {path}")
    raise typer.Exit(code=EXIT_OK if run.converged else EXIT_NOT_CONVERGED)


@app.command()
def sample(
    ensemble: str = typer.Option("bures_mixed", "--ensemble", help="haar_pure or bures_mixed"),
    dim: Optional[str] = typer.Option(None, "--dim", help="Hilbert-space dimension (≥ 2)"),
    count: str = typer.Option("1", "--count", help="Number of states"),
    seed: Optional[str] = typer.Option(None, "--seed", help="Seed; falls back to BRACHISTO_SEED"),
    output: Optional[Path] = typer.Option(None, "--output", help="Directory for the state files"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """Write random, validated state files plus a manifest."""
    cli, settings = _configure(
        command="sample",
        ensemble=ensemble,
        dim=dim,
        count=count,
        seed=seed,
        output=output,
        log_level=log_level,
    )
    stream = RngSeed(cli.seed, f"sample/{cli.ensemble.value}/d{cli.dim}")
    directory = cli.output or Path(settings.output_dir) / output_stem("sample", _digest(cli), cli.seed)
    files = []
    try:
        for index in range(cli.count):
            name = f"state-{index:04d}.json"
            write_state(directory / name, sample_state(cli.ensemble, cli.dim, stream.child(str(index))))
            files.append(name)
        write_manifest(
            directory,
            files,
            cli.echo(),
            ensemble=cli.ensemble.value,
            dim=cli.dim,
            seed=cli.seed,
            stream=stream.label,
        )
    except OSError as e:
        raise _fail(f"cannot write to {directory}: {e}")
    typer.echo(f"wrote {len(files)} {cli.ensemble.value} state(s) of dimension {cli.dim} to {directory}")


def _plan(cli: CliConfig, settings: Settings) -> ExperimentPlan:
    return ExperimentPlan(
        dims=cli.dims,
        samples_per_dim=cli.samples,
        epsilon=_default_epsilon(cli, settings, cli.ensemble is Ensemble.HAAR_PURE),
        ensemble=cli.ensemble,
        base_seed=cli.seed,
        pairing=cli.pairing,
        sign_convention=cli.sign_convention,
        mask_side=cli.mask_side,
        max_iterations=cli.max_iterations,
    )


def _sweep_flags(command: str, **flags: Any) -> Tuple[CliConfig, Settings, ExperimentPlan]:
    cli, settings = _configure(command=command, **flags)
    return cli, settings, _plan(cli, settings)


@bench_app.command()
def performance(
    dims: str = typer.Option(DEFAULT_DIMS, "--dims", help="Comma-separated dimensions"),
    samples: str = typer.Option(str(DEFAULT_SAMPLES), "--samples", help="Pairs per dimension"),
    epsilon: Optional[str] = typer.Option(None, "--epsilon"),
    ensemble: str = typer.Option("bures_mixed", "--ensemble"),
    pairing: str = typer.Option("conjugate", "--pairing"),
    sign: str = typer.Option("plus", "--sign"),
    mask_side: str = typer.Option("initial", "--mask-side"),
    max_iter: Optional[str] = typer.Option(None, "--max-iter"),
    seed: Optional[str] = typer.Option(None, "--seed"),
    jobs: Optional[str] = typer.Option(None, "--jobs", help="Worker processes"),
    output_format: Optional[str] = typer.Option(None, "--format", help="json or csv (default both)"),
    output: Optional[Path] = typer.Option(None, "--output", help="Results directory"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """Time ratio τ/T_QSL against dimension."""
    cli, settings, plan = _sweep_flags(
        "bench performance",
        dims=dims, samples=samples, epsilon=epsilon, ensemble=ensemble, pairing=pairing,
        sign_convention=sign, mask_side=mask_side, max_iterations=max_iter, seed=seed,
        jobs=jobs, output_format=output_format, output=output, log_level=log_level,
    )
    report = run_performance_sweep(plan, jobs=cli.jobs, resamples=settings.bootstrap_resamples)
    for s in report.summaries:
        typer.echo(
            f"d={s.dim} trials={s.n_trials} converged={s.n_converged} excluded={s.n_excluded} "
            f"mean_ratio={_fmt(s.mean_ratio)} median={_fmt(s.median_ratio)} "
            f"ci90=[{_fmt(s.ci90.low)}, {_fmt(s.ci90.high)}]"
        )
    stem = output_stem("performance", report.plan_hash, plan.base_seed)
    _write_outputs(cli, settings, stem, report.model_dump(mode="json"), report.records)


@bench_app.command()
def iterations(
    dims: str = typer.Option(DEFAULT_DIMS, "--dims", help="Comma-separated dimensions"),
    samples: str = typer.Option(str(DEFAULT_SAMPLES), "--samples", help="Pairs per dimension"),
    epsilon: Optional[str] = typer.Option(None, "--epsilon"),
    ensemble: str = typer.Option("bures_mixed", "--ensemble"),
    pairing: str = typer.Option("conjugate", "--pairing"),
    sign: str = typer.Option("plus", "--sign"),
    mask_side: str = typer.Option("initial", "--mask-side"),
    max_iter: Optional[str] = typer.Option(None, "--max-iter"),
    seed: Optional[str] = typer.Option(None, "--seed"),
    jobs: Optional[str] = typer.Option(None, "--jobs", help="Worker processes"),
    output_format: Optional[str] = typer.Option(None, "--format", help="json or csv (default both)"),
    output: Optional[Path] = typer.Option(None, "--output", help="Results directory"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """Iterations to convergence against dimension, with a logarithmic fit."""
    cli, settings, plan = _sweep_flags(
        "bench iterations",
        dims=dims, samples=samples, epsilon=epsilon, ensemble=ensemble, pairing=pairing,
        sign_convention=sign, mask_side=mask_side, max_iterations=max_iter, seed=seed,
        jobs=jobs, output_format=output_format, output=output, log_level=log_level,
    )
    report = run_iteration_sweep(plan, jobs=cli.jobs, resamples=settings.bootstrap_resamples)
    for s in report.summaries:
        typer.echo(f"d={s.dim} trials={s.n_trials} converged={s.n_converged} mean_iterations={s.mean_iterations:.2f}")
    if report.log_fit is not None:
        fit = report.log_fit
        typer.echo(f"fit: n = {fit.intercept:.3f} + {fit.slope:.3f} ln d (R^2 = {fit.r_squared:.3f})")
    typer.echo(f"nondecreasing={str(report.nondecreasing).lower()}")
    stem = output_stem("iterations", report.plan_hash, plan.base_seed)
    _write_outputs(cli, settings, stem, report.model_dump(mode="json"), report.records)


START_FIELDS = ("start", "iterations", "converged", "time_ratio", "efficiency_star")
POINT_FIELDS = ("delta", "kind", "converged", "iterations", "deviation")


@bench_app.command()
def multistart(
    dim: str = typer.Option("8", "--dim", help="Dimension of the shared pair"),
    starts: str = typer.Option("100", "--starts", help="Number of random initial phase vectors"),
    epsilon: Optional[str] = typer.Option(None, "--epsilon"),
    ensemble: str = typer.Option("bures_mixed", "--ensemble"),
    pairing: str = typer.Option("conjugate", "--pairing"),
    sign: str = typer.Option("plus", "--sign"),
    mask_side: str = typer.Option("initial", "--mask-side"),
    max_iter: Optional[str] = typer.Option(None, "--max-iter"),
    early_stop: bool = typer.Option(False, "--early-stop", help="Stop after the first wave with a converged start"),
    seed: Optional[str] = typer.Option(None, "--seed"),
    jobs: Optional[str] = typer.Option(None, "--jobs", help="Worker processes"),
    output_format: Optional[str] = typer.Option(None, "--format", help="json or csv (default both)"),
    output: Optional[Path] = typer.Option(None, "--output", help="Results directory"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """Many random starts on one pair: iteration percentiles and time-ratio consistency."""
    cli, settings = _configure(
        command="bench multistart",
        dim=dim, starts=starts, epsilon=epsilon, ensemble=ensemble, pairing=pairing,
        sign_convention=sign, mask_side=mask_side, max_iterations=max_iter, early_stop=early_stop,
        seed=seed, jobs=jobs, output_format=output_format, output=output, log_level=log_level,
    )
    pair = sample_pair(cli.ensemble, cli.dim, RngSeed(cli.seed, f"multistart/pair/d{cli.dim}"), cli.pairing)
    config = SolverConfig(
        epsilon=_default_epsilon(cli, settings, pair.is_pure),
        max_iterations=cli.max_iterations,
        sign_convention=cli.sign_convention,
        mask_side=cli.mask_side,
        rng=RngSeed(cli.seed, "multistart"),
    )
    summary, winner = run_multistart(pair, cli.starts, config, jobs=cli.jobs, early_stop=cli.early_stop)
    typer.echo(
        f"d={summary.dim} starts={summary.n_run}/{summary.num_starts} converged={summary.n_converged} "
        f"min={summary.min_iterations} p20={_fmt(summary.p20_iterations, '.1f')} "
        f"median={_fmt(summary.median_iterations, '.1f')} spread={_fmt(summary.time_ratio_spread, '.2e')} "
        f"consistent={str(summary.consistent).lower()}"
    )
    payload = {"summary": summary.model_dump(mode="json"), "winner": None if winner is None else winner.to_json()}
    _write_outputs(cli, settings, output_stem("multistart", _digest(cli), cli.seed), payload, summary.starts, START_FIELDS)


@bench_app.command()
def perturbation(
    dim: str = typer.Option("4", "--dim", help="Dimension of the pair"),
    deltas: str = typer.Option("1e-6,1e-5,1e-4,1e-3,1e-2", "--deltas", help="Comma-separated perturbation strengths"),
    kind: str = typer.Option("unitary", "--kind", help="unitary or convex"),
    epsilon: Optional[str] = typer.Option(None, "--epsilon"),
    ensemble: str = typer.Option("bures_mixed", "--ensemble"),
    pairing: str = typer.Option("conjugate", "--pairing"),
    sign: str = typer.Option("plus", "--sign"),
    mask_side: str = typer.Option("initial", "--mask-side"),
    max_iter: Optional[str] = typer.Option(None, "--max-iter"),
    seed: Optional[str] = typer.Option(None, "--seed"),
    jobs: Optional[str] = typer.Option(None, "--jobs", help="Worker processes"),
    output_format: Optional[str] = typer.Option(None, "--format", help="json or csv (default both)"),
    output: Optional[Path] = typer.Option(None, "--output", help="Results directory"),
    log_level: Optional[str] = typer.Option(None, "--log-level"),
):
    """Relative deviation of the solution under perturbations of the initial state."""
    cli, settings = _configure(
        command="bench perturbation",
        dim=dim, deltas=deltas, kind=kind, epsilon=epsilon, ensemble=ensemble, pairing=pairing,
        sign_convention=sign, mask_side=mask_side, max_iterations=max_iter,
        seed=seed, jobs=jobs, output_format=output_format, output=output, log_level=log_level,
    )
    pair = sample_pair(cli.ensemble, cli.dim, RngSeed(cli.seed, f"perturbation/pair/d{cli.dim}"), cli.pairing)
    config = SolverConfig(
        epsilon=_default_epsilon(cli, settings, pair.is_pure),
        max_iterations=cli.max_iterations,
        sign_convention=cli.sign_convention,
        mask_side=cli.mask_side,
        rng=RngSeed(cli.seed, "perturbation"),
    )
    try:
        summary = run_perturbation_sweep(pair, cli.deltas, cli.kind, config, jobs=cli.jobs)
    except ValueError as e:
        raise _fail(str(e))
    for point in summary.points:
        typer.echo(
            f"delta={point.delta:.1e} converged={str(point.converged).lower()} "
            f"iterations={point.iterations} deviation={_fmt(point.deviation, '.3e')}"
        )
    typer.echo(f"spearman_rho={_fmt(summary.spearman_rho, '.3f')} p={_fmt(summary.spearman_pvalue, '.3g')}")
    stem = output_stem(f"perturbation-{cli.kind.value}", _digest(cli), cli.seed)
    _write_outputs(cli, settings, stem, {"summary": summary.model_dump(mode="json")}, summary.points, POINT_FIELDS)


def main() -> None:
    """Console entry point; usage errors exit with status 1 like any other invalid input."""
    try:
        code = app(standalone_mode=False)
    except click.UsageError as e:
        e.show()
        sys.exit(EXIT_INPUT_ERROR)
    except click.Abort:
        typer.echo("Aborted!", err=True)
        sys.exit(EXIT_INPUT_ERROR)
    sys.exit(code if isinstance(code, int) else EXIT_OK)


if __name__ == "__main__":
    main()
