"""Benchmark studies: performance against the speed limit, iteration scaling, multistart and perturbation stability."""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.optimize import isotonic_regression

from .config import get_settings
from .solver.errors import DegenerateSpectrumError
from .solver.linalg import ComplexMatrix, hs_norm
from .solver.mask_solver import MaskSolver
from .solver.metrics import qsl_report
from .solver.models import (
    Ensemble,
    IsospectralPair,
    PerturbationKind,
    RngSeed,
    SolverConfig,
    SolverRun,
)
from .solver.states import density_from_eigensystem, isospectral_pair, perturb_convex, perturb_unitary, sample_pair
from .types import (
    ConfidenceInterval,
    ExperimentPlan,
    ExperimentRecord,
    HistogramBin,
    IterationReport,
    IterationSummary,
    LogFit,
    MonotonicityStep,
    MultistartSummary,
    PerformanceReport,
    PerformanceSummary,
    PerturbationPoint,
    PerturbationSummary,
    StartResult,
)

logger = logging.getLogger(__name__)

SMOOTHER_LABEL = "isotonic regression, nondecreasing in d"


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def _parallel_map(fn: Callable[[Any], Any], tasks: Sequence[Any], jobs: int) -> List[Any]:
    """Order-preserving map, in-process for jobs=1 and over a process pool otherwise."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def run_trial(plan: ExperimentPlan, dim: int, trial: int) -> ExperimentRecord:
    """
    Sample one pair, solve it and score the final Hamiltonian.

    The pair and the initial phases come from streams keyed on
    (base_seed, ensemble, pairing, dim, trial), so the record does not
    depend on which other trials run or in which process.
    """
    stream = plan.trial_seed(dim, trial)
    pair = sample_pair(plan.ensemble, dim, stream.child("pair"), plan.pairing)
    config = plan.solver_config(rng=stream.child("phases"))

    start = time.perf_counter()
    run = MaskSolver(config).solve(pair)
    wall_time = time.perf_counter() - start

    report = qsl_report(pair, run.final_hamiltonian)
    if report.excluded:
        logger.warning(f"d={dim} trial={trial}: speed-limit ratio excluded ({report.status.value})")
    return ExperimentRecord(
        dim=dim,
        trial=trial,
        seed=plan.base_seed,
        stream=stream.label,
        ensemble=plan.ensemble,
        epsilon=plan.epsilon,
        iterations=run.n_iterations,
        converged=run.converged,
        time_ratio=None if report.excluded else report.time_ratio,
        t_qsl=_finite_or_none(report.t_qsl),
        qsl_status=report.status,
        efficiency_star=run.last.efficiency_star,
        wall_time=wall_time,
    )


def _trial_task(task: Tuple[ExperimentPlan, int, int]) -> ExperimentRecord:
    return run_trial(*task)


def _plan_dims(plan: ExperimentPlan) -> List[int]:
    return sorted(set(plan.dims))


def run_trials(plan: ExperimentPlan, jobs: int = 1) -> List[ExperimentRecord]:
    """All trials of a plan, sorted by (dim, trial) whatever the worker count."""
    tasks = [(plan, dim, trial) for dim in _plan_dims(plan) for trial in range(plan.samples_per_dim)]
    logger.info(f"Running {len(tasks)} trials over dims {_plan_dims(plan)} with {jobs} worker(s)")
    records = _parallel_map(_trial_task, tasks, jobs)
    return sorted(records, key=lambda record: (record.dim, record.trial))


def bootstrap_interval(
    values: Sequence[float],
    level: float,
    resamples: int,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """Percentile bootstrap interval for the mean; NaNs when there is nothing to resample."""
    data = np.asarray(values, dtype=np.float64)
    if data.size == 0:
        return float("nan"), float("nan")
    if data.size < 2 or np.ptp(data) == 0:
        mean = float(np.mean(data))
        return mean, mean
    result = stats.bootstrap(
        (data,),
        np.mean,
        confidence_level=level,
        n_resamples=resamples,
        method="percentile",
        random_state=rng,
    )
    return float(result.confidence_interval.low), float(result.confidence_interval.high)


def _interval(bounds: Tuple[float, float], level: float) -> ConfidenceInterval:
    return ConfidenceInterval(level=level, low=_finite_or_none(bounds[0]), high=_finite_or_none(bounds[1]))


def summarize_performance(
    records: Sequence[ExperimentRecord],
    base_seed: int,
    resamples: int,
) -> List[PerformanceSummary]:
    summaries = []
    for dim in sorted({record.dim for record in records}):
        rows = [record for record in records if record.dim == dim]
        converged = [record for record in rows if record.converged]
        ratios = [record.time_ratio for record in converged if record.usable]
        stars = [record.efficiency_star for record in converged if record.efficiency_star is not None]
        rng = RngSeed(base_seed, f"bootstrap/performance/d{dim}").generator()
        summaries.append(
            PerformanceSummary(
                dim=dim,
                n_trials=len(rows),
                n_converged=len(converged),
                n_excluded=len(converged) - len(ratios),
                mean_ratio=float(np.mean(ratios)) if ratios else None,
                median_ratio=float(np.median(ratios)) if ratios else None,
                min_ratio=float(np.min(ratios)) if ratios else None,
                ci90=_interval(bootstrap_interval(ratios, 0.90, resamples, rng), 0.90),
                ci99=_interval(bootstrap_interval(ratios, 0.99, resamples, rng), 0.99),
                mean_efficiency_star=float(np.mean(stars)) if stars else None,
            )
        )
    return summaries


def smooth_intervals(summaries: List[PerformanceSummary]) -> List[PerformanceSummary]:
    """Monotone fit of the 90% interval bounds across dimensions."""
    usable = [s for s in summaries if s.ci90.low is not None and s.ci90.high is not None]
    if len(usable) < 2:
        return summaries
    lows = isotonic_regression([s.ci90.low for s in usable], increasing=True).x
    highs = isotonic_regression([s.ci90.high for s in usable], increasing=True).x
    smoothed = {s.dim: ConfidenceInterval(level=0.90, low=float(lo), high=float(hi)) for s, lo, hi in zip(usable, lows, highs)}
    return [s.model_copy(update={"ci90_smoothed": smoothed.get(s.dim)}) for s in summaries]


def run_performance_sweep(plan: ExperimentPlan, jobs: int = 1, resamples: Optional[int] = None) -> PerformanceReport:
    """
    Time ratio τ/T_QSL of the solver's Hamiltonians across dimensions.

    Args:
        plan: experiment plan
        jobs: worker processes
        resamples: bootstrap resamples (default from settings)

    Returns:
        PerformanceReport with raw records and per-dim mean, median and
        90%/99% bootstrap intervals; mixed ensembles also carry a monotone
        fit of the 90% interval
    """
    resamples = resamples or get_settings().bootstrap_resamples
    records = run_trials(plan, jobs)
    summaries = summarize_performance(records, plan.base_seed, resamples)
    smoother = None
    if plan.ensemble is Ensemble.BURES_MIXED:
        summaries = smooth_intervals(summaries)
        smoother = SMOOTHER_LABEL
    for summary in summaries:
        if summary.n_converged < summary.n_trials:
            logger.warning(f"d={summary.dim}: {summary.n_trials - summary.n_converged} trial(s) did not converge")
    return PerformanceReport(
        plan=plan,
        plan_hash=plan.plan_hash(),
        smoother=smoother,
        summaries=summaries,
        records=records,
    )


def iteration_histogram(counts: Sequence[int]) -> List[HistogramBin]:
    values, tallies = np.unique(np.asarray(counts, dtype=int), return_counts=True)
    return [HistogramBin(iterations=int(v), count=int(c)) for v, c in zip(values, tallies)]


def fit_log_growth(dims: Sequence[int], means: Sequence[float]) -> Optional[LogFit]:
    """Least-squares n̄(d) ≈ a + b·ln d."""
    if len(dims) < 2:
        return None
    x = np.log(np.asarray(dims, dtype=np.float64))
    y = np.asarray(means, dtype=np.float64)
    fit = stats.linregress(x, y)
    residuals = y - (fit.intercept + fit.slope * x)
    return LogFit(
        intercept=float(fit.intercept),
        slope=float(fit.slope),
        r_squared=float(fit.rvalue ** 2),
        residuals=[float(r) for r in residuals],
    )


def _mean_gap(low: np.ndarray, high: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.mean(high, axis=axis) - np.mean(low, axis=axis)


def gap_upper_bound(
    low: Sequence[float],
    high: Sequence[float],
    resamples: int,
    rng: np.random.Generator,
) -> Optional[float]:
    """
    One-sided 95% upper bound on mean(high) − mean(low).

    This is the upper end of the two-sided 90% percentile interval.
    """
    a = np.asarray(low, dtype=np.float64)
    b = np.asarray(high, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        return None
    if np.ptp(a) == 0 and np.ptp(b) == 0:
        return float(np.mean(b) - np.mean(a))
    result = stats.bootstrap(
        (a, b),
        _mean_gap,
        confidence_level=0.90,
        n_resamples=resamples,
        method="percentile",
        random_state=rng,
    )
    return float(result.confidence_interval.high)


def run_iteration_sweep(plan: ExperimentPlan, jobs: int = 1, resamples: Optional[int] = None) -> IterationReport:
    """
    Iterations to convergence per dimension.

    Returns:
        IterationReport with per-dim histograms and means, the logarithmic
        fit, and a one-sided bootstrap check that n̄ does not decrease
        between consecutive dimensions
    """
    resamples = resamples or get_settings().bootstrap_resamples
    records = run_trials(plan, jobs)
    dims = _plan_dims(plan)
    counts = {dim: [record.iterations for record in records if record.dim == dim] for dim in dims}
    summaries = [
        IterationSummary(
            dim=dim,
            n_trials=len(counts[dim]),
            n_converged=sum(1 for record in records if record.dim == dim and record.converged),
            mean_iterations=float(np.mean(counts[dim])),
            histogram=iteration_histogram(counts[dim]),
        )
        for dim in dims
    ]
    log_fit = fit_log_growth(dims, [s.mean_iterations for s in summaries])

    steps = []
    for low, high in zip(dims, dims[1:]):
        rng = RngSeed(plan.base_seed, f"bootstrap/iterations/d{low}-d{high}").generator()
        steps.append(
            MonotonicityStep(
                dim_low=low,
                dim_high=high,
                mean_gap=float(np.mean(counts[high]) - np.mean(counts[low])),
                upper_bound_95=gap_upper_bound(counts[low], counts[high], resamples, rng),
            )
        )
    nondecreasing = all(step.upper_bound_95 is None or step.upper_bound_95 >= 0 for step in steps)
    if not nondecreasing:
        logger.warning("Mean iteration count decreases significantly between consecutive dimensions")
    if log_fit is not None:
        logger.info(f"n̄(d) ≈ {log_fit.intercept:.3f} + {log_fit.slope:.3f}·ln d (R² = {log_fit.r_squared:.3f})")
    return IterationReport(
        plan=plan,
        plan_hash=plan.plan_hash(),
        summaries=summaries,
        log_fit=log_fit,
        monotonicity=steps,
        nondecreasing=nondecreasing,
        records=records,
    )


def solve_start(pair: IsospectralPair, config: SolverConfig, start: int) -> Tuple[StartResult, SolverRun]:
    """One multistart member: fresh uniform phases from the stream `{label}/start{k}`."""
    run = MaskSolver(config.with_overrides(initial_phases=None, rng=config.rng.child(f"start{start}"))).solve(pair)
    report = qsl_report(pair, run.final_hamiltonian)
    result = StartResult(
        start=start,
        iterations=run.n_iterations,
        converged=run.converged,
        time_ratio=None if report.excluded else report.time_ratio,
        efficiency_star=run.last.efficiency_star,
    )
    return result, run


def _start_task(task: Tuple[IsospectralPair, SolverConfig, int]) -> Tuple[StartResult, SolverRun]:
    return solve_start(*task)


def run_multistart(
    pair: IsospectralPair,
    num_starts: int,
    config: SolverConfig,
    jobs: int = 1,
    early_stop: bool = False,
) -> Tuple[MultistartSummary, Optional[SolverRun]]:
    """
    Solve one pair from many random initial phase vectors.

    Args:
        pair: the shared problem instance
        num_starts: number of independent starts
        config: solver configuration; its rng labels the per-start streams
        jobs: worker processes
        early_stop: process starts in waves of `jobs` and stop after the
            first wave with a converged start; percentiles are then omitted

    Returns:
        (summary, first converged run or None)
    """
    if num_starts < 1:
        raise ValueError(f"num_starts must be at least 1, got {num_starts}")
    tasks = [(pair, config, start) for start in range(num_starts)]
    if early_stop:
        wave = max(1, jobs)
        outcomes = []
        for begin in range(0, num_starts, wave):
            batch = _parallel_map(_start_task, tasks[begin:begin + wave], jobs)
            outcomes.extend(batch)
            if any(result.converged for result, _ in batch):
                break
    else:
        outcomes = _parallel_map(_start_task, tasks, jobs)

    results = [result for result, _ in outcomes]
    converged = [(result, run) for result, run in outcomes if result.converged]
    winner, winner_run = converged[0] if converged else (None, None)
    iterations = [result.iterations for result, _ in converged]
    ratios = [result.time_ratio for result, _ in converged if result.time_ratio is not None]

    spread = float(np.max(ratios) - np.min(ratios)) if ratios else None
    consistent = spread is None or spread <= 10 * config.epsilon
    if not consistent:
        logger.warning(
            f"Inconsistent evolution times across starts: time-ratio spread {spread:.3e} exceeds 10ε = {10 * config.epsilon:.1e}"
        )
    if not converged:
        logger.warning(f"None of {len(results)} starts converged")

    summary = MultistartSummary(
        dim=pair.dim,
        num_starts=num_starts,
        n_run=len(results),
        n_converged=len(converged),
        early_stop=early_stop,
        min_iterations=min(iterations) if iterations else None,
        p20_iterations=None if early_stop or not iterations else float(np.percentile(iterations, 20)),
        median_iterations=None if early_stop or not iterations else float(np.median(iterations)),
        time_ratio_spread=spread,
        consistent=consistent,
        winner=None if winner is None else winner.start,
        starts=results,
    )
    return summary, winner_run


def matching_unitary(pair: IsospectralPair) -> ComplexMatrix:
    """W = Σ_k |s_k⟩⟨r_k|, the eigenvector-matching unitary of the pair."""
    return pair.sigma.eigenbasis @ pair.rho.eigenbasis.conj().T


def perturbed_pair(pair: IsospectralPair, delta: float, kind: PerturbationKind, rng: RngSeed) -> IsospectralPair:
    """
    Perturb rho and carry the perturbation to sigma through the matching unitary.

    The same `rng` gives the same random direction (χ or V) for every δ.
    """
    if kind is PerturbationKind.CONVEX:
        rho = perturb_convex(pair.rho, delta, rng)
    else:
        rho = perturb_unitary(pair.rho, delta, rng)
    sigma = density_from_eigensystem(rho.spectrum, matching_unitary(pair) @ rho.eigenbasis, rho.degeneracy_tol)
    return isospectral_pair(rho, sigma)


def _perturbation_task(task: Tuple[IsospectralPair, float, PerturbationKind, RngSeed, SolverConfig]) -> Tuple[float, SolverRun]:
    pair, delta, kind, rng, config = task
    return delta, MaskSolver(config).solve(perturbed_pair(pair, delta, kind, rng))


def relative_deviation(reference: ComplexMatrix, other: ComplexMatrix) -> Optional[float]:
    """‖H − H′‖_HS / ‖H‖_HS."""
    norm = hs_norm(reference)
    if norm == 0:
        return None
    return hs_norm(reference - other) / norm


def run_perturbation_sweep(
    pair: IsospectralPair,
    deltas: Sequence[float],
    kind: PerturbationKind,
    config: SolverConfig,
    rng: Optional[RngSeed] = None,
    jobs: int = 1,
) -> PerturbationSummary:
    """
    Relative deviation of the solution under perturbations of the initial state.

    The baseline is solved first; every perturbed problem reuses its initial
    phases. The trend over δ is scored by a one-sided Spearman test.

    Raises:
        DegenerateSpectrumError: for convex perturbations of a degenerate rho,
            whose phases cannot carry over to the perturbed spectrum
    """
    if kind is PerturbationKind.CONVEX and not pair.rho.is_nondegenerate:
        raise DegenerateSpectrumError("Convex perturbations need a nondegenerate spectrum to reuse the initial phases")
    rng = rng or config.rng.child("perturbation")
    baseline = MaskSolver(config).solve(pair)
    if not baseline.converged:
        logger.warning("Baseline solve did not converge; deviations are measured against its last iterate")
    perturbed_config = config.with_overrides(initial_phases=baseline.initial_phases)

    tasks = [(pair, float(delta), kind, rng, perturbed_config) for delta in deltas]
    points = []
    for delta, run in _parallel_map(_perturbation_task, tasks, jobs):
        if not run.converged:
            logger.warning(f"Perturbed solve at δ={delta:.1e} did not converge")
        points.append(
            PerturbationPoint(
                delta=delta,
                kind=kind,
                converged=run.converged,
                iterations=run.n_iterations,
                deviation=relative_deviation(baseline.final_hamiltonian, run.final_hamiltonian),
            )
        )

    scored = [(p.delta, p.deviation) for p in points if p.deviation is not None]
    spearman_rho = spearman_pvalue = None
    if len({delta for delta, _ in scored}) >= 3:
        x, y = zip(*scored)
        if np.ptp(y) > 0:
            result = stats.spearmanr(x, y, alternative="greater")
            spearman_rho = _finite_or_none(result.statistic)
            spearman_pvalue = _finite_or_none(result.pvalue)
    return PerturbationSummary(
        dim=pair.dim,
        kind=kind,
        baseline_iterations=baseline.n_iterations,
        baseline_converged=baseline.converged,
        points=points,
        spearman_rho=spearman_rho,
        spearman_pvalue=spearman_pvalue,
    )
