"""
Prefect flows behind the CLI commands.

Grid points, cache-size chunks and realization chunks are submitted as tasks
to the flow's task runner; results are gathered in submission order so the
files written do not depend on which worker finished first.
"""
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from prefect import flow, get_run_logger, task
from prefect.cache_policies import NONE
from prefect.task_runners import ThreadPoolTaskRunner

from hetnetcache.analytic import (
    apt,
    association_probability,
    coverage,
    coverage_noise_limited,
    coverage_snr_reference,
    dump_integrand,
    precompute_coverage,
)
from hetnetcache.config import ConfigError, SystemConfig, db_to_linear
from hetnetcache.model import Destination, max_feasible_cache
from hetnetcache.montecarlo import (
    SimulationBatch,
    combine_batches,
    estimate_coverage,
    estimate_association,
    estimate_coverage_snr,
    simulate,
    write_trace,
)
from hetnetcache.optimize import BaselineKind, GaParams, SolveResult, baseline, jcspa
from hetnetcache.outputs import CsvResultSink, JsonResultSink, RunManifest
from hetnetcache.utils import chunk_ranges

ANALYZE_FIELDS = ["gamma_dB", "cov_sbs", "cov_mbs", "cov_bh", "apt_total", "binding_side"]
APT_FIELDS = ["eta", "C", "access_sbs_uncached", "backhaul_uncached", "cached_sbs", "mbs_term", "apt_total",
              "binding_side"]
SOLVE_FIELDS = ["algorithm", "C_star", "eta_star", "P_s_tr_star", "apt_star", "converged"]
OPTIMIZE_FIELDS = ["algorithm", "C_star", "eta_star", "P_s_tr_star", "apt_star", "iterations", "converged",
                   "gain_vs_jcspa"]
VALIDATE_FIELDS = ["check", "kind", "gamma_dB", "C", "analytic", "empirical", "ci_half_width_99", "tolerance",
                   "passed"]

SWEEP_AXES = ("C", "eta", "gamma0", "gamma_p", "omega_ca")
CONFIG_AXES = ("gamma_p", "omega_ca")
ALGORITHMS = ("jcspa", "baselines", "all")
NOISE_LIMITED_TOLERANCE = 1e-4
ASSOCIATION_TOLERANCE = 0.02


def run_with_workers(flow_fn, workers: int, /, **parameters):
    """Run a flow with a thread-pool task runner of `workers` threads."""
    return flow_fn.with_options(task_runner=ThreadPoolTaskRunner(max_workers=max(1, workers)))(**parameters)


# -------------------------------------------------------------------
# Tasks
# -------------------------------------------------------------------
@task(cache_policy=NONE)
def coverage_row_task(cfg: SystemConfig, gamma_db: float, C: int, eta: float) -> Dict[str, Any]:
    gamma = db_to_linear(gamma_db)
    breakdown = apt(eta, C, cfg, gamma0=gamma)
    return {
        "gamma_dB": gamma_db,
        "cov_sbs": breakdown.cov_sbs,
        "cov_mbs": breakdown.cov_mbs,
        "cov_bh": breakdown.cov_bh,
        "apt_total": breakdown.total,
        "binding_side": breakdown.binding_side,
    }


def _cache_sizes(values: Sequence[float], name: str = "C") -> List[int]:
    """Cache sizes as ints; ConfigError for fractional values."""
    sizes = []
    for value in values:
        if isinstance(value, bool) or float(value) != math.floor(float(value)):
            raise ConfigError(name, f"cache size {value!r} is not an integer")
        sizes.append(int(value))
    return sizes


def _point_config(cfg: SystemConfig, point: Dict[str, float]) -> Tuple[SystemConfig, Optional[float]]:
    overrides = {k: v for k, v in point.items() if k in CONFIG_AXES}
    point_cfg = cfg.with_overrides(**overrides) if overrides else cfg
    gamma0 = db_to_linear(point["gamma0"]) if "gamma0" in point else None
    return point_cfg, gamma0


@task(cache_policy=NONE)
def apt_point_task(cfg: SystemConfig, point: Dict[str, float], C: int, eta: float) -> Dict[str, Any]:
    point_cfg, gamma0 = _point_config(cfg, point)
    C = _cache_sizes([point.get("C", C)])[0]
    eta = float(point.get("eta", eta))
    breakdown = apt(eta, C, point_cfg, gamma0=gamma0)
    row = dict(point)
    row.update({
        "eta": eta,
        "C": C,
        "access_sbs_uncached": breakdown.access_sbs_uncached,
        "backhaul_uncached": breakdown.backhaul_uncached,
        "cached_sbs": breakdown.cached_sbs,
        "mbs_term": breakdown.mbs_term,
        "apt_total": breakdown.total,
        "binding_side": breakdown.binding_side,
    })
    return row


@task(cache_policy=NONE)
def precompute_task(cfg: SystemConfig, gamma: float, c_values: Sequence[int]) -> int:
    return precompute_coverage(cfg, gamma, c_values)


@task(cache_policy=NONE)
def solve_task(cfg: SystemConfig, algorithm: str, ga: GaParams, epsilon: float, iter_max: int, restarts: int,
               gamma0: Optional[float] = None) -> SolveResult:
    logger = get_run_logger()
    if algorithm == "jcspa":
        result = jcspa(cfg, epsilon, iter_max, ga=ga, restarts=restarts, gamma0=gamma0)
    else:
        result = baseline(BaselineKind(algorithm), cfg, ga=ga, epsilon=epsilon, iter_max=iter_max,
                          restarts=restarts, gamma0=gamma0)
    logger.info("%s: C*=%d eta*=%.6f APT*=%.6g", algorithm, result.C_star, result.eta_star, result.apt_star)
    return result


@task(cache_policy=NONE)
def simulate_task(cfg: SystemConfig, C_values: Tuple[int, ...], start: int, stop: int, seed: int
                  ) -> SimulationBatch:
    return simulate(cfg, C_values, start, stop, seed)


@task(cache_policy=NONE)
def analytic_check_task(cfg: SystemConfig, check: str, dest: Destination, gamma_db: Optional[float], C: int
                        ) -> float:
    if check == "association":
        return association_probability(dest, cfg, C).value
    gamma = db_to_linear(gamma_db)
    if check == "coverage":
        return coverage(dest, gamma, C, cfg).value
    if check == "coverage_snr":
        return coverage(dest, gamma, C, cfg, interference=False).value
    tier = dest.serving_tier
    if check == "noise_limited":
        return coverage_noise_limited(tier, gamma, C, cfg)
    return coverage_snr_reference(tier, gamma, C, cfg)


# -------------------------------------------------------------------
# Shared helpers
# -------------------------------------------------------------------
def _precompute_grid(cfg: SystemConfig, gamma: float, workers: int):
    c_max = max_feasible_cache(cfg)
    chunk = max(1, math.ceil((c_max + 1) / (4 * max(1, workers))))
    futures = [precompute_task.submit(cfg, gamma, list(range(lo, hi))) for lo, hi in chunk_ranges(c_max + 1, chunk)]
    return sum(f.result() for f in futures)


def _algorithms(selection: str) -> List[str]:
    if selection not in ALGORITHMS:
        raise ConfigError("algorithm", f"must be one of {', '.join(ALGORITHMS)}")
    baselines = [kind.value for kind in BaselineKind]
    if selection == "jcspa":
        return ["jcspa"]
    if selection == "baselines":
        return baselines
    return ["jcspa"] + baselines


def _solve_row(result: SolveResult) -> Dict[str, Any]:
    return {
        "algorithm": result.algorithm,
        "C_star": result.C_star,
        "eta_star": result.eta_star,
        "P_s_tr_star": result.P_s_tr_star,
        "apt_star": result.apt_star,
        "iterations": len(result.trace),
        "converged": result.converged,
    }


def _trace_document(result: SolveResult) -> Dict[str, Any]:
    return {
        "algorithm": result.algorithm,
        "converged": result.converged,
        "restart_spread": result.restart_spread,
        "trace": [
            {"iteration": s.iteration, "eta": s.eta, "C": s.C, "apt1": s.apt1, "apt2": s.apt2}
            for s in result.trace
        ],
    }


# -------------------------------------------------------------------
# Flows
# -------------------------------------------------------------------
@flow(name="hetnetcache-analyze", validate_parameters=False)
def analyze_flow(cfg: SystemConfig, gammas_db: Sequence[float], C: int, eta: float, out_dir: Path, seed: int,
                 trace: bool = False) -> List[Dict[str, Any]]:
    """
    Coverage of the three links and the APT at (eta, C) for each threshold.
    """
    logger = get_run_logger()
    C = _cache_sizes([C])[0]
    logger.info("Analyzing %d thresholds at C=%d eta=%.4f", len(gammas_db), C, eta)
    out_dir = Path(out_dir)
    manifest = RunManifest.start("analyze", cfg, seed, gammas_db=list(gammas_db), C=C, eta=eta)

    futures = [coverage_row_task.submit(cfg, g, C, eta) for g in gammas_db]
    rows = [f.result() for f in futures]

    sink = CsvResultSink(out_dir / "analyze.csv", ANALYZE_FIELDS)
    sink.write(rows)
    manifest.record(sink)

    if trace:
        gamma = db_to_linear(gammas_db[0])
        for dest in Destination:
            path = dump_integrand(dest, gamma, C, cfg, out_dir / f"integrand_{dest.value}.csv")
            manifest.outputs.append(path.name)

    manifest.finish(out_dir)
    logger.info("Analyze complete: %d rows", len(rows))
    return rows


@flow(name="hetnetcache-sweep", validate_parameters=False)
def sweep_flow(cfg: SystemConfig, axis: str, values: Sequence[float], out_dir: Path, seed: int, C: int = 0,
               eta: float = 0.9, axis2: Optional[str] = None, values2: Optional[Sequence[float]] = None,
               mode: str = "apt", ga: Optional[GaParams] = None, epsilon: float = 1e-5, iter_max: int = 20,
               restarts: int = 3, workers: int = 4) -> List[Dict[str, Any]]:
    """
    APT (mode "apt") or every solver's optimum (mode "optimize") along one or two axes.
    """
    logger = get_run_logger()
    for name, grid in ((axis, values), (axis2, values2)):
        if name is None:
            continue
        if name not in SWEEP_AXES:
            raise ConfigError("axis", f"{name!r} is not one of {', '.join(SWEEP_AXES)}")
        if not grid:
            raise ConfigError("range", f"empty range for axis {name}")
        if name == "C":
            _cache_sizes(grid)
    C = _cache_sizes([C])[0]
    if axis2 is not None and axis2 == axis:
        raise ConfigError("axis2", "must differ from axis")
    if mode not in ("apt", "optimize"):
        raise ConfigError("mode", "must be apt or optimize")
    if mode == "optimize" and (axis in ("C", "eta") or axis2 is not None):
        raise ConfigError("axis", "optimize mode sweeps a single config axis (gamma0, gamma_p, omega_ca)")

    out_dir = Path(out_dir)
    name = f"sweep_{axis}" + (f"_{axis2}" if axis2 else "")
    manifest = RunManifest.start("sweep", cfg, seed, axis=axis, values=list(values), axis2=axis2,
                                 values2=list(values2 or []), mode=mode, C=C, eta=eta)
    grid = [{axis: v} for v in sorted(values)]
    if axis2:
        grid = [dict(p, **{axis2: w}) for p in grid for w in sorted(values2)]
    logger.info("Sweeping %s over %d points (%s mode)", name, len(grid), mode)

    if mode == "apt":
        futures = [apt_point_task.submit(cfg, point, C, eta) for point in grid]
        rows = [f.result() for f in futures]
        fields = list(dict.fromkeys([axis] + ([axis2] if axis2 else []) + APT_FIELDS))
    else:
        ga = ga or GaParams(seed=seed)
        rows = []
        for point in grid:
            point_cfg, gamma0 = _point_config(cfg, point)
            _precompute_grid(point_cfg, gamma0 if gamma0 is not None else point_cfg.gamma0, workers)
            futures = [solve_task.submit(point_cfg, algorithm, ga, epsilon, iter_max, restarts, gamma0)
                       for algorithm in _algorithms("all")]
            for f in futures:
                rows.append(dict(point, **_solve_row(f.result())))
            logger.info("Sweep point %s finished", point)
        fields = [axis] + SOLVE_FIELDS

    sink = CsvResultSink(out_dir / f"{name}.csv", fields)
    sink.write(rows)
    manifest.record(sink)
    manifest.finish(out_dir)
    return rows


@flow(name="hetnetcache-optimize", validate_parameters=False)
def optimize_flow(cfg: SystemConfig, algorithm: str, out_dir: Path, seed: int, workers: int = 4,
                  epsilon: float = 1e-5, iter_max: int = 20, restarts: int = 3) -> List[SolveResult]:
    """
    Run JCSPA and/or the baselines; writes the comparison table and the per-iteration traces.
    """
    logger = get_run_logger()
    algorithms = _algorithms(algorithm)
    out_dir = Path(out_dir)
    manifest = RunManifest.start("optimize", cfg, seed, algorithm=algorithm, epsilon=epsilon, iter_max=iter_max,
                                 restarts=restarts)

    visited = _precompute_grid(cfg, cfg.gamma0, workers)
    logger.info("Coverage precomputed for %d cache sizes", visited)

    ga = GaParams(seed=seed)
    futures = [solve_task.submit(cfg, name, ga, epsilon, iter_max, restarts) for name in algorithms]
    results = [f.result() for f in futures]

    reference = results[0] if results[0].algorithm == "jcspa" else None
    rows = []
    for result in results:
        row = _solve_row(result)
        row["gain_vs_jcspa"] = reference.gain_over(result) if reference is not None else None
        rows.append(row)

    table = CsvResultSink(out_dir / "optimize.csv", OPTIMIZE_FIELDS)
    table.write(rows)
    manifest.record(table)
    traces = JsonResultSink(out_dir / "optimize_trace.json")
    traces.write({"solvers": [_trace_document(r) for r in results]})
    manifest.record(traces)
    manifest.finish(out_dir)
    return results


@dataclass(frozen=True)
class ValidationReport:
    rows: List[Dict[str, Any]]

    @property
    def passed(self) -> bool:
        return all(row["passed"] for row in self.rows)

    @property
    def failures(self) -> List[Dict[str, Any]]:
        return [row for row in self.rows if not row["passed"]]


def _validation_checks(gammas_db: Sequence[float], C_values: Sequence[int], tolerance: float,
                       snr_tolerance: float) -> List[Tuple[str, Destination, Optional[float], int, float]]:
    checks = []
    for C in C_values:
        for dest in Destination:
            checks.append(("association", dest, None, C, ASSOCIATION_TOLERANCE))
            for g in gammas_db:
                checks.append(("coverage", dest, g, C, tolerance))
                checks.append(("coverage_snr", dest, g, C, tolerance))
        for dest in (Destination.USER_TO_SBS, Destination.USER_TO_MBS):
            for g in gammas_db:
                checks.append(("noise_limited", dest, g, C, snr_tolerance))
                checks.append(("noise_limited_reference", dest, g, C, NOISE_LIMITED_TOLERANCE))
    return checks


def _empirical(batch: SimulationBatch, check: str, dest: Destination, gamma_db: Optional[float], C: int):
    if check == "association":
        est = estimate_association(batch, dest, C)
        return est.mean, est.ci_half_width_99
    gamma = db_to_linear(gamma_db)
    if check == "noise_limited":
        est = estimate_coverage_snr(batch, dest.serving_tier, gamma, C)
    else:
        est = estimate_coverage(batch, dest, gamma, C, interference=(check == "coverage"))
    return est.mean, est.ci_half_width_99


@flow(name="hetnetcache-validate", validate_parameters=False)
def validate_flow(cfg: SystemConfig, n: int, seed: int, out_dir: Path, workers: int = 4,
                  gammas_db: Sequence[float] = (0.0, 5.0, 10.0, 15.0), C_values: Sequence[int] = (0, 200),
                  tolerance: float = 0.03, snr_tolerance: float = 0.02, trace: bool = False) -> ValidationReport:
    """
    Pair analytic values with Monte Carlo estimates from one set of realizations.
    """
    logger = get_run_logger()
    if n < 1:
        raise ConfigError("n", "number of realizations must be >= 1")
    out_dir = Path(out_dir)
    C_values = tuple(_cache_sizes(C_values))
    manifest = RunManifest.start("validate", cfg, seed, n=n, gammas_db=list(gammas_db), C_values=list(C_values),
                                 tolerance=tolerance, snr_tolerance=snr_tolerance)

    chunk = max(1, math.ceil(n / (4 * max(1, workers))))
    sim_futures = [simulate_task.submit(cfg, C_values, lo, hi, seed) for lo, hi in chunk_ranges(n, chunk)]
    checks = _validation_checks(gammas_db, C_values, tolerance, snr_tolerance)
    analytic_futures = [analytic_check_task.submit(cfg, check, dest, g, C) for check, dest, g, C, _ in checks]

    batch = combine_batches(f.result() for f in sim_futures)
    logger.info("Simulated %d realizations (seed %d)", batch.n, seed)

    rows = []
    for (check, dest, g, C, tol), future in zip(checks, analytic_futures):
        analytic_value = future.result()
        if check == "noise_limited_reference":
            reference = coverage_noise_limited(dest.serving_tier, db_to_linear(g), C, cfg)
            empirical, ci = analytic_value, 0.0
            analytic_value = reference
        else:
            empirical, ci = _empirical(batch, check, dest, g, C)
        passed = abs(analytic_value - empirical) <= tol
        rows.append({
            "check": check,
            "kind": dest.serving_tier.value if check.startswith("noise_limited") else dest.value,
            "gamma_dB": g,
            "C": C,
            "analytic": analytic_value,
            "empirical": empirical,
            "ci_half_width_99": ci,
            "tolerance": tol,
            "passed": passed,
        })
        if not passed:
            logger.warning("%s %s gamma=%s dB C=%d: analytic %.6f vs %.6f (tolerance %g)",
                           check, dest.value, g, C, analytic_value, empirical, tol)

    sink = CsvResultSink(out_dir / "validate.csv", VALIDATE_FIELDS)
    sink.write(rows)
    manifest.record(sink)
    if trace:
        path = write_trace(batch, out_dir / "mc_trace.csv")
        manifest.outputs.append(path.name)
    manifest.finish(out_dir)

    report = ValidationReport(rows)
    logger.info("Validation %s: %d of %d checks passed", "passed" if report.passed else "FAILED",
                len(rows) - len(report.failures), len(rows))
    return report


if __name__ == "__main__":
    analyze_flow(SystemConfig(), [0.0, 5.0, 10.0, 15.0], 200, 0.9, Path("results"), 20240601)
