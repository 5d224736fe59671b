"""Monte-Carlo estimation of the plug-in transport-cost error rate.

For a pair (mu, nu) with known population cost T, each replication draws
fresh independent empirical measures mu_n and nu_n, solves the coupling
exactly, and records |T_hat - T|.  Averaging over replications estimates
the expected error delta(n); an ordinary least-squares fit of
log delta(n) against log n estimates the convergence exponent, with a
bootstrap confidence interval over replications.

Replications are independent tasks keyed by (n, replication index); their
random streams derive from the master seed and those keys only, so the
resulting report is bit-identical for any thread count.
"""
from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import rng as _rng
from .errors import NumericalError, UsageError
from .measures import GroundTruthPair, sample
from .solver import solve_assignment

__all__ = [
    "ExperimentConfig",
    "RateReport",
    "estimate_delta",
    "fit_slope",
    "compare_regimes",
    "to_wasserstein_units",
]


@dataclass(frozen=True)
class ExperimentConfig:
    pair: GroundTruthPair
    n_grid: Tuple[int, ...]
    reps: int
    master_seed: int
    metric: str = "cost_units"          # or "wasserstein_units"
    metric_p: float = 1.0               # exponent p for Wasserstein units
    metric_delta0: float = 0.0          # separation floor delta_0
    threads: int = 1

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if any(b <= a for a, b in zip(grid, grid[1:])) or not grid:
            raise UsageError(f"n_grid must be strictly increasing, got {grid}")
        if self.reps < 2:
            raise UsageError("need at least 2 replications per n")
        if self.metric not in ("cost_units", "wasserstein_units"):
            raise UsageError(f"unknown metric {self.metric!r}")
        if self.metric == "wasserstein_units":
            if self.metric_delta0 <= 0:
                raise UsageError("wasserstein_units needs delta0 > 0")
            if self.pair.exact_value ** (1.0 / self.metric_p) < self.metric_delta0:
                raise UsageError(
                    "wasserstein_units needs exact_value^(1/p) >= delta0")
        object.__setattr__(self, "n_grid", grid)


@dataclass(frozen=True)
class RateReport:
    per_n: Tuple[Tuple[int, float, float, int], ...]  # (n, delta_hat, se, reps)
    slope: Optional[float] = None
    slope_ci: Optional[Tuple[float, float]] = None
    baseline_slope: Optional[float] = None
    # per-replication payloads, keyed by n (kept for bootstrap and CSV output)
    estimates: Dict[int, np.ndarray] = field(default_factory=dict)
    errors: Dict[int, np.ndarray] = field(default_factory=dict)
    master_seed: int = 0
    exact_value: float = 0.0


def _one_replication(pair: GroundTruthPair, n: int, rep: int, master_seed: int) -> float:
    seed_x = _rng.mix64(master_seed, n, rep, 0)
    seed_y = _rng.mix64(master_seed, n, rep, 1)
    mu_n = sample(pair.mu, n, seed_x)
    nu_n = sample(pair.nu, n, seed_y)
    return solve_assignment(mu_n.points, nu_n.points, pair.cost).value


def estimate_delta(config: ExperimentConfig) -> RateReport:
    """Monte-Carlo estimate of delta(n) on the configured grid.

    delta_hat(n) is the mean over replications of |T_hat - exact|; the
    attached standard error is the sample standard deviation / sqrt(R).
    Replications run concurrently; results are merged by index so the
    output is independent of scheduling.
    """
    pair = config.pair
    exact = pair.exact_value
    tasks = [(n, r) for n in config.n_grid for r in range(config.reps)]
    results: Dict[Tuple[int, int], float] = {}
    failures = []

    def run(task):
        n, r = task
        try:
            return task, _one_replication(pair, n, r, config.master_seed)
        except NumericalError as exc:
            return task, exc

    if config.threads > 1:
        # the solver kernels release the GIL, so threads give real overlap
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.threads) as ex:
            outcomes = list(ex.map(run, tasks))
    else:
        outcomes = [run(t) for t in tasks]
    for task, out in outcomes:
        if isinstance(out, Exception):
            failures.append((task, out))
        else:
            results[task] = out
    if len(failures) > 0.01 * len(tasks):
        raise NumericalError(
            f"{len(failures)} of {len(tasks)} replications failed; first: {failures[0]}")
    per_n = []
    estimates: Dict[int, np.ndarray] = {}
    errors: Dict[int, np.ndarray] = {}
    for n in config.n_grid:
        vals = np.array([results[(n, r)] for r in range(config.reps) if (n, r) in results])
        errs = np.abs(vals - exact)
        estimates[n] = vals
        errors[n] = errs
        se = float(errs.std(ddof=1) / np.sqrt(errs.size)) if errs.size > 1 else 0.0
        per_n.append((n, float(errs.mean()), se, int(errs.size)))
    return RateReport(per_n=tuple(per_n), estimates=estimates, errors=errors,
                      master_seed=config.master_seed, exact_value=exact)


def _ols_slope(log_n: np.ndarray, log_d: np.ndarray) -> float:
    x = log_n - log_n.mean()
    return float((x * (log_d - log_d.mean())).sum() / (x * x).sum())


def fit_slope(report: RateReport, bootstrap_B: int = 1000,
              seed: Optional[int] = None) -> RateReport:
    """OLS slope of log delta_hat against log n, with a bootstrap 95% CI.

    The bootstrap resamples per-replication absolute errors within each n,
    recomputes delta_hat, and refits the slope, B times.
    """
    ns = np.array([row[0] for row in report.per_n], dtype=float)
    dh = np.array([row[1] for row in report.per_n], dtype=float)
    if np.any(dh <= 0):
        bad = int(ns[np.argmax(dh <= 0)])
        raise UsageError(
            f"delta_hat vanishes at n = {bad}; a log-log fit is undefined there")
    slope = _ols_slope(np.log(ns), np.log(dh))
    gen = _rng.stream(report.master_seed if seed is None else seed, 0xB007)
    slopes = np.empty(bootstrap_B)
    err_arrays = [report.errors[int(n)] for n in ns] if report.errors else None
    for b in range(bootstrap_B):
        if err_arrays is not None:
            dh_b = np.array([e[gen.integers(0, e.size, e.size)].mean()
                             for e in err_arrays])
        else:  # fall back to a normal approximation via the recorded SEs
            se = np.array([row[2] for row in report.per_n])
            dh_b = np.abs(dh + se * gen.standard_normal(ns.size))
        dh_b = np.maximum(dh_b, 1e-300)
        slopes[b] = _ols_slope(np.log(ns), np.log(dh_b))
    lo, hi = np.quantile(slopes, [0.025, 0.975])
    lo, hi = min(lo, slope), max(hi, slope)
    return replace(report, slope=slope, slope_ci=(float(lo), float(hi)))


def compare_regimes(a: RateReport, b: RateReport, bootstrap_B: int = 1000
                    ) -> Tuple[float, Tuple[float, float]]:
    """Slope difference a - b with a CI from independent bootstraps."""
    if a.slope is None or b.slope is None:
        raise UsageError("fit slopes before comparing regimes")
    diff = a.slope - b.slope

    def boot(rep: RateReport, tag: int) -> np.ndarray:
        ns = np.array([row[0] for row in rep.per_n], dtype=float)
        gen = _rng.stream(rep.master_seed, 0xB007D1FF, tag)
        out = np.empty(bootstrap_B)
        errs = [rep.errors[int(n)] for n in ns]
        for k in range(bootstrap_B):
            dh = np.array([e[gen.integers(0, e.size, e.size)].mean() for e in errs])
            out[k] = _ols_slope(np.log(ns), np.log(np.maximum(dh, 1e-300)))
        return out
    diffs = boot(a, 1) - boot(b, 2)
    lo, hi = np.quantile(diffs, [0.025, 0.975])
    return diff, (float(min(lo, diff)), float(max(hi, diff)))


def to_wasserstein_units(report: RateReport, p: float, delta0: float) -> RateReport:
    """Convert per-replication errors from cost units to W_p units.

    New errors are |T_hat^(1/p) - exact^(1/p)|; requires exact > 0 and
    exact^(1/p) >= delta0 > 0.  Slope must be refit downstream.
    """
    exact = report.exact_value
    if exact <= 0:
        raise UsageError("Wasserstein units need a strictly positive exact value")
    root = exact ** (1.0 / p)
    if root < delta0 or delta0 <= 0:
        raise UsageError(f"need exact^(1/p) = {root:.6g} >= delta0 > 0")
    if not report.estimates:
        raise UsageError("report lacks per-replication estimates")
    new_errors = {}
    per_n = []
    for (n, _, _, reps) in report.per_n:
        vals = report.estimates[n]
        errs = np.abs(np.maximum(vals, 0.0) ** (1.0 / p) - root)
        new_errors[n] = errs
        se = float(errs.std(ddof=1) / np.sqrt(errs.size)) if errs.size > 1 else 0.0
        per_n.append((n, float(errs.mean()), se, reps))
    return replace(report, per_n=tuple(per_n), errors=new_errors,
                   slope=None, slope_ci=None, exact_value=root)
