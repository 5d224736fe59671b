"""Command-line entry point.

Subcommands: solve, transform, rate, diagnose, lowerbound, costcheck.
Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 diagnostic
FAIL.  All data files are written atomically (temp file + rename) and a
run manifest (resolved config, seed, version, output digests) accompanies
every run.  Floats are serialized with 17 significant digits, enough to
round-trip IEEE doubles exactly.
"""
from __future__ import annotations

import argparse
import configparser
import difflib
import hashlib
import json
import os
import sys
import tempfile
import time
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .costs import check_conditions, parse_cost
from .diagnostics import (displacement_profile, semiconcavity_check,
                          superdiff_growth_check)
from .duality import PotentialHandle, default_cap, extend_potentials
from .errors import NumericalError, UsageError
from .measures import DiscreteMeasure, parse_sampler, sample, ground_truth_location
from .measures import GroundTruthPair
from .rates import ExperimentConfig, estimate_delta, fit_slope, to_wasserstein_units
from .lowerbounds import minimax_gadget, tv_quarter_family
from .solver import solve_assignment, solve_general

# Registry of accepted [experiment] config keys (reflected into --help).
CONFIG_KEYS = {
    "cost": "cost spec, e.g. power:p=2,r=2 or smooth:p=1.5,eps=0.01",
    "d": "ambient dimension (default 5)",
    "mu": "first sampler, e.g. ball:c=0,0,0,0,0;r=0.25",
    "nu": "second sampler, or translate:mu;z0=...",
    "pair": "shortcut: location:z0=<vector> (nu = mu shifted by z0)",
    "n_grid": "comma-separated strictly increasing sample sizes",
    "reps": "Monte-Carlo replications per n (default 100)",
    "seed": "master seed (64-bit integer, default 0)",
    "metric": "cost_units (default) or wasserstein:p=<f>,delta0=<f>",
    "threads": "worker budget (hint only; output is thread-independent)",
}

DEFAULTS = {
    "d": "5",
    "n_grid": "128,256,512,1024,2048",
    "reps": "100",
    "seed": "0",
    "metric": "cost_units",
    "threads": "1",
}


def fmt(x: float) -> str:
    """Float to string with 17 significant digits (round-trip safe)."""
    return f"{float(x):.17g}"


def atomic_write(path: str, data: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: str, subcommand: str, resolved: dict,
                   master_seed: int, outputs: List[str], start: float) -> None:
    manifest = {
        "subcommand": subcommand,
        "resolved_config": resolved,
        "master_seed": master_seed,
        "version": __version__,
        "start_unix": start,
        "end_unix": time.time(),
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
    }
    atomic_write(os.path.join(out_dir, "manifest.json"),
                 json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _key_lines(path: str) -> Dict[str, int]:
    lines = {}
    try:
        with open(path) as fh:
            for k, line in enumerate(fh, 1):
                token = line.split("=", 1)[0].split(":", 1)[0].strip().lower()
                if token and not token.startswith(("#", ";", "[")):
                    lines.setdefault(token, k)
    except OSError:
        pass
    return lines


def parse_config(path: str) -> dict:
    """Parse the INI config; unknown keys are hard errors with suggestions."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}")
    if "experiment" not in cp:
        raise UsageError(f"config {path} needs an [experiment] section")
    if len(cp.sections()) > 1:
        extra = [s for s in cp.sections() if s != "experiment"]
        raise UsageError(f"unexpected config sections {extra}")
    raw = dict(cp["experiment"])
    where = _key_lines(path)
    for key in raw:
        if key not in CONFIG_KEYS:
            near = difflib.get_close_matches(key, CONFIG_KEYS, n=1)
            hint = f"; did you mean {near[0]!r}?" if near else ""
            raise UsageError(
                f"unknown config key {key!r} (line {where.get(key, '?')}){hint}")
    resolved = dict(DEFAULTS)
    resolved.update(raw)
    for req in ("cost",):
        if req not in resolved:
            raise UsageError(f"missing required config key {req!r}")
    if "mu" not in resolved:
        raise UsageError("missing required config key 'mu'")
    if "nu" not in resolved and "pair" not in resolved:
        raise UsageError("config needs either 'nu' or 'pair'")
    return resolved


def build_experiment(resolved: dict, threads_override: Optional[int] = None,
                     seed_override: Optional[int] = None) -> ExperimentConfig:
    d = int(resolved["d"])
    cost = parse_cost(resolved["cost"], d)
    mu = parse_sampler(resolved["mu"], d)
    if "pair" in resolved:
        spec = resolved["pair"]
        head, _, body = spec.partition(":")
        if head.strip() != "location":
            raise UsageError(f"unknown pair shortcut {head!r} (only 'location')")
        kv = dict(tok.split("=", 1) for tok in body.split(";") if "=" in tok)
        if "z0" not in kv:
            raise UsageError("pair=location needs z0=<vector>")
        z0 = np.asarray([float(t) for t in kv["z0"].split(",")])
        pair = ground_truth_location(mu, z0, cost)
    else:
        nu = parse_sampler(resolved["nu"], d, named={"mu": mu})
        if nu.kind == "translate" and nu.inner == mu:
            pair = ground_truth_location(mu, np.asarray(nu.z0), cost)
        elif nu == mu:
            pair = ground_truth_location(mu, np.zeros(d), cost)
        else:
            raise UsageError(
                "general (mu, nu) pairs have no closed-form ground truth; "
                "use nu = translate:mu;z0=... or nu identical to mu")
    try:
        n_grid = tuple(int(t) for t in resolved["n_grid"].split(","))
    except ValueError:
        raise UsageError(f"bad n_grid {resolved['n_grid']!r}")
    metric = resolved["metric"]
    metric_p, delta0 = 1.0, 0.0
    if metric.startswith("wasserstein"):
        _, _, body = metric.partition(":")
        kv = dict(tok.split("=", 1) for tok in body.split(",") if "=" in tok)
        metric_p = float(kv.get("p", 1.0))
        delta0 = float(kv.get("delta0", 0.0))
        metric = "wasserstein_units"
    elif metric != "cost_units":
        raise UsageError(f"unknown metric {metric!r}")
    seed = seed_override if seed_override is not None else int(resolved["seed"])
    threads = threads_override if threads_override is not None else int(resolved["threads"])
    return ExperimentConfig(pair=pair, n_grid=n_grid, reps=int(resolved["reps"]),
                            master_seed=seed, metric=metric, metric_p=metric_p,
                            metric_delta0=delta0, threads=max(1, threads))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _read_points_csv(path: str):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(t) for t in line.split(",")])
    if not rows:
        raise UsageError(f"no points in {path}")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise UsageError(f"ragged rows in {path}")
    return np.asarray(rows)


def cmd_solve(args, out_dir: str) -> int:
    start = time.time()
    A = _read_points_csv(args.points_a)
    B = _read_points_csv(args.points_b)
    weighted = args.weighted
    if weighted:
        Xa, wa = A[:, :-1], A[:, -1]
        Xb, wb = B[:, :-1], B[:, -1]
    else:
        Xa, wa = A, np.full(A.shape[0], 1.0 / A.shape[0])
        Xb, wb = B, np.full(B.shape[0], 1.0 / B.shape[0])
    d = Xa.shape[1]
    cost = parse_cost(args.cost, d)
    if weighted:
        plan = solve_general(DiscreteMeasure(Xa, wa / wa.sum()),
                             DiscreteMeasure(Xb, wb / wb.sum()), cost)
    else:
        if Xa.shape[0] != Xb.shape[0]:
            raise UsageError(
                f"unweighted point sets must match in size ({Xa.shape[0]} vs "
                f"{Xb.shape[0]}); add a weight column for general marginals")
        plan = solve_assignment(Xa, Xb, cost)
    out = args.out or os.path.join(out_dir, "plan.csv")
    lines = ["i,j,mass"]
    lines += [f"{i},{j},{fmt(m)}" for i, j, m in zip(plan.i, plan.j, plan.mass)]
    atomic_write(out, "\n".join(lines) + "\n")
    print(f"value={fmt(plan.value)}")
    write_manifest(out_dir, "solve", {"cost": args.cost, "points_a": args.points_a,
                                      "points_b": args.points_b}, 0, [out], start)
    return 0


def cmd_transform(args, out_dir: str) -> int:
    start = time.time()
    A = _read_points_csv(args.anchors)
    Q = _read_points_csv(args.query)
    anchors, lam = A[:, :-1], A[:, -1]
    d = anchors.shape[1]
    if Q.shape[1] != d:
        raise UsageError(f"query dimension {Q.shape[1]} != anchor dimension {d}")
    handle = PotentialHandle(anchors=anchors, values=lam,
                             cost=parse_cost(args.cost, d), cap=args.cap)
    vals = handle(Q)
    out = args.out or os.path.join(out_dir, "values.csv")
    header = ",".join(f"x{k + 1}" for k in range(d)) + ",value"
    lines = [header] + [",".join(fmt(c) for c in q) + f",{fmt(v)}"
                        for q, v in zip(Q, vals)]
    atomic_write(out, "\n".join(lines) + "\n")
    write_manifest(out_dir, "transform", {"cost": args.cost}, 0, [out], start)
    return 0


def rate_csv_payloads(report, config: ExperimentConfig):
    samples = ["n,rep,estimate,abs_error"]
    for n in config.n_grid:
        ests = report.estimates[n]
        errs = report.errors[n]
        for r in range(ests.size):
            samples.append(f"{n},{r},{fmt(ests[r])},{fmt(errs[r])}")
    summary = ["n,delta_hat,se,reps"]
    for (n, dh, se, reps) in report.per_n:
        summary.append(f"{n},{fmt(dh)},{fmt(se)},{reps}")
    return "\n".join(samples) + "\n", "\n".join(summary) + "\n"


_PLOT_SCRIPT = """# gnuplot script: convergence of the plug-in estimate
set logscale xy
set xlabel 'n'
set ylabel 'delta_hat(n)'
set datafile separator ','
plot 'summary.csv' every ::1 using 1:2 with linespoints title 'delta_hat'
"""


def cmd_rate(args, out_dir: str) -> int:
    start = time.time()
    if not args.config:
        raise UsageError("rate needs --config")
    resolved = parse_config(args.config)
    config = build_experiment(resolved, threads_override=args.threads,
                              seed_override=args.seed)
    report = estimate_delta(config)
    if config.metric == "wasserstein_units":
        report = to_wasserstein_units(report, config.metric_p, config.metric_delta0)
    samples, summary = rate_csv_payloads(report, config)
    outputs = []
    for name, payload in (("samples.csv", samples), ("summary.csv", summary),
                          ("plot.gp", _PLOT_SCRIPT)):
        path = os.path.join(out_dir, name)
        atomic_write(path, payload)
        outputs.append(path)
    if all(row[1] > 0 for row in report.per_n):
        report = fit_slope(report)
        lo, hi = report.slope_ci
        slope_txt = (f"slope={fmt(report.slope)}\nci_lo={fmt(lo)}\n"
                     f"ci_hi={fmt(hi)}\nB=1000\n")
    else:
        slope_txt = "slope=nan\nci_lo=nan\nci_hi=nan\nB=0\n# zero error: fit skipped\n"
    path = os.path.join(out_dir, "slope.txt")
    atomic_write(path, slope_txt)
    outputs.append(path)
    resolved_all = dict(resolved)
    resolved_all["threads"] = str(config.threads)
    resolved_all["seed"] = str(config.master_seed)
    write_manifest(out_dir, "rate", resolved_all, config.master_seed, outputs, start)
    return 0


def cmd_diagnose(args, out_dir: str) -> int:
    start = time.time()
    if not args.config:
        raise UsageError("diagnose needs --config")
    resolved = parse_config(args.config)
    config = build_experiment(resolved, seed_override=args.seed)
    pair = config.pair
    n = config.n_grid[0]
    mu_n = sample(pair.mu, n, config.master_seed)
    nu_n = sample(pair.nu, n, config.master_seed + 1)
    plan = solve_assignment(mu_n.points, nu_n.points, pair.cost)
    reports = []
    if args.check == "semiconcavity":
        phi, _ = extend_potentials(plan, mu_n.points, nu_n.points, pair.cost)
        span = max(np.abs(mu_n.points).max(), np.abs(nu_n.points).max())
        lam = pair.cost.lambda_on_ball(2.0 * span * np.sqrt(mu_n.d))
        region = ("box", [-span] * mu_n.d, [span] * mu_n.d)
        reports.append(semiconcavity_check(phi, lam, region, seed=config.master_seed))
    elif args.check == "displacement":
        prof = displacement_profile(plan, mu_n.points, nu_n.points)
        from .diagnostics import DiagnosticReport
        reports.append(DiagnosticReport(name="displacement",
                                        max_violation=prof["max_ratio"],
                                        tolerance=float("inf"),
                                        samples_used=prof["entries"],
                                        witness={"deciles": prof["deciles"]}))
    elif args.check == "superdiff":
        phi, _ = extend_potentials(plan, mu_n.points, nu_n.points, pair.cost)
        r = max(8.0, 2.0 * float(np.linalg.norm(mu_n.points, axis=1).max()))
        R = max(4.0, phi.cap if phi.cap is not None else 4.0)
        reports.append(superdiff_growth_check(
            phi, r=r, R=R, growth_p=pair.cost.metadata.growth_p,
            kappa=pair.cost.metadata.kappa or 1.0, seed=config.master_seed,
            check_bound=False))
    else:
        raise UsageError(f"unknown check {args.check!r}")
    path = os.path.join(out_dir, "diagnostics.jsonl")
    atomic_write(path, "".join(r.to_json() + "\n" for r in reports))
    ok = all(r.passed for r in reports)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} "
              f"violation={fmt(r.max_violation)}")
    write_manifest(out_dir, "diagnose", resolved, config.master_seed, [path], start)
    return 0 if ok else 3


def cmd_lowerbound(args, out_dir: str) -> int:
    start = time.time()
    if args.seed is None:
        args.seed = 0
    d = args.d
    cost = parse_cost(args.cost, d)
    z0 = np.asarray([float(t) for t in args.z0.split(",")])
    if z0.size != d:
        raise UsageError(f"z0 has {z0.size} entries, expected d={d}")
    m = args.m
    lines = ["m,seed,tv,chi2,value_minus_h"]
    for seed in range(args.seeds):
        kind, _, param = args.q.partition(":")
        if kind == "dirichlet":
            from . import rng as _rng
            q = _rng.stream(args.seed, 0xD1B, m, seed).dirichlet(
                np.full(m, float(param or 1.0)))
        elif kind == "spike":
            s = float(param or 0.25)
            if not 0 <= s < 1:
                raise UsageError(f"spike mass must be in [0, 1), got {s}")
            q = np.full(m, (1.0 - s) / m)
            q[0] += s
        elif kind == "uniform":
            q = np.full(m, 1.0 / m)
        elif kind == "tv4":
            q = tv_quarter_family(m)
        else:
            raise UsageError(f"unknown q family {args.q!r} "
                             "(use dirichlet:<a>|spike:<mass>|uniform|tv4)")
        res = minimax_gadget(m, q, z0, cost, seed=args.seed + seed)
        lines.append(f"{m},{seed},{fmt(res.tv)},{fmt(res.chi2)},"
                     f"{fmt(res.value_minus_h)}")
    path = os.path.join(out_dir, "gadget.csv")
    atomic_write(path, "\n".join(lines) + "\n")
    write_manifest(out_dir, "lowerbound",
                   {"m": m, "q": args.q, "z0": args.z0, "cost": args.cost},
                   args.seed, [path], start)
    return 0


def cmd_costcheck(args, out_dir: str) -> int:
    start = time.time()
    if args.seed is None:
        args.seed = 0
    cost = parse_cost(args.cost, args.d)
    region = ("ball", [0.0] * args.d, args.radius)
    ok = True
    lines = []
    for cond in args.conditions.split(","):
        cond = cond.strip()
        try:
            rep = check_conditions(cost, cond, region, budget=args.budget,
                                   seed=args.seed)
        except UsageError as exc:
            lines.append(json.dumps({"condition": cond, "skipped": str(exc)}))
            print(f"SKIP {cond}: {exc}")
            continue
        ok = ok and rep.passed
        lines.append(json.dumps({
            "condition": rep.condition, "passed": bool(rep.passed),
            "max_violation": float(rep.max_violation),
            "witnesses": rep.witnesses,
            "samples_used": int(rep.samples_used)},
            default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))
        print(f"{'PASS' if rep.passed else 'FAIL'} {cond} "
              f"violation={fmt(rep.max_violation)}")
    path = os.path.join(out_dir, "costcheck.jsonl")
    atomic_write(path, "\n".join(lines) + "\n")
    write_manifest(out_dir, "costcheck", {"cost": args.cost}, args.seed, [path], start)
    return 0 if ok else 3


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    epilog = "config keys accepted in [experiment]:\n" + "\n".join(
        f"  {k:8s} {v}" for k, v in CONFIG_KEYS.items())
    parser = argparse.ArgumentParser(
        prog="ot-rates",
        description="Exact discrete optimal transport & convergence-rate experiments",
        epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int,
                       default=int(os.environ.get("OT_RATES_THREADS", "0")) or None,
                       help="worker budget (hint; falls back to OT_RATES_THREADS)")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--format", choices=["csv", "text"], default="csv")

    p = sub.add_parser("solve", help="solve one transport instance")
    common(p)
    p.add_argument("--points-a", required=True)
    p.add_argument("--points-b", required=True)
    p.add_argument("--cost", required=True)
    p.add_argument("--weighted", action="store_true",
                   help="last CSV column is a weight")
    p.add_argument("--out")

    p = sub.add_parser("transform", help="evaluate a c-transform handle")
    common(p)
    p.add_argument("--anchors", required=True, help="CSV y1..yd,lambda")
    p.add_argument("--query", required=True, help="CSV x1..xd")
    p.add_argument("--cost", required=True)
    p.add_argument("--cap", type=float, default=None)
    p.add_argument("--out")

    p = sub.add_parser("rate", help="Monte-Carlo rate experiment")
    common(p)

    p = sub.add_parser("diagnose", help="structural diagnostics on a solved plan")
    common(p)
    p.add_argument("--check", required=True,
                   choices=["semiconcavity", "displacement", "superdiff"])

    p = sub.add_parser("lowerbound", help="packing/random-bijection gadget")
    common(p)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--q", default="tv4")
    p.add_argument("--z0", required=True)
    p.add_argument("--cost", required=True)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--seeds", type=int, default=20)

    p = sub.add_parser("costcheck", help="sampled certificates for cost conditions")
    common(p)
    p.add_argument("--cost", required=True)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--conditions", default="H0,H1,H3")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=4096)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = args.out_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
        handler = {
            "solve": cmd_solve,
            "transform": cmd_transform,
            "rate": cmd_rate,
            "diagnose": cmd_diagnose,
            "lowerbound": cmd_lowerbound,
            "costcheck": cmd_costcheck,
        }[args.subcommand]
        return handler(args, out_dir)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
