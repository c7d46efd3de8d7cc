"""Command-line entry point: ``kacz solve | bench | verify``.

Exit codes: 0 success, 1 input or configuration error, 2 the iteration limit
was reached (partial outputs are still written), 3 ``verify`` found a
violated check.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import AXES, BenchPlan, run_bench, write_bench_csv
from .errors import DegenerateBound, KaczError, MaxItersExceeded
from .ingest import (
    SyntheticSpec,
    choose_storage,
    generate_synthetic,
    planted_problem,
    read_matrix_market,
    trace_summary,
    write_summary_json,
    write_trace_csv,
)
from .linalg import build_system, coherence, spectral_summary
from .solvers import VARIANTS, RunConfig, run
from .theory import certificate, check_max_ratio, check_pinned_residuals, check_error_bound

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("kacz")

DEFAULTS = {
    "seed": 0,
    "trials": 20,
    "rse_tol": 1e-12,
    "max_iters": 100_000,
    "rule": "residual",
    "out": ".",
    "stopping": "rse",
    "axis": "rows",
    "rows": "200,400,600,800,1000",
    "cols": "100",
    "t": "0.1,0.5,0.9",
}


def _problem_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", help="MatrixMarket file with the coefficient matrix")
    src.add_argument("--synthetic", metavar="m=M,n=N,t=T", help="uniform [t,1] random matrix")
    p.add_argument("--rhs", help="MatrixMarket file with b (default: b = A x for a normal random x)")


def _common_args(p):
    p.add_argument("--config", help="TOML file of option values; flags take precedence")
    p.add_argument("--seed", type=int)
    p.add_argument("--rse-tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--rule", choices=("residual", "uniform", "argmax"))
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kacz", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one system and write trace.csv / summary.json")
    _problem_args(p)
    _common_args(p)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--stopping", choices=("rse", "residual"))

    p = sub.add_parser("bench", help="multi-trial sweep, writes bench.csv")
    _common_args(p)
    p.add_argument("--axis", choices=AXES)
    p.add_argument("--rows", help="comma list; the swept sizes for --axis rows, else the fixed m")
    p.add_argument("--cols", help="comma list; the swept sizes for --axis cols, else the fixed n")
    p.add_argument("--t", help="comma list of lower endpoints t")
    p.add_argument("--variant", help="comma list of variants (default grk,gmirk)")
    p.add_argument("--trials", type=int)
    p.add_argument("--matrix", action="append", help="MatrixMarket file (repeatable), for --axis fixed")

    p = sub.add_parser("verify", help="run GMIRK and check the convergence certificate")
    _problem_args(p)
    _common_args(p)
    p.add_argument("--corrupt", action="store_true", help="replace x^(1) by x^(0) before checking")
    p.add_argument("--force-delta", action="store_true", help="compute delta beyond the row cap")
    return parser


def _resolve(args) -> dict:
    """Merge flag values over config-file values over defaults."""
    conf = {}
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            conf = {k.replace("-", "_"): v for k, v in tomllib.load(fh).items()}
    opts = dict(DEFAULTS)
    opts.update(conf)
    for k, v in vars(args).items():
        if v is not None:
            opts[k] = v
    return opts


def _as_list(v, conv):
    if isinstance(v, (list, tuple)):
        return [conv(x) for x in v]
    if isinstance(v, (int, float)):
        return [conv(v)]
    return [conv(x) for x in str(v).split(",") if x.strip()]


def _load_problem(opts):
    seed = int(opts["seed"])
    if opts.get("synthetic"):
        bundle = generate_synthetic(SyntheticSpec.parse(opts["synthetic"], seed))
        return bundle.sys
    A = read_matrix_market(opts["matrix"])
    if opts.get("rhs"):
        b = read_matrix_market(opts["rhs"])
        b = b.toarray() if hasattr(b, "toarray") else b
        return build_system(choose_storage(A), np.ravel(b))
    return planted_problem(A, seed, Path(opts["matrix"])).sys


def _run_config(opts, variant, keep_iterates=False):
    return RunConfig(
        variant=variant,
        max_iters=int(opts["max_iters"]),
        rse_tol=float(opts["rse_tol"]),
        seed=int(opts["seed"]),
        rule=opts["rule"],
        stopping=opts.get("stopping", "rse"),
        keep_iterates=keep_iterates,
    )


def _outdir(opts) -> Path:
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(opts) -> int:
    sys_ = _load_problem(opts)
    cfg = _run_config(opts, opts.get("variant") or "gmirk")
    x_star = spectral_summary(sys_).x_star if cfg.stopping == "rse" else None
    status = 0
    try:
        trace = run(sys_, cfg, x_star=x_star)
    except MaxItersExceeded as exc:
        trace, status = exc.trace, 2
        print(f"kacz: {exc}", file=sys.stderr)
    out = _outdir(opts)
    with open(out / "trace.csv", "w", newline="") as fh:
        write_trace_csv(trace, fh)
    with open(out / "summary.json", "w") as fh:
        write_summary_json(trace_summary(trace), fh)
    print(f"{trace.variant}: {len(trace)} iterations, final RSE {trace.final_rse:.3e}")
    return status


def cmd_bench(opts) -> int:
    axis = opts["axis"]
    rows, cols = _as_list(opts["rows"], int), _as_list(opts["cols"], int)
    if axis == "rows":
        sizes, fixed = rows, cols[0]
    elif axis == "cols":
        sizes, fixed = cols, rows[0]
    else:
        sizes, fixed = _as_list(opts.get("matrix") or [], str), 0
    plan = BenchPlan(
        axis=axis,
        sizes=tuple(sizes),
        t_values=tuple(_as_list(opts["t"], float)),
        variants=tuple(_as_list(opts.get("variant") or "grk,gmirk", str)),
        trials=int(opts["trials"]),
        base_seed=int(opts["seed"]),
        rse_tol=float(opts["rse_tol"]),
        max_iters=int(opts["max_iters"]),
        fixed_dim=fixed,
        rule=opts["rule"],
    )
    cells = run_bench(plan)
    out = _outdir(opts)
    with open(out / "bench.csv", "w", newline="") as fh:
        write_bench_csv(cells, fh)
    write_bench_csv(cells, sys.stdout)
    return 0


def verify_report(sys_, cfg: RunConfig, *, corrupt=False, force_delta=False) -> tuple[dict, int]:
    """Run GMIRK with iterate retention and check it against the certificate."""
    summary = spectral_summary(sys_)
    status = 0
    try:
        trace = run(sys_, cfg, x_star=summary.x_star)
    except MaxItersExceeded as exc:
        trace, status = exc.trace, 2
    err0 = trace.err0
    if corrupt and len(trace):
        trace.iterates[1] = trace.iterates[0].copy()
        trace.err_sq[0] = err0

    report = {"variant": trace.variant, "iters": len(trace), "converged": trace.converged}
    try:
        cert = certificate(sys_, summary, coherence(sys_, force=force_delta))
    except DegenerateBound as exc:
        report["bound"] = "vacuous"
        report["certificate"] = {"vacuous": str(exc)}
    else:
        report["bound"] = check_error_bound(trace, cert, err0).summary()
        report["certificate"] = cert.to_dict()
    # fixed report keys: lemma1 = zero residuals on the last two rows, lemma2 = max-ratio inequality
    report["lemma1"] = check_pinned_residuals(trace, sys_).summary()
    report["lemma2"] = check_max_ratio(trace).summary()
    if status == 0 and any(str(report[k]).startswith("fail") for k in ("bound", "lemma1", "lemma2")):
        status = 3
    return report, status


def cmd_verify(opts) -> int:
    sys_ = _load_problem(opts)
    cfg = _run_config(dict(opts, stopping="rse"), "gmirk", keep_iterates=True)
    report, status = verify_report(sys_, cfg, corrupt=opts.get("corrupt", False),
                                   force_delta=opts.get("force_delta", False))
    with open(_outdir(opts) / "verify.json", "w") as fh:
        write_summary_json(report, fh)
    write_summary_json(report, sys.stdout)
    return status


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        opts = _resolve(args)
        return COMMANDS[args.command](opts)
    except (KaczError, OSError, ValueError, tomllib.TOMLDecodeError) as exc:
        print(f"kacz: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
