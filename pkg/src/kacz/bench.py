"""Seeded multi-trial sweeps comparing solver variants.

Every trial builds one problem and runs all requested variants on it, so the
variants are compared on identical systems. Trial ``j`` of a cell uses seed
``base_seed + j`` for both the problem and the solver draws.
"""

from __future__ import annotations

import csv
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, TextIO

from .errors import MaxItersExceeded
from .ingest import SyntheticSpec, generate_synthetic, planted_problem, read_matrix_market
from .linalg import spectral_summary
from .solvers import VARIANTS, RunConfig, run

AXES = ("rows", "cols", "fixed")
BENCH_HEADER = ("variant", "axis_value", "t", "mean_iters", "mean_cpu", "trials", "failures")


@dataclass(frozen=True)
class BenchPlan:
    axis: str
    sizes: tuple
    t_values: tuple = (0.1, 0.5, 0.9)
    variants: tuple = ("grk", "gmirk")
    trials: int = 20
    base_seed: int = 0
    rse_tol: float = 1e-12
    max_iters: int = 100_000
    fixed_dim: int = 100
    rule: str = "residual"

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.sizes:
            raise ValueError("sizes must be nonempty")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad:
            raise ValueError(f"unknown variants {bad}")

    def cells(self):
        if self.axis == "fixed":
            return [(str(p), None) for p in self.sizes]
        return [(int(s), float(t)) for t in self.t_values for s in self.sizes]


@dataclass
class BenchCell:
    variant: str
    axis_value: object
    t: Optional[float]
    iters: list = field(default_factory=list)  # None for a run that hit max_iters
    cpu: list = field(default_factory=list)

    @property
    def trials(self) -> int:
        return len(self.iters)

    @property
    def failures(self) -> int:
        return sum(v is None for v in self.iters)

    @property
    def mean_iters(self) -> Optional[float]:
        ok = [v for v in self.iters if v is not None]
        return statistics.fmean(ok) if ok else None

    @property
    def mean_cpu(self) -> Optional[float]:
        ok = [c for v, c in zip(self.iters, self.cpu) if v is not None]
        return statistics.fmean(ok) if ok else None

    def iters_lower_bound(self, max_iters: int) -> float:
        """Mean iterations with failed runs counted at ``max_iters``.

        A failed run needed more than ``max_iters`` steps, so this never
        exceeds the true mean.
        """
        return statistics.fmean(max_iters if v is None else v for v in self.iters)


def _problem(plan: BenchPlan, axis_value, t, seed):
    if plan.axis == "rows":
        return generate_synthetic(SyntheticSpec(axis_value, plan.fixed_dim, t, seed))
    if plan.axis == "cols":
        return generate_synthetic(SyntheticSpec(plan.fixed_dim, axis_value, t, seed))
    return planted_problem(read_matrix_market(axis_value), seed, Path(axis_value))


def run_trial(plan: BenchPlan, axis_value, t, trial: int):
    """All variants on one problem; returns ``[(iters or None, cpu_seconds), ...]``."""
    seed = plan.base_seed + trial
    bundle = _problem(plan, axis_value, t, seed)
    x_star = spectral_summary(bundle.sys).x_star
    out = []
    for variant in plan.variants:
        cfg = RunConfig(variant=variant, max_iters=plan.max_iters, rse_tol=plan.rse_tol, seed=seed, rule=plan.rule)
        try:
            tr = run(bundle.sys, cfg, x_star=x_star)
            out.append((len(tr), tr.cpu_seconds))
        except MaxItersExceeded as exc:
            out.append((None, exc.trace.cpu_seconds))
    return out


def _run_trial_job(args):
    return run_trial(*args)


def worker_count() -> int:
    env = os.environ.get("KACZ_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_bench(plan: BenchPlan, workers: Optional[int] = None, progress=None) -> list[BenchCell]:
    """Run every (cell, trial) job, in a process pool when ``workers > 1``.

    Failures to converge are recorded per run and never stop the sweep.
    """
    workers = worker_count() if workers is None else workers
    jobs = [(plan, v, t, j) for v, t in plan.cells() for j in range(plan.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial_job, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_run_trial_job(job))
            if progress:
                progress(len(results), len(jobs))

    cells = {}
    for (_, v, t, _), res in zip(jobs, results):
        for variant, (iters, cpu) in zip(plan.variants, res):
            cell = cells.setdefault((variant, v, t), BenchCell(variant, v, t))
            cell.iters.append(iters)
            cell.cpu.append(cpu)
    order = {v: n for n, v in enumerate(plan.variants)}
    return sorted(cells.values(), key=lambda c: order[c.variant])


def _opt(v) -> str:
    return "" if v is None else f"{v:.17g}"


def write_bench_csv(cells: Sequence[BenchCell], stream: TextIO) -> None:
    """Long format; means over successful trials, empty when none succeeded."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(BENCH_HEADER)
    for c in cells:
        w.writerow((c.variant, c.axis_value, "" if c.t is None else f"{c.t:g}",
                    _opt(c.mean_iters), _opt(c.mean_cpu), c.trials, c.failures))
