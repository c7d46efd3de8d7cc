"""Row-action solvers: RK, GRK, MIRK, GMIRK, oblique projection.

Every step function mutates a :class:`SolverState` in place and returns a
:class:`StepOutcome`. The carried residual ``r = A x - b`` is updated with the
``A a_i`` products (columns of the cached row Gram matrix when available), and
the entries that are zero in exact arithmetic after a step are stored as exact
zeros.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .errors import (
    ConfigurationError,
    ConvergedResidual,
    MaxItersExceeded,
    NearParallelRows,
)
from .linalg import LinearSystem, residual
from .selection import (
    UNDERFLOW,
    GreedyContext,
    ProbabilityRule,
    SelectionRecord,
    gamma_k,
    greedy_select,
)

log = logging.getLogger(__name__)

VARIANTS = ("rk", "grk", "mirk", "gmirk", "oblique")
PARALLEL_TOL = 1e-12


@dataclass
class SolverState:
    x: np.ndarray
    r: np.ndarray
    k: int = 0
    prev_index: Optional[int] = None
    # rows whose residual is zero in exact arithmetic after the last step
    pinned: tuple = ()

    @classmethod
    def initial(cls, sys: LinearSystem, x0=None) -> "SolverState":
        x = np.zeros(sys.n) if x0 is None else np.array(x0, dtype=float)
        return cls(x=x, r=residual(sys, x))


@dataclass(eq=False, slots=True)
class StepOutcome:
    selection: SelectionRecord
    beta_k: float
    step_norm: float
    fallback: bool = False


def _norm_sample(sys: LinearSystem, rng) -> int:
    cdf = sys.row_cdf
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), sys.m - 1)


def _plain_record(state: SolverState, sys: LinearSystem, i: int) -> SelectionRecord:
    nr = float(state.r @ state.r)
    if nr <= UNDERFLOW:
        raise ConvergedResidual("residual norm below underflow guard")
    return SelectionRecord(math.nan, sys.m, i, math.nan, math.nan, nr)


def _finish(state, i, pinned):
    for j in pinned:
        state.r[j] = 0.0
    state.pinned = pinned
    state.prev_index = i
    state.k += 1


def _project(state: SolverState, sys: LinearSystem, sel: SelectionRecord) -> StepOutcome:
    i = sel.chosen_index
    tau = state.r[i] / sys.row_sq_norms[i]
    sys.add_row(state.x, i, -tau)
    state.r -= tau * sys.times_row(i)
    _finish(state, i, (i,))
    return StepOutcome(sel, 0.0, abs(tau) * math.sqrt(sys.row_sq_norms[i]))


def _beta(norm_i, norm_p, inner, r_i, i, p):
    D = norm_i * norm_p - inner * inner
    if D <= PARALLEL_TOL * norm_i * norm_p:
        raise NearParallelRows(i, p)
    return inner * r_i / D


def gmirk_beta(a_ik, a_prev, r_ik: float) -> float:
    """Extrapolation weight along the previous row.

    ``<a_ik, a_prev> r_ik / (||a_ik||^2 ||a_prev||^2 - <a_ik, a_prev>^2)``;
    raises ``NearParallelRows`` when the denominator is below 1e-12 relative.
    """
    a_ik = np.asarray(a_ik, dtype=float)
    a_prev = np.asarray(a_prev, dtype=float)
    return _beta(float(a_ik @ a_ik), float(a_prev @ a_prev), float(a_ik @ a_prev), float(r_ik), None, None)


def _inertial(state: SolverState, sys: LinearSystem, sel: SelectionRecord) -> StepOutcome:
    """Extrapolate along the previous row, then project onto the chosen one.

    The two stages are fused: ``x += beta a_prev - tau a_i`` with
    ``tau = (r_i + beta <a_i, a_prev>) / ||a_i||^2``.
    """
    i, p = sel.chosen_index, state.prev_index
    if state.k == 0 or p is None:
        return _project(state, sys, sel)
    ni, np_ = sys.row_sq_norms[i], sys.row_sq_norms[p]
    g = sys.row_inner(i, p)
    r_i = state.r[i]
    try:
        beta = _beta(ni, np_, g, r_i, i, p)
    except NearParallelRows:
        log.info("rows %d and %d near parallel at k=%d; taking a plain projection", i, p, state.k)
        out = _project(state, sys, sel)
        return StepOutcome(sel, 0.0, out.step_norm, fallback=True)

    tau = (r_i + beta * g) / ni
    sys.add_row(state.x, p, beta)
    sys.add_row(state.x, i, -tau)
    state.r += beta * sys.times_row(p) - tau * sys.times_row(i)
    _finish(state, i, (i, p))
    step_sq = beta * beta * np_ + tau * tau * ni - 2.0 * beta * tau * g
    return StepOutcome(sel, float(beta), math.sqrt(max(step_sq, 0.0)))


def rk_step(state: SolverState, sys: LinearSystem, rng, index=None) -> StepOutcome:
    """Orthogonal projection onto a row drawn with probability ``||a_i||^2 / ||A||_F^2``."""
    i = _norm_sample(sys, rng) if index is None else int(index)
    return _project(state, sys, _plain_record(state, sys, i))


def grk_step(state: SolverState, sys: LinearSystem, ctx: GreedyContext, rng, index=None) -> StepOutcome:
    """Greedy randomized Kaczmarz: original threshold with ``||A||_F^2`` at every k."""
    sel = greedy_select(state.r, sys.row_sq_norms, ctx.frob_sq, ctx.rule, rng, forced=index)
    return _project(state, sys, sel)


def gmirk_step(state: SolverState, sys: LinearSystem, ctx: GreedyContext, rng, index=None) -> StepOutcome:
    """One iteration of the greedy multi-step inertial method.

    Selection uses the tightened threshold schedule; the update extrapolates
    along ``a_{i_{k-1}}`` so that the new iterate lies on both hyperplanes.
    """
    sel = greedy_select(state.r, sys.row_sq_norms, gamma_k(ctx, state.k), ctx.rule, rng, forced=index)
    return _inertial(state, sys, sel)


def mirk_step(state: SolverState, sys: LinearSystem, rng, index=None) -> StepOutcome:
    """Norm-proportional sampling followed by the inertial update.

    A draw equal to the previous row is redrawn once.
    """
    if index is None:
        i = _norm_sample(sys, rng)
        if state.prev_index is not None and i == state.prev_index:
            i = _norm_sample(sys, rng)
    else:
        i = int(index)
    return _inertial(state, sys, _plain_record(state, sys, i))


def oblique_step(state: SolverState, sys: LinearSystem, ctx: GreedyContext, rng, index=None) -> StepOutcome:
    """Greedy selection followed by a step along ``a_i`` made orthogonal to ``a_prev``."""
    sel = greedy_select(state.r, sys.row_sq_norms, gamma_k(ctx, state.k), ctx.rule, rng, forced=index)
    i, p = sel.chosen_index, state.prev_index
    if state.k == 0 or p is None:
        return _project(state, sys, sel)

    a_i, a_p = sys.row(i), sys.row(p)
    c = float(a_i @ a_p) / float(a_p @ a_p)
    d = a_i - c * a_p
    a_d = float(a_i @ d)
    d_norm = float(np.linalg.norm(d))
    # <a_i, d> = D / ||a_p||^2, so this is the same test as the inertial guard
    if a_d <= PARALLEL_TOL * sys.row_sq_norms[i]:
        log.info("rows %d and %d near parallel at k=%d; taking a plain projection", i, p, state.k)
        out = _project(state, sys, sel)
        return StepOutcome(sel, 0.0, out.step_norm, fallback=True)

    eta = -(sys.row_dot(i, state.x) - sys.b[i]) / a_d
    state.x += eta * d
    state.r += eta * (sys.times_row(i) - c * sys.times_row(p))
    _finish(state, i, (i, p))
    # reported beta: the coefficient the step puts on a_prev
    return StepOutcome(sel, float(-eta * c), abs(eta) * d_norm)


def sketch2_project(x, sys: LinearSystem, i: int, j: int) -> np.ndarray:
    """Closest point to ``x`` on the intersection of hyperplanes ``i`` and ``j``.

    Solves the 2x2 Gram system of the two rows; independent of the solver
    update paths and used to check them.
    """
    x = np.asarray(x, dtype=float)
    a_i, a_j = np.array(sys.row(i)), np.array(sys.row(j))
    gii, gjj, gij = a_i @ a_i, a_j @ a_j, a_i @ a_j
    det = gii * gjj - gij * gij
    if i == j or det <= PARALLEL_TOL * gii * gjj:
        raise NearParallelRows(i, j)
    ci = sys.b[i] - a_i @ x
    cj = sys.b[j] - a_j @ x
    lam_i = (gjj * ci - gij * cj) / det
    lam_j = (gii * cj - gij * ci) / det
    return x + lam_i * a_i + lam_j * a_j


StepFn = Callable[[SolverState, LinearSystem, Optional[GreedyContext], object, Optional[int]], StepOutcome]

STEPS: dict[str, StepFn] = {
    "rk": lambda st, sys, ctx, rng, i: rk_step(st, sys, rng, i),
    "grk": grk_step,
    "mirk": lambda st, sys, ctx, rng, i: mirk_step(st, sys, rng, i),
    "gmirk": gmirk_step,
    "oblique": oblique_step,
}


@dataclass(frozen=True)
class RunConfig:
    variant: str = "gmirk"
    max_iters: int = 100_000
    rse_tol: float = 1e-12
    seed: int = 0
    rule: ProbabilityRule = ProbabilityRule.RESIDUAL
    residual_refresh_period: int = 50
    stopping: str = "rse"
    keep_iterates: bool = False

    def __post_init__(self):
        if self.variant not in STEPS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not self.rse_tol > 0:
            raise ConfigurationError("rse_tol must be > 0")
        if self.residual_refresh_period < 1:
            raise ConfigurationError("residual_refresh_period must be >= 1")
        if self.stopping not in ("rse", "residual"):
            raise ConfigurationError(f"unknown stopping rule {self.stopping!r}")
        object.__setattr__(self, "rule", ProbabilityRule.parse(self.rule))


@dataclass
class IterationTrace:
    """Per-iteration records of a run.

    Row ``k`` describes the step from ``x^(k)`` to ``x^(k+1)``: the selection
    quantities (``epsilon``, ``iset_size``, ``max_ratio``, ``res_norm_sq``,
    ``gamma``) are evaluated at ``x^(k)``; ``rse`` and ``err_sq`` at ``x^(k+1)``.
    """

    variant: str
    seed: int
    rule: str
    k: list = field(default_factory=list)
    index: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    iset_size: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    rse: list = field(default_factory=list)
    res_norm_sq: list = field(default_factory=list)
    max_ratio: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    err_sq: list = field(default_factory=list)
    fallback: list = field(default_factory=list)
    err0: float = math.nan
    x: Optional[np.ndarray] = None
    iterates: Optional[list] = None
    refresh_drift: list = field(default_factory=list)
    converged: bool = False
    cpu_seconds: float = 0.0

    def __len__(self) -> int:
        return len(self.k)

    @property
    def final_rse(self) -> float:
        return self.rse[-1] if self.rse else math.nan

    def append(self, k, out: StepOutcome, rse, err_sq):
        sel = out.selection
        self.k.append(k)
        self.index.append(sel.chosen_index)
        self.epsilon.append(sel.epsilon_k)
        self.iset_size.append(sel.index_set_size)
        self.beta.append(out.beta_k)
        self.rse.append(rse)
        self.res_norm_sq.append(sel.res_norm_sq)
        self.max_ratio.append(sel.max_ratio)
        self.gamma.append(sel.gamma_used)
        self.err_sq.append(err_sq)
        self.fallback.append(out.fallback)


def run(
    sys: LinearSystem,
    config: RunConfig,
    *,
    x0=None,
    x_star=None,
    forced_indices: Optional[Iterable[int]] = None,
    rng=None,
) -> IterationTrace:
    """Iterate ``config.variant`` until the stopping rule holds.

    With ``stopping="rse"`` (default) the run stops once
    ``||x - x_star||^2 / ||x_star||^2 <= rse_tol`` and ``x_star`` is required;
    with ``stopping="residual"`` it stops once ``||r||^2 / ||b||^2 <= rse_tol``.
    ``forced_indices`` overrides the row draw for as many steps as it yields.

    Raises
    ------
    MaxItersExceeded
        Carrying the partial trace.
    """
    if config.stopping == "rse" and x_star is None:
        raise ConfigurationError("RSE stopping needs x_star (use stopping='residual' otherwise)")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    step = STEPS[config.variant]
    ctx = None
    if config.variant in ("grk", "gmirk", "oblique"):
        ctx = GreedyContext.for_system(sys, config.rule)
    state = SolverState.initial(sys, x0)
    trace = IterationTrace(config.variant, config.seed, config.rule.value)
    if config.keep_iterates:
        trace.iterates = [state.x.copy()]

    if x_star is not None:
        x_star = np.asarray(x_star, dtype=float)
        xs2 = float(x_star @ x_star)
        scale = xs2 if xs2 > 0 else 1.0
        d = state.x - x_star
        trace.err0 = float(d @ d)
        done = trace.err0 / scale <= config.rse_tol if config.stopping == "rse" else False
    else:
        scale = math.nan
    b2 = float(sys.b @ sys.b) or 1.0
    if config.stopping == "residual":
        done = float(state.r @ state.r) / b2 <= config.rse_tol

    forced = iter(forced_indices) if forced_indices is not None else None
    period = config.residual_refresh_period
    t0 = time.perf_counter()
    if done:
        trace.converged = True
    else:
        for k in range(config.max_iters):
            idx = next(forced, None) if forced is not None else None
            try:
                out = step(state, sys, ctx, rng, idx)
            except ConvergedResidual:
                trace.converged = True
                break
            if (k + 1) % period == 0:
                fresh = residual(sys, state.x)
                trace.refresh_drift.append((k + 1, float(np.max(np.abs(fresh - state.r)))))
                state.r = fresh
                for j in state.pinned:
                    state.r[j] = 0.0
            if x_star is not None:
                d = state.x - x_star
                err = float(d @ d)
                rse = err / scale
            else:
                err = rse = math.nan
            trace.append(k, out, rse, err)
            if config.keep_iterates:
                trace.iterates.append(state.x.copy())
            if config.stopping == "rse":
                stop = rse <= config.rse_tol
            else:
                stop = float(state.r @ state.r) / b2 <= config.rse_tol
            if stop:
                trace.converged = True
                break
    trace.cpu_seconds = time.perf_counter() - t0
    trace.x = state.x
    if not trace.converged:
        raise MaxItersExceeded(trace)
    return trace
