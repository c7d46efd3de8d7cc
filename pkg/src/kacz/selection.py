"""Greedy row selection: threshold, index set and sampling within the set."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConvergedResidual, EmptyIndexSet

UNDERFLOW = 1e-300
# Rows exactly on the threshold belong to the set; the threshold itself is
# computed with a few roundings, so allow it a few ulps.
_TIE_SLACK = 1.0 - 8 * np.finfo(float).eps


class ProbabilityRule(enum.Enum):
    RESIDUAL = "residual"
    UNIFORM = "uniform"
    ARGMAX = "argmax"

    @classmethod
    def parse(cls, value) -> "ProbabilityRule":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(r.value for r in cls)
            raise ValueError(f"unknown probability rule {value!r} (expected one of {names})") from None


@dataclass(frozen=True)
class GreedyContext:
    """Threshold schedule ``Gamma_0 = ||A||_F^2, Gamma_1 = gamma1, Gamma_k = gamma2``."""

    frob_sq: float
    gamma1: float
    gamma2: float
    rule: ProbabilityRule = ProbabilityRule.RESIDUAL

    def __post_init__(self):
        if not self.gamma2 < self.gamma1 < self.frob_sq:
            raise ValueError(
                f"need gamma2 < gamma1 < frob_sq, got {self.gamma2}, {self.gamma1}, {self.frob_sq}"
            )

    @classmethod
    def for_system(cls, sys, rule="residual") -> "GreedyContext":
        from .linalg import gammas

        g1, g2 = gammas(sys)
        return cls(sys.frob_sq, g1, g2, ProbabilityRule.parse(rule))


@dataclass(eq=False, slots=True)
class SelectionRecord:
    epsilon_k: float
    index_set_size: int
    chosen_index: int
    gamma_used: float
    max_ratio: float = float("nan")
    res_norm_sq: float = float("nan")
    index_set: np.ndarray | None = None


def gamma_k(ctx: GreedyContext, k: int) -> float:
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return ctx.frob_sq
    return ctx.gamma1 if k == 1 else ctx.gamma2


def _ratios(r, row_sq_norms):
    sq = r * r
    return sq, sq / row_sq_norms


def _checked_norm(sq) -> float:
    nr = float(sq.sum())
    if nr <= UNDERFLOW:
        raise ConvergedResidual("residual norm below underflow guard")
    return nr


def epsilon_k(r, row_sq_norms, gamma_k: float) -> float:
    """``(max_i |r_i|^2/||a_i||^2 / ||r||^2 + 1/gamma_k) / 2``."""
    sq, ratio = _ratios(np.asarray(r, dtype=float), row_sq_norms)
    nr = _checked_norm(sq)
    return 0.5 * (float(ratio.max()) / nr + 1.0 / gamma_k)


def grk_epsilon(r, row_sq_norms, frob_sq: float) -> float:
    """The original greedy threshold, which always uses ``||A||_F^2``."""
    return epsilon_k(r, row_sq_norms, frob_sq)


def build_index_set(r, row_sq_norms, eps: float) -> np.ndarray:
    """Indices with ``|r_i|^2 >= eps ||r||^2 ||a_i||^2`` (ascending)."""
    sq, ratio = _ratios(np.asarray(r, dtype=float), row_sq_norms)
    nr = _checked_norm(sq)
    return _index_set(ratio, eps * nr)


def _index_set(ratio, threshold):
    idx = (ratio >= threshold * _TIE_SLACK).nonzero()[0]
    if idx.size == 0:
        raise EmptyIndexSet(f"no ratio reaches {threshold!r} (max {ratio.max()!r})")
    return idx


def probabilities(I, r, rule, m: int, row_sq_norms=None) -> np.ndarray:
    """Full length-m probability vector of ``rule`` restricted to ``I``."""
    rule = ProbabilityRule.parse(rule)
    I = np.asarray(I)
    if I.size == 0:
        raise EmptyIndexSet("empty index set")
    p = np.zeros(m)
    if rule is ProbabilityRule.RESIDUAL:
        w = np.asarray(r, dtype=float)[I] ** 2
        p[I] = w / w.sum()
    elif rule is ProbabilityRule.UNIFORM:
        p[I] = 1.0 / I.size
    else:
        p[_argmax_in(I, r, row_sq_norms)] = 1.0
    return p


def _argmax_in(I, r, row_sq_norms):
    if row_sq_norms is None:
        raise ValueError("argmax rule needs row_sq_norms")
    r = np.asarray(r, dtype=float)
    return int(I[np.argmax(r[I] ** 2 / row_sq_norms[I])])


def _weighted_pick(I, w, rng):
    c = w.cumsum()
    pos = int(c.searchsorted(rng.random() * c[-1], side="right"))
    return int(I[min(pos, I.size - 1)])


def sample_index(I, r, rule, rng, row_sq_norms=None) -> int:
    """Draw one row from ``I``.

    ``residual`` weights by ``|r_i|^2``, ``uniform`` is uniform on ``I``, and
    ``argmax`` deterministically takes the smallest index maximizing
    ``|r_i|^2 / ||a_i||^2`` over ``I`` (no random draw is consumed).
    """
    rule = ProbabilityRule.parse(rule)
    I = np.asarray(I)
    if I.size == 0:
        raise EmptyIndexSet("empty index set")
    if I.size == 1:
        return int(I[0])
    if rule is ProbabilityRule.RESIDUAL:
        return _weighted_pick(I, np.asarray(r, dtype=float)[I] ** 2, rng)
    if rule is ProbabilityRule.UNIFORM:
        return int(I[rng.integers(I.size)])
    return _argmax_in(I, r, row_sq_norms)


def greedy_select(r, row_sq_norms, gamma: float, rule: ProbabilityRule, rng, forced=None) -> SelectionRecord:
    """Threshold, index set and draw in one pass over the residual.

    ``forced`` overrides the draw; the threshold and set are still recorded.
    """
    sq, ratio = _ratios(r, row_sq_norms)
    nr = _checked_norm(sq)
    mx = float(ratio.max())
    eps = 0.5 * (mx / nr + 1.0 / gamma)
    I = _index_set(ratio, eps * nr)
    if forced is not None:
        i = int(forced)
    elif I.size == 1:
        i = int(I[0])
    elif rule is ProbabilityRule.RESIDUAL:
        i = _weighted_pick(I, sq[I], rng)
    elif rule is ProbabilityRule.UNIFORM:
        i = int(I[rng.integers(I.size)])
    else:
        i = int(I[np.argmax(ratio[I])])
    return SelectionRecord(eps, int(I.size), i, gamma, mx, nr, I)
