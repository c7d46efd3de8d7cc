"""Convergence factors and post-hoc checks of solver traces against them."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateBound

BOUND_SLACK = 1e-9
PINNED_RESIDUAL_TOL = 1e-9
MAX_RATIO_SLACK = 1e-12

_GREEDY = ("grk", "gmirk", "oblique")
_TWO_ROW = ("gmirk", "mirk", "oblique")


@dataclass(frozen=True)
class ConvergenceCertificate:
    """Per-iteration contraction factors of the squared error.

    ``rho0`` bounds the first step, ``rho1`` the second and ``rho2`` every
    later one.
    """

    rho0: float
    rho1: float
    rho2: float
    sigma_min_sq: float
    gamma1: float
    gamma2: float
    delta: float
    frob_sq: float

    @property
    def grk_factor(self) -> float:
        """Known per-step factor of plain greedy randomized Kaczmarz."""
        return 1.0 - 0.5 * (self.frob_sq / self.gamma1 + 1.0) * self.sigma_min_sq / self.frob_sq

    def to_dict(self) -> dict:
        return asdict(self)


def certificate(sys, summary, coherence) -> ConvergenceCertificate:
    """Factors from the smallest nonzero singular value, gamma1/gamma2 and delta.

    Raises ``DegenerateBound`` when ``(1 - delta^2) gamma2 < sigma_min^2``,
    in which case the later-step factor would be negative.
    """
    s2 = summary.sigma_min_sq
    if not s2 > 0:
        raise ValueError("sigma_min_sq must be positive")
    if not 0.0 <= coherence.delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    shrink = 1.0 - coherence.delta**2
    if shrink * coherence.gamma2 < s2:
        raise DegenerateBound(
            f"(1 - delta^2) gamma2 = {shrink * coherence.gamma2:.6g} < sigma_min^2 = {s2:.6g}"
        )
    return ConvergenceCertificate(
        rho0=1.0 - s2 / sys.frob_sq,
        rho1=1.0 - s2 / (shrink * coherence.gamma1),
        rho2=1.0 - s2 / (shrink * coherence.gamma2),
        sigma_min_sq=s2,
        gamma1=coherence.gamma1,
        gamma2=coherence.gamma2,
        delta=coherence.delta,
        frob_sq=sys.frob_sq,
    )


@dataclass
class CheckReport:
    status: str  # "pass", "fail" or "skipped"
    checked: int = 0
    violations: list = field(default_factory=list)
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def first_violation(self):
        return self.violations[0] if self.violations else None

    def summary(self) -> str:
        if self.status == "fail":
            return f"fail@{self.first_violation}"
        return self.status


def _report(violations, checked, detail=""):
    return CheckReport("fail" if violations else "pass", checked, violations, detail)


def error_bound(cert: ConvergenceCertificate, k: int, err0: float) -> float:
    """Upper bound on ``||x^(k) - x_star||^2``; products are taken in log space."""
    if k == 0:
        return err0
    factors = [cert.rho0] + ([cert.rho1] if k >= 2 else []) + ([cert.rho2] if k >= 3 else [])
    if err0 == 0.0 or min(factors) <= 0.0:
        return 0.0
    log_b = math.log(err0) + math.log(cert.rho0)
    if k >= 2:
        log_b += math.log(cert.rho1)
    if k >= 3:
        log_b += (k - 2) * math.log(cert.rho2)
    return math.exp(log_b)


def check_error_bound(trace, cert: ConvergenceCertificate, err0: float, slack: float = BOUND_SLACK) -> CheckReport:
    """Compare every recorded squared error with the deterministic bound.

    Violations are reported as iterate numbers ``k`` (``x^(k)``), so the first
    trace row is ``k = 1``.
    """
    errs = np.asarray(trace.err_sq, dtype=float)
    if errs.size and np.isnan(errs).any():
        return CheckReport("skipped", detail="trace has no reference errors (run without x_star)")
    bad = []
    for row, err in enumerate(errs):
        k = row + 1
        if err > error_bound(cert, k, err0) * (1.0 + slack):
            bad.append(k)
    return _report(bad, int(errs.size), f"relative slack {slack:g}")


def check_pinned_residuals(trace, sys, tol: float = PINNED_RESIDUAL_TOL) -> CheckReport:
    """Check ``a_j^T x^(k) = b_j`` for ``j = i_{k-1}`` (k >= 1) and ``j = i_{k-2}`` (k >= 2).

    Needs the retained iterates. Tolerance is ``tol * ||a_j|| * ||x^(k)||``.
    After a near-parallel fallback step only the first identity is checked.
    """
    if trace.variant not in _TWO_ROW:
        return CheckReport("skipped", detail=f"not applicable to {trace.variant}")
    if trace.iterates is None:
        return CheckReport("skipped", detail="iterates were not retained")
    norms = np.sqrt(sys.row_sq_norms)
    idx = trace.index
    bad, checked = [], 0
    for k in range(1, len(trace.iterates)):
        x = trace.iterates[k]
        scale = tol * float(np.linalg.norm(x))
        rows = [idx[k - 1]]
        # x^(k) keeps H_{i_{k-2}} only when step k-1 was a genuine two-row step
        if k >= 2 and not trace.fallback[k - 1]:
            rows.append(idx[k - 2])
        for j in rows:
            checked += 1
            if abs(sys.row_dot(j, x) - sys.b[j]) > scale * norms[j]:
                bad.append(k)
                break
    return _report(bad, checked, f"tolerance {tol:g} * ||a_i|| * ||x||")


def check_max_ratio(trace, slack: float = MAX_RATIO_SLACK) -> CheckReport:
    """``max_i |r_i|^2 / ||a_i||^2 >= ||r||^2 / Gamma_k`` on every greedy row of the trace."""
    if trace.variant not in _GREEDY:
        return CheckReport("skipped", detail=f"not applicable to {trace.variant}")
    mx = np.asarray(trace.max_ratio, dtype=float)
    nr = np.asarray(trace.res_norm_sq, dtype=float)
    gam = np.asarray(trace.gamma, dtype=float)
    bad = np.flatnonzero(mx < (nr / gam) * (1.0 - slack))
    return _report([int(k) for k in bad], int(mx.size), f"relative slack {slack:g}")
