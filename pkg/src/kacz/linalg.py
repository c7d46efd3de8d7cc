"""Linear system storage, row access, coherence constants and the reference solution.

Rows are the unit of work for every Kaczmarz-type method, so the system keeps
its squared row norms and (for moderate m) the row Gram matrix ``A A^T``, whose
columns are exactly the ``A a_i`` products needed to update a residual in O(m).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import (
    DimensionMismatch,
    InconsistentSystem,
    PairwiseDependentRows,
    SizeCapExceeded,
    ZeroRow,
)

GRAM_ROW_CAP = 4096
DELTA_ROW_CAP = 2000
SVD_CAP = 5000
PARALLEL_COSINE = 1.0 - 1e-12


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """A consistent system ``A x = b`` with cached row data.

    ``A`` is either a C-contiguous ndarray or a CSR matrix. Instances are
    treated as immutable; the arrays are flagged read-only at construction.
    """

    A: np.ndarray | sp.csr_matrix
    b: np.ndarray
    row_sq_norms: np.ndarray
    frob_sq: float
    gram: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @cached_property
    def is_sparse(self) -> bool:
        return sp.issparse(self.A)

    @cached_property
    def row_cdf(self) -> np.ndarray:
        """Cumulative squared row norms, for norm-proportional sampling."""
        return np.cumsum(self.row_sq_norms)

    def row(self, i: int) -> np.ndarray:
        """Row ``a_i`` as a dense vector (a view for dense storage)."""
        if self.is_sparse:
            out = np.zeros(self.n)
            lo, hi = self.A.indptr[i], self.A.indptr[i + 1]
            out[self.A.indices[lo:hi]] = self.A.data[lo:hi]
            return out
        return self.A[i]

    def row_dot(self, i: int, x: np.ndarray) -> float:
        if self.is_sparse:
            lo, hi = self.A.indptr[i], self.A.indptr[i + 1]
            return float(self.A.data[lo:hi] @ x[self.A.indices[lo:hi]])
        return float(self.A[i] @ x)

    def row_inner(self, i: int, j: int) -> float:
        """``<a_i, a_j>``."""
        if self.gram is not None:
            return float(self.gram[i, j])
        if self.is_sparse:
            return float(self.A[i].multiply(self.A[j]).sum())
        return float(self.A[i] @ self.A[j])

    def add_row(self, x: np.ndarray, i: int, alpha: float) -> None:
        """In place ``x += alpha * a_i``."""
        if self.is_sparse:
            lo, hi = self.A.indptr[i], self.A.indptr[i + 1]
            x[self.A.indices[lo:hi]] += alpha * self.A.data[lo:hi]
        else:
            x += alpha * self.A[i]

    def times_row(self, i: int) -> np.ndarray:
        """``A a_i``, i.e. column ``i`` of the row Gram matrix."""
        if self.gram is not None:
            return self.gram[i]
        return np.asarray(self.A @ self.row(i)).ravel()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.A @ x).ravel()

    def dense(self) -> np.ndarray:
        return self.A.toarray() if self.is_sparse else np.array(self.A)


def _readonly(a):
    a.flags.writeable = False
    return a


def build_system(A, b, *, gram: Optional[bool] = None) -> LinearSystem:
    """Validate ``A`` and ``b`` and cache row norms.

    Parameters
    ----------
    A : array_like or sparse matrix, shape (m, n)
        Kept dense if given dense, converted to CSR if given sparse.
    b : array_like, shape (m,)
    gram : bool, optional
        Cache ``A A^T`` densely. Defaults to ``m <= GRAM_ROW_CAP``.
    """
    if sp.issparse(A):
        A = sp.csr_matrix(A, dtype=float)
        A.sum_duplicates()
        A.sort_indices()
        row_sq = np.asarray(A.multiply(A).sum(axis=1)).ravel()
    else:
        A = np.ascontiguousarray(A, dtype=float)
        if A.ndim != 2:
            raise DimensionMismatch(f"A must be 2-D, got shape {A.shape}")
        row_sq = np.einsum("ij,ij->i", A, A)
    b = np.array(b, dtype=float).ravel()
    m = A.shape[0]
    if m < 2:
        raise DimensionMismatch(f"need at least two rows, got {m}")
    if b.shape[0] != m:
        raise DimensionMismatch(f"len(b) = {b.shape[0]} but A has {m} rows")
    zero = np.flatnonzero(row_sq <= 0.0)
    if zero.size:
        raise ZeroRow(int(zero[0]))

    if gram is None:
        gram = m <= GRAM_ROW_CAP
    G = None
    if gram:
        G = (A @ A.T).toarray() if sp.issparse(A) else A @ A.T
        G = _readonly(np.ascontiguousarray(G))

    if not sp.issparse(A):
        _readonly(A)
    return LinearSystem(
        A=A,
        b=_readonly(b),
        row_sq_norms=_readonly(row_sq),
        frob_sq=float(row_sq.sum()),
        gram=G,
    )


def residual(sys: LinearSystem, x) -> np.ndarray:
    """Fresh ``A x - b`` from a full pass over the matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({sys.n},)")
    return sys.matvec(x) - sys.b


def gammas(sys: LinearSystem) -> tuple[float, float]:
    """Frobenius norm squared minus the smallest one (two) squared row norms.

    Equal to the maxima over excluded single rows and excluded row pairs of the
    remaining squared norm mass; for m == 2 the second value is 0.
    """
    s0, s1 = np.partition(sys.row_sq_norms, 1)[:2]
    gamma1 = sys.frob_sq - s0
    gamma2 = 0.0 if sys.m == 2 else sys.frob_sq - s0 - s1
    return float(gamma1), float(gamma2)


def _normalized_rows(sys: LinearSystem):
    scale = 1.0 / np.sqrt(sys.row_sq_norms)
    if sys.is_sparse:
        return sp.diags(scale) @ sys.A
    return sys.A * scale[:, None]


def delta(sys: LinearSystem, *, cap: int = DELTA_ROW_CAP, force: bool = False) -> float:
    """Smallest absolute cosine between two distinct rows.

    Costs O(m^2) row products, hence the row cap. Raises
    ``PairwiseDependentRows`` when two rows are parallel to 1e-12.
    """
    if sys.m > cap and not force:
        raise SizeCapExceeded(f"delta needs m <= {cap} (m = {sys.m}); pass force=True")
    U = _normalized_rows(sys)
    C = U @ U.T
    C = np.abs(C.toarray() if sp.issparse(C) else C)
    np.fill_diagonal(C, np.nan)
    worst = np.nanargmax(C)
    i, j = divmod(int(worst), sys.m)
    if C[i, j] >= PARALLEL_COSINE:
        raise PairwiseDependentRows(min(i, j), max(i, j), float(C[i, j]))
    return float(np.nanmin(C))


@dataclass(frozen=True)
class CoherenceSummary:
    gamma1: float
    gamma2: float
    delta: float


def coherence(sys: LinearSystem, *, cap: int = DELTA_ROW_CAP, force: bool = False) -> CoherenceSummary:
    g1, g2 = gammas(sys)
    return CoherenceSummary(g1, g2, delta(sys, cap=cap, force=force))


@dataclass(frozen=True, eq=False)
class SpectralSummary:
    """Extreme nonzero singular values, rank and the projection of ``x0`` onto
    the solution set, ``x_star = A^+ b + (I - A^+ A) x0``."""

    sigma_min_sq: float
    sigma_max: float
    rank: int
    x_star: np.ndarray
    row_space: np.ndarray = field(repr=False)

    def range_defect(self, v) -> float:
        """Norm of the component of ``v`` orthogonal to Range(A^T)."""
        v = np.asarray(v, dtype=float)
        return float(np.linalg.norm(v - self.row_space @ (self.row_space.T @ v)))


def spectral_summary(sys: LinearSystem, x0=None, *, cap: int = SVD_CAP, tol: float = 1e-10) -> SpectralSummary:
    """Dense SVD of ``A``; raises ``InconsistentSystem`` if ``A x_star != b``."""
    m, n = sys.shape
    if min(m, n) > cap:
        raise SizeCapExceeded(f"dense SVD needs min(m, n) <= {cap}")
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        raise DimensionMismatch(f"x0 has shape {x0.shape}, expected ({n},)")

    U, s, Vt = np.linalg.svd(sys.dense(), full_matrices=False)
    cutoff = s[0] * max(m, n) * np.finfo(float).eps
    rank = int(np.count_nonzero(s > cutoff))
    U, s, V = U[:, :rank], s[:rank], Vt[:rank].T

    x_star = V @ ((U.T @ sys.b) / s) + (x0 - V @ (V.T @ x0))
    res = np.linalg.norm(sys.matvec(x_star) - sys.b)
    if res > tol * max(1.0, float(np.linalg.norm(sys.b))):
        raise InconsistentSystem(f"||A x_star - b|| = {res:.3e}; the system is not consistent")
    return SpectralSummary(
        sigma_min_sq=float(s[-1] ** 2),
        sigma_max=float(s[0]),
        rank=rank,
        x_star=x_star,
        row_space=V,
    )
