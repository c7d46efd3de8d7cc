"""MatrixMarket I/O, synthetic test problems and trace serialization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO, Union

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, UnsupportedField
from .linalg import LinearSystem, build_system

_FORMATS = ("coordinate", "array")
_FIELDS = ("real", "double", "integer", "pattern")
_SYMMETRIES = ("general", "symmetric", "skew-symmetric")

# synthetic problems draw from a stream disjoint from the solver's default_rng(seed)
_PROBLEM_STREAM = 0x4B41435A


def _data_lines(lines: Iterable[str], start: int):
    for no, line in enumerate(lines, start):
        s = line.strip()
        if s and not s.startswith("%"):
            yield no, s


def parse_matrix_market(stream: TextIO):
    """Read a MatrixMarket matrix from a text stream.

    Coordinate files give a CSR matrix (duplicates summed, symmetric halves
    mirrored, pattern entries set to 1.0); array files give a dense ndarray.
    Indices in the file are 1-based.
    """
    lines = iter(stream)
    header = next(lines, None)
    if header is None:
        raise ParseError(1, "empty file")
    tok = header.strip().split()
    if len(tok) != 5 or tok[0].lower() != "%%matrixmarket" or tok[1].lower() != "matrix":
        raise ParseError(1, f"bad header {header.strip()!r}")
    fmt, fld, sym = (t.lower() for t in tok[2:])
    if fld in ("complex", "hermitian") or sym == "hermitian":
        raise UnsupportedField(f"{fld} {sym} matrices are not supported")
    if fmt not in _FORMATS:
        raise ParseError(1, f"unknown format {fmt!r}")
    if fld not in _FIELDS:
        raise ParseError(1, f"unknown field {fld!r}")
    if sym not in _SYMMETRIES:
        raise ParseError(1, f"unknown symmetry {sym!r}")
    if fmt == "array" and fld == "pattern":
        raise ParseError(1, "pattern field needs coordinate format")

    body = _data_lines(lines, 2)
    try:
        no, size = next(body)
    except StopIteration:
        raise ParseError(2, "missing size line") from None
    try:
        dims = [int(v) for v in size.split()]
    except ValueError:
        raise ParseError(no, f"bad size line {size!r}") from None
    want = 3 if fmt == "coordinate" else 2
    if len(dims) != want or min(dims) < 0:
        raise ParseError(no, f"size line needs {want} non-negative integers")
    m, n = dims[0], dims[1]
    if sym != "general" and m != n:
        raise ParseError(no, f"{sym} matrix must be square")

    if fmt == "coordinate":
        return _read_coordinate(body, m, n, dims[2], fld, sym)
    return _read_array(body, m, n, sym)


def _read_coordinate(body, m, n, nnz, fld, sym):
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.ones(nnz)
    ncol = 2 if fld == "pattern" else 3
    count = 0
    last = 2
    for no, s in body:
        last = no
        if count == nnz:
            raise ParseError(no, f"more than the declared {nnz} entries")
        parts = s.split()
        if len(parts) != ncol:
            raise ParseError(no, f"expected {ncol} fields, got {len(parts)}")
        try:
            i, j = int(parts[0]), int(parts[1])
            if ncol == 3:
                vals[count] = float(parts[2])
        except ValueError:
            raise ParseError(no, f"bad entry {s!r}") from None
        if not (1 <= i <= m and 1 <= j <= n):
            raise ParseError(no, f"index ({i}, {j}) outside {m}x{n}")
        if sym != "general" and j > i:
            raise ParseError(no, f"{sym} storage expects the lower triangle, got ({i}, {j})")
        if sym == "skew-symmetric" and i == j:
            raise ParseError(no, "skew-symmetric storage has no diagonal")
        rows[count], cols[count] = i - 1, j - 1
        count += 1
    if count != nnz:
        raise ParseError(last, f"declared {nnz} entries, found {count}")

    if sym != "general":
        off = rows != cols
        sign = -1.0 if sym == "skew-symmetric" else 1.0
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, sign * vals[off]]),
        )
    A = sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _read_array(body, m, n, sym):
    if sym == "general":
        slots = [(i, j) for j in range(n) for i in range(m)]
    else:
        lo = 0 if sym == "symmetric" else 1
        slots = [(i, j) for j in range(n) for i in range(j + lo, m)]
    A = np.zeros((m, n))
    count = 0
    last = 2
    for no, s in body:
        last = no
        for v in s.split():
            if count == len(slots):
                raise ParseError(no, f"more than the expected {len(slots)} values")
            try:
                A[slots[count]] = float(v)
            except ValueError:
                raise ParseError(no, f"bad value {v!r}") from None
            count += 1
    if count != len(slots):
        raise ParseError(last, f"expected {len(slots)} values, found {count}")
    if sym != "general":
        sign = -1.0 if sym == "skew-symmetric" else 1.0
        A = A + sign * np.tril(A, -1).T
    return A


def read_matrix_market(path):
    with open(path, "r", encoding="ascii") as fh:
        return parse_matrix_market(fh)


def write_matrix_market(A, stream: TextIO, comment: str | None = None) -> None:
    """Write sparse input as ``coordinate real general`` and dense input as
    ``array real general``, values at 17 significant digits."""
    sparse = sp.issparse(A)
    kind = "coordinate" if sparse else "array"
    stream.write(f"%%MatrixMarket matrix {kind} real general\n")
    if comment:
        for line in comment.splitlines():
            stream.write(f"% {line}\n")
    if sparse:
        C = sp.csr_matrix(A)
        C.sort_indices()
        m, n = C.shape
        stream.write(f"{m} {n} {C.nnz}\n")
        for i in range(m):
            for p in range(C.indptr[i], C.indptr[i + 1]):
                stream.write(f"{i + 1} {C.indices[p] + 1} {C.data[p]:.17g}\n")
    else:
        D = np.atleast_2d(np.asarray(A, dtype=float))
        m, n = D.shape
        stream.write(f"{m} {n}\n")
        for v in D.T.ravel():
            stream.write(f"{v:.17g}\n")


def choose_storage(A):
    """Dense when density > 25% or n <= 64, CSR otherwise."""
    m, n = A.shape
    nnz = A.nnz if sp.issparse(A) else np.count_nonzero(A)
    if nnz > 0.25 * m * n or n <= 64:
        return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    return sp.csr_matrix(A)


@dataclass(frozen=True)
class SyntheticSpec:
    """Entries of ``A`` i.i.d. uniform on ``[t, 1]``."""

    m: int
    n: int
    t: float
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be >= 1")
        if not 0.0 <= self.t < 1.0:
            raise ValueError("t must lie in [0, 1)")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "SyntheticSpec":
        """From ``"m=100,n=100,t=0.5"``."""
        kv = {}
        for item in text.split(","):
            if "=" not in item:
                raise ValueError(f"expected key=value, got {item!r}")
            key, value = item.split("=", 1)
            kv[key.strip()] = value.strip()
        unknown = set(kv) - {"m", "n", "t", "seed"}
        if unknown or not {"m", "n", "t"} <= set(kv):
            raise ValueError(f"synthetic spec needs m, n, t (got {text!r})")
        return cls(int(kv["m"]), int(kv["n"]), float(kv["t"]), int(kv.get("seed", seed)))


@dataclass(frozen=True, eq=False)
class ProblemBundle:
    sys: LinearSystem
    x_star_gen: np.ndarray
    provenance: Union[SyntheticSpec, Path]


def problem_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([_PROBLEM_STREAM, int(seed)])


def generate_synthetic(spec: SyntheticSpec) -> ProblemBundle:
    rng = problem_rng(spec.seed)
    A = spec.t + (1.0 - spec.t) * rng.random((spec.m, spec.n))
    x = rng.standard_normal(spec.n)
    A = choose_storage(A)
    return ProblemBundle(build_system(A, A @ x), x, spec)


def planted_problem(A, seed: int, provenance=None) -> ProblemBundle:
    """Consistent system ``b = A x`` with a standard normal planted ``x``."""
    A = choose_storage(A)
    x = problem_rng(seed).standard_normal(A.shape[1])
    return ProblemBundle(build_system(A, np.asarray(A @ x).ravel()), x, provenance)


TRACE_HEADER = ("k", "index", "epsilon", "iset_size", "beta", "rse", "res_norm_sq")


def _g17(v) -> str:
    return f"{float(v):.17g}"


def write_trace_csv(trace, stream: TextIO) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for row in zip(trace.k, trace.index, trace.epsilon, trace.iset_size, trace.beta, trace.rse, trace.res_norm_sq):
        k, i, eps, size, beta, rse, nr = row
        w.writerow((k, i, _g17(eps), size, _g17(beta), _g17(rse), _g17(nr)))


def read_trace_csv(stream: TextIO) -> list[dict]:
    out = []
    for rec in csv.DictReader(stream):
        out.append({
            key: int(val) if key in ("k", "index", "iset_size") else float(val)
            for key, val in rec.items()
        })
    return out


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, np.generic):
        return _json_safe(v.item())
    return v


def trace_summary(trace) -> dict:
    return {
        "variant": trace.variant,
        "seed": trace.seed,
        "iters": len(trace),
        "cpu_seconds": trace.cpu_seconds,
        "final_rse": trace.final_rse,
    }


def write_summary_json(report: dict, stream: TextIO) -> None:
    """Non-finite floats are written as null."""
    json.dump(_json_safe(report), stream, indent=2)
    stream.write("\n")
