import io
import json
import math

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA
from kacz.errors import ParseError, UnsupportedField
from kacz.ingest import (
    TRACE_HEADER,
    SyntheticSpec,
    choose_storage,
    generate_synthetic,
    parse_matrix_market,
    planted_problem,
    read_matrix_market,
    read_trace_csv,
    trace_summary,
    write_matrix_market,
    write_summary_json,
    write_trace_csv,
)
from kacz.linalg import delta
from kacz.solvers import IterationTrace, RunConfig, run

CORPUS = sorted((DATA / "mtx").glob("*.mtx"))


def parse(text):
    return parse_matrix_market(io.StringIO(text))


def as_dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def test_corpus_size():
    assert len(CORPUS) == 20


@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.stem)
def test_corpus_against_scipy(path):
    ours = read_matrix_market(path)
    ref = scipy.io.mmread(str(path))
    assert sp.issparse(ours) == sp.issparse(ref)
    np.testing.assert_array_equal(as_dense(ours), as_dense(ref).astype(float))


@pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.stem)
def test_corpus_round_trip(path):
    A = read_matrix_market(path)
    buf = io.StringIO()
    write_matrix_market(A, buf)
    B = parse(buf.getvalue())
    assert sp.issparse(A) == sp.issparse(B)
    if sp.issparse(A):
        assert (A.indptr.tolist(), A.indices.tolist()) == (B.indptr.tolist(), B.indices.tolist())
        np.testing.assert_array_equal(A.data, B.data)
    else:
        np.testing.assert_array_equal(A, B)
    again = io.StringIO()
    write_matrix_market(B, again)
    assert again.getvalue() == buf.getvalue()


class TestParser:
    def test_small_coordinate(self):
        text = "%%MatrixMarket matrix coordinate real general\n3 2 4\n1 1 1\n2 2 1\n3 1 1\n3 2 1\n"
        A = parse(text)
        assert sp.isspmatrix_csr(A) and A.nnz == 4
        buf = io.StringIO()
        write_matrix_market(A, buf)
        assert buf.getvalue().split() == text.split()

    def test_symmetric_expansion(self):
        A = parse("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 4\n2 1 3\n")
        assert A.toarray().tolist() == [[4.0, 3.0], [3.0, 0.0]]

    def test_duplicates_summed(self):
        A = parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 2 1.0\n1 2 2.0\n")
        assert A.nnz == 1 and A[0, 1] == 3.0

    def test_pattern(self):
        A = parse("%%MatrixMarket matrix coordinate pattern general\n2 3 2\n1 3\n2 1\n")
        assert A.toarray().tolist() == [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]

    def test_skew(self):
        A = parse("%%MatrixMarket matrix coordinate real skew-symmetric\n2 2 1\n2 1 5\n")
        assert A.toarray().tolist() == [[0.0, -5.0], [5.0, 0.0]]

    def test_array_column_major(self):
        A = parse("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n")
        assert A.tolist() == [[1.0, 3.0], [2.0, 4.0]]

    @pytest.mark.parametrize("text, line", [
        ("", 1),
        ("%%MatrixMarket tensor coordinate real general\n1 1 0\n", 1),
        ("%%MatrixMarket matrix banded real general\n1 1 0\n", 1),
        ("%%MatrixMarket matrix coordinate real general\n% c\n", 2),
        ("%%MatrixMarket matrix coordinate real general\n2 x 1\n", 2),
        ("%%MatrixMarket matrix coordinate real general\n2 2\n", 2),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n% note\n2 2 zz\n", 5),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1.0\n2 2 1.0\n", 4),
        ("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n2 2 1.0\n", 4),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1\n", 3),
        ("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1.0\n", 3),
        ("%%MatrixMarket matrix coordinate real symmetric\n2 3 0\n", 2),
        ("%%MatrixMarket matrix coordinate real skew-symmetric\n2 2 1\n1 1 1.0\n", 3),
        ("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n", 5),
        ("%%MatrixMarket matrix array pattern general\n2 2\n", 1),
    ])
    def test_errors_carry_line(self, text, line):
        with pytest.raises(ParseError) as exc:
            parse(text)
        assert exc.value.line == line

    @pytest.mark.parametrize("header", [
        "%%MatrixMarket matrix coordinate complex general",
        "%%MatrixMarket matrix coordinate real hermitian",
    ])
    def test_unsupported(self, header):
        with pytest.raises(UnsupportedField):
            parse(header + "\n1 1 1\n1 1 1 0\n")

    @given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 12), st.floats(0.05, 0.9))
    @settings(max_examples=50, deadline=None)
    def test_write_parse_identity(self, seed, m, n, density):
        rng = np.random.default_rng(seed)
        A = sp.random(m, n, density=density, random_state=rng, format="csr",
                      data_rvs=lambda k: rng.standard_normal(k) * 10.0 ** rng.integers(-300, 300, k))
        buf = io.StringIO()
        write_matrix_market(A, buf)
        B = parse(buf.getvalue())
        assert (B != A).nnz == 0
        dense = A.toarray()
        buf = io.StringIO()
        write_matrix_market(dense, buf)
        np.testing.assert_array_equal(parse(buf.getvalue()), dense)


class TestStorage:
    def test_dense_when_narrow(self):
        assert isinstance(choose_storage(sp.identity(64, format="csr")), np.ndarray)

    def test_sparse_when_wide_and_sparse(self):
        assert sp.isspmatrix_csr(choose_storage(sp.identity(100, format="coo")))

    def test_dense_when_full(self):
        assert isinstance(choose_storage(sp.csr_matrix(np.ones((10, 100)))), np.ndarray)


class TestSynthetic:
    def test_coherent_regime(self):
        b = generate_synthetic(SyntheticSpec(100, 100, 0.9, seed=3))
        A = b.sys.dense()
        assert A.min() >= 0.9 and A.max() <= 1.0
        assert delta(b.sys) > 0.98

    def test_t_zero(self):
        A = generate_synthetic(SyntheticSpec(20, 10, 0.0, seed=1)).sys.dense()
        assert A.min() >= 0.0 and A.max() <= 1.0

    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(30, 20, 0.5, seed=11))
        b = generate_synthetic(SyntheticSpec(30, 20, 0.5, seed=11))
        np.testing.assert_array_equal(a.sys.dense(), b.sys.dense())
        np.testing.assert_array_equal(a.sys.b, b.sys.b)
        c = generate_synthetic(SyntheticSpec(30, 20, 0.5, seed=12))
        assert not np.array_equal(a.sys.b, c.sys.b)

    def test_consistent_by_construction(self):
        bundle = generate_synthetic(SyntheticSpec(40, 25, 0.3, seed=2))
        assert np.array_equal(bundle.sys.dense() @ bundle.x_star_gen, bundle.sys.b)

    def test_planted(self):
        A = sp.random(50, 80, density=0.05, random_state=0, format="csr") + sp.eye(50, 80, format="csr")
        bundle = planted_problem(A, seed=4, provenance="x.mtx")
        assert bundle.sys.is_sparse
        assert np.array_equal(bundle.sys.A @ bundle.x_star_gen, bundle.sys.b)

    def test_spec_parse(self):
        assert SyntheticSpec.parse("m=100,n=50,t=0.5", 7) == SyntheticSpec(100, 50, 0.5, 7)
        assert SyntheticSpec.parse("m=4, n=3, t=0, seed=9").seed == 9
        for bad in ("m=1,n=2", "m=1,n=2,t=0.1,q=3", "m=1;n=2;t=0"):
            with pytest.raises(ValueError):
                SyntheticSpec.parse(bad)
        for kw in ({"m": 0, "n": 1, "t": 0.1}, {"m": 2, "n": 2, "t": 1.0}, {"m": 2, "n": 2, "t": -0.1}):
            with pytest.raises(ValueError):
                SyntheticSpec(**kw)


class TestTraceOutput:
    def golden_trace(self, tri):
        return run(tri, RunConfig(rule="argmax"), x_star=[1.0, 2.0])

    def test_csv_lines(self, tri):
        tr = self.golden_trace(tri)
        buf = io.StringIO()
        write_trace_csv(tr, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == ",".join(TRACE_HEADER)
        assert len(lines) == len(tr) + 1
        assert lines[1].split(",")[:2] == ["0", "2"]

    def test_empty_trace(self):
        buf = io.StringIO()
        write_trace_csv(IterationTrace("gmirk", 0, "residual"), buf)
        assert buf.getvalue() == ",".join(TRACE_HEADER) + "\n"

    def test_csv_round_trip_exact(self, tri):
        tr = self.golden_trace(tri)
        buf = io.StringIO()
        write_trace_csv(tr, buf)
        rows = read_trace_csv(io.StringIO(buf.getvalue()))
        assert [r["epsilon"] for r in rows] == tr.epsilon
        assert [r["beta"] for r in rows] == tr.beta
        assert [r["index"] for r in rows] == tr.index

    def test_summary_round_trip(self, tri):
        tr = self.golden_trace(tri)
        buf = io.StringIO()
        summary = trace_summary(tr)
        write_summary_json(summary, buf)
        assert json.loads(buf.getvalue()) == summary
        assert set(summary) == {"variant", "seed", "iters", "cpu_seconds", "final_rse"}

    def test_json_nan_is_null(self):
        buf = io.StringIO()
        write_summary_json({"a": math.nan, "b": [np.float64(1.5), math.inf]}, buf)
        assert json.loads(buf.getvalue()) == {"a": None, "b": [1.5, None]}
