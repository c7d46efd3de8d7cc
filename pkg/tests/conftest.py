from pathlib import Path

import numpy as np
import pytest

from kacz.linalg import build_system

DATA = Path(__file__).parent / "data"

_criteria: dict[int, dict] = {}


@pytest.fixture
def tri():
    """The 3x2 system with rows (1,0), (0,1), (1,1) and solution (1,2)."""
    return build_system(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0, 3.0]))


def gaussian_system(seed, m, n, *, sparse=False):
    from kacz.ingest import planted_problem

    A = np.random.default_rng(seed).standard_normal((m, n))
    if sparse:
        import scipy.sparse as sp

        A = sp.csr_matrix(A)
    return planted_problem(A, seed).sys


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "outcomes": []})
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        entry["outcomes"].append("skipped" if rep.skipped else ("passed" if rep.passed else "failed"))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        outs = entry["outcomes"]
        if "failed" in outs:
            status = "FAIL"
        elif outs and all(o == "skipped" for o in outs):
            status = "SKIP"
        else:
            status = "PASS"
        tr.write_line(f"criterion {number}: {status:4}  {entry['title']}")
