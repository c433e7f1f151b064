import re

import numpy as np
import pytest

from gagbias import FitConfig, IndependenceOmega, ModelParams, fit_em, fit_emb, fit_prior
from gagbias.fileio import load_fixture


@pytest.fixture(scope="session")
def table2():
    return load_fixture("table2")


@pytest.fixture(scope="session")
def table3():
    return load_fixture("table3")


@pytest.fixture(scope="session")
def table9():
    return load_fixture("table9")


@pytest.fixture(scope="session")
def table12():
    return load_fixture("table12")


@pytest.fixture(scope="session")
def reference():
    return FitConfig.reference()


@pytest.fixture(scope="session")
def prior9(table9, reference):
    return fit_prior(table9, reference)


@pytest.fixture(scope="session")
def fit10(table2, prior9, reference):
    return fit_emb(table2, prior9, reference)


@pytest.fixture(scope="session")
def fit13(table3, table12, reference):
    return fit_emb(table3, fit_prior(table12, reference), reference)


@pytest.fixture(scope="session")
def fit9(table9, reference):
    return fit_em(table9, reference)


@pytest.fixture
def simple_params():
    return ModelParams(
        pi=0.7,
        tau=0.6,
        rho=0.15,
        delta=0.08,
        omega=IndependenceOmega([0.002, 0.003, 0.006, 0.001, 0.988], [0.24, 0.76]),
    )


_CRITERION = re.compile(r"test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter):
    rows = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" and outcome != "error":
                continue
            m = _CRITERION.search(rep.nodeid)
            if m:
                key = int(m.group(1))
                status = "PASS" if outcome == "passed" else "FAIL"
                if rows.get(key) != "FAIL":
                    rows[key] = status
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(rows):
        terminalreporter.write_line(f"criterion {key}: {rows[key]}")
