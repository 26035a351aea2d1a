import sys

import numpy as np
import pytest
from hypothesis import settings, strategies as st
from hypothesis.extra import numpy as hnp

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_pos = st.floats(min_value=1e-3, max_value=1.0, allow_nan=False)


@st.composite
def stochastic_matrices(draw, min_dim=2, max_dim=4, cols=None):
    X = draw(st.integers(min_dim, max_dim))
    n = X if cols is None else draw(st.integers(*cols))
    M = draw(hnp.arrays(np.float64, (X, n), elements=_pos))
    return M / M.sum(axis=1, keepdims=True)


@st.composite
def beliefs(draw, dim):
    v = draw(hnp.arrays(np.float64, (dim,), elements=_pos))
    return v / v.sum()


@st.composite
def pmf_pairs(draw, min_dim=2, max_dim=6):
    n = draw(st.integers(min_dim, max_dim))
    p = draw(hnp.arrays(np.float64, (n,), elements=_pos))
    q = draw(hnp.arrays(np.float64, (n,), elements=_pos))
    return p / p.sum(), q / q.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
