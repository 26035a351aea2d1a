import numpy as np
import pytest
from scipy.optimize import linprog

from pomdpkit.errors import DimensionMismatch, InputError
from pomdpkit.lp import LpProblem, LpStatus, feasibility_residual, linprog_like, solve_lp


class TestExamples:
    def test_bounded_max(self):
        res = linprog_like([1.0], A_ub=[[1.0]], b_ub=[1.0], sense="max")
        assert res.status is LpStatus.OPTIMAL
        assert res.x[0] == pytest.approx(1.0, abs=1e-12)
        assert res.objective == pytest.approx(1.0, abs=1e-12)

    def test_infeasible(self):
        assert linprog_like([1.0], A_ub=[[1.0]], b_ub=[-1.0]).status is LpStatus.INFEASIBLE

    def test_unbounded(self):
        assert linprog_like([1.0], sense="max").status is LpStatus.UNBOUNDED
        assert not linprog_like([1.0], sense="max").ok

    def test_free_and_boxed_variables(self):
        # min x0 + x1 with x0 free, x0 >= -3 via a row, x1 in [2, 5]
        res = linprog_like([1.0, 1.0], A_ub=[[-1.0, 0.0]], b_ub=[3.0], bounds=[(None, None), (2.0, 5.0)])
        np.testing.assert_allclose(res.x, [-3.0, 2.0], atol=1e-12)

    def test_upper_only_bound(self):
        res = linprog_like([-1.0], bounds=[(None, 4.0)])
        assert res.x[0] == pytest.approx(4.0)

    def test_degenerate_cycling_example(self):
        # classic Beale problem; Bland's rule must terminate
        c = [-0.75, 150.0, -0.02, 6.0]
        A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
        res = linprog_like(c, A_ub=A, b_ub=[0.0, 0.0, 1.0])
        assert res.ok
        assert res.objective == pytest.approx(-0.05, abs=1e-10)

    def test_redundant_equalities(self):
        res = linprog_like([1.0, 2.0], A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 2.0])
        assert res.ok and res.objective == pytest.approx(1.0)

    def test_validation(self):
        with pytest.raises(DimensionMismatch):
            LpProblem([1.0, 2.0], A_ub=[[1.0]], b_ub=[1.0])
        with pytest.raises(InputError):
            LpProblem([np.inf])
        with pytest.raises(InputError):
            LpProblem([1.0], sense="maximise")


def _random_lp(g):
    n = int(g.integers(1, 7))
    mu = int(g.integers(0, 6))
    me = int(g.integers(0, 3))
    c = g.normal(size=n)
    A_ub = g.normal(size=(mu, n)) if mu else None
    b_ub = g.normal(size=mu) + 1.0 if mu else None
    A_eq = g.normal(size=(me, n)) if me else None
    b_eq = g.normal(size=me) if me else None
    bounds = []
    for _ in range(n):
        kind = g.integers(4)
        if kind == 0:
            bounds.append((0.0, None))
        elif kind == 1:
            bounds.append((float(g.uniform(-2, 0)), float(g.uniform(0, 3))))
        elif kind == 2:
            bounds.append((None, float(g.uniform(-1, 2))))
        else:
            bounds.append((None, None))
    return c, A_ub, b_ub, A_eq, b_eq, bounds


def test_against_reference_solver():
    g = np.random.default_rng(7)
    codes = {0: LpStatus.OPTIMAL, 2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}
    for _ in range(300):
        c, A_ub, b_ub, A_eq, b_eq, bounds = _random_lp(g)
        # HiGHS presolve can label unbounded models infeasible, so it is switched off
        ref = linprog(c, A_ub, b_ub, A_eq, b_eq, bounds, method="highs", options={"presolve": False})
        p = LpProblem(c, A_ub, b_ub, A_eq, b_eq, bounds)
        got = solve_lp(p)
        assert got.status is codes[ref.status]
        if got.ok:
            assert got.objective == pytest.approx(ref.fun, abs=1e-8)
            assert feasibility_residual(p, got.x) <= 1e-8


def test_unbounded_despite_presolve_verdict():
    # feasible at zero cost and has the recession direction (0, 0, -1, -1)
    c = [1.07043052, 0.77572402, 1.21791581, 0.58035863]
    A = [[-0.79466574, -0.15963278, 0.87537967, -0.40694159],
         [2.91997298, -0.24230223, -0.58638936, 1.14890274]]
    b = [1.74773774, 0.97207428]
    bounds = [(-0.90707090, 2.72848138), (-0.80004403, 0.91447902), (None, -0.01277463), (None, 0.66564563)]
    assert linprog_like(c, A, b, bounds=bounds).status is LpStatus.UNBOUNDED
    assert linprog_like(np.zeros(4), A, b, bounds=bounds).ok
    d = np.array([0.0, 0.0, -1.0, -1.0])
    assert np.all(np.asarray(A) @ d <= 0) and np.dot(c, d) < 0


def test_max_sense_negates():
    g = np.random.default_rng(3)
    for _ in range(50):
        n = 3
        A = g.uniform(0.1, 1.0, (4, n))
        b = g.uniform(1.0, 2.0, 4)
        c = g.normal(size=n)
        lo = linprog_like(-c, A_ub=A, b_ub=b)
        hi = linprog_like(c, A_ub=A, b_ub=b, sense="max")
        assert hi.objective == pytest.approx(-lo.objective, abs=1e-9)
