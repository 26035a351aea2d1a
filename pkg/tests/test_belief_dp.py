import numpy as np
import pytest

from pomdpkit.belief_dp import (
    PomdpModel,
    ReplacementModel,
    SimplexGrid,
    budget_dp,
    concavity_defect,
    explicit_set_member,
    geometric_lifetimes,
    pomdp_belief_update,
    replacement_dp,
    stopping_set_analysis,
    tiger_model,
    unconstrained_reward_dp,
    value_iteration_grid,
)
from pomdpkit.errors import (
    BudgetExceedsHorizon,
    GridTooCoarse,
    NotStoppingProblem,
    ParameterOutOfRange,
)
from pomdpkit.hmm import HmmModel, filter_step
from pomdpkit.markov import random_stochastic
from pomdpkit.orders import is_submodular


def _random_pomdp(g, X, U, Y=2, discount=1.0):
    P = [random_stochastic(X, g) for _ in range(U)]
    B = []
    for _ in range(U):
        b = g.random((X, Y)) + 0.05
        B.append(b / b.sum(axis=1, keepdims=True))
    return PomdpModel(P, B, g.uniform(0, 1, (U, X)), discount)


def _stopping_model(g, X=2, stop=None, go=None):
    P = random_stochastic(X, g)
    b = g.random((X, 2)) + 0.05
    b /= b.sum(axis=1, keepdims=True)
    c_stop = g.uniform(0, 2, X) if stop is None else stop
    c_go = g.uniform(0, 0.3, X) if go is None else go
    return PomdpModel([np.eye(X), P], [b, b], [c_stop, c_go])


class TestGrid:
    def test_size_and_membership(self):
        for X, R in [(2, 51), (3, 11), (4, 6)]:
            grid = SimplexGrid(X, R)
            from math import comb
            assert len(grid) == comb(R - 1 + X - 1, X - 1)
            np.testing.assert_allclose(grid.points.sum(axis=1), 1.0)
            assert grid.points.min() >= 0

    def test_interpolation_is_exact_on_linear_functions(self, rng):
        grid = SimplexGrid(3, 11)
        a = rng.normal(size=3)
        pts = rng.dirichlet(np.ones(3), 200)
        idx, w = grid.interpolation(pts, "linear")
        np.testing.assert_allclose((w * (grid.points @ a)[idx]).sum(axis=1), pts @ a, atol=1e-12)

    def test_coarse_grid_rejected(self):
        with pytest.raises(GridTooCoarse):
            value_iteration_grid(tiger_model(0.85, 0.5, 10, 100, 1), 2, 21)


class TestBeliefUpdate:
    def test_tiger_actions(self):
        m = tiger_model(0.85, 0.6, 10, 100, 1)
        pi = np.array([0.3, 0.7])
        new, _ = pomdp_belief_update(m, pi, 0, 2)
        u = np.array([0.85, 0.4]) * pi
        np.testing.assert_allclose(new, u / u.sum())
        for a in (0, 1):
            new, s = pomdp_belief_update(m, pi, 1, a)
            np.testing.assert_allclose(new, [0.0, 1.0])
            assert s == pytest.approx(0.5)

    def test_matches_hmm_filter(self, rng):
        m = _random_pomdp(rng, 3, 1, 3)
        h = HmmModel(m.P[0], m.B[0], np.full(3, 1 / 3))
        pi = rng.dirichlet(np.ones(3))
        for y in range(3):
            np.testing.assert_allclose(pomdp_belief_update(m, pi, y, 0)[0], filter_step(h, pi, y)[0], atol=1e-15)

    def test_tiger_parameters(self):
        with pytest.raises(ParameterOutOfRange):
            tiger_model(1.0, 0.5, 1, 1, 1)
        m = tiger_model(0.85, 0.5, 10, 100, 1)
        np.testing.assert_array_equal(m.B[0], np.eye(2))
        np.testing.assert_array_equal(m.P[2], np.eye(2))


class TestValueIteration:
    def test_one_step_is_myopic(self, rng):
        m = _random_pomdp(rng, 3, 3)
        v = value_iteration_grid(m, 1, 51)[1]
        np.testing.assert_allclose(v.values, (v.grid.points @ m.c.T).min(axis=1), atol=1e-12)
        assert np.all(v.grid.points @ m.c.T)  # finite

    def test_identical_actions(self, rng):
        m1 = _random_pomdp(rng, 2, 1)
        m2 = PomdpModel([m1.P[0]] * 2, [m1.B[0]] * 2, [m1.c[0]] * 2)
        a = value_iteration_grid(m1, 4, 101)[-1]
        b = value_iteration_grid(m2, 4, 101)[-1]
        np.testing.assert_allclose(a.values, b.values, atol=1e-12)
        assert np.all(b.policy == 0)

    @pytest.mark.parametrize("N", [1, 3, 6])
    def test_tiger_concave_and_symmetric(self, N):
        m = tiger_model(0.85, 0.85, 10, 100, 1)
        vals = value_iteration_grid(m, N, 101)
        for v in vals:
            assert concavity_defect(v.grid, v.values) >= -1e-9
        V = vals[-1].values
        np.testing.assert_allclose(V, V[::-1], atol=1e-9)
        pol = vals[-1].policy
        swap = np.array([1, 0, 2])
        mirrored = swap[pol[::-1]]
        off_centre = np.arange(len(pol)) != len(pol) // 2   # ties at (0.5, 0.5) go to action 0
        assert np.all(pol[off_centre] == mirrored[off_centre])

    def test_uninformative_hearing_is_never_chosen(self):
        m = tiger_model(0.5, 0.5, 10, 100, 1)
        v = value_iteration_grid(m, 5, 101)[-1]
        assert not np.any(v.policy == 2)

    def test_three_state_concave(self, rng):
        for _ in range(3):
            m = _random_pomdp(rng, 3, 2)
            for v in value_iteration_grid(m, 4, 51):
                assert concavity_defect(v.grid, v.values) >= -1e-9

    def test_min_cost_plugin(self, rng):
        m = _random_pomdp(rng, 3, 2)
        pieces = np.stack([np.tile(np.eye(3)[i], (2, 1)) for i in range(3)])
        vals = value_iteration_grid(m, 3, 51, cost_pieces=pieces)
        v1 = vals[1]
        want = (v1.grid.points @ m.c.T).min(axis=1) + v1.grid.points.min(axis=1)
        np.testing.assert_allclose(v1.values, want, atol=1e-12)
        for v in vals:
            assert concavity_defect(v.grid, v.values) >= -1e-9


class TestStopping:
    def test_nested_and_convex(self, rng):
        for _ in range(10):
            a = stopping_set_analysis(_stopping_model(rng), 6, 201)
            assert a.nested and a.convex

    def test_stop_sets_inside_one_step_set(self, rng):
        # V_n <= stopping cost, so stopping is never optimal outside S^o
        for _ in range(10):
            a = stopping_set_analysis(_stopping_model(rng), 20, 201)
            assert a.inside_explicit

    def test_three_states(self, rng):
        a = stopping_set_analysis(_stopping_model(rng, X=3), 4, 51)
        assert a.nested and a.convex

    def test_always_stop(self, rng):
        a = stopping_set_analysis(_stopping_model(rng, go=np.full(2, 100.0)), 3, 101)
        assert all(s.all() for s in a.stop_sets)
        a = stopping_set_analysis(_stopping_model(rng, stop=np.zeros(2)), 3, 101)
        assert all(s.all() for s in a.stop_sets)

    def test_explicit_set_when_closed(self):
        # stopping cost favours state 0 and the chain drifts there, so the one-step set is closed
        P = np.array([[1.0, 0.0], [0.3, 0.7]])
        B = np.array([[0.6, 0.4], [0.4, 0.6]])
        m = PomdpModel([np.eye(2), P], [B, B], [[0.0, 2.0], [0.2, 0.2]])
        a = stopping_set_analysis(m, 100, 201)
        assert a.closure_holds
        assert a.explicit_inside and a.inside_explicit
        assert a.matches_explicit
        assert explicit_set_member(m, [1.0, 0.0])

    def test_needs_two_actions(self, rng):
        with pytest.raises(NotStoppingProblem):
            stopping_set_analysis(_random_pomdp(rng, 2, 3), 2, 51)


class TestBudget:
    def _model(self, g):
        m = _random_pomdp(g, 2, 2)
        return PomdpModel(m.P, m.B, g.uniform(0, 1, (2, 2)), rewards=True)

    def test_full_budget_matches_unconstrained(self, rng):
        m = self._model(rng)
        res = budget_dp(m, 4, 4, 101)
        np.testing.assert_allclose(res.literal[4, 4], unconstrained_reward_dp(m, 4, 101), atol=1e-9)

    def test_monotone_in_budget(self, rng):
        res = budget_dp(self._model(rng), 3, 5, 101)
        for V in (res.literal, res.fallback):
            assert np.all(np.diff(V, axis=1) >= -1e-12)

    def test_boundaries(self, rng):
        m = self._model(rng)
        res = budget_dp(m, 0, 3, 101)
        assert np.all(res.literal == 0)
        only = PomdpModel([m.P[1]], [m.B[1]], [-m.c[1]], rewards=True)
        np.testing.assert_allclose(res.fallback[3, 0], unconstrained_reward_dp(only, 3, 101), atol=1e-9)

    def test_zero_rewards(self, rng):
        m = _random_pomdp(rng, 2, 2)
        z = PomdpModel(m.P, m.B, np.zeros((2, 2)), rewards=True)
        assert np.all(budget_dp(z, 2, 3, 51).literal == 0)

    def test_budget_exceeds_horizon(self, rng):
        with pytest.raises(BudgetExceedsHorizon):
            budget_dp(self._model(rng), 4, 3, 51)


class TestReplacement:
    def test_zero_horizon(self):
        rm = ReplacementModel([3.0, 2.0], geometric_lifetimes([0.2, 0.5], 10), 0)
        Q, V, pol = replacement_dp(rm)
        np.testing.assert_array_equal(Q[0], [3.0, 2.0])
        assert V[0] == 2.0 and pol[0] == 1

    def test_recursion_by_hand(self):
        p = np.array([[0.0, 0.5, 0.5]])
        Q, V, _ = replacement_dp(ReplacementModel([1.0], p, 3))
        # V0 = 1, V1 = 1 + 0.5 V0, V2 = 1 + 0.5 V1 + 0.5 V0, V3 = 1 + 0.5 V2 + 0.5 V1
        v = [1.0, 1.5, 2.25, 2.875]
        np.testing.assert_allclose(V, v)

    def test_single_brand_policy_constant(self):
        _, _, pol = replacement_dp(ReplacementModel([2.0], geometric_lifetimes([0.3], 40), 30))
        assert np.all(pol == 0)

    def test_geometric_structure_two_brands(self, rng):
        checked = 0
        while checked < 30:
            lam = np.sort(rng.uniform(0.05, 0.9, 2))[::-1]   # hazards decreasing in u
            c = np.sort(rng.uniform(1, 3, 2))                # costs increasing in u
            if not lam[1] * c[1] < lam[0] * c[0]:
                continue
            checked += 1
            Q, V, pol = replacement_dp(ReplacementModel(c, geometric_lifetimes(lam, 300), 60))
            assert is_submodular(Q)
            assert np.all(np.diff(pol) >= 0)
            assert np.all(np.diff(V) >= -1e-12)

    def test_three_brands_policy_monotone(self, rng):
        # Q itself need not be submodular once a third brand feeds V
        checked = 0
        while checked < 30:
            lam = np.sort(rng.uniform(0.05, 0.9, 3))[::-1]
            c = np.sort(rng.uniform(1, 3, 3))
            if not np.all(np.diff(lam * c) < 0):
                continue
            checked += 1
            _, V, pol = replacement_dp(ReplacementModel(c, geometric_lifetimes(lam, 300), 60))
            assert np.all(np.diff(pol) >= 0)
            assert np.all(np.diff(V) >= -1e-12)

    def test_validation(self):
        with pytest.raises(ParameterOutOfRange):
            ReplacementModel([0.0], [[0.0, 1.0]], 3)
        with pytest.raises(ParameterOutOfRange):
            ReplacementModel([1.0], [[0.5, 0.5]], 3)
