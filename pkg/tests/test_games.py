import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from pomdpkit.errors import DegenerateState, DimensionMismatch, InertiaTooSmall, UnboundedDensity
from pomdpkit.games import (
    GaussianNoise,
    SingleControllerGame,
    UniformNoise,
    best_response_player1,
    best_response_player2,
    bne_monotone_condition,
    canonical_games,
    ce_violation,
    correlated_eq_check,
    correlated_eq_find,
    deviation_gaps,
    inertia_bound,
    matching_pennies,
    matrix_game_value,
    policy_value,
    regret_matching_run,
    saddle_gaps,
    single_controller_solve,
)
from pomdpkit.markov import random_stochastic


def random_game(g, X=None, U1=None, U2=None, rho=None):
    X = X or int(g.integers(1, 5))
    U1 = U1 or int(g.integers(1, 4))
    U2 = U2 or int(g.integers(1, 4))
    P = np.stack([random_stochastic(X, g) for _ in range(U1)])
    return SingleControllerGame(P, g.normal(size=(X, U1, U2)), rho or float(g.uniform(0.5, 0.95)))


class TestMatrixGame:
    def test_matching_pennies(self):
        v, x, y = matrix_game_value([[1, -1], [-1, 1]])
        assert abs(v) <= 1e-8
        np.testing.assert_allclose(x, 0.5, atol=1e-8)
        np.testing.assert_allclose(y, 0.5, atol=1e-8)

    def test_constant_and_zero_row(self):
        assert matrix_game_value(np.full((3, 2), 2.5))[0] == pytest.approx(2.5)
        assert matrix_game_value([[1, 0], [0, 0]])[0] == pytest.approx(0.0, abs=1e-12)

    @given(hnp.arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
                      elements=st.floats(-5, 5)))
    def test_guarantees(self, M):
        v, x, y = matrix_game_value(M)
        assert (M @ x).min() == pytest.approx(v, abs=1e-8)
        assert (y @ M).max() == pytest.approx(v, abs=1e-8)
        assert x.min() >= 0 and y.min() >= 0

    def test_player_swap_antisymmetry(self, rng):
        for _ in range(200):
            M = rng.normal(size=(int(rng.integers(1, 5)), int(rng.integers(1, 5))))
            assert matrix_game_value(M)[0] == pytest.approx(-matrix_game_value(-M.T)[0], abs=1e-7)


class TestSingleController:
    def test_no_decisions_closed_form(self, rng):
        P = random_stochastic(3, rng)
        c = rng.normal(size=3)
        game = SingleControllerGame(P[None], c[:, None, None], 0.9)
        sol = single_controller_solve(game)
        np.testing.assert_allclose(sol.V, np.linalg.solve(np.eye(3) - 0.9 * P, c), atol=1e-9)

    def test_mdp_case(self, rng):
        X, U1, rho = 4, 3, 0.85
        P = np.stack([random_stochastic(X, rng) for _ in range(U1)])
        cost = rng.normal(size=(X, U1))
        game = SingleControllerGame(P, np.repeat(cost[:, :, None], 2, axis=2), rho)
        V = np.zeros(X)
        for _ in range(2000):
            V = (cost + rho * np.einsum("uij,j->iu", P, V)).min(axis=1)
        sol = single_controller_solve(game)
        np.testing.assert_allclose(sol.V, V, atol=1e-8)
        np.testing.assert_allclose(sol.q.sum(axis=1), 1.0)

    def test_duality_and_saddle(self, rng):
        for _ in range(20):
            game = random_game(rng)
            sol = single_controller_solve(game)
            assert sol.duality_gap <= 1e-6
            g1, g2 = saddle_gaps(game, sol)
            assert g1 <= 1e-6 and g2 <= 1e-6
            np.testing.assert_allclose(sol.p.sum(axis=1), 1.0)
            # both policies fixed: value equals V
            np.testing.assert_allclose(policy_value(game, sol.p, sol.q), sol.V, atol=1e-6)

    def test_best_responses_improve_on_bad_policies(self, rng):
        game = random_game(rng, 3, 2, 2)
        unif1 = np.full((3, 2), 0.5)
        unif2 = np.full((3, 2), 0.5)
        V = policy_value(game, unif1, unif2)
        V1, _ = best_response_player1(game, unif2)
        V2, _ = best_response_player2(game, unif1)
        assert np.all(V1 <= V + 1e-12) and np.all(V2 >= V - 1e-12)

    def test_positive_alpha_reaches_every_state(self, rng):
        # occupation of state i is at least alpha_i, so no state is degenerate
        game = random_game(rng, 3, 2, 2)
        sol = single_controller_solve(game)
        assert sol.degenerate_states == ()
        assert np.all(sol.occupation.sum(axis=1) >= game.alpha - 1e-9)

    def test_strict_flag(self, rng, monkeypatch):
        import pomdpkit.games as games
        game = random_game(rng, 2, 2, 2)
        real = games.solve_lp

        def zero_first_state(p):
            res = real(p)
            if p.sense == "min":
                res.x[:2] = 0.0
            return res

        monkeypatch.setattr(games, "solve_lp", zero_first_state)
        assert games.single_controller_solve(game).degenerate_states == (0,)
        with pytest.raises(DegenerateState):
            games.single_controller_solve(game, strict=True)

    def test_shape_checks(self):
        with pytest.raises(DimensionMismatch):
            SingleControllerGame(np.eye(2)[None], np.zeros((2, 2, 1)), 0.9)


class TestCorrelated:
    def test_matching_pennies_uniform(self):
        r = matching_pennies()
        assert correlated_eq_check(np.full(4, 0.25), r)
        assert ce_violation(np.full(4, 0.25), r) == 0.0
        v = correlated_eq_check([1.0, 0, 0, 0], r)
        assert not v and v.witness[0] == 1

    def test_dominant_strategy_game(self):
        pd = canonical_games()["prisoners_dilemma"]
        assert correlated_eq_check([0, 0, 0, 1.0], pd)
        found = correlated_eq_find(pd)
        np.testing.assert_allclose(found, [0, 0, 0, 1.0], atol=1e-9)
        # point mass on mutual cooperation: each player gains 0.25 by defecting
        assert ce_violation([1.0, 0, 0, 0], pd) == pytest.approx(0.25)

    def test_violation_scales_linearly(self, rng):
        r = rng.normal(size=(2, 3, 3))
        z = rng.dirichlet(np.ones(9))
        assert ce_violation(z, 2 * r) == pytest.approx(2 * ce_violation(z, r))

    def test_single_action(self):
        assert correlated_eq_find(np.ones((2, 1, 1))).tolist() == [1.0]

    @given(st.integers(0, 2**31))
    def test_found_points_satisfy_check(self, seed):
        g = np.random.default_rng(seed)
        L = int(g.integers(2, 4))
        shape = tuple(int(g.integers(1, 4)) for _ in range(L))
        r = g.normal(size=(L,) + shape)
        pi = correlated_eq_find(r)
        assert pi.min() >= 0 and pi.sum() == pytest.approx(1.0)
        assert correlated_eq_check(pi, r, tol=1e-8)

    def test_gap_definition(self, rng):
        r = rng.normal(size=(2, 2, 3))
        pi = rng.dirichlet(np.ones(6)).reshape(2, 3)
        G = deviation_gaps(pi.ravel(), r)
        want = sum(pi[0, v] * (r[0, 1, v] - r[0, 0, v]) for v in range(3))
        assert G[0][0, 1] == pytest.approx(want)
        want = sum(pi[u, 2] * (r[1, u, 0] - r[1, u, 2]) for u in range(2))
        assert G[1][2, 0] == pytest.approx(want)


class TestRegretMatching:
    def test_zero_rewards_never_move(self):
        tr = regret_matching_run(np.zeros((2, 2, 2)), 0.01, 500, 0, u0=(1, 0))
        assert np.all(tr.joint == 2)
        assert np.all(tr.R == 0)

    def test_single_action_point_mass(self):
        tr = regret_matching_run(np.ones((2, 1, 1)), 0.05, 300, 0)
        np.testing.assert_allclose(tr.z, [1.0])

    def test_z_on_simplex_and_replay(self):
        r = canonical_games()["battle_of_sexes"]
        tr = regret_matching_run(r, 0.02, 2000, 4)
        zs = tr.z_trajectory(every=100)
        np.testing.assert_allclose(zs.sum(axis=1), 1.0)
        np.testing.assert_allclose(zs[-1], tr.z, atol=1e-12)
        assert tr.ce_violation[-1] == pytest.approx(ce_violation(tr.z, r), abs=1e-12)

    def test_inertia(self):
        r = canonical_games()["coordination"]
        assert inertia_bound(r) == 2.0
        with pytest.raises(InertiaTooSmall):
            regret_matching_run(r, 0.01, 10, 0, mu=1.0)

    @pytest.mark.parametrize("name", sorted(canonical_games()))
    def test_canonical_convergence(self, name):
        r = canonical_games()[name]
        tr = regret_matching_run(r, 0.01, 100_000, 11)
        assert tr.max_regret[-1] <= 0.05
        assert tr.ce_violation[-1] <= 0.05
        tail = tr.ce_violation[-10_000:]
        assert tail.max() <= 0.05

    def test_three_players(self):
        g = np.random.default_rng(2)
        r = g.uniform(0, 1, (3, 2, 2, 2))
        tr = regret_matching_run(r, 0.01, 50_000, 3)
        assert tr.z.shape == (8,)
        assert tr.max_regret[-1] <= 0.05


class TestGlobalGames:
    def test_uniform_threshold(self):
        v = bne_monotone_condition(UniformNoise(1.0), -1.9)
        assert v and v.witness == (-2.0,)

    def test_gaussian_threshold(self):
        v = bne_monotone_condition(GaussianNoise(1.0), -3.0)
        assert not v
        assert v.witness[0] == pytest.approx(-math.sqrt(2 * math.pi))

    def test_increasing_congestion(self):
        for noise in (UniformNoise(0.1), GaussianNoise(0.01), [0.2, 0.5, 0.3]):
            assert bne_monotone_condition(noise, 0.0)

    def test_dict_form_and_unbounded(self):
        assert bne_monotone_condition({"kind": "gaussian", "sigma": 2.0}, -5.0)
        with pytest.raises(UnboundedDensity):
            bne_monotone_condition(GaussianNoise(0.0), 0.0)
