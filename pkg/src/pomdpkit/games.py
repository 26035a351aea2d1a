"""Equilibrium computation for static and single-controller Markov games.

Reward tensors for static games have shape ``(L, U_0, ..., U_{L-1})``:
``rewards[l][u]`` is player l's reward at the joint profile u.  Joint profiles
are flattened in C order, so player 0 is the most significant digit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import kernels
from .errors import (
    DegenerateState,
    DimensionMismatch,
    InertiaTooSmall,
    InputError,
    LpFailure,
    ParameterOutOfRange,
    UnboundedDensity,
)
from .lp import LpProblem, LpStatus, solve_lp
from .markov import as_generator, make_belief, make_stochastic
from .orders import OrderVerdict

CE_TOL = 1e-9


def _require(res, what):
    if res.status is not LpStatus.OPTIMAL:
        raise LpFailure(f"{what} LP returned {res.status.value}")
    return res


# -- matrix games ----------------------------------------------------------

def matrix_game_value(M):
    """Value of the zero-sum game paying ``y' M x``; x (columns) maximises, y (rows) minimises.

    Returns ``(value, x, y)``.  x comes from ``max z s.t. z <= (Mx)_i``, y from
    the dual problem ``min w s.t. w >= (M'y)_j``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise InputError("payoff matrix must be a finite 2-d array")
    m, n = M.shape
    # variables (x, z)
    primal = LpProblem(
        c=np.r_[np.zeros(n), 1.0],
        A_ub=np.hstack([-M, np.ones((m, 1))]), b_ub=np.zeros(m),
        A_eq=np.r_[np.ones(n), 0.0][None, :], b_eq=[1.0],
        bounds=[(0.0, None)] * n + [(None, None)], sense="max",
    )
    # variables (y, w)
    dual = LpProblem(
        c=np.r_[np.zeros(m), 1.0],
        A_ub=np.hstack([M.T, -np.ones((n, 1))]), b_ub=np.zeros(n),
        A_eq=np.r_[np.ones(m), 0.0][None, :], b_eq=[1.0],
        bounds=[(0.0, None)] * m + [(None, None)], sense="min",
    )
    rp = _require(solve_lp(primal), "matrix game primal")
    rd = _require(solve_lp(dual), "matrix game dual")
    x = np.clip(rp.x[:n], 0.0, None)
    y = np.clip(rd.x[:m], 0.0, None)
    return float(rp.objective), x / x.sum(), y / y.sum()


# -- single-controller Markov games ---------------------------------------

@dataclass(frozen=True)
class SingleControllerGame:
    """Player 1 (minimiser) picks u1 and drives ``P[u1]``; player 2 (maximiser) only affects cost.

    ``c[i, u1, u2]`` is the stage cost and values satisfy ``V = c + rho P V``.
    """

    P: np.ndarray
    c: np.ndarray
    rho: float
    alpha: Optional[np.ndarray] = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 3:
            raise DimensionMismatch("P must have shape (U1, X, X)")
        P = np.stack([make_stochastic(Pu) for Pu in P])
        c = np.array(self.c, dtype=float)
        U1, X, _ = P.shape
        if c.ndim != 3 or c.shape[:2] != (X, U1):
            raise DimensionMismatch(f"costs must have shape ({X}, {U1}, U2), got {c.shape}")
        if not 0.0 < self.rho < 1.0:
            raise ParameterOutOfRange("discount rho must lie in (0, 1)")
        alpha = np.full(X, 1.0 / X) if self.alpha is None else make_belief(self.alpha)
        if alpha.shape != (X,) or np.any(alpha <= 0):
            raise InputError("initial weights alpha must be positive and sum to 1")
        c.setflags(write=False)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "alpha", alpha)

    @property
    def X(self) -> int:
        return self.P.shape[1]

    @property
    def U1(self) -> int:
        return self.P.shape[0]

    @property
    def U2(self) -> int:
        return self.c.shape[2]


@dataclass
class SingleControllerSolution:
    V: np.ndarray
    q: np.ndarray                  # (X, U2) player-2 policy from the primal
    p: np.ndarray                  # (X, U1) player-1 policy from the dual
    occupation: np.ndarray         # raw dual p(i, u1)
    primal_objective: float
    dual_objective: float
    degenerate_states: tuple = field(default_factory=tuple)

    @property
    def duality_gap(self) -> float:
        return abs(self.primal_objective - self.dual_objective)


def single_controller_solve(game: SingleControllerGame, strict: bool = False) -> SingleControllerSolution:
    """Solve the primal LP for (V, q) and its dual for the occupation measure p.

    States with zero occupation get a uniform player-1 policy and are listed in
    ``degenerate_states``; ``strict=True`` raises :class:`DegenerateState` instead.
    """
    X, U1, U2, rho = game.X, game.U1, game.U2, game.rho
    P, c = game.P, game.c
    nV, nq = X, X * U2
    # primal: V_i - rho sum_j P_ij(u1) V_j - sum_u2 c(i,u1,u2) q(i,u2) <= 0 for each (i, u1)
    A = np.zeros((X * U1, nV + nq))
    for i in range(X):
        for u in range(U1):
            r = i * U1 + u
            A[r, :nV] = -rho * P[u, i]
            A[r, i] += 1.0
            A[r, nV + i * U2: nV + (i + 1) * U2] = -c[i, u]
    Aeq = np.zeros((X, nV + nq))
    for i in range(X):
        Aeq[i, nV + i * U2: nV + (i + 1) * U2] = 1.0
    primal = LpProblem(
        c=np.r_[game.alpha, np.zeros(nq)], A_ub=A, b_ub=np.zeros(X * U1),
        A_eq=Aeq, b_eq=np.ones(X), bounds=[(None, None)] * nV + [(0.0, None)] * nq, sense="max",
    )
    rp = _require(solve_lp(primal), "single-controller primal")
    V = rp.x[:nV]
    q = np.clip(rp.x[nV:].reshape(X, U2), 0.0, None)
    q /= q.sum(axis=1, keepdims=True)

    # dual: variables p(i,u1) >= 0 and free z_i; min sum z
    npv = X * U1
    Deq = np.zeros((X, npv + X))
    for i in range(X):
        for u in range(U1):
            col = i * U1 + u
            Deq[:, col] -= rho * P[u, i]
            Deq[i, col] += 1.0
    Dub = np.zeros((X * U2, npv + X))
    for i in range(X):
        for v in range(U2):
            r = i * U2 + v
            Dub[r, i * U1:(i + 1) * U1] = c[i, :, v]
            Dub[r, npv + i] = -1.0
    dual = LpProblem(
        c=np.r_[np.zeros(npv), np.ones(X)], A_ub=Dub, b_ub=np.zeros(X * U2),
        A_eq=Deq, b_eq=game.alpha, bounds=[(0.0, None)] * npv + [(None, None)] * X, sense="min",
    )
    rd = _require(solve_lp(dual), "single-controller dual")
    occ = np.clip(rd.x[:npv].reshape(X, U1), 0.0, None)
    mass = occ.sum(axis=1)
    degenerate = tuple(int(i) for i in np.nonzero(mass <= 1e-12)[0])
    if degenerate and strict:
        raise DegenerateState(f"states {degenerate} have zero occupation measure")
    p = np.where(mass[:, None] > 1e-12, occ / np.where(mass > 1e-12, mass, 1.0)[:, None], 1.0 / U1)
    return SingleControllerSolution(V, q, p, occ, float(rp.objective), float(rd.objective), degenerate)


def policy_value(game: SingleControllerGame, p, q) -> np.ndarray:
    """V = (I - rho P_p)^{-1} c_pq for stationary randomised policies p (X, U1), q (X, U2)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    Pp = np.einsum("iu,uij->ij", p, game.P)
    cpq = np.einsum("iu,iuv,iv->i", p, game.c, q)
    return np.linalg.solve(np.eye(game.X) - game.rho * Pp, cpq)


def best_response_player1(game: SingleControllerGame, q, max_iter: int = 1000):
    """Player 1's optimal MDP value against fixed q, by policy iteration.  Returns (V, policy)."""
    cq = np.einsum("iuv,iv->iu", game.c, np.asarray(q, dtype=float))
    X = game.X
    pol = np.argmin(cq, axis=1)
    for _ in range(max_iter):
        Pp = game.P[pol, np.arange(X)]
        V = np.linalg.solve(np.eye(X) - game.rho * Pp, cq[np.arange(X), pol])
        Q = cq + game.rho * np.einsum("uij,j->iu", game.P, V)
        best = Q.min(axis=1)
        new = np.where(Q[np.arange(X), pol] <= best + 1e-12, pol, np.argmin(Q, axis=1))
        if np.array_equal(new, pol):
            return V, pol
        pol = new
    raise LpFailure("policy iteration did not terminate")


def best_response_player2(game: SingleControllerGame, p):
    """Player 2's optimal value against fixed p.  Transitions ignore u2, so it is per-state."""
    p = np.asarray(p, dtype=float)
    Pp = np.einsum("iu,uij->ij", p, game.P)
    cp = np.einsum("iu,iuv->iv", p, game.c)
    pol = np.argmax(cp, axis=1)
    V = np.linalg.solve(np.eye(game.X) - game.rho * Pp, cp.max(axis=1))
    return V, pol


def saddle_gaps(game: SingleControllerGame, sol: SingleControllerSolution):
    """(player-1 improvement, player-2 improvement) available by best response; both ~0 at a saddle."""
    V1, _ = best_response_player1(game, sol.q)
    V2, _ = best_response_player2(game, sol.p)
    a = game.alpha
    return float(a @ sol.V - a @ V1), float(a @ V2 - a @ sol.V)


# -- correlated equilibria -------------------------------------------------

def _rewards(rewards) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    if r.ndim < 2 or r.ndim != r.shape[0] + 1:
        raise DimensionMismatch("rewards must have shape (L, U_0, ..., U_{L-1})")
    if not np.all(np.isfinite(r)):
        raise InputError("rewards must be finite")
    return r


def _joint(pi, shape) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.size != int(np.prod(shape)):
        raise DimensionMismatch(f"joint distribution has {pi.size} entries, game has {int(np.prod(shape))}")
    return pi.reshape(shape)


def deviation_gaps(pi, rewards):
    """Per player, ``G[i, j] = sum_{u^-l} pi(i, u^-l) (r_l(j, u^-l) - r_l(i, u^-l))``."""
    r = _rewards(rewards)
    pi = _joint(pi, r.shape[1:])
    out = []
    for l in range(r.shape[0]):
        pl = np.moveaxis(pi, l, 0).reshape(r.shape[1 + l], -1)
        rl = np.moveaxis(r[l], l, 0).reshape(r.shape[1 + l], -1)
        out.append(pl @ rl.T - (pl * rl).sum(axis=1)[:, None])
    return out


def correlated_eq_check(pi, rewards, tol: float = CE_TOL) -> OrderVerdict:
    """Reward-form CE inequalities.  Witness (l, i, j): player l gains by playing j when told i."""
    for l, G in enumerate(deviation_gaps(pi, rewards)):
        bad = G > tol
        if bad.any():
            i, j = np.argwhere(bad)[0]
            return OrderVerdict(False, (l, int(i), int(j)))
    return OrderVerdict(True)


def ce_violation(z, rewards) -> float:
    """Largest positive deviation gap; zero exactly on the correlated-equilibrium set."""
    return float(max(0.0, max(G.max() for G in deviation_gaps(z, rewards))))


def correlated_eq_find(rewards) -> np.ndarray:
    """A point of the correlated-equilibrium polytope (flattened joint pmf), via LP feasibility."""
    r = _rewards(rewards)
    shape = r.shape[1:]
    J = int(np.prod(shape))
    rows = []
    eye = np.eye(J).reshape((J,) + shape)
    # each deviation gap is linear in pi; evaluate it on the unit vectors
    gaps = [deviation_gaps(e, r) for e in eye]
    for l in range(r.shape[0]):
        U = shape[l]
        for i in range(U):
            for j in range(U):
                if i != j:
                    rows.append([g[l][i, j] for g in gaps])
    A_ub = np.array(rows) if rows else None
    b_ub = np.zeros(len(rows)) if rows else None
    res = solve_lp(LpProblem(np.zeros(J), A_ub, b_ub, np.ones((1, J)), [1.0]))
    _require(res, "correlated equilibrium")
    pi = np.clip(res.x, 0.0, None)
    return pi / pi.sum()


# -- regret matching -------------------------------------------------------

def inertia_bound(rewards) -> float:
    """Smallest inertia keeping every switching row a pmf: U times the reward range."""
    r = _rewards(rewards)
    U = r.shape[1]
    return float(U * max(r[l].max() - r[l].min() for l in range(r.shape[0])))


@dataclass
class RegretTrace:
    joint: np.ndarray          # joint action index played at steps 1..n
    max_regret: np.ndarray     # max_{l,i,j} R^l(i, j) after each step
    ce_violation: np.ndarray   # max positive deviation gap of z after each step
    R: np.ndarray              # final regret matrices (L, U, U)
    z: np.ndarray              # final discounted empirical joint distribution
    eps: float
    mu: float
    u0: tuple
    shape: tuple

    columns = ("n", "joint_action", "max_regret", "ce_violation")

    def rows(self):
        for k in range(len(self.joint)):
            yield (k + 1, int(self.joint[k]), float(self.max_regret[k]), float(self.ce_violation[k]))

    def z_trajectory(self, every: int = 1) -> np.ndarray:
        """z_n for n = every, 2 every, ... rebuilt from the joint actions."""
        J = int(np.prod(self.shape))
        z = np.zeros(J)
        z[int(np.ravel_multi_index(self.u0, self.shape))] = 1.0
        out = []
        for k, a in enumerate(self.joint, start=1):
            z *= 1.0 - self.eps
            z[a] += self.eps
            if k % every == 0:
                out.append(z.copy())
        return np.array(out).reshape(-1, J)


def regret_matching_run(rewards, eps: float, n_steps: int, rng, mu: Optional[float] = None,
                        u0=None) -> RegretTrace:
    """Constant-step regret matching for L players with equal action counts.

    Each player keeps ``R[i, j]``, the discounted average gain from having
    played j whenever it played i, and switches from i to j with probability
    ``max(R[i, j], 0) / mu``.  ``z`` is the matching discounted empirical
    distribution of joint play.
    """
    r = _rewards(rewards)
    L = r.shape[0]
    shape = r.shape[1:]
    if len(set(shape)) != 1:
        raise DimensionMismatch("regret matching needs identical action counts for all players")
    U = shape[0]
    if not 0.0 < eps < 1.0:
        raise ParameterOutOfRange("step size eps must lie in (0, 1)")
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    bound = inertia_bound(r)
    if mu is None:
        mu = bound if bound > 0 else 1.0
    if mu <= 0 or mu < bound:
        raise InertiaTooSmall(f"inertia {mu} below the bound {bound}")
    g = as_generator(rng)
    if u0 is None:
        u0 = tuple(int(v) for v in g.integers(0, U, size=L))
    u0 = tuple(int(v) for v in u0)
    if len(u0) != L or any(not 0 <= a < U for a in u0):
        raise DimensionMismatch("initial profile must give one valid action per player")
    draws = g.random((n_steps, L))
    flat = np.ascontiguousarray(r.reshape(L, -1))
    joint, mr, cv, R, z = kernels.regret_matching(
        flat, U, np.asarray(u0, dtype=np.int64), float(eps), float(mu), draws
    )
    return RegretTrace(np.asarray(joint), np.asarray(mr), np.asarray(cv), np.asarray(R),
                       np.asarray(z), float(eps), float(mu), u0, shape)


def canonical_games() -> dict:
    """Three 2x2 reward games with payoffs in [0, 1]."""
    coord = np.array([[1.0, 0.0], [0.0, 1.0]])
    pd0 = np.array([[0.75, 0.0], [1.0, 0.25]])  # actions (cooperate, defect)
    bos0 = np.array([[1.0, 0.0], [0.0, 0.5]])
    bos1 = np.array([[0.5, 0.0], [0.0, 1.0]])
    return {
        "coordination": np.stack([coord, coord]),
        "prisoners_dilemma": np.stack([pd0, pd0.T]),
        "battle_of_sexes": np.stack([bos0, bos1]),
    }


def matching_pennies() -> np.ndarray:
    M = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return np.stack([M, -M])


# -- global games ----------------------------------------------------------

@dataclass(frozen=True)
class UniformNoise:
    half_width: float


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float


Noise = Union[UniformNoise, GaussianNoise, np.ndarray, list, tuple, dict]


def noise_max_density(noise: Noise) -> float:
    """Supremum of the noise density (or of the pmf for a discrete noise)."""
    if isinstance(noise, dict):
        kind = noise.get("kind")
        if kind == "uniform":
            noise = UniformNoise(float(noise["half_width"]))
        elif kind == "gaussian":
            noise = GaussianNoise(float(noise["sigma"]))
        elif kind == "pmf":
            noise = noise["pmf"]
        else:
            raise InputError(f"unknown noise kind {kind!r}")
    if isinstance(noise, UniformNoise):
        if not noise.half_width > 0:
            raise UnboundedDensity("uniform noise needs a positive half-width")
        return 1.0 / (2.0 * noise.half_width)
    if isinstance(noise, GaussianNoise):
        if not noise.sigma > 0:
            raise UnboundedDensity("Gaussian noise needs a positive sigma")
        return 1.0 / (math.sqrt(2.0 * math.pi) * noise.sigma)
    pmf = make_belief(noise)
    return float(pmf.max())


def bne_monotone_condition(noise: Noise, slope_min: float) -> OrderVerdict:
    """Sufficient slope condition for a monotone threshold equilibrium.

    Holds when the smallest congestion slope exceeds ``-1 / max density``.
    The witness is the threshold itself.
    """
    threshold = -1.0 / noise_max_density(noise)
    return OrderVerdict(bool(slope_min > threshold), (threshold,))
