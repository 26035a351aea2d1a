"""Social learning with two states and two actions.

States, observations and actions are 0-based.  ``costs[a]`` is the cost
vector of action ``a`` over the two states, so agents pick
``argmin_a costs[a] @ belief`` with ties going to action 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import DimensionMismatch, NotUpperTriangular, ZeroLikelihood
from .markov import as_generator, make_belief, make_likelihoods
from .orders import OrderVerdict

UNDERFLOW = 1e-300


@dataclass(frozen=True)
class SocialModel:
    B: np.ndarray
    costs: np.ndarray
    prior: np.ndarray

    def __post_init__(self):
        B = make_likelihoods(self.B)
        c = np.array(self.costs, dtype=float)
        prior = make_belief(self.prior)
        if B.shape[0] != 2 or c.shape != (2, 2) or prior.shape != (2,):
            raise DimensionMismatch("social model needs 2 states, 2 actions: B (2, Y), costs (2, 2)")
        c.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "prior", prior)

    @property
    def Y(self) -> int:
        return self.B.shape[1]


def _normalise(v, what="observation"):
    s = v.sum()
    if not s > UNDERFLOW:
        raise ZeroLikelihood(f"{what} has zero probability under the current belief")
    return v / s


def _decide(costs, eta) -> int:
    v = costs @ eta
    return 0 if v[0] <= v[1] else 1


def private_belief(model: SocialModel, public, y: int) -> np.ndarray:
    if not 0 <= y < model.Y:
        raise DimensionMismatch(f"observation {y} outside 0..{model.Y - 1}")
    return _normalise(model.B[:, y] * np.asarray(public, dtype=float))


def decision_map(model: SocialModel, public) -> np.ndarray:
    """Action taken for each possible private observation."""
    return np.array([_decide(model.costs, private_belief(model, public, y)) for y in range(model.Y)])


def action_likelihood(model: SocialModel, public) -> np.ndarray:
    """``L[a, x]`` = P(action a | state x) given the public belief."""
    dm = decision_map(model, public)
    L = np.zeros((2, 2))
    for y, a in enumerate(dm):
        L[a] += model.B[:, y]
    return L


def social_learning_step(model: SocialModel, public, y: int):
    """Vanilla protocol: act on the private posterior, then update the public belief."""
    public = np.asarray(public, dtype=float)
    a = _decide(model.costs, private_belief(model, public, y))
    L = action_likelihood(model, public)
    return a, _normalise(L[a] * public, "action")


def social_learning_run(model: SocialModel, theta: int, n: int, rng):
    """Simulate n agents in the vanilla protocol.  Rows: (t, y, action, public_0, public_1)."""
    g = as_generator(rng)
    ys = (g.random(n)[:, None] >= np.cumsum(model.B[theta])[None, :]).sum(axis=1)
    ys = np.minimum(ys, model.Y - 1)
    public = model.prior
    rows = []
    for t in range(n):
        a, public = social_learning_step(model, public, int(ys[t]))
        rows.append((t + 1, int(ys[t]), a, public[0], public[1]))
    return rows


def _cvar(costs_a, eta, alpha):
    if alpha == 1.0:
        return float(costs_a @ eta)
    best = np.inf
    for z in costs_a:
        best = min(best, z + (np.maximum(costs_a - z, 0.0) @ eta) / alpha)
    return float(best)


def cvar_action(model: SocialModel, public, y: int, alpha: float) -> int:
    """Risk-averse action minimising CVaR_alpha of the cost under the private posterior.

    The inner minimum over z is attained at a cost value, so scanning the
    finite set of costs is exact.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    eta = private_belief(model, public, y)
    v = [_cvar(model.costs[a], eta, alpha) for a in range(2)]
    return 0 if v[0] <= v[1] else 1


def cvar_herds(model: SocialModel, alpha: float, grid) -> bool:
    """True when the CVaR decision ignores the private signal at every grid belief."""
    for p in grid:
        pub = np.array([p, 1.0 - p])
        acts = {cvar_action(model, pub, y, alpha) for y in range(model.Y)}
        if len(acts) > 1:
            return False
    return True


# -- limited memory -------------------------------------------------------

def _binom_matrix(N: int, h: int) -> np.ndarray:
    """``M[k, n]`` = P(sample count k | n of h past actions were action 0)."""
    M = np.zeros((N + 1, h + 1))
    for n in range(h + 1):
        p = n / h if h else 0.0
        for k in range(N + 1):
            M[k, n] = comb(N, k) * p ** k * (1 - p) ** (N - k)
    return M


@dataclass(frozen=True)
class LimitedMemoryState:
    """Common-knowledge statistics after ``t`` agents have acted.

    ``action_dist[x, n]`` = P(n of the t past actions were action 0 | state x);
    ``count`` is the realised number of action-0 choices.
    """

    t: int
    N: int
    action_dist: np.ndarray
    count: int = 0

    @classmethod
    def initial(cls, N: int) -> "LimitedMemoryState":
        if N < 0:
            raise ValueError("N must be >= 0")
        return cls(0, N, np.ones((2, 1)), 0)

    @property
    def seeding(self) -> bool:
        return self.t < self.N

    def identifiable(self, tol: float = 1e-9) -> bool:
        return bool(np.abs(self.action_dist[0] - self.action_dist[1]).max() > tol)


def _advance(dist, q):
    """Add one agent whose P(action 0 | n, x) is ``q[x, n]``."""
    X, H = dist.shape
    out = np.zeros((X, H + 1))
    out[:, :H] += dist * (1.0 - q)
    out[:, 1:] += dist * q
    return out


def sample_likelihood(model: SocialModel, state: LimitedMemoryState) -> np.ndarray:
    """``D[x, k]`` = P(k action-0 choices in the N-sample | state x)."""
    return state.action_dist @ _binom_matrix(state.N, state.t).T


def limited_memory_step(model: SocialModel, state: LimitedMemoryState, theta: int, rng):
    """Advance one agent (seed phase or sampling phase).  Returns (action, new_state)."""
    g = as_generator(rng)
    y = int(min(np.searchsorted(np.cumsum(model.B[theta]), g.random(), side="right"), model.Y - 1))
    if state.seeding:
        eta = private_belief(model, model.prior, y)
        a = _decide(model.costs, eta)
        dm = decision_map(model, model.prior)
        q0 = model.B[:, dm == 0].sum(axis=1)
        q = np.repeat(q0[:, None], state.t + 1, axis=1)
    else:
        h, N = state.t, state.N
        khat = int(g.binomial(N, state.count / h)) if h else 0
        D = sample_likelihood(model, state)
        eta = _normalise(model.prior * model.B[:, y] * D[:, khat])
        a = _decide(model.costs, eta)
        # acts0[y, k]: does an agent with signal y and sample count k pick action 0?
        acts0 = np.zeros((model.Y, N + 1))
        for yy in range(model.Y):
            for k in range(N + 1):
                w = model.prior * model.B[:, yy] * D[:, k]
                if w.sum() > UNDERFLOW:
                    acts0[yy, k] = _decide(model.costs, w / w.sum()) == 0
        # q[x, n] = sum_{y,k} 1{action 0} B[x, y] P(k | n)
        M = _binom_matrix(N, h)
        q = model.B @ acts0 @ M
    new = LimitedMemoryState(state.t + 1, state.N, _advance(state.action_dist, q), state.count + (a == 0))
    return a, new


def limited_memory_run(model: SocialModel, N: int, theta: int, n: int, rng) -> np.ndarray:
    g = as_generator(rng)
    state = LimitedMemoryState.initial(N)
    acts = np.empty(n, dtype=np.int64)
    for t in range(n):
        acts[t], state = limited_memory_step(model, state, theta, g)
    return acts


# -- data incest ----------------------------------------------------------

def _closure(A):
    """sgn((I - A)^{-1}) for strictly upper-triangular integer A, via the Neumann sum."""
    n = len(A)
    total = [[int(i == j) for j in range(n)] for i in range(n)]
    power = [row[:] for row in total]
    for _ in range(n - 1):
        power = [[sum(power[i][m] * A[m][j] for m in range(n)) for j in range(n)] for i in range(n)]
        for i in range(n):
            for j in range(n):
                total[i][j] += power[i][j]
    return [[1 if v > 0 else 0 for v in row] for row in total]


def _solve_unit_upper(T, t):
    """Exact integer back substitution for unit upper-triangular T."""
    n = len(t)
    w = [0] * n
    for i in range(n - 1, -1, -1):
        w[i] = t[i] - sum(T[i][j] * w[j] for j in range(i + 1, n))
    return w


def incest_weights(A, m: int):
    """w_m = T_{m-1}^{-1} t_m for the graph restricted to the first m nodes."""
    T = _closure([row[:m] for row in A[:m]])
    t = [T[i][m - 1] for i in range(m - 1)]
    Tprev = [row[: m - 1] for row in T[: m - 1]]
    return _solve_unit_upper(Tprev, t)


def incest_condition_check(A) -> OrderVerdict:
    """Exact incest-removal condition: A(j, m) = 0 implies w_m(j) = 0, for every m.

    Witness is (j, m) with 0-based node indices for the first violation.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotUpperTriangular("adjacency must be square")
    if np.any(np.tril(A) != 0):
        raise NotUpperTriangular("adjacency must be strictly upper triangular")
    if np.any((A != 0) & (A != 1)):
        raise NotUpperTriangular("adjacency entries must be 0 or 1")
    Al = [[int(v) for v in row] for row in A]
    n = len(Al)
    for m in range(2, n + 1):
        w = incest_weights(Al, m)
        for j in range(m - 1):
            if Al[j][m - 1] == 0 and w[j] != 0:
                return OrderVerdict(False, (j, m - 1))
    return OrderVerdict(True)
