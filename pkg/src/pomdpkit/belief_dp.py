"""Belief-grid dynamic programming for finite POMDPs.

Beliefs live on a regular simplex lattice with step 1/(R-1).  Updated
beliefs T(pi, y, u) rarely land on the lattice; their values are
interpolated on the Freudenthal triangulation of the lattice (plain linear
interpolation when X = 2), or, for value iteration with X >= 3, represented
by one hyperplane per grid point so the value stays concave.
``interpolation="nearest"`` snaps to the closest lattice point instead.

Costs are minimised throughout.  Reward models are stored negated.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    BudgetExceedsHorizon,
    DimensionMismatch,
    GridTooCoarse,
    NotStoppingProblem,
    ParameterOutOfRange,
    ZeroLikelihood,
)
from .markov import make_likelihoods, make_stochastic

MIN_RESOLUTION = 51
UNDERFLOW = 1e-300


@dataclass(frozen=True)
class PomdpModel:
    """Per-action transitions ``P[u]``, likelihoods ``B[u]`` and costs ``c[u]``.

    Pass ``rewards=True`` to give ``c`` as rewards; they are negated and
    ``sign`` records the flip so reported values can be mapped back.
    """

    P: np.ndarray
    B: np.ndarray
    c: np.ndarray
    discount: float = 1.0
    rewards: bool = False
    labels: tuple = ()

    def __post_init__(self):
        P = np.stack([make_stochastic(p) for p in self.P])
        B = np.stack([make_likelihoods(b) for b in self.B])
        c = np.array(self.c, dtype=float)
        U, X, _ = P.shape
        if B.shape[:2] != (U, X) or c.shape != (U, X):
            raise DimensionMismatch(f"P {P.shape}, B {B.shape}, c {c.shape} disagree")
        if not 0.0 < self.discount <= 1.0:
            raise ParameterOutOfRange("discount must lie in (0, 1]")
        if self.rewards:
            c = -c
        for a in (P, B, c):
            a.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)

    @property
    def X(self) -> int:
        return self.P.shape[1]

    @property
    def Y(self) -> int:
        return self.B.shape[2]

    @property
    def U(self) -> int:
        return self.P.shape[0]

    @property
    def sign(self) -> float:
        return -1.0 if self.rewards else 1.0


def pomdp_belief_update(model: PomdpModel, pi, y: int, u: int):
    unnorm = model.B[u][:, y] * (np.asarray(pi, dtype=float) @ model.P[u])
    s = float(unnorm.sum())
    if not s > UNDERFLOW:
        raise ZeroLikelihood(f"observation {y} has zero probability under action {u}")
    return unnorm / s, s


def tiger_model(p: float, q: float, alpha: float, beta: float, gamma: float) -> PomdpModel:
    """Tiger problem.  States/observations (left, right); actions (open left, open right, hear)."""
    if not (0 < p < 1 and 0 < q < 1):
        raise ParameterOutOfRange("p and q must lie in (0, 1)")
    if alpha <= 0 or beta <= 0 or gamma < 0:
        raise ParameterOutOfRange("need alpha > 0, beta > 0, gamma >= 0")
    reset = np.full((2, 2), 0.5)
    P = [reset, reset, np.eye(2)]
    B = [np.eye(2), np.eye(2), [[p, 1 - p], [1 - q, q]]]
    c = [[alpha, -beta], [-beta, alpha], [gamma, gamma]]
    return PomdpModel(P, B, c, labels=("l", "r", "h"))


# -- simplex lattice --------------------------------------------------------

class SimplexGrid:
    """All beliefs whose coordinates are multiples of 1/(R-1)."""

    def __init__(self, X: int, resolution: int):
        if resolution < 2:
            raise GridTooCoarse("resolution must be >= 2")
        self.X = X
        self.R = resolution
        M = resolution - 1
        self.M = M
        counts = []
        # stars and bars: bar positions split M into X parts
        for bars in itertools.combinations(range(M + X - 1), X - 1):
            edges = (-1,) + bars + (M + X - 1,)
            counts.append([edges[i + 1] - edges[i] - 1 for i in range(X)])
        self.counts = np.array(counts, dtype=np.int64).reshape(-1, X)
        order = np.lexsort(self.counts.T[::-1])
        self.counts = self.counts[order]
        self.points = self.counts / M
        self._lookup = np.full((M + 1,) * (X - 1) if X > 1 else (1,), -1, dtype=np.int64)
        if X > 1:
            self._lookup[tuple(self.counts[:, 1:].T)] = np.arange(len(self.counts))
        else:
            self._lookup[0] = 0

    def __len__(self):
        return len(self.points)

    def index(self, counts) -> np.ndarray:
        counts = np.asarray(counts, dtype=np.int64)
        if self.X == 1:
            return np.zeros(counts.shape[:-1], dtype=np.int64)
        return self._lookup[tuple(np.moveaxis(counts[..., 1:], -1, 0))]

    def interpolation(self, beliefs, method: str = "linear"):
        """Vertex indices and weights (both shape (K, X)) reproducing each belief."""
        b = np.clip(np.asarray(beliefs, dtype=float), 0.0, None)
        b = b / b.sum(axis=1, keepdims=True)
        K, X = b.shape
        M = self.M
        if method == "nearest":
            scaled = b * M
            n = np.floor(scaled).astype(np.int64)
            short = M - n.sum(axis=1)
            rank = np.argsort(-(scaled - n), axis=1, kind="stable")
            for k in range(X):
                n[np.arange(K), rank[:, k]] += (short > k)
            idx = np.zeros((K, X), dtype=np.int64)
            w = np.zeros((K, X))
            idx[:, 0] = self.index(n)
            w[:, 0] = 1.0
            return idx, w
        if method != "linear":
            raise ValueError(f"unknown interpolation {method!r}")
        # cumulative coordinates x_i = M * sum_{j >= i} b_j, x_0 = M
        x = M * np.cumsum(b[:, ::-1], axis=1)[:, ::-1]
        x[:, 0] = M
        x = np.clip(x, 0.0, M)
        v = np.floor(x)
        v[:, 0] = M
        d = x - v
        d[:, 0] = 0.0
        order = np.argsort(-d[:, 1:], axis=1, kind="stable") + 1
        dsorted = np.take_along_axis(d, order, axis=1)
        lam = np.empty((K, X))
        lam[:, 0] = 1.0 - dsorted[:, 0] if X > 1 else 1.0
        if X > 1:
            lam[:, 1:-1] = dsorted[:, :-1] - dsorted[:, 1:]
            lam[:, -1] = dsorted[:, -1]
        idx = np.empty((K, X), dtype=np.int64)
        vert = v.astype(np.int64)
        rows = np.arange(K)
        for k in range(X):
            if k:
                vert = vert.copy()
                vert[rows, order[:, k - 1]] += 1
            counts = vert - np.concatenate([vert[:, 1:], np.zeros((K, 1), dtype=np.int64)], axis=1)
            # steps along zero-length fractional parts can leave the simplex;
            # their weights vanish, so reuse the previous vertex
            ok = (counts >= 0).all(axis=1) & (vert[:, 0] == M)
            safe = np.where(ok[:, None], counts, 0)
            idx[:, k] = np.where(ok, self.index(safe), idx[:, k - 1] if k else -1)
        return idx, lam

    def neighbours(self):
        """Pairs (p, d) with p +- e_i -+ e_j both on the lattice, as index triples (minus, centre, plus)."""
        out = []
        for i in range(self.X):
            for j in range(i + 1, self.X):
                step = np.zeros(self.X, dtype=np.int64)
                step[i], step[j] = 1, -1
                plus = self.counts + step
                minus = self.counts - step
                ok = (plus >= 0).all(axis=1) & (minus >= 0).all(axis=1)
                c = np.nonzero(ok)[0]
                out.append(np.stack([self.index(minus[ok]), c, self.index(plus[ok])], axis=1))
        return np.concatenate(out) if out else np.zeros((0, 3), dtype=np.int64)

    def adjacent(self):
        """Index pairs of lattice points one step e_i - e_j apart."""
        trip = self.neighbours()
        return np.concatenate([trip[:, [0, 1]], trip[:, [1, 2]]]) if len(trip) else trip


def concavity_defect(grid: SimplexGrid, V) -> float:
    """min over lattice midpoints of 2 V(p) - V(p - d) - V(p + d); >= 0 for concave V."""
    trip = grid.neighbours()
    if not len(trip):
        return 0.0
    V = np.asarray(V)
    return float((2 * V[trip[:, 1]] - V[trip[:, 0]] - V[trip[:, 2]]).min())


class _Backup:
    """Precomputed sparse maps pi -> sum_y sigma(pi,y,u) V(T(pi,y,u)) for every action."""

    def __init__(self, model: PomdpModel, grid: SimplexGrid, method: str):
        G = len(grid)
        self.idx = []
        self.w = []
        for u in range(model.U):
            pred = grid.points @ model.P[u]                      # (G, X)
            un = pred[:, None, :] * model.B[u].T[None, :, :]     # (G, Y, X)
            sig = un.sum(axis=2)
            safe = np.where(sig[..., None] > UNDERFLOW, un / np.maximum(sig, UNDERFLOW)[..., None], 1.0 / model.X)
            idx, w = grid.interpolation(safe.reshape(-1, model.X), method)
            w = w.reshape(G, model.Y, model.X) * np.where(sig > UNDERFLOW, sig, 0.0)[..., None]
            self.idx.append(idx.reshape(G, model.Y, model.X))
            self.w.append(w)

    def __call__(self, u: int, V) -> np.ndarray:
        return (self.w[u] * V[self.idx[u]]).sum(axis=(1, 2))


@dataclass
class BeliefGridValue:
    grid: SimplexGrid
    values: np.ndarray
    policy: np.ndarray
    n: int = 0
    extra: dict = field(default_factory=dict)


def _check_resolution(resolution):
    if resolution < MIN_RESOLUTION:
        raise GridTooCoarse(f"resolution {resolution} < {MIN_RESOLUTION}")


def value_iteration_grid(model: PomdpModel, horizon: int, resolution: int,
                         interpolation: str = "auto", cost_pieces=None):
    """Finite-horizon value iteration; returns BeliefGridValue for n = 0..horizon.

    ``interpolation`` is ``"linear"`` (Freudenthal), ``"nearest"`` or
    ``"alpha"``.  The alpha mode is a point-based backup: every grid point
    keeps the hyperplane of its minimising action, so V_n is a minimum of
    linear functions and concave on the whole simplex.  ``"auto"`` picks
    linear for two states and alpha otherwise.

    ``cost_pieces`` (K, U, X) adds the concave cost ``min_k pieces[k, u] @ pi``
    (for example ``min_i pi(i)`` via identity pieces).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    _check_resolution(resolution)
    if interpolation == "auto":
        interpolation = "linear" if model.X == 2 else "alpha"
    grid = SimplexGrid(model.X, resolution)
    G = len(grid)
    pieces = None if cost_pieces is None else np.asarray(cost_pieces, dtype=float)
    if pieces is not None and pieces.shape[1:] != (model.U, model.X):
        raise DimensionMismatch("cost_pieces must have shape (K, U, X)")
    # per-action linear cost at each grid point, including the active concave piece
    lin = np.broadcast_to(model.c[None], (G, model.U, model.X)).copy()
    if pieces is not None:
        k = np.argmin(np.einsum("kux,gx->gku", pieces, grid.points), axis=1)  # (G, U)
        lin += pieces[k, np.arange(model.U)[None, :]]
    inst = np.einsum("gux,gx->gu", lin, grid.points)
    out = [BeliefGridValue(grid, np.zeros(G), np.zeros(G, dtype=np.int64), 0)]
    if interpolation == "alpha":
        return out + _alpha_iteration(model, grid, lin, horizon)
    backup = _Backup(model, grid, interpolation)
    V = np.zeros(G)
    for n in range(1, horizon + 1):
        Q = inst + model.discount * np.stack([backup(u, V) for u in range(model.U)], axis=1)
        pol = np.argmin(Q, axis=1)
        V = Q[np.arange(G), pol]
        out.append(BeliefGridValue(grid, V, pol, n))
    return out


def _alpha_iteration(model, grid, lin, horizon):
    b = grid.points
    G = len(b)
    rows = np.arange(G)
    # M[u, y] = P(u) diag(B(u)_y): unnormalised update is b @ M[u, y]
    M = model.P[:, None, :, :] * np.transpose(model.B, (0, 2, 1))[:, :, None, :]
    gamma = np.zeros((1, model.X))
    out = []
    for n in range(1, horizon + 1):
        g = lin.copy()                                    # (G, U, X)
        for u in range(model.U):
            for y in range(model.Y):
                MA = M[u, y] @ gamma.T                    # (X, A)
                best = np.argmin(b @ MA, axis=1)
                g[:, u] += model.discount * MA[:, best].T
        Q = np.einsum("gux,gx->gu", g, b)
        pol = np.argmin(Q, axis=1)
        gamma = g[rows, pol]
        out.append(BeliefGridValue(grid, Q[rows, pol], pol, n, {"alpha": gamma}))
    return out


# -- stopping problems ------------------------------------------------------

@dataclass
class StoppingAnalysis:
    grid: SimplexGrid
    stop_sets: list               # boolean masks S_0..S_N
    explicit_set: np.ndarray      # mask of S^o
    nested: bool
    convex: bool
    explicit_inside: bool         # S^o subset of S_N (expected only under the closure condition)
    closure_holds: bool           # one-step closure of S^o verified on the grid
    matches_explicit: Optional[bool]  # S_N == S^o up to one lattice cell (None if closure fails)
    inside_explicit: bool = True  # every S_n subset of S^o (holds unconditionally)


def _within_one_cell(grid, mask_a, mask_b):
    diff = mask_a != mask_b
    if not diff.any():
        return True
    pairs = grid.adjacent()
    boundary = np.zeros(len(grid), dtype=bool)
    crosses = mask_b[pairs[:, 0]] != mask_b[pairs[:, 1]]
    boundary[pairs[crosses, 0]] = True
    boundary[pairs[crosses, 1]] = True
    return bool(np.all(boundary[diff]))


def _is_interval(mask):
    idx = np.nonzero(mask)[0]
    return idx.size == 0 or bool(np.all(np.diff(idx) == 1))


def stopping_set_analysis(model: PomdpModel, horizon: int, resolution: int,
                          interpolation: str = "linear") -> StoppingAnalysis:
    """Stop sets of ``V_{n+1} = min{c_0'pi, c_1'pi + sum_y V_n(T) sigma}``, V_0 = 0.

    Action 0 stops (terminal); action 1 continues with P[1], B[1].
    S_n = {pi : c_0'pi <= c_1'pi + sum_y V_n(T(pi,y)) sigma(pi,y)}.
    """
    if model.U != 2:
        raise NotStoppingProblem("stopping problems have exactly two actions (stop, continue)")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    _check_resolution(resolution)
    grid = SimplexGrid(model.X, resolution)
    backup = _Backup(model, grid, interpolation)
    stop = grid.points @ model.c[0]
    go = grid.points @ model.c[1]
    V = np.zeros(len(grid))
    sets = []
    for n in range(horizon + 1):
        cont = go + model.discount * backup(1, V)
        sets.append(stop <= cont + 1e-12)
        V = np.minimum(stop, cont)
    nested = all(np.all(~a | b) for a, b in zip(sets, sets[1:]))
    if model.X == 2:
        convex = all(_is_interval(s) for s in sets)
    else:
        convex = all(_lattice_convex(grid, s) for s in sets)
    P = model.P[1]
    explicit = stop <= go + (grid.points @ P) @ model.c[0] + 1e-12
    closure = _closure_on_grid(model, grid, explicit)
    inside = bool(np.all(~explicit | sets[-1]))
    within = all(bool(np.all(~s | explicit)) for s in sets)
    match = _within_one_cell(grid, sets[-1], explicit) if closure else None
    return StoppingAnalysis(grid, sets, explicit, bool(nested), bool(convex), inside, closure, match, within)


def _lattice_convex(grid, mask):
    # midpoint closure along lattice lines
    trip = grid.neighbours()
    ends = mask[trip[:, 0]] & mask[trip[:, 2]]
    return bool(np.all(~ends | mask[trip[:, 1]]))


def explicit_set_member(model: PomdpModel, pi) -> bool:
    pi = np.asarray(pi, dtype=float)
    return bool(model.c[0] @ pi <= model.c[1] @ pi + model.c[0] @ (pi @ model.P[1]) + 1e-12)


def _closure_on_grid(model, grid, explicit):
    for g in np.nonzero(explicit)[0]:
        pi = grid.points[g]
        for y in range(model.Y):
            un = model.B[1][:, y] * (pi @ model.P[1])
            s = un.sum()
            if s > UNDERFLOW and not explicit_set_member(model, un / s):
                return False
    return True


# -- sensor budget ---------------------------------------------------------

@dataclass
class BudgetResult:
    grid: SimplexGrid
    literal: np.ndarray    # (N+1, L+1, G) rewards, boundary V_n(pi, 0) = 0
    fallback: np.ndarray   # (N+1, L+1, G) rewards, V_n(pi, 0) = sensor-2-only value
    policy_literal: np.ndarray
    policy_fallback: np.ndarray


def budget_dp(model: PomdpModel, L: int, N: int, resolution: int, interpolation: str = "linear") -> BudgetResult:
    """Two-sensor reward DP where sensor 0 may be used at most L times.

    ``V_{n+1}(pi, l) = max{R(pi,0) + sum_y V_n(T(pi,y,0), l-1) sigma,
    R(pi,1) + sum_y V_n(T(pi,y,1), l) sigma}``.  Two boundary variants are
    returned: the literal ``V_n(pi, 0) = 0`` and a fallback in which an
    exhausted budget still earns the sensor-1-only value.
    """
    if model.U != 2:
        raise DimensionMismatch("budget DP needs exactly two sensors")
    if L > N:
        raise BudgetExceedsHorizon(f"budget {L} exceeds horizon {N}")
    if L < 0 or N < 0:
        raise ValueError("L and N must be nonnegative")
    _check_resolution(resolution)
    grid = SimplexGrid(model.X, resolution)
    backup = _Backup(model, grid, interpolation)
    R = -(grid.points @ model.c.T)  # rewards (G, 2)
    G = len(grid)
    rho = model.discount

    def solve(boundary):
        V = np.zeros((N + 1, L + 1, G))
        pol = np.full((N + 1, L + 1, G), -1, dtype=np.int64)
        for n in range(N):
            V[n + 1, 0] = boundary[n + 1]
            if boundary is not zero_boundary:
                pol[n + 1, 0] = 1
            for l in range(1, L + 1):
                q0 = R[:, 0] + rho * backup(0, V[n, l - 1])
                q1 = R[:, 1] + rho * backup(1, V[n, l])
                pol[n + 1, l] = np.where(q0 >= q1, 0, 1)
                V[n + 1, l] = np.maximum(q0, q1)
        return V, pol

    zero_boundary = np.zeros((N + 1, G))
    only1 = np.zeros((N + 1, G))
    for n in range(N):
        only1[n + 1] = R[:, 1] + rho * backup(1, only1[n])
    lit, pl = solve(zero_boundary)
    fb, pf = solve(only1)
    return BudgetResult(grid, lit, fb, pl, pf)


def unconstrained_reward_dp(model: PomdpModel, N: int, resolution: int, interpolation: str = "linear"):
    """Reward value V_N on the grid with no usage limit (oracle for budget_dp)."""
    vals = value_iteration_grid(model, N, resolution, interpolation)
    return -vals[-1].values


# -- replacement / stochastic knapsack -------------------------------------

@dataclass(frozen=True)
class ReplacementModel:
    costs: np.ndarray       # c(u) > 0
    lifetimes: np.ndarray   # p[u, k] for k = 0..K-1, p[u, 0] = 0
    horizon: int

    def __post_init__(self):
        c = np.array(self.costs, dtype=float)
        p = np.array(self.lifetimes, dtype=float)
        if p.ndim != 2 or p.shape[0] != c.shape[0]:
            raise DimensionMismatch("lifetimes need one row per brand")
        if np.any(c <= 0):
            raise ParameterOutOfRange("costs must be positive")
        if np.any(p < 0) or np.any(p[:, 0] != 0):
            raise ParameterOutOfRange("lifetime pmfs must be nonnegative with p(0, u) = 0")
        if np.any(p.sum(axis=1) > 1 + 1e-9):
            raise ParameterOutOfRange("lifetime pmf mass exceeds 1")
        if self.horizon < 0:
            raise ParameterOutOfRange("horizon must be >= 0")
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "lifetimes", p)


def geometric_lifetimes(hazards, kmax: int) -> np.ndarray:
    lam = np.asarray(hazards, dtype=float)[:, None]
    k = np.arange(kmax + 1)[None, :]
    p = lam * (1 - lam) ** np.maximum(k - 1, 0)
    p[:, 0] = 0.0
    return p


def replacement_dp(rm: ReplacementModel):
    """Q(n,u) = c(u) + sum_{k=1}^n V(n-k) p(k,u), V(n) = min_u Q(n,u)."""
    T = rm.horizon
    U, K = rm.lifetimes.shape
    p = np.zeros((U, T + 1))
    p[:, : min(K, T + 1)] = rm.lifetimes[:, : T + 1]
    Q = np.zeros((T + 1, U))
    V = np.zeros(T + 1)
    for n in range(T + 1):
        # k = 1..n pairs V(n - k) with p(k, u)
        tail = V[n - 1::-1] if n else np.zeros(0)
        Q[n] = rm.costs + p[:, 1:n + 1] @ tail
        V[n] = Q[n].min()
    policy = np.argmin(Q, axis=1)
    return Q, V, policy
