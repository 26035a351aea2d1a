"""Stochastic search-ruler for discrete simulation-based optimisation.

Candidates are ``0..S-1``.  Sampled costs are normalised to ``m in [0, 1]``
and compared against a uniform ruler: ``Y = 1{m - u > 0}``.  The chain moves
to a uniformly drawn rival only when the rival's loss is strictly smaller, so
for known means ``m`` its kernel is ``P_ij = m_i (1 - m_j) / (S - 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .errors import DegenerateBounds, DimensionMismatch, InputError, NumericalError
from .markov import as_generator

BLOCK = 1 << 15


def normalize_cost(c, alpha: float, beta: float):
    """(c - alpha) / (beta - alpha) clamped to [0, 1].  Returns (m, number of clamped entries)."""
    if not beta > alpha:
        raise DegenerateBounds(f"need beta > alpha, got alpha={alpha}, beta={beta}")
    m = (np.asarray(c, dtype=float) - alpha) / (beta - alpha)
    clamped = int(np.count_nonzero((m < 0.0) | (m > 1.0)))
    return np.clip(m, 0.0, 1.0), clamped


def ruler_loss(m, u):
    return (np.asarray(m, dtype=float) - np.asarray(u, dtype=float) > 0.0).astype(float)


def antithetic_loss(m, u):
    u = np.asarray(u, dtype=float)
    return 0.5 * (ruler_loss(m, u) + ruler_loss(m, 1.0 - u))


@dataclass(frozen=True)
class StochasticObjective:
    """``sampler(thetas, rng)`` returns one independent cost per entry of ``thetas``."""

    S: int
    sampler: Callable
    alpha: float = 0.0
    beta: float = 1.0

    def __post_init__(self):
        if self.S < 1:
            raise InputError("need at least one candidate")
        if not self.beta > self.alpha:
            raise DegenerateBounds("need beta > alpha")


def bernoulli_objective(means) -> StochasticObjective:
    """Costs c(theta) ~ Bernoulli(means[theta]) on [0, 1]."""
    means = np.asarray(means, dtype=float)
    if means.ndim != 1 or np.any((means < 0) | (means > 1)):
        raise InputError("Bernoulli means must be a vector in [0, 1]")

    def sample(thetas, g):
        return (g.random(np.shape(thetas)) < means[thetas]).astype(float)

    return StochasticObjective(len(means), sample, 0.0, 1.0)


def gaussian_objective(means, sigma: float, alpha: float, beta: float) -> StochasticObjective:
    """Gaussian costs clipped to [alpha, beta] (clipping keeps the bounds honest)."""
    means = np.asarray(means, dtype=float)

    def sample(thetas, g):
        return np.clip(means[thetas] + sigma * g.standard_normal(np.shape(thetas)), alpha, beta)

    return StochasticObjective(len(means), sample, alpha, beta)


@dataclass
class SearchTrace:
    path: np.ndarray        # theta_0 .. theta_n
    moved: np.ndarray       # moved at step k (k = 1..n)
    estimate: np.ndarray    # most-visited candidate after step k
    visits: np.ndarray      # counts of theta_1..theta_n per candidate
    clamped: int = 0

    columns = ("step", "theta", "moved", "estimate_so_far")

    @property
    def occupation(self) -> np.ndarray:
        total = self.visits.sum()
        return self.visits / total if total else self.visits.astype(float)

    @property
    def theta_hat(self) -> int:
        return int(np.argmax(self.visits))

    @property
    def theta(self) -> int:
        return int(self.path[-1])

    def rows(self):
        for k in range(len(self.moved)):
            yield (k + 1, int(self.path[k + 1]), int(self.moved[k]), int(self.estimate[k]))


def search_ruler_run(obj: StochasticObjective, n_steps: int, rng, antithetic: bool = False,
                     theta0: int = 0, floor: float = 0.0) -> SearchTrace:
    """Run the search-ruler chain for ``n_steps`` steps.

    Costs for every candidate are drawn block-wise up front (the chain only
    reads two per step).  ``floor`` lifts normalised costs to at least that
    value; leave it at 0 to keep the kernel exact.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    S = obj.S
    if not 0 <= theta0 < S:
        raise DimensionMismatch(f"theta0 outside 0..{S - 1}")
    g = as_generator(rng)
    if S == 1:
        z = np.zeros(n_steps + 1, dtype=np.int64)
        return SearchTrace(z, np.zeros(n_steps, dtype=np.int8), z[1:].copy(), np.array([n_steps]))
    path = np.empty(n_steps + 1, dtype=np.int64)
    moved = np.empty(n_steps, dtype=np.int8)
    estimate = np.empty(n_steps, dtype=np.int64)
    visits = np.zeros(S, dtype=np.int64)
    path[0] = theta0
    th = theta0
    clamped = 0
    cols = np.arange(S)
    for start in range(0, n_steps, BLOCK):
        b = min(BLOCK, n_steps - start)
        ks = g.integers(0, S - 1, size=b)
        costs = np.asarray(obj.sampler(np.tile(cols, b), g), dtype=float).reshape(b, S)
        m, nc = normalize_cost(costs, obj.alpha, obj.beta)
        clamped += nc
        if floor > 0.0:
            m = np.maximum(m, floor)
        u = g.random(b)
        ut = g.random(b)
        p, mv = kernels.ruler_chain(th, np.ascontiguousarray(ks, dtype=np.int64), np.ascontiguousarray(m),
                                    u, ut, int(bool(antithetic)))
        path[start + 1:start + b + 1] = p[1:]
        moved[start:start + b] = mv
        onehot = np.zeros((b, S), dtype=np.int64)
        onehot[np.arange(b), p[1:]] = 1
        running = np.cumsum(onehot, axis=0) + visits
        estimate[start:start + b] = np.argmax(running, axis=1)
        visits = running[-1]
        th = int(p[-1])
    return SearchTrace(path, moved, estimate, visits, clamped)


def kernel_matrix(m) -> np.ndarray:
    """Transition matrix of the plain search-ruler chain for mean normalised costs m."""
    m = np.asarray(m, dtype=float)
    S = m.size
    if S < 2:
        return np.ones((1, 1))
    P = np.outer(m, 1.0 - m) / (S - 1)
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


def invariant_distribution(m) -> np.ndarray:
    """pi(theta) proportional to (1 - m(theta)) prod_{j != theta} m(j)."""
    m = np.asarray(m, dtype=float)
    w = np.array([(1.0 - m[t]) * np.prod(np.delete(m, t)) for t in range(m.size)])
    s = w.sum()
    if not s > 0:
        raise NumericalError("invariant weights vanish; the chain is not irreducible")
    return w / s


def occupation_ratio(m, best: int, other: int) -> float:
    """pi(best) / pi(other) = (m(other) / m(best)) ((1 - m(best)) / (1 - m(other)))."""
    m = np.asarray(m, dtype=float)
    return (m[other] / m[best]) * ((1.0 - m[best]) / (1.0 - m[other]))
