"""Finite-state Markov chain primitives.

Matrices and beliefs are plain read-only ``numpy`` arrays; the constructors
here validate them once so downstream code can assume row-stochasticity.
States are indexed from 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    DimensionMismatch,
    NegativeEntry,
    NonSquare,
    NonUniqueStationary,
    RowSumOutOfTolerance,
)

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class RngStream:
    """Reproducible, independent random stream keyed by ``(master_seed, stream_index)``.

    Backed by the counter-based Philox generator; two streams with the same
    key yield the same draws, distinct indices give independent streams.
    """

    master_seed: int
    stream_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "RngStream":
        # children of stream k live at k * 2**20 + index; fine for < 1M children
        return RngStream(self.master_seed, self.stream_index * (1 << 20) + index + 1)


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an RngStream or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None:
        raise TypeError("an rng (Generator, RngStream or int seed) is required")
    return RngStream(int(rng)).generator()


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def make_stochastic(entries, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Validate a square row-stochastic matrix and renormalise rows to unit sum."""
    P = np.array(entries, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise NonSquare(f"expected a non-empty square matrix, got shape {P.shape}")
    return _frozen(_check_rows(P, tol))


def make_likelihoods(entries, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Validate an X-by-Y observation matrix whose rows are pmfs."""
    B = np.array(entries, dtype=float)
    if B.ndim != 2 or B.size == 0:
        raise DimensionMismatch(f"expected a non-empty 2-d matrix, got shape {B.shape}")
    return _frozen(_check_rows(B, tol))


def _check_rows(M: np.ndarray, tol: float) -> np.ndarray:
    if not np.all(np.isfinite(M)):
        raise NegativeEntry("matrix has non-finite entries")
    if np.any(M < 0):
        i, j = np.argwhere(M < 0)[0]
        raise NegativeEntry(f"entry ({i}, {j}) = {M[i, j]} is negative")
    sums = M.sum(axis=1)
    bad = np.abs(sums - 1.0) > tol
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RowSumOutOfTolerance(f"row {i} sums to {float(sums[i]):.17g}")
    return M / sums[:, None]


def make_belief(probs, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Validate a probability vector and renormalise it to unit sum."""
    p = np.array(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise DimensionMismatch(f"expected a non-empty vector, got shape {p.shape}")
    return _frozen(_check_rows(p[None, :], tol)[0])


def unit_belief(dim: int, index: int) -> np.ndarray:
    e = np.zeros(dim)
    e[index] = 1.0
    return _frozen(e)


def stationary_distribution(P) -> np.ndarray:
    """Solve ``[(P - I)'; 1'] pi = [0; 1]`` in the least-squares sense.

    Raises NonUniqueStationary when ``P - I`` has more than one null direction
    (several recurrent classes).
    """
    P = make_stochastic(P)
    X = P.shape[0]
    A = (P - np.eye(X)).T
    sv = np.linalg.svd(A, compute_uv=False)
    if np.sum(sv <= 1e-10 * max(1.0, sv[0])) > 1:
        raise NonUniqueStationary("transition matrix has more than one recurrent class")
    M = np.vstack([A, np.ones((1, X))])
    rhs = np.zeros(X + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return _frozen(pi / pi.sum())


def stationary_by_power_iteration(P, tol: float = 1e-14, max_iter: int = 1_000_000) -> np.ndarray:
    """Cross-check for :func:`stationary_distribution`; iterates the lazy chain (P + I)/2."""
    P = make_stochastic(P)
    X = P.shape[0]
    lazy = 0.5 * (P + np.eye(X))
    pi = np.full(X, 1.0 / X)
    for _ in range(max_iter):
        nxt = pi @ lazy
        if np.abs(nxt - pi).sum() < tol:
            return nxt / nxt.sum()
        pi = nxt
    return pi / pi.sum()


def dobrushin_coefficient(P) -> float:
    """``1 - min_{i,j} sum_l min(P_il, P_jl)``."""
    P = np.asarray(P, dtype=float)
    overlap = np.minimum(P[:, None, :], P[None, :, :]).sum(axis=2)
    return float(min(1.0, max(0.0, 1.0 - overlap.min())))


def second_eigenvalue_modulus(P) -> float:
    P = np.asarray(P, dtype=float)
    if P.shape[0] == 1:
        return 0.0
    mods = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
    return float(min(mods[1], 1.0))


def dobrushin_of_product(Ps) -> float:
    """Dobrushin coefficient of the left-to-right product ``Ps[0] @ Ps[1] @ ...``."""
    Ps = [np.asarray(P, dtype=float) for P in Ps]
    if not Ps:
        raise DimensionMismatch("empty product")
    prod = Ps[0]
    for Q in Ps[1:]:
        if Q.shape != prod.shape:
            raise DimensionMismatch(f"cannot multiply {prod.shape} by {Q.shape}")
        prod = prod @ Q
    return dobrushin_coefficient(prod)


def predict(P, pi) -> np.ndarray:
    """Chapman-Kolmogorov prediction ``P' pi``."""
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if P.shape[0] != pi.shape[0]:
        raise DimensionMismatch(f"matrix {P.shape} and belief {pi.shape}")
    return pi @ P


def simulate_chain(P, pi0, n: int, rng) -> np.ndarray:
    """Sample ``x_0..x_n``; ``x_0 ~ pi0``.  Returns an int64 array of length n + 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    P = make_stochastic(P)
    pi0 = make_belief(pi0)
    if pi0.shape[0] != P.shape[0]:
        raise DimensionMismatch("initial belief and transition matrix disagree")
    u = as_generator(rng).random(n + 1)
    return kernels.sample_chain(np.cumsum(P, axis=1), np.cumsum(pi0), u)


def sample_uniform_simplex(dim: int, rng) -> np.ndarray:
    """Flat Dirichlet draw: normalised unit-exponential variates."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    x = as_generator(rng).standard_exponential(dim)
    return _frozen(x / x.sum())


def random_stochastic(dim: int, rng, concentration: float = 1.0) -> np.ndarray:
    """Random transition matrix with Dirichlet(concentration) rows."""
    g = as_generator(rng)
    return _frozen(g.dirichlet(np.full(dim, concentration), size=dim))
