"""Stochastic orders and total positivity checks.

Every check returns an :class:`OrderVerdict`; when the property fails the
``witness`` holds the indices at which the defining inequality breaks.
All comparisons use an absolute tolerance of 1e-12.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, NegativeEntry, OrderViolation

TOL = 1e-12


@dataclass(frozen=True)
class OrderVerdict:
    holds: bool
    witness: Optional[tuple] = None

    def __bool__(self):
        return self.holds


def _pair(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise DimensionMismatch(f"shapes {p.shape} and {q.shape} differ")
    return p, q


def is_tp2(M) -> OrderVerdict:
    """All 2x2 minors nonnegative.  Witness is ((i1, i2), (j1, j2))."""
    M = np.asarray(M, dtype=float)
    if np.any(M < 0):
        raise NegativeEntry("TP2 check needs a nonnegative matrix")
    m, n = M.shape
    for i1 in range(m - 1):
        # minors with rows (i1, i2) and columns (j1 < j2), vectorised over i2, j1, j2
        a = M[i1]
        b = M[i1 + 1:]
        minors = a[None, :, None] * b[:, None, :] - a[None, None, :] * b[:, :, None]
        upper = np.triu(np.ones((n, n), dtype=bool), 1)
        bad = (minors < -TOL) & upper[None]
        if bad.any():
            d, j1, j2 = np.argwhere(bad)[0]
            return OrderVerdict(False, ((i1, i1 + 1 + int(d)), (int(j1), int(j2))))
    return OrderVerdict(True)


def mlr_dominates(p, q) -> OrderVerdict:
    """p >=_r q: p(i) q(j) >= p(j) q(i) for every i > j.  Witness (i, j)."""
    p, q = _pair(p, q)
    cross = np.outer(p, q) - np.outer(q, p)  # [i, j] = p_i q_j - q_i p_j
    lower = np.tril(np.ones_like(cross, dtype=bool), -1)
    bad = (cross < -TOL) & lower
    if bad.any():
        i, j = np.argwhere(bad)[0]
        return OrderVerdict(False, (int(i), int(j)))
    return OrderVerdict(True)


def fosd_dominates(p, q) -> OrderVerdict:
    """Tail sums of p dominate those of q.  Witness (l,): first failing tail start."""
    p, q = _pair(p, q)
    tp = np.cumsum(p[::-1])[::-1]
    tq = np.cumsum(q[::-1])[::-1]
    bad = tp < tq - TOL
    if bad.any():
        return OrderVerdict(False, (int(np.argmax(bad)),))
    return OrderVerdict(True)


def fosd_matrix_condition(P1, P2) -> OrderVerdict:
    """Every row of P1 first-order dominates the matching row of P2.

    Written as ``P1 U >= P2 U`` with U the tail-summing matrix.  Witness (i, l).
    """
    P1 = np.asarray(P1, dtype=float)
    P2 = np.asarray(P2, dtype=float)
    if P1.shape != P2.shape:
        raise DimensionMismatch(f"shapes {P1.shape} and {P2.shape} differ")
    X = P1.shape[1]
    U = np.tril(np.ones((X, X)))  # column l sums entries l..X-1
    bad = P1 @ U < P2 @ U - TOL
    if bad.any():
        i, l = np.argwhere(bad)[0]
        return OrderVerdict(False, (int(i), int(l)))
    return OrderVerdict(True)


def hazard_ratios(pmf, tail: float = 0.0) -> np.ndarray:
    """Survival ratios Fbar_{i+1}/Fbar_i over the support, Fbar_i = P(T >= i)."""
    f = np.asarray(pmf, dtype=float)
    surv = np.cumsum(f[::-1])[::-1] + tail
    keep = surv > TOL
    s = surv[keep]
    return s[1:] / s[:-1]


def is_ihr(pmf, tail: float = 0.0) -> OrderVerdict:
    """Increasing hazard rate: survival ratios nonincreasing.

    ``tail`` is probability mass beyond the last listed point (for truncated
    pmfs); it is added to every survival value.  Witness (i,) where the ratio
    increases.
    """
    r = hazard_ratios(pmf, tail)
    bad = np.diff(r) > TOL
    if bad.any():
        return OrderVerdict(False, (int(np.argmax(bad)),))
    return OrderVerdict(True)


def is_submodular(Q) -> OrderVerdict:
    """Q(i, u+1) - Q(i, u) nonincreasing in i for every u.  Witness (i, u)."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[1] < 2:
        raise DimensionMismatch("need a 2-d table with at least two actions")
    d = np.diff(Q, axis=1)
    bad = np.diff(d, axis=0) > TOL
    if bad.any():
        i, u = np.argwhere(bad)[0]
        return OrderVerdict(False, (int(i), int(u)))
    return OrderVerdict(True)


def np_threshold(f, g, alpha: float):
    """Neyman-Pearson threshold test for f against g when f >=_r g.

    The likelihood ratio f/g increases with the outcome, so the most powerful
    level-alpha deterministic rule rejects f on the lowest outcomes.  Returns
    ``(t, level)``: outcomes ``0..t-1`` are rejected and ``level`` is their f
    mass.  ``t`` is the largest count with level <= alpha; no boundary
    randomisation.
    """
    f, g = _pair(f, g)
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    v = mlr_dominates(f, g)
    if not v:
        raise OrderViolation(f"f does not MLR-dominate g (witness {v.witness})")
    levels = np.concatenate([[0.0], np.cumsum(f)])
    t = int(np.nonzero(levels <= alpha + TOL)[0].max())
    return t, float(levels[t])


def random_tp2_stochastic(X: int, rng, cols: Optional[int] = None, spread: float = 2.0) -> np.ndarray:
    """Random row-stochastic TP2 matrix.

    Entries ``exp(a_i b_j) w_j`` with increasing a and b form a TP2 kernel;
    normalising rows multiplies by positive row factors, which keeps TP2.
    """
    g = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n = X if cols is None else cols
    a = np.sort(g.uniform(0.0, spread, X))
    b = np.sort(g.uniform(0.0, spread, n))
    w = g.uniform(0.1, 1.0, n)
    K = np.exp(np.outer(a, b)) * w[None, :]
    return K / K.sum(axis=1, keepdims=True)
