"""Dense two-phase simplex with Bland's rule.

Meant for the small LPs in this package (a few hundred variables at most).
Problems are reduced to ``min c'x, Ax = b, x >= 0, b >= 0`` before pivoting.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InputError, LpFailure

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass
class LpProblem:
    """``sense`` is "min" or "max"; ``bounds`` is one (lo, hi) pair or one per variable (None = infinite)."""

    c: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    bounds: object = (0.0, None)
    sense: str = "min"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "inequality")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        if self.sense not in ("min", "max"):
            raise InputError(f"sense must be 'min' or 'max', got {self.sense!r}")
        for arr in (self.c, self.A_ub, self.b_ub, self.A_eq, self.b_eq):
            if not np.all(np.isfinite(arr)):
                raise InputError("LP coefficients must be finite")
        self.bounds = _bounds(self.bounds, n)

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class LpResult:
    status: LpStatus
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    iterations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _rows(A, b, n, what):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n or A.shape[0] != b.size:
        raise DimensionMismatch(f"{what} rows {A.shape} do not fit {n} variables and {b.size} bounds")
    return A, b


def _bounds(bounds, n):
    if isinstance(bounds, tuple) and len(bounds) == 2 and not isinstance(bounds[0], (tuple, list)):
        bounds = [bounds] * n
    bounds = list(bounds)
    if len(bounds) != n:
        raise DimensionMismatch(f"{len(bounds)} bounds for {n} variables")
    out = []
    for lo, hi in bounds:
        lo = -np.inf if lo is None else float(lo)
        hi = np.inf if hi is None else float(hi)
        if lo > hi:
            raise InputError(f"lower bound {lo} exceeds upper bound {hi}")
        out.append((lo, hi))
    return out


def _standard_form(p: LpProblem):
    """x = T x' + s with x' >= 0; returns (T, s, extra upper-bound rows on x')."""
    cols = []
    shift = np.zeros(p.n)
    caps = []  # (column of x', cap)
    for k, (lo, hi) in enumerate(p.bounds):
        e = np.zeros(p.n)
        e[k] = 1.0
        if np.isfinite(lo):
            shift[k] = lo
            cols.append(e)
            if np.isfinite(hi):
                caps.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[k] = hi
            cols.append(-e)
        else:
            cols.append(e)
            cols.append(-e)
    T = np.array(cols).T if cols else np.zeros((p.n, 0))
    return T, shift, caps


class _Tableau:
    """Rows are constraints; the last row holds reduced costs, the last column the rhs."""

    def __init__(self, A, b, c, basis):
        m, n = A.shape
        self.t = np.zeros((m + 1, n + 1))
        self.t[:m, :n] = A
        self.t[:m, n] = b
        self.t[m, :n] = c
        self.basis = list(basis)
        for r, j in enumerate(self.basis):
            self.t[m] -= self.t[m, j] * self.t[r]
        self.iterations = 0

    def pivot(self, r, j):
        t = self.t
        t[r] /= t[r, j]
        col = t[:, j].copy()
        col[r] = 0.0
        t -= np.outer(col, t[r])
        self.basis[r] = j
        self.iterations += 1

    def run(self, allowed, max_iter):
        """Bland's rule.  Returns False when the objective is unbounded below."""
        t = self.t
        m = t.shape[0] - 1
        while True:
            if self.iterations > max_iter:
                raise LpFailure("simplex iteration limit reached")
            red = t[m, :-1]
            enter = next((j for j in allowed if red[j] < -FEAS_TOL), None)
            if enter is None:
                return True
            col = t[:m, enter]
            rows = np.nonzero(col > PIVOT_TOL)[0]
            if rows.size == 0:
                return False
            ratios = t[rows, -1] / col[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            leave = min(tied, key=lambda r: self.basis[r])
            self.pivot(int(leave), enter)


def _simplex(A, b, c, max_iter):
    """min c'x, Ax = b, x >= 0.  Returns (status, x, iterations)."""
    m, n = A.shape
    A = A.copy()
    b = b.copy()
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # phase 1: artificials n..n+m-1
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    tab = _Tableau(A1, b, c1, range(n, n + m))
    tab.run(range(n + m), max_iter)
    if tab.t[m, -1] < -FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
        return LpStatus.INFEASIBLE, None, tab.iterations
    # drive zero-level artificials out; drop rows that are redundant
    keep = []
    for r in range(m):
        if tab.basis[r] < n:
            keep.append(r)
            continue
        row = tab.t[r, :n]
        cand = np.nonzero(np.abs(row) > 1e-9)[0]
        if cand.size:
            tab.pivot(r, int(cand[0]))
            keep.append(r)
    t = tab.t[keep + [m]][:, list(range(n)) + [n + m]]
    basis = [tab.basis[r] for r in keep]
    tab2 = _Tableau(t[:-1, :n], t[:-1, n], c, basis)
    tab2.iterations = tab.iterations
    if not tab2.run(range(n), max_iter):
        return LpStatus.UNBOUNDED, None, tab2.iterations
    basis = tab2.basis
    x = np.zeros(n)
    x[basis] = tab2.t[:-1, n]
    # one refinement solve against the original rows to clean up pivot error
    if basis:
        Bm = A[keep][:, basis]
        try:
            x[basis] = np.linalg.solve(Bm, b[keep])
        except np.linalg.LinAlgError:
            pass
    x[(x < 0) & (x > -FEAS_TOL)] = 0.0
    return LpStatus.OPTIMAL, x, tab2.iterations


def solve_lp(p: LpProblem, max_iter: int = 50_000) -> LpResult:
    """Solve ``p``.  The status carries infeasibility and unboundedness; nothing raises."""
    T, shift, caps = _standard_form(p)
    n2 = T.shape[1]
    sign = -1.0 if p.sense == "max" else 1.0
    c2 = sign * (T.T @ p.c)
    Aub = p.A_ub @ T
    bub = p.b_ub - p.A_ub @ shift
    if caps:
        extra = np.zeros((len(caps), n2))
        for r, (j, cap) in enumerate(caps):
            extra[r, j] = 1.0
        Aub = np.vstack([Aub, extra])
        bub = np.concatenate([bub, [cap for _, cap in caps]])
    Aeq = p.A_eq @ T
    beq = p.b_eq - p.A_eq @ shift
    mu = Aub.shape[0]
    A = np.vstack([np.hstack([Aub, np.eye(mu)]), np.hstack([Aeq, np.zeros((Aeq.shape[0], mu))])])
    b = np.concatenate([bub, beq])
    c = np.concatenate([c2, np.zeros(mu)])
    if A.shape[0] == 0:
        if np.any(c < 0):
            return LpResult(LpStatus.UNBOUNDED)
        x = shift.copy()
        return LpResult(LpStatus.OPTIMAL, x, float(p.c @ x))
    status, xs, it = _simplex(A, b, c, max_iter)
    if status is not LpStatus.OPTIMAL:
        return LpResult(status, iterations=it)
    x = T @ xs[:n2] + shift
    return LpResult(status, x, float(p.c @ x), it)


def feasibility_residual(p: LpProblem, x) -> float:
    """Largest violation of any constraint or bound at ``x``."""
    x = np.asarray(x, dtype=float)
    r = [0.0]
    if p.A_ub.size:
        r.append(float(np.max(p.A_ub @ x - p.b_ub)))
    if p.A_eq.size:
        r.append(float(np.max(np.abs(p.A_eq @ x - p.b_eq))))
    lo = np.array([b[0] for b in p.bounds])
    hi = np.array([b[1] for b in p.bounds])
    r.append(float(np.max(lo - x, initial=0.0)))
    r.append(float(np.max(x - hi, initial=0.0)))
    return max(r)


def linprog_like(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None,
                 bounds: Sequence = (0.0, None), sense: str = "min") -> LpResult:
    """Convenience wrapper building the :class:`LpProblem` in one call."""
    return solve_lp(LpProblem(c, A_ub, b_ub, A_eq, b_eq, bounds, sense))
