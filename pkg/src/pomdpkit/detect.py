"""Bayesian quickest change detection.

State 0 is the post-change (absorbing) state and state 1 the pre-change
state.  With jump probability p the Shiryaev statistic
``r = pi(0) / (p (1 - pi(0)))`` obeys ``r_k = (r_{k-1} + 1) L(y_k) / (1 - p)``
where ``L(y) = B[0, y] / B[1, y]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InputError,
    NoConvergence,
    UndefinedLikelihoodRatio,
)
from .markov import make_belief, make_likelihoods, make_stochastic

SHIRYAEV = "shiryaev"
SHIRYAEV_ROBERTS = "shiryaev_roberts"
LOG_SWITCH = 1e100


@dataclass(frozen=True)
class DetectorState:
    """Detection statistic; ``value`` is r, or log r once r exceeded 1e100."""

    value: float = 0.0
    kind: str = SHIRYAEV_ROBERTS
    p: float = 0.0
    log_scale: bool = False

    def __post_init__(self):
        if self.kind not in (SHIRYAEV, SHIRYAEV_ROBERTS):
            raise InputError(f"unknown detector kind {self.kind!r}")
        if self.kind == SHIRYAEV and not 0.0 < self.p < 1.0:
            raise InputError("Shiryaev statistic needs 0 < p < 1")
        if not self.log_scale and self.value < 0:
            raise InputError("statistic must be nonnegative")

    @property
    def log_r(self) -> float:
        if self.log_scale:
            return self.value
        return math.log(self.value) if self.value > 0 else -math.inf

    @property
    def r(self) -> float:
        return math.exp(self.value) if self.log_scale else self.value

    def crossed(self, threshold: float) -> bool:
        if self.log_scale:
            return threshold <= 0 or self.value >= math.log(threshold)
        return self.value >= threshold


def likelihood_ratio(B, y: int) -> float:
    B = np.asarray(B, dtype=float)
    if B.shape[0] != 2:
        raise DimensionMismatch("change detection needs a 2-row likelihood matrix")
    post, pre = B[0, y], B[1, y]
    if pre <= 0.0:
        raise UndefinedLikelihoodRatio(f"pre-change likelihood of observation {y} is zero")
    return post / pre


def shiryaev_update(state: DetectorState, y: int, B) -> DetectorState:
    L = likelihood_ratio(B, y)
    scale = 1.0 / (1.0 - state.p) if state.kind == SHIRYAEV else 1.0
    if not state.log_scale:
        r = scale * (state.value + 1.0) * L
        if r <= LOG_SWITCH:
            return DetectorState(r, state.kind, state.p, False)
    if L == 0.0:
        return DetectorState(0.0, state.kind, state.p, False)
    lr = state.log_r
    # log(r + 1) without overflow
    l1 = lr + math.log1p(math.exp(-lr)) if lr > 0 else math.log1p(math.exp(lr))
    return DetectorState(l1 + math.log(L) + math.log(scale), state.kind, state.p, True)


def statistic_from_belief(pi_post: float, p: float) -> float:
    return pi_post / (p * (1.0 - pi_post))


def change_model(p: float):
    """Transition matrix with absorbing post-change state 0 and pre-change start."""
    P = make_stochastic([[1.0, 0.0], [p, 1.0 - p]])
    return P, make_belief([0.0, 1.0])


def detector_trace(ys, state0: DetectorState, B, threshold: float):
    """Run until the first crossing.  Rows (k, y, statistic, stopped); statistic is r or log r."""
    if threshold < 0:
        raise InputError("threshold must be nonnegative")
    rows = []
    s = state0
    for k, y in enumerate(ys, start=1):
        s = shiryaev_update(s, int(y), B)
        stop = s.crossed(threshold)
        rows.append((k, int(y), s.value, int(stop)))
        if stop:
            break
    return rows


def run_detector(ys, state0: DetectorState, B, threshold: float) -> int:
    """First k (1-based) with r_k >= threshold, or len(ys) + 1 when never crossed."""
    rows = detector_trace(ys, state0, B, threshold)
    if rows and rows[-1][3]:
        return rows[-1][0]
    return len(ys) + 1


# -- phase-type change times ----------------------------------------------

@dataclass(frozen=True)
class PhaseType:
    pi0: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        P = make_stochastic(self.P)
        pi0 = make_belief(self.pi0)
        if pi0.shape[0] != P.shape[0] or P.shape[0] < 2:
            raise DimensionMismatch("phase-type needs matching P and pi0 with X >= 2")
        if P[0, 0] != 1.0:
            raise InputError("state 0 must be absorbing (first row e_0)")
        if pi0[0] != 0.0:
            raise InputError("initial distribution must put zero mass on the absorbing state")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "pi0", pi0)


def phase_type_pmf(pt: PhaseType, kmax: int):
    """Absorption-time pmf nu_0..nu_kmax and the tail mass P(tau > kmax)."""
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    Pbar = pt.P[1:, 1:]
    Pexit = pt.P[1:, 0]
    nu = np.zeros(kmax + 1)
    nu[0] = pt.pi0[0]
    row = pt.pi0[1:].copy()
    for k in range(1, kmax + 1):
        nu[k] = row @ Pexit
        row = row @ Pbar
    return nu, float(row.sum())


# -- classical sequential detection ---------------------------------------

@dataclass
class SequentialDetectionResult:
    grid: np.ndarray      # belief of state 1
    V: np.ndarray
    action: np.ndarray    # 0 declare state 0, 1 declare state 1, 2 continue
    lower: float
    upper: float
    sweeps: int

    def continue_is_interval(self) -> bool:
        idx = np.nonzero(self.action == 2)[0]
        return idx.size == 0 or bool(np.all(np.diff(idx) == 1))


def sequential_detection_dp(L_cost: float, C: float, B, grid: int = 1001, tol: float = 1e-9,
                            max_sweeps: int = 10_000, interpolation: str = "linear"):
    """Value iteration for the two-hypothesis sequential test with P = I.

    ``V(q) = min{q L, (1 - q) L, C + sum_y V(T(q, y)) sigma(q, y)}`` with q the
    belief of state 1.  V(T) between grid points is linearly interpolated
    (``interpolation="nearest"`` snaps instead).
    """
    B = make_likelihoods(B)
    if B.shape[0] != 2:
        raise DimensionMismatch("sequential detection needs 2 states")
    if grid < 100:
        raise InputError("grid needs at least 100 points")
    if L_cost < 0 or C < 0:
        raise InputError("costs must be nonnegative")
    q = np.linspace(0.0, 1.0, grid)
    sig = (1.0 - q)[:, None] * B[0][None, :] + q[:, None] * B[1][None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        Tq = np.where(sig > 0, q[:, None] * B[1][None, :] / sig, 0.0)
    if interpolation == "nearest":
        near = np.rint(Tq * (grid - 1)).astype(np.int64)
        evaluate = lambda V: V[near]  # noqa: E731
    elif interpolation == "linear":
        evaluate = lambda V: np.interp(Tq, q, V)  # noqa: E731
    else:
        raise InputError(f"unknown interpolation {interpolation!r}")
    stop = np.stack([q * L_cost, (1.0 - q) * L_cost])
    stop_min = stop.min(axis=0)
    V = stop_min
    for sweep in range(1, max_sweeps + 1):
        cont = C + (evaluate(V) * sig).sum(axis=1)
        Vn = np.minimum(stop_min, cont)
        delta = np.abs(Vn - V).max()
        V = Vn
        if delta <= tol:
            break
    else:
        raise NoConvergence(f"value iteration did not settle within {max_sweeps} sweeps")
    cont = C + (evaluate(V) * sig).sum(axis=1)
    action = np.argmin(np.stack([stop[0], stop[1], cont]), axis=0)
    inside = np.nonzero(action == 2)[0]
    if inside.size:
        lower, upper = q[inside[0]], q[inside[-1]]
    else:
        r1 = np.nonzero(action == 0)[0]
        lower = upper = q[r1[-1]] if r1.size else 0.0
    return SequentialDetectionResult(q, V, action, float(lower), float(upper), sweep)
