"""HMM filtering, a path-enumeration oracle and filter-sensitivity bounds.

Observations are integer symbols ``0..Y-1``.  The filter at time k maps the
previous posterior through the transition matrix and then conditions on
``y_k``::

    T(pi, y; P) = B_y P' pi / sigma,   sigma = 1' B_y P' pi
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import DegenerateBound, DimensionMismatch, MissingLevels, TooLarge, ZeroLikelihood
from .markov import as_generator, dobrushin_coefficient, make_belief, make_likelihoods, make_stochastic

UNDERFLOW = 1e-300
MAX_ENUM_STEPS = 12
MAX_ENUM_STATES = 5
_CHUNK = 1 << 21


@dataclass(frozen=True)
class HmmModel:
    P: np.ndarray
    B: np.ndarray
    pi0: np.ndarray
    levels: Optional[np.ndarray] = None

    def __post_init__(self):
        P = make_stochastic(self.P)
        B = make_likelihoods(self.B)
        pi0 = make_belief(self.pi0)
        if B.shape[0] != P.shape[0] or pi0.shape[0] != P.shape[0]:
            raise DimensionMismatch(f"P {P.shape}, B {B.shape}, pi0 {pi0.shape}")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "pi0", pi0)
        if self.levels is not None:
            g = np.array(self.levels, dtype=float)
            if g.shape != (P.shape[0],):
                raise DimensionMismatch(f"levels must have length {P.shape[0]}")
            g.setflags(write=False)
            object.__setattr__(self, "levels", g)

    @property
    def X(self) -> int:
        return self.P.shape[0]

    @property
    def Y(self) -> int:
        return self.B.shape[1]

    def with_P(self, P) -> "HmmModel":
        return HmmModel(P, self.B, self.pi0, self.levels)

    def simulate(self, n: int, rng):
        """States x_0..x_n and observations y_1..y_n (returned as arrays of n+1 and n)."""
        g = as_generator(rng)
        xs = kernels.sample_chain(np.cumsum(self.P, axis=1), np.cumsum(self.pi0), g.random(n + 1))
        u = g.random(n)
        cumB = np.cumsum(self.B, axis=1)
        ys = (u[:, None] >= cumB[xs[1:]]).sum(axis=1)
        ys = np.minimum(ys, self.Y - 1).astype(np.int64)
        return xs, ys


def _check_symbol(model, y):
    if not 0 <= y < model.Y:
        raise DimensionMismatch(f"observation {y} outside 0..{model.Y - 1}")


def filter_step(model: HmmModel, pi, y: int, P=None):
    """One normalised filter update.  ``P`` overrides the model's transition matrix."""
    _check_symbol(model, y)
    P = model.P if P is None else P
    unnorm = model.B[:, y] * (np.asarray(pi, dtype=float) @ P)
    sigma = float(unnorm.sum())
    if not sigma > UNDERFLOW:
        raise ZeroLikelihood(f"observation {y} has likelihood {sigma:.3g} under the predicted belief")
    return unnorm / sigma, sigma


def predict_step(P, pi) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if P.ndim != 2 or P.shape[0] != pi.shape[0]:
        raise DimensionMismatch(f"matrix {P.shape} and belief {pi.shape}")
    return pi @ P


def run_filter(model: HmmModel, ys, pi0=None, P=None):
    """Filter a whole observation sequence.

    Returns ``(beliefs, sigmas)`` with ``beliefs[0] = pi0`` and
    ``beliefs[k] = P(x_k | y_1..y_k)``.
    """
    ys = np.ascontiguousarray(ys, dtype=np.int64)
    if ys.size and (ys.min() < 0 or ys.max() >= model.Y):
        raise DimensionMismatch("observation symbol out of range")
    P = model.P if P is None else make_stochastic(P)
    pi0 = model.pi0 if pi0 is None else make_belief(pi0)
    beliefs, sig, fail = kernels.hmm_filter(
        np.ascontiguousarray(P), np.ascontiguousarray(model.B), np.ascontiguousarray(pi0), ys
    )
    if fail >= 0:
        raise ZeroLikelihood(f"observation at step {fail + 1} has zero likelihood")
    return beliefs, sig


def brute_force_posterior(model: HmmModel, ys, return_likelihood: bool = False):
    """Posterior of x_k by summing the joint pmf over every state path x_0..x_k.

    Each path weight is the explicit product
    ``pi0(x_0) prod_n P(x_{n-1}, x_n) B(x_n, y_n)``; no recursion is shared
    between paths.  Limited to k <= 12 observations and X <= 5 states.
    """
    ys = np.asarray(ys, dtype=np.int64)
    k = len(ys)
    X = model.X
    if k < 1:
        raise ValueError("need at least one observation")
    if k > MAX_ENUM_STEPS or X > MAX_ENUM_STATES:
        raise TooLarge(f"enumeration limited to k <= {MAX_ENUM_STEPS}, X <= {MAX_ENUM_STATES}")
    for y in ys:
        _check_symbol(model, int(y))
    npaths = X ** (k + 1)
    powers = X ** np.arange(k, -1, -1, dtype=np.int64)  # digit n is state x_n
    post = np.zeros(X)
    for start in range(0, npaths, _CHUNK):
        p = np.arange(start, min(npaths, start + _CHUNK), dtype=np.int64)
        idx = (p[:, None] // powers[None, :]) % X
        w = model.pi0[idx[:, 0]].copy()
        for n in range(1, k + 1):
            w *= model.P[idx[:, n - 1], idx[:, n]] * model.B[idx[:, n], ys[n - 1]]
        post += np.bincount(idx[:, k], weights=w, minlength=X)
    total = post.sum()
    if not total > UNDERFLOW:
        raise ZeroLikelihood("observation sequence has zero probability")
    if return_likelihood:
        return post / total, float(total)
    return post / total


def perturbation_epsilon(P, Pbar) -> float:
    """max_i sum_j |P_ij - Pbar_ij|, the bound on ||P'pi - Pbar'pi||_1 over beliefs."""
    return float(np.abs(np.asarray(P) - np.asarray(Pbar)).sum(axis=1).max())


def expected_deviation(model: HmmModel, Pbar, pi) -> float:
    """E_y |g'(T(pi,y;P) - T(pi,y;Pbar))| with y ~ sigma(pi, .; P), by enumeration."""
    g = _levels(model)
    Pbar = np.asarray(Pbar, dtype=float)
    pred = np.asarray(pi, dtype=float) @ model.P
    predbar = np.asarray(pi, dtype=float) @ Pbar
    total = 0.0
    for y in range(model.Y):
        u = model.B[:, y] * pred
        ubar = model.B[:, y] * predbar
        s, sbar = u.sum(), ubar.sum()
        if s <= UNDERFLOW:
            continue  # zero-probability observation contributes nothing
        if sbar <= UNDERFLOW:
            raise ZeroLikelihood(f"observation {y} impossible under the perturbed model")
        total += s * abs(g @ (u / s - ubar / sbar))
    return float(total)


def expected_deviation_bound(model: HmmModel, Pbar, pi) -> float:
    """eps * sum_y max_{i,j} g'(I - T(pi,y;Pbar) 1') B_y (e_i - e_j)."""
    g = _levels(model)
    Pbar = np.asarray(Pbar, dtype=float)
    eps = perturbation_epsilon(model.P, Pbar)
    if eps == 0.0:
        return 0.0
    predbar = np.asarray(pi, dtype=float) @ Pbar
    total = 0.0
    for y in range(model.Y):
        ubar = model.B[:, y] * predbar
        sbar = ubar.sum()
        if sbar <= UNDERFLOW:
            raise ZeroLikelihood(f"observation {y} impossible under the perturbed model")
        # g'(I - T 1') B_y e_i = B_iy (g_i - g'T)
        v = model.B[:, y] * (g - g @ (ubar / sbar))
        total += v.max() - v.min()
    return float(eps * total)


def _levels(model):
    if model.levels is None:
        raise MissingLevels("model has no state levels g")
    return model.levels


def bound_factors(B, Pbar, pibar, y: int):
    """(A, mu) for observation y: A = 1'B_y Pbar' pibar / max_i B_iy, mu = min_i B_iy / max_i B_iy."""
    col = np.asarray(B, dtype=float)[:, y]
    bmax = col.max()
    if bmax <= 0:
        raise ZeroLikelihood(f"observation {y} has zero likelihood in every state")
    A = float(col @ (np.asarray(pibar, dtype=float) @ np.asarray(Pbar, dtype=float)) / bmax)
    return A, float(col.min() / bmax)


def samplepath_bound_step(model: HmmModel, Pbar, pibar_prev, err_prev: float, y: int,
                          eps: Optional[float] = None, dob: Optional[float] = None) -> float:
    """One step of the recursive L1 bound on ||pi_k - pibar_k||_1.

    ``eps/max{A - eps, mu} + dob(Pbar) * err_prev / A``.
    """
    if err_prev < 0:
        raise ValueError("err_prev must be nonnegative")
    if eps is None:
        eps = perturbation_epsilon(model.P, Pbar)
    if dob is None:
        dob = dobrushin_coefficient(Pbar)
    A, mu = bound_factors(model.B, Pbar, pibar_prev, y)
    return _bound(eps, dob, err_prev, A, mu, y)


def _bound(eps, dob, err_prev, A, mu, y):
    denom = max(A - eps, mu)
    if denom <= 0 or A <= 0:
        raise DegenerateBound(f"bound denominators vanish at observation {y} (A={A:.3g}, mu={mu:.3g})")
    return eps / denom + dob * err_prev / A


@dataclass
class SensitivityReport:
    k: np.ndarray
    observed_l1: np.ndarray
    samplepath_bound: np.ndarray
    A_value: np.ndarray
    mu_value: np.ndarray
    epsilon: float
    columns: tuple = field(default=("k", "observed_l1", "samplepath_bound", "A_value", "mu_value"), repr=False)

    def rows(self):
        for i in range(len(self.k)):
            yield (int(self.k[i]), self.observed_l1[i], self.samplepath_bound[i], self.A_value[i], self.mu_value[i])

    def __len__(self):
        return len(self.k)


def run_sensitivity_experiment(model: HmmModel, Pbar, n: int, rng, pibar0=None) -> SensitivityReport:
    """Simulate the true model, filter with P and Pbar side by side and track the bound."""
    if n < 1:
        raise ValueError("n must be >= 1")
    Pbar = make_stochastic(Pbar)
    if Pbar.shape != model.P.shape:
        raise DimensionMismatch("Pbar shape differs from the model's P")
    pibar0 = model.pi0 if pibar0 is None else make_belief(pibar0)
    _, ys = model.simulate(n, rng)
    beliefs, _ = run_filter(model, ys)
    bbar, _ = run_filter(model, ys, pi0=pibar0, P=Pbar)
    eps = perturbation_epsilon(model.P, Pbar)
    dob = dobrushin_coefficient(Pbar)
    observed = np.abs(beliefs[1:] - bbar[1:]).sum(axis=1)
    # A and mu vectorised over steps; A uses pibar_{k-1}
    cols = model.B[:, ys].T  # (n, X)
    bmax = cols.max(axis=1)
    A = np.einsum("kx,kx->k", cols, bbar[:-1] @ Pbar) / bmax
    mu = cols.min(axis=1) / bmax
    bound = np.empty(n)
    err = float(np.abs(model.pi0 - pibar0).sum())
    for k in range(n):
        err = _bound(eps, dob, err, A[k], mu[k], int(ys[k]))
        bound[k] = err
    return SensitivityReport(np.arange(1, n + 1), observed, bound, A, mu, eps)
