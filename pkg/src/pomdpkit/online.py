"""Online estimation of the state levels of a Gaussian-observation HMM.

Observations are ``y_k = g(x_k) + sigma w_k`` with known transition matrix
and known sigma; the unknown parameter is the level vector g.  Three
estimators are provided: recursive EM with a Gauss-Newton information
recursion, recursive maximum likelihood and recursive prediction error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .errors import DimensionMismatch, InputError, ParameterOutOfRange, ZeroLikelihood
from .markov import as_generator, make_belief, make_stochastic

ALGORITHMS = ("recem", "rml", "rpe")


@dataclass(frozen=True)
class GaussianLevelsHmm:
    P: np.ndarray
    g: np.ndarray
    sigma: float
    pi0: Optional[np.ndarray] = None

    def __post_init__(self):
        P = make_stochastic(self.P)
        g = np.array(self.g, dtype=float)
        if g.shape != (P.shape[0],):
            raise DimensionMismatch(f"levels must have length {P.shape[0]}")
        if not self.sigma > 0:
            raise ParameterOutOfRange("sigma must be positive")
        X = P.shape[0]
        pi0 = np.full(X, 1.0 / X) if self.pi0 is None else make_belief(self.pi0)
        g.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "pi0", pi0)

    @property
    def X(self) -> int:
        return self.P.shape[0]

    def simulate(self, n: int, rng):
        """States x_0..x_n and real observations y_1..y_n."""
        gen = as_generator(rng)
        xs = kernels.sample_chain(np.cumsum(self.P, axis=1), np.cumsum(self.pi0), gen.random(n + 1))
        ys = self.g[xs[1:]] + self.sigma * gen.standard_normal(n)
        return xs, ys


@dataclass(frozen=True)
class EstimatorConfig:
    """``info0`` is the initial (diagonal) information.  When None it is 1/(eps sigma^2), so the first
    RecEM step is an eps-sized gradient step and eps = 0 freezes the estimate; with ``forgetting``
    (``I_k = (1 - eps) I_{k-1} + eps H`` and an eps-scaled step) it is 1/sigma^2."""

    algorithm: str = "recem"
    eps: float = 0.01
    batch: int = 1
    delta: float = 1e-3
    info0: Optional[float] = None
    bounds: tuple = (-10.0, 10.0)
    h: float = 1e-4
    forgetting: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InputError(f"algorithm must be one of {ALGORITHMS}")
        if not 0.0 <= self.eps < 1.0:
            raise ParameterOutOfRange("eps must lie in [0, 1)")
        if not self.delta > 0 or not self.h > 0:
            raise ParameterOutOfRange("delta and h must be positive")
        if self.batch < 1:
            raise ParameterOutOfRange("batch must be >= 1")
        if not self.bounds[0] < self.bounds[1]:
            raise ParameterOutOfRange("bounds must satisfy lo < hi")


@dataclass
class ParamEstimate:
    g: np.ndarray
    info: Optional[np.ndarray] = None
    floors: int = 0

    def copy(self) -> "ParamEstimate":
        return ParamEstimate(self.g.copy(), None if self.info is None else self.info.copy(), self.floors)


def gaussian_loglik(y: float, g, sigma: float) -> np.ndarray:
    d = y - np.asarray(g, dtype=float)
    return -(d * d) / (2.0 * sigma * sigma) - math.log(math.sqrt(2.0 * math.pi) * sigma)


def filter_update(pi_prev, y: float, g, P, sigma: float):
    """Filter step for real y, stabilised in log space.  Returns (pi, log-likelihood increment)."""
    pred = np.asarray(pi_prev, dtype=float) @ P
    lw = gaussian_loglik(y, g, sigma)
    live = pred > 0
    if not live.any():
        raise ZeroLikelihood("predicted belief is identically zero")
    m = lw[live].max()
    w = pred * np.exp(lw - m)
    s = w.sum()
    if not s > 1e-300:
        raise ZeroLikelihood(f"observation {y!r} has zero likelihood")
    return w / s, float(math.log(s) + m)


def _info0(cfg, sigma):
    if cfg.info0 is not None:
        return cfg.info0
    if cfg.forgetting:
        return 1.0 / (sigma * sigma)
    return math.inf if cfg.eps == 0 else 1.0 / (cfg.eps * sigma * sigma)


def _project(g, cfg):
    return np.clip(g, cfg.bounds[0], cfg.bounds[1])


# -- recursive EM ----------------------------------------------------------

def recem_reward(g, pi, y: float, sigma: float) -> float:
    """-(1 / 2 sigma^2) sum_i pi(i) (y - g(i))^2."""
    d = y - np.asarray(g, dtype=float)
    return float(-(np.asarray(pi) * d * d).sum() / (2.0 * sigma * sigma))


def recem_gradient(g, pi, y: float, sigma: float) -> np.ndarray:
    return np.asarray(pi) * (y - np.asarray(g, dtype=float)) / (sigma * sigma)


def recem_hessian(pi, sigma: float) -> np.ndarray:
    """Magnitude of the (diagonal) Hessian of the reward."""
    return np.asarray(pi, dtype=float) / (sigma * sigma)


def finite_difference_gradient(f, theta, h: float) -> np.ndarray:
    """Central differences of scalar f at theta."""
    theta = np.asarray(theta, dtype=float)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        grad[i] = (f(theta + e) - f(theta - e)) / (2.0 * h)
    return grad


def recursive_em_step(est: ParamEstimate, pi_filtered, y: float, sigma: float, cfg: EstimatorConfig) -> ParamEstimate:
    """Information-weighted ascent on the expected complete-data reward at belief ``pi_filtered``."""
    info = np.full(est.g.size, _info0(cfg, sigma)) if est.info is None else est.info
    H = recem_hessian(pi_filtered, sigma)
    info = (1.0 - cfg.eps) * info + cfg.eps * H if cfg.forgetting else info + cfg.eps * H
    low = info < cfg.delta
    info = np.where(low, cfg.delta, info)
    step = recem_gradient(est.g, pi_filtered, y, sigma) / info
    if cfg.forgetting:
        step = cfg.eps * step
    return ParamEstimate(_project(est.g + step, cfg), info, est.floors + int(low.sum()))


# -- recursive maximum likelihood ------------------------------------------

def rml_gradient(g, pi_prev, y: float, P, sigma: float, h: float) -> np.ndarray:
    """Central-difference gradient of log 1'B_y(g) P' pi_prev with the filter re-run per coordinate."""
    return finite_difference_gradient(lambda th: filter_update(pi_prev, y, th, P, sigma)[1], g, h)


def rml_step(est: ParamEstimate, pi_prev, y: float, P, sigma: float, cfg: EstimatorConfig) -> ParamEstimate:
    grad = rml_gradient(est.g, pi_prev, y, P, sigma, cfg.h)
    return ParamEstimate(_project(est.g + cfg.eps * grad, cfg), est.info, est.floors)


# -- recursive prediction error ----------------------------------------------

def prediction_error(g, pi_prev, y: float, P) -> float:
    return float(y - np.asarray(g) @ (np.asarray(pi_prev) @ P))


@dataclass
class RpeState:
    """Main filter plus one filter per perturbed coordinate (g +- h e_i)."""

    pi: np.ndarray
    plus: np.ndarray
    minus: np.ndarray

    @classmethod
    def start(cls, pi0) -> "RpeState":
        pi0 = np.asarray(pi0, dtype=float)
        X = pi0.size
        return cls(pi0.copy(), np.tile(pi0, (X, 1)), np.tile(pi0, (X, 1)))


def rpe_gradient(g, state: RpeState, y: float, P, h: float) -> np.ndarray:
    """d/dg of (y - g'P'pi_{k-1}(g))^2, with the filter's dependence on g taken by differences."""
    g = np.asarray(g, dtype=float)
    grad = np.empty(g.size)
    for i in range(g.size):
        e = np.zeros(g.size)
        e[i] = h
        cp = prediction_error(g + e, state.plus[i], y, P) ** 2
        cm = prediction_error(g - e, state.minus[i], y, P) ** 2
        grad[i] = (cp - cm) / (2.0 * h)
    return grad


def rpe_step(est: ParamEstimate, state: RpeState, y: float, P, sigma: float, cfg: EstimatorConfig):
    """Descent on the squared prediction error, then advance all filters with the pre-update g.

    Returns (est', state').
    """
    g = est.g
    grad = rpe_gradient(g, state, y, P, cfg.h)
    X = g.size
    pi, _ = filter_update(state.pi, y, g, P, sigma)
    plus = np.empty_like(state.plus)
    minus = np.empty_like(state.minus)
    for i in range(X):
        e = np.zeros(X)
        e[i] = cfg.h
        plus[i], _ = filter_update(state.plus[i], y, g + e, P, sigma)
        minus[i], _ = filter_update(state.minus[i], y, g - e, P, sigma)
    new = ParamEstimate(_project(g - cfg.eps * grad, cfg), est.info, est.floors)
    return new, RpeState(pi, plus, minus)


# -- driver ----------------------------------------------------------------

def sorted_error(g_hat, g_true) -> np.ndarray:
    """Componentwise |sort(g_hat) - sort(g_true)|, which removes label swaps."""
    return np.abs(np.sort(np.asarray(g_hat), axis=-1) - np.sort(np.asarray(g_true)))


@dataclass
class EstimationResult:
    g: np.ndarray              # (n+1, X) estimates
    pred_error: np.ndarray     # y_k - g_{k-1}' P' pi_{k-1}
    loglik: np.ndarray         # log-likelihood increments under the filter's model
    floors: int
    truth: np.ndarray
    info: Optional[np.ndarray] = field(default=None)

    @property
    def final(self) -> np.ndarray:
        return self.g[-1]

    @property
    def final_error(self) -> np.ndarray:
        return sorted_error(self.g[-1], self.truth)

    def columns(self):
        return ("k",) + tuple(f"g_{i + 1}" for i in range(self.g.shape[1])) + ("pred_error", "loglik_increment")

    def rows(self):
        for k in range(len(self.pred_error)):
            yield (k + 1, *self.g[k + 1].tolist(), float(self.pred_error[k]), float(self.loglik[k]))


def run_estimation(model: GaussianLevelsHmm, cfg: EstimatorConfig, n: int, rng, g0=None,
                   ys=None) -> EstimationResult:
    """Simulate ``model`` (unless ``ys`` is given) and run the configured estimator online.

    The filter at step k always uses the estimate available before y_k.  For
    recursive EM the filter model is refreshed every ``cfg.batch`` steps.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if ys is None:
        _, ys = model.simulate(n, rng)
    ys = np.ascontiguousarray(ys, dtype=float)[:n]
    if ys.size != n:
        raise DimensionMismatch("fewer observations than steps")
    X = model.X
    g0 = np.linspace(cfg.bounds[0], cfg.bounds[1], X + 2)[1:-1] if g0 is None else np.array(g0, dtype=float)
    if g0.shape != (X,):
        raise DimensionMismatch(f"g0 must have length {X}")
    g0 = _project(g0, cfg)
    if cfg.algorithm == "recem":
        info0 = np.full(X, max(_info0(cfg, model.sigma), cfg.delta))
        gs, pe, ll, floors, fail = kernels.recem_gaussian(
            np.ascontiguousarray(model.P), np.ascontiguousarray(model.pi0), g0, info0, ys,
            float(model.sigma), float(cfg.eps), float(cfg.delta), int(cfg.batch),
            float(cfg.bounds[0]), float(cfg.bounds[1]), int(cfg.forgetting),
        )
        if fail >= 0:
            raise ZeroLikelihood(f"observation at step {fail + 1} has zero likelihood")
        return EstimationResult(np.asarray(gs), np.asarray(pe), np.asarray(ll), int(floors), model.g.copy())

    gs = np.empty((n + 1, X))
    pe = np.empty(n)
    ll = np.empty(n)
    gs[0] = g0
    est = ParamEstimate(g0.copy())
    P, sigma = model.P, model.sigma
    if cfg.algorithm == "rml":
        pi = model.pi0.copy()
        for k in range(n):
            y = float(ys[k])
            pe[k] = prediction_error(est.g, pi, y, P)
            new_pi, ll[k] = filter_update(pi, y, est.g, P, sigma)
            est = rml_step(est, pi, y, P, sigma, cfg)
            pi = new_pi
            gs[k + 1] = est.g
    else:
        state = RpeState.start(model.pi0)
        for k in range(n):
            y = float(ys[k])
            pe[k] = prediction_error(est.g, state.pi, y, P)
            _, ll[k] = filter_update(state.pi, y, est.g, P, sigma)
            est, state = rpe_step(est, state, y, P, sigma, cfg)
            gs[k + 1] = est.g
    return EstimationResult(gs, pe, ll, est.floors, model.g.copy())


def with_algorithm(cfg: EstimatorConfig, algorithm: str, **changes) -> EstimatorConfig:
    return replace(cfg, algorithm=algorithm, **changes)
