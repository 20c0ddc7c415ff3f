"""Online learners (OGD, ONS, EWOO), regret, online-to-batch conversion,
the progressive mixture rule, and the associated regret / excess-risk bounds.

All learners play ``f_t`` from ``z_1 .. z_{t-1}`` only; a run on a prefix of a
sequence reproduces the corresponding prefix of iterates bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .domains import ConvexDomain
from .erm import SolverConfig, erm_fit
from .errors import InvalidInputError, PreconditionError, UnsupportedDimensionError
from .losses import LossModel

ONS_RECOMPUTE_EVERY = 256


@dataclass
class OnlineRun:
    learner: str
    iterates: np.ndarray            # (n, d); row t is f_{t+1}
    per_round_loss: np.ndarray      # (n,)
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.per_round_loss)

    @property
    def cumulative_loss(self) -> float:
        return float(np.sum(self.per_round_loss))


@dataclass(frozen=True)
class RegretTrace:
    cumulative_loss: float
    comparator_loss: float
    regret: float
    comparator: np.ndarray


@dataclass
class MixtureState:
    experts: np.ndarray             # (K, d) parameter vectors
    prior: np.ndarray
    posterior: np.ndarray           # after the last observation
    cesaro_average: np.ndarray      # (1/(n+1)) sum_{t=0}^{n} posterior_t

    @property
    def hypothesis(self) -> np.ndarray:
        """Parameter of the mixture-of-predictions predictor."""
        return self.cesaro_average @ self.experts


def _sequence(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if X.shape[0] != len(y):
        raise InvalidInputError(f"X has {X.shape[0]} rows but y has {len(y)} entries")
    return X, y


def _start(domain, f1):
    return domain.centroid if f1 is None else domain.project(f1)


def ogd_run(loss: LossModel, domain: ConvexDomain, X, y, nu: float, G: float,
            f1=None) -> OnlineRun:
    """Online gradient descent with step ``1 / (nu t)`` for ``nu``-strongly convex losses."""
    if not nu > 0:
        raise InvalidInputError("nu must be positive")
    X, y = _sequence(X, y)
    n = len(y)
    f = _start(domain, f1)
    iterates = np.empty((n, len(f)))
    losses = np.empty(n)
    max_grad = 0.0
    for t in range(n):
        iterates[t] = f
        xt, yt = X[t:t + 1], y[t:t + 1]
        losses[t] = loss.losses(f, xt, yt)[0]
        g = loss.grads(f, xt, yt)[0]
        max_grad = max(max_grad, float(np.linalg.norm(g)))
        f = domain.project(f - g / (nu * (t + 1)))
    meta = {"max_grad_norm": max_grad}
    if max_grad > G:
        meta["warning"] = f"gradient norm {max_grad:.4g} exceeded G={G:.4g}"
    return OnlineRun("ogd", iterates, losses, {"nu": nu, "G": G}, meta)


def ons_params(eta: float, G: float, D: float):
    """``(gamma, eps)`` for the Online Newton Step."""
    gamma = 0.5 * min(1.0 / (4.0 * G * D), eta)
    eps = 1.0 / (gamma ** 2 * D ** 2)
    return gamma, eps


def ons_run(loss: LossModel, domain: ConvexDomain, X, y, eta: float, G: float, D: float,
            f1=None) -> OnlineRun:
    """Online Newton Step.

    ``A_t = A_{t-1} + g_t g_t^T`` from ``A_0 = eps I``; the next iterate is the
    ``A_t``-norm projection of ``f_t - A_t^{-1} g_t / gamma``.  The inverse is
    tracked by Sherman-Morrison and recomputed every 256 rounds.
    """
    if not (eta > 0 and G > 0 and D > 0):
        raise InvalidInputError("ONS needs positive eta, G and D")
    X, y = _sequence(X, y)
    n = len(y)
    gamma, eps = ons_params(eta, G, D)
    f = _start(domain, f1)
    d = len(f)
    A = eps * np.eye(d)
    A_inv = np.eye(d) / eps
    iterates = np.empty((n, d))
    losses = np.empty(n)
    traces = np.empty(n)
    for t in range(n):
        iterates[t] = f
        xt, yt = X[t:t + 1], y[t:t + 1]
        losses[t] = loss.losses(f, xt, yt)[0]
        g = loss.grads(f, xt, yt)[0]
        A = A + np.outer(g, g)
        if (t + 1) % ONS_RECOMPUTE_EVERY == 0:
            A_inv = np.linalg.inv(A)
        else:
            Ag = A_inv @ g
            A_inv = A_inv - np.outer(Ag, Ag) / (1.0 + g @ Ag)
        traces[t] = np.trace(A)
        f = domain.project_norm(f - A_inv @ g / gamma, A)
    params = {"eta": eta, "G": G, "D": D, "gamma": gamma, "eps": eps}
    return OnlineRun("ons", iterates, losses, params, {"A_trace": traces, "A_final": A})


def ewoo_run(loss: LossModel, domain: ConvexDomain, X, y, eta: Optional[float] = None,
             resolution: int = 64) -> OnlineRun:
    """Exponentially weighted online optimization by grid quadrature.

    ``f_t`` is the mean of the domain under the density proportional to
    ``exp(-eta * cumulative loss before t)``, approximated on
    ``domain.grid_points(resolution)`` with the matching quadrature weights.
    """
    if domain.kind != "simplex" and domain.dim > 3:
        raise UnsupportedDimensionError(f"EWOO quadrature supports d <= 3, got d={domain.dim}")
    if resolution < 8 and domain.kind != "simplex":
        raise InvalidInputError("EWOO needs resolution >= 8")
    eta = loss.eta if eta is None else eta
    X, y = _sequence(X, y)
    n = len(y)
    grid = domain.grid_points(resolution)
    log_w = np.log(domain.grid_weights(resolution))
    cum = np.zeros(len(grid))
    iterates = np.empty((n, domain.dim))
    losses = np.empty(n)
    for t in range(n):
        a = log_w - eta * cum
        p = np.exp(a - a.max())
        f = (p @ grid) / p.sum()
        iterates[t] = f
        losses[t] = loss.losses(f, X[t:t + 1], y[t:t + 1])[0]
        # column by column: a batched product could round differently per prefix
        cum += loss.loss_matrix(grid, X[t:t + 1], y[t:t + 1])[:, 0]
    return OnlineRun("ewoo", iterates, losses, {"eta": eta, "resolution": resolution},
                     {"grid_size": len(grid)})


def regret_from_losses(per_round_loss, comparator_losses) -> float:
    return float(np.sum(per_round_loss) - np.sum(comparator_losses))


def regret_of(loss: LossModel, domain: ConvexDomain, X, y, run: OnlineRun,
              cfg: SolverConfig = SolverConfig()) -> RegretTrace:
    """Regret of ``run`` against the best fixed point in hindsight (found by ERM)."""
    X, y = _sequence(X, y)
    if len(run) != len(y):
        raise InvalidInputError("run length does not match the sequence")
    comparator = erm_fit(loss, domain, X, y, cfg)
    cumulative = run.cumulative_loss
    comp = float(np.sum(loss.losses(comparator, X, y)))
    return RegretTrace(cumulative, comp, cumulative - comp, comparator)


def average_iterates(run: OnlineRun) -> np.ndarray:
    """Online-to-batch conversion: the mean of ``f_1 .. f_n``."""
    if len(run) == 0:
        raise InvalidInputError("cannot average an empty run")
    return run.iterates.mean(axis=0)


def progressive_mixture_run(loss: LossModel, experts, prior, eta: float, X, y) -> MixtureState:
    """Cesàro average of the Gibbs posteriors ``pi_t ∝ pi * exp(-eta * cumulative loss)``."""
    W = np.atleast_2d(np.asarray(experts, dtype=float))
    prior = np.asarray(prior, dtype=float)
    if len(W) == 0:
        raise InvalidInputError("expert class is empty")
    if prior.shape != (len(W),) or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
        raise InvalidInputError("prior must be a probability vector over the experts")
    X, y = _sequence(X, y) if len(np.atleast_1d(y)) else (np.zeros((0, W.shape[1])), np.zeros(0))
    n = len(y)
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    if n:
        cum = np.cumsum(loss.loss_matrix(W, X, y), axis=1)          # (K, n)
        log_post = np.concatenate([log_prior[:, None], log_prior[:, None] - eta * cum], axis=1)
    else:
        log_post = log_prior[:, None]
    log_post = log_post - logsumexp(log_post, axis=0, keepdims=True)
    post = np.exp(log_post)
    return MixtureState(W, prior, post[:, -1], post.mean(axis=1))


def regret_bound(kind: str, *, n, d=1, eta=None, G=None, D=None, nu=None) -> float:
    """Worst-case regret bounds of ONS, EWOO and OGD."""
    if not n > 0:
        raise InvalidInputError("n must be positive")
    if kind == "ons":
        return 5.0 * (1.0 / eta + G * D) * d * math.log(n)
    if kind == "ewoo":
        return (1.0 / eta) * d * (1.0 + math.log(n + 1))
    if kind == "ogd":
        return G ** 2 / (2.0 * nu) * (1.0 + math.log(n))
    raise InvalidInputError(f"unknown learner kind {kind!r}")


def o2b_excess_bound(regret, eta, B, n, delta) -> float:
    """High-probability excess risk of the averaged iterate given the measured regret.

    Negative regret is replaced by zero (any upper bound on the regret is
    admissible and the formula needs its square root).
    """
    if n < 3:
        raise PreconditionError(f"the online-to-batch bound needs n >= 3, got n={n}")
    if not 0 < delta < 1:
        raise PreconditionError("delta must lie in (0, 1)")
    r = max(float(regret), 0.0)
    scale = 1.0 / eta + B
    log_term = math.log(4.0 * math.log(n) / delta)
    return r / n + 4.0 * math.sqrt(scale * log_term) * math.sqrt(r) / n + 16.0 * scale * log_term / n
