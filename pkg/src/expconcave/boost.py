"""Confidence boosting and model-selection aggregation.

:func:`confidence_boost` runs a base learner on ``K`` disjoint batches and
picks among the ``K`` outputs by ERM on a fresh batch.  :func:`pm_ewoo` and
:func:`pm_cb` first shrink a finite expert class to ``K`` progressive-mixture
hypotheses and then optimize over their convex hull, reparameterized as a
stochastic exp-concave problem on the ``K``-simplex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp, rel_entr

from .domains import ConvexDomain, simplex
from .erm import Regularizer, SolverConfig, erm_finite, erm_fit, penalized_erm_fit
from .errors import BaseLearnerError, InvalidInputError, PreconditionError, UnsupportedDimensionError
from .losses import LossModel
from .online import average_iterates, ewoo_run, progressive_mixture_run

PM_EWOO_MAX_K = 3

BaseLearner = Callable[[LossModel, ConvexDomain, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SplitPlan:
    K: int
    n_I: int
    n_II: int
    n_batches: int          # phase-I batches: K for cb, 2K for pmcb
    n: int

    @property
    def consumed(self) -> int:
        return self.n_batches * self.n_I + self.n_II

    @property
    def discarded(self) -> int:
        return self.n - self.consumed

    def batches(self) -> List[slice]:
        """Phase-I slices followed by the phase-II slice, partitioning a prefix."""
        out = [slice(j * self.n_I, (j + 1) * self.n_I) for j in range(self.n_batches)]
        start = self.n_batches * self.n_I
        out.append(slice(start, start + self.n_II))
        return out


@dataclass(frozen=True)
class BernsteinParams:
    C: float
    q: float = 1.0

    def __post_init__(self):
        if not self.C > 0:
            raise InvalidInputError("Bernstein C must be positive")
        if not 0 < self.q <= 1:
            raise InvalidInputError("Bernstein q must lie in (0, 1]")


def exp_concave_bernstein(eta: float, B: float) -> BernsteinParams:
    """``C = 4 (1/eta + B)``, ``q = 1``: what exp-concavity and boundedness give."""
    return BernsteinParams(4.0 * (1.0 / eta + B), 1.0)


@dataclass
class RedundancySpec:
    prior: np.ndarray
    excess_risks: np.ndarray
    eta: float
    m: int
    experts: Optional[np.ndarray] = None


@dataclass
class BoostResult:
    hypothesis: np.ndarray
    index: int
    candidates: np.ndarray
    plan: Optional[SplitPlan] = None
    meta: dict = field(default_factory=dict)


def split_plan(n: int, delta: float, variant: str = "cb") -> SplitPlan:
    if not 0 < delta < 1:
        raise PreconditionError("delta must lie in (0, 1)")
    if variant == "cb":
        K = math.ceil(math.log(2.0 / delta))
        n_I, n_batches = n // (2 * K), K
    elif variant == "pmcb":
        K = math.ceil(math.log(3.0 / delta))
        n_I, n_batches = n // (4 * K), 2 * K
    else:
        raise InvalidInputError(f"unknown split variant {variant!r}")
    n_II = n // 2
    if n_I < 1 or n_II < 1:
        raise PreconditionError(f"n={n} is too small for {n_batches} phase-I batches at delta={delta}")
    return SplitPlan(K, n_I, n_II, n_batches, n)


def erm_learner(cfg: SolverConfig = SolverConfig()) -> BaseLearner:
    def learn(loss, domain, X, y):
        return erm_fit(loss, domain, X, y, cfg)
    return learn


def penalized_erm_learner(reg: Regularizer, cfg: SolverConfig = SolverConfig()) -> BaseLearner:
    def learn(loss, domain, X, y):
        return penalized_erm_fit(loss, domain, X, y, reg, cfg)
    return learn


def boost_on_batches(base: BaseLearner, loss: LossModel, domain: ConvexDomain,
                     phase1: Sequence, phase2) -> BoostResult:
    """Run ``base`` on each ``(X, y)`` of ``phase1``; ERM over the outputs on ``phase2``."""
    candidates = []
    for j, (Xj, yj) in enumerate(phase1):
        try:
            candidates.append(np.asarray(base(loss, domain, Xj, yj), dtype=float))
        except Exception as exc:
            raise BaseLearnerError(j, exc) from exc
    F = np.vstack(candidates)
    j, f = erm_finite(loss, F, *phase2)
    return BoostResult(f, j, F)


def confidence_boost(base: BaseLearner, loss: LossModel, domain: ConvexDomain, X, y,
                     delta: float) -> BoostResult:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    plan = split_plan(len(y), delta, "cb")
    parts = plan.batches()
    result = boost_on_batches(base, loss, domain, [(X[s], y[s]) for s in parts[:-1]],
                              (X[parts[-1]], y[parts[-1]]))
    result.plan = plan
    return result


def meta_bound(psi: Callable[[float], float], C: float, q: float, B: float, n: int,
               delta: float) -> float:
    """High-probability bound for ConfidenceBoost given an in-expectation rate ``psi``.

    ``psi`` is evaluated at ``n / (2K)`` with ``K = ceil(log(2/delta))`` in
    both places it appears.
    """
    if not 0 < delta < 1:
        raise PreconditionError("delta must lie in (0, 1)")
    if not 0 < q <= 1:
        raise PreconditionError("q must lie in (0, 1]")
    K = math.ceil(math.log(2.0 / delta))
    first = math.e * psi(n / (2.0 * K))
    inner = 4.0 * (C + B ** (2.0 - q) / 3.0) * (math.log(1.0 / delta) + math.log(K)) / n
    return first + max(4.0 ** (1.0 / q) * first, inner ** (1.0 / (2.0 - q)))


def koren_psi(beta, eta, B, R, d):
    if beta < 1:
        raise PreconditionError(f"the penalized-ERM rate needs beta >= 1, got {beta}")
    c = 24.0 * beta * d / eta + 100.0 * B * d + R
    return lambda m: c / m


def gonen_psi(eta, d):
    return lambda m: 2.0 * d / (eta * m)


def corollary_bound(setting: str, params: dict, n: int, delta: float) -> float:
    """``meta_bound`` with ``C = 4(1/eta + B)``, ``q = 1`` and a published ``psi``.

    ``setting='koren'`` needs ``beta, eta, B, R, d``; ``'gonen'`` needs
    ``eta, d, B``.
    """
    eta, B = params["eta"], params["B"]
    if setting == "koren":
        psi = koren_psi(params["beta"], eta, B, params["R"], params["d"])
    elif setting == "gonen":
        psi = gonen_psi(eta, params["d"])
    else:
        raise InvalidInputError(f"unknown setting {setting!r}")
    bp = exp_concave_bernstein(eta, B)
    return meta_bound(psi, bp.C, bp.q, B, n, delta)


@dataclass
class Reparameterization:
    """Convex hull of ``K`` linear predictors as a problem over the simplex."""

    domain: ConvexDomain
    loss: LossModel
    candidates: np.ndarray          # (K, d)

    def to_predictor(self, q) -> np.ndarray:
        return np.asarray(q, dtype=float) @ self.candidates


def reparameterize(loss: LossModel, candidates) -> Reparameterization:
    """Loss ``q -> phi(y, <q, x~>)`` with ``x~ = (f_1(x), .., f_K(x))``."""
    W = np.atleast_2d(np.asarray(candidates, dtype=float))
    if len(W) == 0:
        raise InvalidInputError("need at least one candidate")
    return Reparameterization(simplex(len(W)), loss.with_features(W), W)


def _pm_candidates(loss, experts, prior, eta, X, y, slices):
    return np.vstack([progressive_mixture_run(loss, experts, prior, eta, X[s], y[s]).hypothesis
                      for s in slices])


def pm_ewoo(experts, prior, loss: LossModel, X, y, delta: float, eta: Optional[float] = None,
            resolution: int = 32) -> BoostResult:
    """Progressive mixture on ``K`` batches, then EWOO over their convex hull."""
    eta = loss.eta if eta is None else eta
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    plan = split_plan(len(y), delta, "cb")
    if plan.K > PM_EWOO_MAX_K:
        raise UnsupportedDimensionError(
            f"PM-EWOO needs K <= {PM_EWOO_MAX_K} for grid quadrature, got K={plan.K}")
    parts = plan.batches()
    H = _pm_candidates(loss, experts, prior, eta, X, y, parts[:-1])
    rep = reparameterize(loss, H)
    s2 = parts[-1]
    run = ewoo_run(rep.loss, rep.domain, X[s2], y[s2], eta=eta, resolution=resolution)
    q = average_iterates(run)
    return BoostResult(rep.to_predictor(q), -1, H, plan, {"weights": q})


def pm_cb(experts, prior, loss: LossModel, X, y, delta: float, eta: Optional[float] = None,
          cfg: SolverConfig = SolverConfig()) -> BoostResult:
    """Progressive mixture on ``K`` batches, then ConfidenceBoost (base ERM) over their hull.

    Batches ``1..K`` feed the mixtures, ``K+1..2K`` the inner ERM runs and the
    phase-II batch the final selection.
    """
    eta = loss.eta if eta is None else eta
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    plan = split_plan(len(y), delta, "pmcb")
    parts = plan.batches()
    K = plan.K
    H = _pm_candidates(loss, experts, prior, eta, X, y, parts[:K])
    rep = reparameterize(loss, H)
    inner = boost_on_batches(erm_learner(cfg), rep.loss, rep.domain,
                             [(X[s], y[s]) for s in parts[K:2 * K]],
                             (X[parts[-1]], y[parts[-1]]))
    return BoostResult(rep.to_predictor(inner.hypothesis), inner.index, H, plan,
                       {"weights": inner.hypothesis, "inner_candidates": inner.candidates})


def redundancy_objective(rho, spec: RedundancySpec) -> np.ndarray:
    """``E_rho[excess] + KL(rho || prior) / (eta (m + 1))`` for rows of ``rho``."""
    rho = np.atleast_2d(rho)
    kl = rel_entr(rho, spec.prior[None, :]).sum(axis=1)
    return rho @ spec.excess_risks + kl / (spec.eta * (spec.m + 1))


def bayes_redundancy(spec: RedundancySpec):
    """Generalized Bayesian redundancy in closed form, plus the point-mass bound.

    The infimum over ``rho`` is attained by the Gibbs distribution
    ``rho ∝ prior * exp(-eta (m+1) excess)``, where it equals
    ``-log sum prior * exp(-eta (m+1) excess) / (eta (m+1))``.  The second
    value, ``log(1/prior(f*)) / (eta (m+1))``, is the objective at the point
    mass on the best expert.
    """
    prior = np.asarray(spec.prior, dtype=float)
    dr = np.asarray(spec.excess_risks, dtype=float)
    scale = spec.eta * (spec.m + 1)
    with np.errstate(divide="ignore"):
        value = -float(logsumexp(np.log(prior) - scale * dr)) / scale
    best = np.flatnonzero(dr == dr.min())
    j = best[np.argmax(prior[best])]
    upper = float(dr[j] + math.log(1.0 / prior[j]) / scale)
    # the point mass is a feasible rho, so the infimum cannot exceed it; the
    # clamp only absorbs rounding when the other Gibbs weights underflow
    return min(value, upper), upper
