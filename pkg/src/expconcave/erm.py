"""Empirical risk minimization over convex domains and finite candidate sets."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .domains import ConvexDomain
from .errors import ConvergenceError, InvalidInputError, PreconditionError
from .losses import LossModel


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 5000
    tol: float = 1e-8
    step_rule: str = "backtracking"
    step: float = 1.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if not self.tol > 0:
            raise InvalidInputError("tol must be positive")
        if self.step_rule not in ("fixed", "backtracking"):
            raise InvalidInputError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True)
class Regularizer:
    """A 1-strongly convex penalty ``fn`` with gradient ``grad``.

    ``diameter`` is ``sup fn - inf fn`` over the domain it is used on.
    """

    fn: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    diameter: float = 0.0


def half_squared_norm(domain: Optional[ConvexDomain] = None) -> Regularizer:
    """``0.5 ||f||^2``, with its diameter over ``domain`` when given."""
    diameter = 0.0
    if domain is not None:
        if domain.kind == "l2_ball":
            c = float(np.linalg.norm(domain.center))
            lo = max(c - domain.radius, 0.0)
            diameter = 0.5 * ((c + domain.radius) ** 2 - lo ** 2)
        elif domain.kind == "box":
            far = np.maximum(np.abs(domain.lo), np.abs(domain.hi))
            near = np.where((domain.lo <= 0) & (domain.hi >= 0), 0.0,
                            np.minimum(np.abs(domain.lo), np.abs(domain.hi)))
            diameter = 0.5 * float(np.sum(far ** 2) - np.sum(near ** 2))
        else:
            diameter = 0.5 * (1.0 - 1.0 / domain.dim)
    return Regularizer(lambda f: 0.5 * float(f @ f), lambda f: np.array(f, dtype=float), diameter)


def minimize_projected(objective, gradient, domain: ConvexDomain, x0,
                       cfg: SolverConfig = SolverConfig(), callback=None) -> np.ndarray:
    """Projected gradient descent with backtracking, for convex objectives.

    Terminates when the gradient mapping ``(x - P(x - s g)) / s`` has norm at
    most ``cfg.tol``.  Accepted iterates never increase the objective;
    ``callback(x, fx)`` sees each of them.
    """
    x = domain.project(x0)
    fx = objective(x)
    g = gradient(x)
    step = cfg.step
    residual = math.inf
    for _ in range(cfg.max_iters):
        while True:
            x_new = domain.project(x - step * g)
            diff = x_new - x
            f_new = objective(x_new)
            g_new = gradient(x_new)
            if cfg.step_rule == "fixed":
                break
            model = (0.5 / step) * (diff @ diff)
            # sufficient decrease; near the optimum the function test drowns in
            # rounding, so also accept the gradient form, which implies it for
            # convex objectives
            if f_new <= fx + g @ diff + model or (g_new - g) @ diff <= model:
                break
            step *= 0.5
            if step < 1e-20:
                raise ConvergenceError("line search failed", residual=residual)
        residual = float(np.linalg.norm(diff)) / step
        if residual <= cfg.tol:
            # the last step certifies stationarity; keep whichever point is lower
            return x_new if f_new <= fx else x
        x, fx, g = x_new, f_new, g_new
        if callback is not None:
            callback(x, fx)
        if cfg.step_rule == "backtracking":
            step *= 2.0
    raise ConvergenceError(f"no convergence within {cfg.max_iters} iterations", residual=residual)


def _check_sample(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if len(y) == 0:
        raise InvalidInputError("sample is empty")
    if X.shape[0] != len(y):
        raise InvalidInputError(f"X has {X.shape[0]} rows but y has {len(y)} entries")
    return X, y


def erm_fit(loss: LossModel, domain: ConvexDomain, X, y,
            cfg: SolverConfig = SolverConfig(), x0=None) -> np.ndarray:
    """Empirical risk minimizer of ``loss`` over ``domain``."""
    X, y = _check_sample(X, y)
    start = domain.centroid if x0 is None else x0
    return minimize_projected(lambda f: loss.risk(f, X, y),
                              lambda f: loss.risk_grad(f, X, y), domain, start, cfg)


def penalized_erm_fit(loss: LossModel, domain: ConvexDomain, X, y, reg: Regularizer,
                      cfg: SolverConfig = SolverConfig(), x0=None) -> np.ndarray:
    """Minimizer of empirical risk plus ``reg / n``."""
    X, y = _check_sample(X, y)
    n = len(y)
    start = domain.centroid if x0 is None else x0
    return minimize_projected(lambda f: loss.risk(f, X, y) + reg.fn(f) / n,
                              lambda f: loss.risk_grad(f, X, y) + reg.grad(f) / n,
                              domain, start, cfg)


def erm_finite(loss: LossModel, candidates: Sequence, X, y):
    """Index and value of the candidate with least empirical risk.

    Ties go to the lowest index.
    """
    F = np.atleast_2d(np.asarray(candidates, dtype=float))
    if F.shape[0] == 0:
        raise InvalidInputError("candidate set is empty")
    X, y = _check_sample(X, y)
    risks = loss.loss_matrix(F, X, y).mean(axis=1)
    j = int(np.argmin(risks))
    return j, F[j].copy()


def erm_whp_bound(B, eta, L, R, d, n, delta) -> float:
    """High-probability excess-risk bound for ERM over a convex set.

    ``B`` is the excess-loss diameter, ``L`` the Lipschitz constant of the
    loss in ``f`` and ``R`` the diameter of the domain.  Requires ``n >= 5``.
    """
    if n < 5:
        raise PreconditionError(f"the ERM bound needs n >= 5, got n={n}")
    if not 0 < delta < 1:
        raise PreconditionError("delta must lie in (0, 1)")
    scale = max(B, 1.0 / eta)
    return (8.0 * scale * (d * math.log(16.0 * L * R * n) + math.log(1.0 / delta)) + 1.0) / n
