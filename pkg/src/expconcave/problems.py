"""Synthetic problem instances with a known risk minimizer and a risk oracle.

Every built-in draws inputs from a known law (uniform on a ball or an
interval, or the constant 1) and bounded labels, so the regularity
constants can be computed exactly:

``sq_ball_2d``       squared loss, d=2, linear labels, ball domain
``sq_interval``      squared loss, d=1, linear labels, interval domain
``sq_location_1d``   squared loss with x = 1 (strongly convex in f), d=1
``logistic_2d``      logistic loss, d=2, well-specified logistic labels
``realizable_1d``    squared loss, d=1, noiseless labels
``experts_8``        squared loss over 8 linear experts on a circle; the
                     labels follow expert 0 plus noise

These instances are this package's own choice of test beds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import stats

from .domains import ConvexDomain, ball, interval
from .errors import InvalidInputError
from .losses import LossModel, eta_of, logistic_loss, squared_loss

TRUNCATION = 3.0
ORACLE_MC_SIZE = 100_000


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    name: str
    loss: LossModel
    domain: ConvexDomain
    f_star: np.ndarray
    x_law: str                      # "ball" | "ones"
    x_radius: float
    label_law: str                  # "linear" | "logistic"
    noise: str                      # "truncated_gaussian" | "rademacher" | "none"
    noise_sigma: float
    oracle: str                     # "closed_form" | "monte_carlo"
    mc_size: int = ORACLE_MC_SIZE
    experts: Optional[np.ndarray] = None
    prior: Optional[np.ndarray] = None
    constants: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.f_star)

    @property
    def eta(self) -> float:
        return self.loss.eta

    @property
    def B(self) -> float:
        return self.loss.B

    @property
    def second_moment(self) -> np.ndarray:
        """``E[x x^T]``."""
        if self.x_law == "ones":
            return np.ones((1, 1))
        return self.x_radius ** 2 / (self.d + 2) * np.eye(self.d)

    def sample_x(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.x_law == "ones":
            return np.ones((n, self.d))
        g = rng.standard_normal((n, self.d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return g * (self.x_radius * rng.random(n) ** (1.0 / self.d))[:, None]

    def sample_noise(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.noise == "none" or self.noise_sigma == 0:
            return np.zeros(n)
        if self.noise == "rademacher":
            return self.noise_sigma * rng.choice([-1.0, 1.0], size=n)
        return stats.truncnorm.rvs(-TRUNCATION, TRUNCATION, scale=self.noise_sigma,
                                   size=n, random_state=rng)

    def sample(self, n: int, rng: np.random.Generator):
        """``n`` i.i.d. observations ``(X, y)``."""
        X = self.sample_x(n, rng)
        u = X @ self.f_star
        if self.label_law == "logistic":
            y = np.where(rng.random(n) < 1.0 / (1.0 + np.exp(-u)), 1.0, -1.0)
        else:
            y = u + self.sample_noise(n, rng)
        return X, y

    def excess_losses(self, f, X, y) -> np.ndarray:
        return self.loss.losses(f, X, y) - self.loss.losses(self.f_star, X, y)

    def excess_risk(self, f, rng: Optional[np.random.Generator] = None, m: Optional[int] = None):
        """``(value, stderr)`` of the excess risk of ``f``.

        Closed-form instances return the exact quadratic form with zero
        standard error unless ``m`` is given, which forces a Monte Carlo
        estimate from ``m`` fresh draws.
        """
        f = np.atleast_1d(np.asarray(f, dtype=float))
        if not self.domain.contains(f, tol=1e-8):
            raise InvalidInputError(f"hypothesis {f.tolist()} lies outside the domain")
        if self.oracle == "closed_form" and m is None:
            diff = f - self.f_star
            return float(diff @ self.second_moment @ diff), 0.0
        if rng is None:
            raise InvalidInputError("Monte Carlo excess risk needs an rng")
        m = self.mc_size if m is None else m
        ex = self.excess_losses(f, *self.sample(m, rng))
        return float(ex.mean()), float(ex.std(ddof=1) / math.sqrt(m))


def _noise_max(noise, sigma):
    if noise == "none":
        return 0.0
    return sigma * (TRUNCATION if noise == "truncated_gaussian" else 1.0)


def _sup_norm(domain: ConvexDomain, point=None) -> float:
    """``sup ||f - point||`` over the domain."""
    point = np.zeros(domain.dim) if point is None else point
    if domain.kind == "l2_ball":
        return float(np.linalg.norm(domain.center - point) + domain.radius)
    far = np.maximum(np.abs(domain.lo - point), np.abs(domain.hi - point))
    return float(np.linalg.norm(far))


def _linear_instance(name, w_star, domain, x_law, x_radius, noise, sigma, experts=None):
    w_star = np.asarray(w_star, dtype=float)
    eps = _noise_max(noise, sigma)
    pred = _sup_norm(domain) * x_radius                    # sup |<f, x>|
    label = float(np.linalg.norm(w_star)) * x_radius + eps  # sup |y|
    spread = _sup_norm(domain, w_star) * x_radius           # sup |<f - f*, x>|
    if experts is not None:
        spread = float(np.max(np.linalg.norm(experts - w_star, axis=1))) * x_radius
    scale = max(pred, label)
    L = 2.0 * (pred + label) * x_radius
    # losses lie in [0, (pred + label)^2]; that range dominates the excess-loss range
    loss = squared_loss(eta_of("squared", scale), L=L, B=(pred + label) ** 2,
                        beta=2.0 * x_radius ** 2)
    constants = {"scale": scale, "G": L, "D": domain.diameter, "noise_max": eps,
                 "excess_diameter": spread * (spread + 2.0 * eps)}
    prior = None if experts is None else np.full(len(experts), 1.0 / len(experts))
    return ProblemInstance(name, loss, domain, w_star, x_law, x_radius, "linear", noise, sigma,
                           "closed_form", experts=experts, prior=prior, constants=constants)


def _experts_circle(k=8, radius=0.8):
    angles = 2.0 * np.pi * np.arange(k) / k
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


BUILTINS = ("sq_ball_2d", "sq_interval", "sq_location_1d", "logistic_2d", "realizable_1d",
            "experts_8")


def make_problem(name: str, noise_sigma: Optional[float] = None, noise: Optional[str] = None,
                 oracle: Optional[str] = None, mc_size: Optional[int] = None) -> ProblemInstance:
    """Build one of :data:`BUILTINS`, optionally overriding the noise law or oracle mode."""
    law = noise or "truncated_gaussian"
    if law not in ("truncated_gaussian", "rademacher", "none"):
        raise InvalidInputError(f"unknown noise law {law!r}")

    def sigma(default):
        return default if noise_sigma is None else float(noise_sigma)

    if name == "sq_ball_2d":
        p = _linear_instance(name, [0.5, -0.3], ball([0.0, 0.0], 1.0), "ball", 1.0, law, sigma(0.1))
    elif name == "sq_interval":
        p = _linear_instance(name, [0.4], interval(-1.0, 1.0), "ball", 1.0, law, sigma(0.1))
    elif name == "sq_location_1d":
        p = _linear_instance(name, [0.3], interval(-1.0, 1.0), "ones", 1.0, law, sigma(0.2))
    elif name == "realizable_1d":
        p = _linear_instance(name, [0.5], interval(-1.0, 1.0), "ball", 1.0, "none", 0.0)
    elif name == "experts_8":
        W = _experts_circle()
        p = _linear_instance(name, W[0], ball([0.0, 0.0], 0.8), "ball", 1.0, law, sigma(0.1),
                             experts=W)
    elif name == "logistic_2d":
        w_star = np.array([0.6, -0.4])
        domain = ball([0.0, 0.0], 1.0)
        pred = _sup_norm(domain)
        spread = _sup_norm(domain, w_star)
        # the logistic link is 1-Lipschitz in the prediction
        loss = logistic_loss(eta_of("logistic", pred), L=1.0, B=2.0 * pred, beta=0.25)
        p = ProblemInstance(name, loss, domain, w_star, "ball", 1.0, "logistic", "none", 0.0,
                            "monte_carlo",
                            constants={"scale": pred, "G": 1.0, "D": domain.diameter,
                                       "excess_diameter": spread})
    else:
        raise InvalidInputError(f"unknown problem {name!r}; choose from {', '.join(BUILTINS)}")
    if oracle is not None:
        if oracle not in ("closed_form", "monte_carlo"):
            raise InvalidInputError(f"unknown oracle mode {oracle!r}")
        if oracle == "closed_form" and p.oracle != "closed_form":
            raise InvalidInputError(f"{name} has no closed-form risk oracle")
        p = replace(p, oracle=oracle)
    if mc_size is not None:
        p = replace(p, mc_size=int(mc_size))
    return p
