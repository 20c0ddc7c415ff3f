"""Loss models of the generalized-linear form ``loss(f, (x, y)) = phi(y, <f, x>)``.

Every loss used by the package (squared, logistic, linear, the quadratic
location loss and the reparameterized losses of model selection
aggregation) is a scalar link ``phi`` applied to a linear prediction, so a
:class:`LossModel` only needs the link, its derivative in the prediction and
the regularity constants consumed by the bound formulas.

Two readings of ``B`` coexist in the theory:

* :func:`eta_of` takes ``B`` as the range of the predictions (and, for the
  squared loss, of the labels).  Only under that reading are ``1/(4B)^2`` and
  ``exp(-B)/4`` valid exp-concavity constants.
* :attr:`LossModel.B` is the excess-loss diameter
  ``sup |loss(f, z) - loss(f*, z)|``.  This is the quantity consumed by the
  high-probability ERM bound, the central-to-Bernstein constant ``4(1/eta + B)``
  and the online-to-batch bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from .errors import InvalidInputError

KINDS = ("squared", "logistic", "custom")


@dataclass(frozen=True)
class Outcome:
    """A single observation ``z = (x, y)``."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("outcome field 'x' has non-finite entries")
        if not math.isfinite(self.y):
            raise InvalidInputError("outcome field 'y' is not finite")


def eta_of(kind: str, B: float) -> float:
    """Exp-concavity parameter of a built-in loss at prediction scale ``B``.

    ``B`` bounds ``|<f, x>|`` (and ``|y|`` for the squared loss).
    """
    if not B > 0:
        raise InvalidInputError(f"B must be positive, got {B}")
    if kind == "squared":
        return 1.0 / (4.0 * B) ** 2
    if kind == "logistic":
        return math.exp(-B) / 4.0
    if kind == "custom":
        raise InvalidInputError("custom losses must configure eta explicitly")
    raise InvalidInputError(f"unknown loss kind {kind!r}")


def _squared(y, u):
    return (y - u) ** 2


def _squared_grad(y, u):
    return -2.0 * (y - u)


def _logistic(y, u):
    return np.logaddexp(0.0, -y * u)


def _logistic_grad(y, u):
    return -y * expit(-y * u)


def _linear(y, u):
    return u + 0.0 * y


def _linear_grad(y, u):
    return np.ones_like(u + 0.0 * y)


_LINKS = {
    "squared": (_squared, _squared_grad),
    "logistic": (_logistic, _logistic_grad),
}


@dataclass(frozen=True, eq=False)
class LossModel:
    """Immutable loss ``phi(y, <f, x>)`` plus its regularity constants.

    ``features`` optionally maps raw inputs to the features the hypothesis
    acts on: with ``features = W`` (shape ``k x d``) the prediction is
    ``<f, W x>``.  This is how losses over the simplex of candidate
    predictors are represented.
    """

    kind: str
    eta: float
    L: float = 0.0
    B: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    link: Optional[Callable] = None
    link_grad: Optional[Callable] = None
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown loss kind {self.kind!r}")
        if self.kind == "custom" and (self.link is None or self.link_grad is None):
            raise InvalidInputError("custom losses need both link and link_grad")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise InvalidInputError(f"eta must be positive and finite, got {self.eta}")
        for name in ("L", "B", "alpha", "beta"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be nonnegative")
        if self.features is not None:
            W = np.array(self.features, dtype=float, ndmin=2)
            W.setflags(write=False)
            object.__setattr__(self, "features", W)

    # -- link -----------------------------------------------------------------
    def phi(self, y, u):
        fn = self.link if self.kind == "custom" else _LINKS[self.kind][0]
        return fn(y, u)

    def dphi(self, y, u):
        fn = self.link_grad if self.kind == "custom" else _LINKS[self.kind][1]
        return fn(y, u)

    @property
    def dim(self) -> Optional[int]:
        """Hypothesis dimension implied by ``features`` (None if unconstrained)."""
        return None if self.features is None else self.features.shape[0]

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.features is None:
            return X
        return X @ self.features.T

    def with_features(self, W) -> "LossModel":
        """Same loss acting on features ``W x``."""
        W = np.array(W, dtype=float, ndmin=2)
        if self.features is not None:
            W = W @ self.features
        return LossModel(self.kind, self.eta, self.L, self.B, self.alpha, self.beta,
                         self.link, self.link_grad, W)

    # -- batch evaluation -----------------------------------------------------
    def losses(self, f, X, y) -> np.ndarray:
        """Per-observation losses of hypothesis ``f``, shape ``(n,)``."""
        Z = self.transform(X)
        return self.phi(np.asarray(y, dtype=float), Z @ np.asarray(f, dtype=float))

    def loss_matrix(self, F, X, y) -> np.ndarray:
        """Losses of many hypotheses (rows of ``F``), shape ``(len(F), n)``."""
        Z = self.transform(X)
        U = np.atleast_2d(np.asarray(F, dtype=float)) @ Z.T
        return self.phi(np.asarray(y, dtype=float)[None, :], U)

    def grads(self, f, X, y) -> np.ndarray:
        Z = self.transform(X)
        g = self.dphi(np.asarray(y, dtype=float), Z @ np.asarray(f, dtype=float))
        return g[:, None] * Z

    def risk(self, f, X, y) -> float:
        """Empirical mean loss."""
        return float(np.mean(self.losses(f, X, y)))

    def risk_grad(self, f, X, y) -> np.ndarray:
        Z = self.transform(X)
        g = self.dphi(np.asarray(y, dtype=float), Z @ np.asarray(f, dtype=float))
        return Z.T @ g / len(g)

    # -- single-point API -----------------------------------------------------
    def eval(self, f, z: Outcome) -> float:
        f = _check_hypothesis(f)
        value = float(self.losses(f, z.x[None, :], np.array([z.y]))[0])
        if not math.isfinite(value):
            raise InvalidInputError(f"loss is not finite at f={f.tolist()} (field 'f' or 'z')")
        return value

    def grad(self, f, z: Outcome) -> np.ndarray:
        f = _check_hypothesis(f)
        g = self.grads(f, z.x[None, :], np.array([z.y]))[0]
        if not np.all(np.isfinite(g)):
            raise InvalidInputError(f"gradient is not finite at f={f.tolist()}")
        return g


def _check_hypothesis(f) -> np.ndarray:
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if not np.all(np.isfinite(f)):
        raise InvalidInputError("hypothesis field 'f' has non-finite entries")
    return f


def squared_loss(eta=None, *, scale=None, L=0.0, B=0.0, beta=0.0) -> LossModel:
    """``(y - <f, x>)^2``; ``eta`` defaults to ``eta_of('squared', scale)``."""
    if eta is None:
        eta = eta_of("squared", scale if scale is not None else B)
    return LossModel("squared", eta, L=L, B=B, alpha=2.0, beta=beta)


def logistic_loss(eta=None, *, scale=None, L=0.0, B=0.0, beta=0.0) -> LossModel:
    """``log(1 + exp(-y <f, x>))`` for labels in {-1, +1}."""
    if eta is None:
        eta = eta_of("logistic", scale if scale is not None else B)
    return LossModel("logistic", eta, L=L, B=B, beta=beta)


def linear_loss(eta=1.0, **kw) -> LossModel:
    """``<f, x>``: not exp-concave, used for quadrature and regret sanity checks."""
    return LossModel("custom", eta, link=_linear, link_grad=_linear_grad, **kw)


def exp_concavity_gaps(loss: LossModel, F1, F2, X, y, eta=None) -> np.ndarray:
    """Midpoint test ``exp(-eta l(mid)) - mean(exp(-eta l(f1)), exp(-eta l(f2)))``.

    Rows of ``F1``, ``F2``, ``X`` and entries of ``y`` form triples.  A loss is
    ``eta``-exp-concave on the sampled set only if every gap is ``>= 0``.
    """
    eta = loss.eta if eta is None else eta
    F1, F2 = np.atleast_2d(F1), np.atleast_2d(F2)
    Z = loss.transform(X)
    y = np.asarray(y, dtype=float)

    def e(F):
        return np.exp(-eta * loss.phi(y, np.einsum("ij,ij->i", F, Z)))

    return e(0.5 * (F1 + F2)) - 0.5 * (e(F1) + e(F2))
