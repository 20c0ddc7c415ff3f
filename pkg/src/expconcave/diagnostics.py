"""Monte Carlo verifiers for the central condition, the Bernstein condition
and the conditional-variance inequality on synthetic problems.

All estimates are seeded: each test point (or round) draws from its own
child of ``np.random.SeedSequence(seed)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import PreconditionError
from .online import OnlineRun
from .problems import ProblemInstance

FLAG_SIGMAS = 3.0


@dataclass
class ExcessLossStats:
    f: np.ndarray
    mean: float
    second_moment: float
    mgf: float
    mean_stderr: float
    second_moment_stderr: float
    mgf_stderr: float
    ratio: float = float("nan")         # second_moment / mean
    ratio_stderr: float = float("nan")


@dataclass
class CheckReport:
    kind: str
    eta: float
    rows: List[dict]
    flag_sigmas: float
    summary: dict = field(default_factory=dict)

    @property
    def n_flagged(self) -> int:
        return sum(bool(r["flagged"]) for r in self.rows)


@dataclass
class MartingaleCheck:
    variances: np.ndarray
    variance_stderr: np.ndarray
    excess: np.ndarray
    bounds: np.ndarray                  # 4 (1/eta + B) * excess risk of f_t
    flagged: np.ndarray
    xi: Optional[np.ndarray] = None     # realized martingale differences, if the sequence was given

    @property
    def n_flagged(self) -> int:
        return int(np.sum(self.flagged))


def _children(seed, k):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def excess_loss_stats(problem: ProblemInstance, f, eta: float, m: int,
                      rng: np.random.Generator) -> ExcessLossStats:
    """Moments of the excess loss ``loss(f, Z) - loss(f*, Z)`` from ``m`` draws."""
    f = np.asarray(f, dtype=float)
    x = problem.excess_losses(f, *problem.sample(m, rng))
    x2 = x * x
    e = np.exp(-eta * x)
    root_m = math.sqrt(m)
    mean, sm = float(x.mean()), float(x2.mean())
    se_mean = float(x.std(ddof=1)) / root_m
    se_sm = float(x2.std(ddof=1)) / root_m
    stats = ExcessLossStats(f, mean, sm, float(e.mean()), se_mean, se_sm,
                            float(e.std(ddof=1)) / root_m)
    if mean != 0:
        # delta method for the ratio of two sample means
        cov = float(np.cov(x2, x)[0, 1]) / m
        var = se_sm ** 2 / mean ** 2 + sm ** 2 * se_mean ** 2 / mean ** 4 - 2 * sm * cov / mean ** 3
        stats.ratio = sm / mean
        stats.ratio_stderr = math.sqrt(max(var, 0.0))
    return stats


def default_test_points(problem: ProblemInstance, seed: int = 0, resolution: int = 10,
                        n_random: int = 100) -> np.ndarray:
    """Grid points (for d <= 2) plus uniform random points of the domain."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    parts = []
    if problem.domain.dim <= 2:
        parts.append(problem.domain.grid_points(resolution))
    parts.append(problem.domain.sample_uniform(rng, n_random))
    return np.vstack(parts)


def central_check(problem: ProblemInstance, eta: float, test_points, m: int, seed: int = 0,
                  flag_sigmas: float = FLAG_SIGMAS) -> CheckReport:
    """Estimate ``E exp(-eta * excess loss)`` at each point; flag estimates above ``1 + k*stderr``."""
    rows = []
    for f, rng in zip(np.atleast_2d(test_points), _children(seed, len(test_points))):
        st = excess_loss_stats(problem, f, eta, m, rng)
        rows.append({"f": f.tolist(), "estimate": st.mgf, "stderr": st.mgf_stderr,
                     "flagged": st.mgf > 1.0 + flag_sigmas * st.mgf_stderr})
    report = CheckReport("central", eta, rows, flag_sigmas)
    report.summary = {"max_estimate": max(r["estimate"] for r in rows), "n_flagged": report.n_flagged}
    return report


def bernstein_check(problem: ProblemInstance, eta: float, B: float, test_points, m: int,
                    seed: int = 0, flag_sigmas: float = FLAG_SIGMAS,
                    min_sigmas: float = 5.0) -> CheckReport:
    """Empirical ``C_hat = max E[X^2] / E[X]`` (q = 1) against ``4 (1/eta + B)``.

    Points whose mean excess loss is within ``min_sigmas`` standard errors
    of zero are excluded; ``holds`` allows ``flag_sigmas`` standard errors of
    the maximizing ratio as margin.
    """
    bound = 4.0 * (1.0 / eta + B)
    rows = []
    for f, rng in zip(np.atleast_2d(test_points), _children(seed, len(test_points))):
        st = excess_loss_stats(problem, f, eta, m, rng)
        used = st.mean > min_sigmas * st.mean_stderr
        rows.append({"f": f.tolist(), "mean": st.mean, "second_moment": st.second_moment,
                     "ratio": st.ratio if used else float("nan"),
                     "ratio_stderr": st.ratio_stderr if used else float("nan"),
                     "used": bool(used),
                     "flagged": bool(used and st.ratio > bound + flag_sigmas * st.ratio_stderr)})
    used = [r for r in rows if r["used"]]
    report = CheckReport("bernstein", eta, rows, flag_sigmas)
    if used:
        top = max(used, key=lambda r: r["ratio"])
        c_hat, c_se = top["ratio"], top["ratio_stderr"]
    else:
        c_hat, c_se = 0.0, 0.0
    report.summary = {"C_hat": c_hat, "C_hat_stderr": c_se, "bound": bound,
                      "holds": c_hat <= bound + flag_sigmas * c_se, "n_used": len(used)}
    return report


def conditional_variance_check(problem: ProblemInstance, run: OnlineRun, eta: float, B: float,
                               m: int, seed: int = 0, X=None, y=None,
                               flag_sigmas: float = FLAG_SIGMAS) -> MartingaleCheck:
    """Compare ``Var[loss(f_t, Z) - loss(f*, Z)]`` with ``4 (1/eta + B)`` times the excess risk of ``f_t``.

    Each iterate is treated as fixed; the variance is estimated from ``m``
    fresh draws and a round is flagged when it exceeds the bound by more
    than ``flag_sigmas`` combined standard errors.
    """
    scale = 4.0 * (1.0 / eta + B)
    n = len(run)
    variances, var_se, excess, bounds, flagged = (np.zeros(n) for _ in range(5))
    flagged = np.zeros(n, dtype=bool)
    rngs = _children(seed, n)
    for t in range(n):
        f = run.iterates[t]
        x = problem.excess_losses(f, *problem.sample(m, rngs[t]))
        v = float(x.var(ddof=1))
        mu4 = float(np.mean((x - x.mean()) ** 4))
        se_v = math.sqrt(max(mu4 - v * v, 0.0) / m)
        er, er_se = problem.excess_risk(f, rngs[t])
        variances[t], var_se[t], excess[t] = v, se_v, er
        bounds[t] = scale * er
        flagged[t] = v - bounds[t] > flag_sigmas * math.hypot(se_v, scale * er_se)
    xi = None
    if X is not None and y is not None:
        X = np.atleast_2d(X)
        realized = np.array([problem.excess_losses(run.iterates[t], X[t:t + 1], y[t:t + 1])[0]
                             for t in range(n)])
        xi = excess - realized
    return MartingaleCheck(variances, var_se, excess, bounds, flagged, xi)


def lemma3_threshold(C: float, q: float, B: float, gprime_size: int, n: int, delta: float) -> float:
    """Excess-risk level above which ERM over a finite class avoids the Bernstein subclass."""
    if gprime_size < 2:
        raise PreconditionError("the subclass must contain at least two functions")
    if not 0 < q <= 1:
        raise PreconditionError("q must lie in (0, 1]")
    base = 2.0 * (C + B ** (2.0 - q) / 3.0) * math.log((gprime_size - 1) / delta) / n
    return base ** (1.0 / (2.0 - q))
