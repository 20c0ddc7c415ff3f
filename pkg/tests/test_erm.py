import math

import numpy as np
import pytest

from expconcave.domains import ball, interval, simplex
from expconcave.erm import (Regularizer, SolverConfig, erm_finite, erm_fit, erm_whp_bound,
                            half_squared_norm, minimize_projected, penalized_erm_fit)
from expconcave.errors import ConvergenceError, InvalidInputError, PreconditionError
from expconcave.losses import linear_loss, logistic_loss, squared_loss

SQ = squared_loss(scale=1.0)


def test_interpolation_example():
    f = erm_fit(SQ, interval(-1.0, 1.0), [[1.0]], [0.5])
    assert f[0] == pytest.approx(0.5, abs=1e-8)


def test_boundary_clamp_example():
    f = erm_fit(SQ, ball([0.0], 1.0), [[1.0]], [2.0])
    assert f[0] == pytest.approx(1.0, abs=1e-10)


def normal_equations(X, y):
    return np.linalg.solve(X.T @ X, X.T @ y)


def test_matches_normal_equations_on_interior_instances():
    rng = np.random.default_rng(0)
    for _ in range(20):
        X = rng.normal(size=(20, 2))
        y = X @ rng.uniform(-1, 1, 2) + 0.3 * rng.normal(size=20)
        w = normal_equations(X, y)
        f = erm_fit(SQ, ball([0.0, 0.0], 10.0), X, y)
        assert np.linalg.norm(w) < 10.0
        assert np.max(np.abs(f - w)) <= 1e-5


def test_penalized_single_sample_example():
    reg = half_squared_norm()
    f = penalized_erm_fit(SQ, interval(-1.0, 1.0), [[1.0]], [1.0], reg)
    grid = np.linspace(-1, 1, 200_001)
    oracle = grid[np.argmin((1 - grid) ** 2 + 0.5 * grid ** 2)]
    assert f[0] == pytest.approx(2.0 / 3.0, abs=1e-7)
    assert f[0] == pytest.approx(oracle, abs=1e-5)


def test_penalized_matches_erm_for_large_n():
    rng = np.random.default_rng(1)
    n = 10 ** 6
    X = rng.uniform(-1, 1, size=(n, 1))
    y = 0.4 * X[:, 0] + 0.1 * rng.normal(size=n)
    D = interval(-1.0, 1.0)
    a = erm_fit(SQ, D, X, y)
    b = penalized_erm_fit(SQ, D, X, y, half_squared_norm(D))
    assert np.max(np.abs(a - b)) <= 1e-4


def test_constant_regularizer_is_plain_erm():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 2))
    y = X @ [0.2, -0.1] + 0.1 * rng.normal(size=30)
    const = Regularizer(lambda f: 3.0, lambda f: np.zeros_like(f))
    D = ball([0.0, 0.0], 1.0)
    assert np.allclose(penalized_erm_fit(SQ, D, X, y, const), erm_fit(SQ, D, X, y))


def test_objective_decreases_along_accepted_iterates():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 2))
    y = np.where(rng.random(50) < 0.5, 1.0, -1.0)
    loss = logistic_loss(scale=1.0)
    values = []
    minimize_projected(lambda f: loss.risk(f, X, y), lambda f: loss.risk_grad(f, X, y),
                       ball([0.0, 0.0], 1.0), np.array([0.9, -0.3]),
                       callback=lambda x, fx: values.append(fx))
    assert len(values) > 1
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("domain", [ball([0.0, 0.0], 1.0), interval(-1.0, 1.0)])
def test_erm_beats_every_grid_candidate(domain):
    rng = np.random.default_rng(4)
    d = domain.dim
    for _ in range(5):
        X = rng.normal(size=(40, d))
        y = X @ rng.uniform(-1.5, 1.5, d) + 0.2 * rng.normal(size=40)
        f = erm_fit(SQ, domain, X, y)
        grid = domain.grid_points(32)
        assert SQ.risk(f, X, y) <= SQ.loss_matrix(grid, X, y).mean(axis=1).min() + 1e-6


def test_solver_reports_residual_on_iteration_cap():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(10, 2))
    y = rng.normal(size=10)
    with pytest.raises(ConvergenceError) as info:
        erm_fit(SQ, ball([0.0, 0.0], 5.0), X, y, SolverConfig(max_iters=1, tol=1e-14),
                x0=[4.0, -4.0])
    assert info.value.residual > 0


def test_empty_sample_rejected():
    with pytest.raises(InvalidInputError):
        erm_fit(SQ, interval(0.0, 1.0), np.zeros((0, 1)), [])


def test_erm_finite_examples():
    X = np.ones((4, 1))
    y = np.zeros(4)
    assert erm_finite(SQ, [[0.3]], X, y)[0] == 0
    assert erm_finite(SQ, [[0.5], [-0.5]], X, y)[0] == 0        # exact tie
    # constant predictors with empirical risks 0.7, 0.2, 0.9 under the linear loss
    j, f = erm_finite(linear_loss(), [[0.7], [0.2], [0.9]], X, y)
    assert j == 1 and f[0] == 0.2


def test_erm_finite_invariant_to_constant_shift():
    rng = np.random.default_rng(6)
    X = np.column_stack([rng.normal(size=25), np.ones(25)])
    F = rng.normal(size=(6, 2))
    j = erm_finite(linear_loss(), F, X, np.zeros(25))[0]
    shifted = F + np.array([0.0, 2.5])          # adds 2.5 to every per-sample loss
    assert erm_finite(linear_loss(), shifted, X, np.zeros(25))[0] == j


def test_erm_whp_bound_examples():
    assert erm_whp_bound(1.0, 1 / 16, 1.0, 1.0, 2, 100, 0.1) == pytest.approx(21.845, abs=1e-3)
    assert erm_whp_bound(1.0, 1 / 16, 1.0, 1.0, 2, 200, 0.1) < erm_whp_bound(1.0, 1 / 16, 1.0, 1.0, 2, 100, 0.1)
    limit = (8 * 16 * 2 * math.log(16 * 100) + 1) / 100
    assert erm_whp_bound(1.0, 1 / 16, 1.0, 1.0, 2, 100, 1 - 1e-12) == pytest.approx(limit, rel=1e-9)
    with pytest.raises(PreconditionError):
        erm_whp_bound(1.0, 1 / 16, 1.0, 1.0, 2, 4, 0.1)


def test_half_squared_norm_diameter():
    assert half_squared_norm(ball([0.0, 0.0], 2.0)).diameter == 2.0
    assert half_squared_norm(interval(-1.0, 0.5)).diameter == 0.5
    assert half_squared_norm(simplex(2)).diameter == pytest.approx(0.25)
