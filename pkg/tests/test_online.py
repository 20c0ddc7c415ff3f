import math

import numpy as np
import pytest

from expconcave.domains import ball, box, interval
from expconcave.errors import InvalidInputError, PreconditionError, UnsupportedDimensionError
from expconcave.losses import linear_loss, squared_loss
from expconcave.online import (OnlineRun, average_iterates, ewoo_run, o2b_excess_bound, ogd_run,
                               ons_run, progressive_mixture_run, regret_bound, regret_from_losses,
                               regret_of)
from expconcave.problems import make_problem

SQ = squared_loss(scale=2.0)        # |<f, x>|, |y| <= 2
UNIT = interval(-1.0, 1.0)


def location_sequence(n, seed):
    """``(f - z)^2`` written as the squared loss with x = 1 and y = z."""
    rng = np.random.default_rng(seed)
    return np.ones((n, 1)), rng.uniform(-1, 1, n)


def test_zero_gradient_keeps_initial_point():
    X, y = np.zeros((10, 1)), np.zeros(10)
    for run in (ogd_run(SQ, UNIT, X, y, nu=2.0, G=4.0, f1=[0.3]),
                ons_run(SQ, UNIT, X, y, eta=SQ.eta, G=4.0, D=2.0, f1=[0.3])):
        assert np.all(run.iterates == 0.3)


def test_ogd_regret_example():
    X, y = location_sequence(64, 0)
    run = ogd_run(SQ, UNIT, X, y, nu=2.0, G=4.0)
    reg = regret_of(SQ, UNIT, X, y, run).regret
    assert reg <= regret_bound("ogd", n=64, G=4.0, nu=2.0)
    assert "warning" not in run.meta


def test_single_round_regret():
    X, y = location_sequence(1, 1)
    run = ogd_run(SQ, UNIT, X, y, nu=2.0, G=4.0)
    trace = regret_of(SQ, UNIT, X, y, run)
    assert trace.regret == pytest.approx(SQ.losses(run.iterates[0], X, y)[0], abs=1e-12)
    assert trace.regret >= 0


def test_ons_regret_example():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, (256, 1))
    y = 0.5 * X[:, 0] + 0.1 * rng.normal(size=256)
    G, D = 2 * (1 + 1.5), 2.0
    run = ons_run(SQ, UNIT, X, y, eta=SQ.eta, G=G, D=D)
    reg = regret_of(SQ, UNIT, X, y, run).regret
    assert reg <= 5 * (1 / SQ.eta + G * D) * math.log(256)


def test_ons_matrices_grow():
    p = make_problem("sq_ball_2d")
    X, y = p.sample(300, np.random.default_rng(3))
    run = ons_run(p.loss, p.domain, X, y, p.eta, p.constants["G"], p.constants["D"])
    assert np.all(np.diff(run.meta["A_trace"]) >= 0)
    G = p.loss.grads(run.iterates[0], X[:1], y[:1])
    grads = np.vstack([p.loss.grads(f, X[t:t + 1], y[t:t + 1]) for t, f in enumerate(run.iterates)])
    A = run.params["eps"] * np.eye(2) + grads.T @ grads
    assert np.allclose(run.meta["A_final"], A, rtol=1e-10)
    assert G.shape == (1, 2)
    assert all(p.domain.contains(f) for f in run.iterates)


def test_ewoo_first_iterate_is_grid_centroid():
    D = ball([0.0, 0.0], 1.0)
    run = ewoo_run(SQ, D, np.ones((1, 2)), [0.0], resolution=16)
    w = D.grid_weights(16)
    assert np.allclose(run.iterates[0], w @ D.grid_points(16))
    assert np.allclose(run.iterates[0], 0.0, atol=1e-12)


@pytest.mark.parametrize("rounds", [1, 3, 7])
def test_ewoo_matches_closed_form_mean(rounds):
    # linear loss f * 1 on [0, 1]: after t rounds the weight is exp(-eta t f)
    eta = 0.9
    D = interval(0.0, 1.0)
    run = ewoo_run(linear_loss(eta), D, np.ones((rounds + 1, 1)), np.zeros(rounds + 1),
                   resolution=4096)
    c = eta * rounds
    exact = 1.0 / c - 1.0 / math.expm1(c)
    assert run.iterates[rounds, 0] == pytest.approx(exact, abs=1e-6)


def test_ewoo_regret_example():
    rng = np.random.default_rng(4)
    X = rng.uniform(-1, 1, (128, 1))
    y = 0.3 * X[:, 0] + 0.1 * rng.normal(size=128)
    run = ewoo_run(SQ, UNIT, X, y, resolution=256)
    assert regret_of(SQ, UNIT, X, y, run).regret <= (1 / SQ.eta) * (1 + math.log(129))


def test_ewoo_refinement_converges():
    p = make_problem("sq_interval")
    X, y = p.sample(128, np.random.default_rng(5))
    outs = [average_iterates(ewoo_run(p.loss, p.domain, X, y, resolution=r)) for r in (512, 1024, 2048)]
    assert abs(outs[0][0] - outs[1][0]) <= 1e-4
    assert abs(outs[1][0] - outs[2][0]) <= 1e-4


def test_ewoo_rejects_large_dimension_and_coarse_grid():
    with pytest.raises(UnsupportedDimensionError):
        ewoo_run(SQ, ball(np.zeros(4), 1.0), np.ones((2, 4)), [0.0, 0.0])
    with pytest.raises(InvalidInputError):
        ewoo_run(SQ, UNIT, np.ones((2, 1)), [0.0, 0.0], resolution=4)


@pytest.mark.parametrize("learner", ["ogd", "ons", "ewoo"])
def test_prequential_bit_identity(learner):
    p = make_problem("sq_ball_2d")
    X, y = p.sample(200, np.random.default_rng(6))

    def run(k):
        if learner == "ogd":
            return ogd_run(p.loss, p.domain, X[:k], y[:k], nu=0.5, G=p.constants["G"])
        if learner == "ons":
            return ons_run(p.loss, p.domain, X[:k], y[:k], p.eta, p.constants["G"], p.constants["D"])
        return ewoo_run(p.loss, p.domain, X[:k], y[:k], resolution=32)

    full = run(200)
    for k in (1, 57, 199):
        assert np.array_equal(run(k).iterates, full.iterates[:k])


def test_regret_zero_cases():
    point = box([0.3], [0.3])
    X, y = location_sequence(20, 7)
    run = ogd_run(SQ, point, X, y, nu=2.0, G=4.0)
    assert regret_of(SQ, point, X, y, run).regret == pytest.approx(0.0, abs=1e-12)
    comp = regret_of(SQ, UNIT, X, y, run).comparator
    fixed = OnlineRun("fixed", np.tile(comp, (20, 1)), SQ.losses(comp, X, y))
    assert regret_of(SQ, UNIT, X, y, fixed).regret == pytest.approx(0.0, abs=1e-12)


def test_hand_built_regret():
    # two rounds, learner suffers 1 each, comparator 0 each
    assert regret_from_losses([1.0, 1.0], [0.0, 0.0]) == 2.0


def test_average_iterates():
    run = OnlineRun("x", np.array([[0.0], [1.0]]), np.zeros(2))
    assert average_iterates(run)[0] == 0.5
    const = OnlineRun("x", np.full((5, 2), 0.25), np.zeros(5))
    assert np.array_equal(average_iterates(const), [0.25, 0.25])
    rng = np.random.default_rng(8)
    D = ball([0.5, 0.0], 0.7)
    for _ in range(1000):
        its = D.sample_uniform(rng, int(rng.integers(1, 20)))
        assert D.contains(average_iterates(OnlineRun("x", its, np.zeros(len(its)))))


def test_progressive_mixture_examples():
    loss = linear_loss(1.0)
    experts = np.array([[0.0], [1.0]])          # per-round losses 0 and 1
    prior = np.array([0.5, 0.5])
    st = progressive_mixture_run(loss, experts, prior, 1.0, np.ones((3, 1)), np.zeros(3))
    expected = 0.25 * sum(math.exp(-t) / (1 + math.exp(-t)) for t in range(4))
    assert st.cesaro_average[1] == pytest.approx(expected, abs=1e-12)
    # the terms are 0.5, 0.268941, 0.119203, 0.047426
    assert expected == pytest.approx(0.233893, abs=1e-6)
    empty = progressive_mixture_run(loss, experts, prior, 1.0, np.zeros((0, 1)), np.zeros(0))
    assert np.array_equal(empty.cesaro_average, prior)


def test_mixture_posterior_ordering_and_shift_invariance():
    rng = np.random.default_rng(9)
    loss = linear_loss(1.0)
    experts = np.column_stack([rng.normal(size=6), np.ones(6)])
    prior = np.full(6, 1 / 6)
    X = np.column_stack([rng.normal(size=15), np.zeros(15)])
    base = progressive_mixture_run(loss, experts, prior, 0.7, X, np.zeros(15))
    cum = loss.loss_matrix(experts, X, np.zeros(15)).sum(axis=1)
    assert np.array_equal(np.argsort(-base.posterior, kind="stable"), np.argsort(cum, kind="stable"))
    X_shift = X.copy()
    X_shift[:, 1] = rng.normal(scale=3.0, size=15)   # adds the same constant to every expert
    shifted = progressive_mixture_run(loss, experts, prior, 0.7, X_shift, np.zeros(15))
    assert np.allclose(shifted.cesaro_average, base.cesaro_average, atol=1e-12)


def test_mixture_validates_prior():
    with pytest.raises(InvalidInputError):
        progressive_mixture_run(linear_loss(), [[0.0], [1.0]], [0.7, 0.7], 1.0, [[1.0]], [0.0])


def test_regret_bound_examples():
    assert regret_bound("ewoo", n=9, d=1, eta=1.0) == pytest.approx(3.30259, abs=1e-5)
    assert regret_bound("ons", n=math.e, d=2, eta=1.0, G=1.0, D=1.0) == pytest.approx(20.0)
    for kind in ("ons", "ewoo", "ogd"):
        vals = [regret_bound(kind, n=n, d=2, eta=0.5, G=2.0, D=1.0, nu=1.0) for n in (2, 10, 100, 1000)]
        assert vals == sorted(vals)


def test_o2b_examples():
    n, delta = 100, 0.05
    log_term = math.log(4 * math.log(n) / delta)
    assert o2b_excess_bound(0.0, 1.0, 1.0, n, delta) == pytest.approx(16 * 2 * log_term / n)
    assert o2b_excess_bound(10.0, 1.0, 1.0, n, delta) == pytest.approx(2.426, abs=1e-3)
    vals = [o2b_excess_bound(5.0, 0.5, 1.0, 200, d) for d in (0.5, 0.1, 0.01, 0.001)]
    assert vals == sorted(vals)
    assert o2b_excess_bound(-3.0, 1.0, 1.0, n, delta) == o2b_excess_bound(0.0, 1.0, 1.0, n, delta)
    with pytest.raises(PreconditionError):
        o2b_excess_bound(1.0, 1.0, 1.0, 2, delta)


def test_realizable_scenario_uses_measured_regret():
    p = make_problem("realizable_1d")
    n = 512
    X, y = p.sample(n, np.random.default_rng(10))
    run = ons_run(p.loss, p.domain, X, y, p.eta, p.constants["G"], p.constants["D"])
    measured = regret_of(p.loss, p.domain, X, y, run).regret
    worst = regret_bound("ons", n=n, d=1, eta=p.eta, G=p.constants["G"], D=p.constants["D"])
    assert measured < worst / 100
    bound = o2b_excess_bound(measured, p.eta, p.B, n, 0.05)
    assert bound < o2b_excess_bound(worst, p.eta, p.B, n, 0.05)
    assert p.excess_risk(average_iterates(run))[0] <= bound
