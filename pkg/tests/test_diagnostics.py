import math

import numpy as np
import pytest

from expconcave.diagnostics import (bernstein_check, central_check, conditional_variance_check,
                                    default_test_points, excess_loss_stats, lemma3_threshold)
from expconcave.errors import PreconditionError
from expconcave.online import OnlineRun, ewoo_run
from expconcave.problems import make_problem


@pytest.fixture(scope="module")
def sq():
    return make_problem("sq_ball_2d")


def test_default_points_cover_grid_and_interior(sq):
    pts = default_test_points(sq, seed=0)
    assert len(pts) == len(sq.domain.grid_points(10)) + 100
    assert all(sq.domain.contains(f) for f in pts)


def test_central_at_f_star_is_exactly_one(sq):
    rep = central_check(sq, sq.eta, [sq.f_star], m=1000)
    assert rep.rows[0]["estimate"] == 1.0 and rep.n_flagged == 0


def test_central_no_flags_on_grid(sq):
    pts = sq.domain.grid_points(10)[:100]
    rep = central_check(sq, sq.eta, pts, m=100_000, seed=1)
    assert rep.n_flagged == 0
    assert rep.summary["max_estimate"] <= 1.0 + 1e-3


def test_central_check_has_power():
    noisy = make_problem("sq_ball_2d", noise="rademacher", noise_sigma=1.0)
    pts = default_test_points(noisy, seed=2, n_random=20)[::5]
    rep = central_check(noisy, 100 * noisy.eta, pts, m=20_000, seed=2)
    assert rep.n_flagged >= 1


def test_central_half_eta_on_realizable_instance():
    # excess losses are a.s. nonnegative here, so exp(-eta X / 2) >= exp(-eta X) pointwise
    p = make_problem("realizable_1d")
    pts = p.domain.grid_points(10)
    full = central_check(p, p.eta, pts, m=20_000, seed=3)
    half = central_check(p, p.eta / 2, pts, m=20_000, seed=3)
    for a, b in zip(full.rows, half.rows):
        assert b["estimate"] >= a["estimate"] - 3 * a["stderr"]


def test_bernstein_holds(sq):
    pts = default_test_points(sq, seed=4, n_random=30)
    rep = bernstein_check(sq, sq.eta, sq.B, pts, m=20_000, seed=4)
    assert rep.summary["holds"]
    assert rep.summary["C_hat"] < 4 * (1 / sq.eta + sq.B)
    fstar = bernstein_check(sq, sq.eta, sq.B, [sq.f_star], m=1000)
    assert not fstar.rows[0]["used"] and fstar.summary["n_used"] == 0


def test_bernstein_ratio_stable_in_m(sq):
    f = [[-0.5, 0.6]]
    a = bernstein_check(sq, sq.eta, sq.B, f, m=20_000, seed=5).rows[0]
    b = bernstein_check(sq, sq.eta, sq.B, f, m=80_000, seed=6).rows[0]
    assert abs(a["ratio"] - b["ratio"]) <= 4 * math.hypot(a["ratio_stderr"], b["ratio_stderr"])


def test_variance_check_at_f_star(sq):
    run = OnlineRun("fixed", np.tile(sq.f_star, (5, 1)), np.zeros(5))
    res = conditional_variance_check(sq, run, sq.eta, sq.B, m=1000)
    assert np.all(res.variances == 0) and res.n_flagged == 0


def test_variance_check_on_ewoo(sq):
    X, y = sq.sample(32, np.random.default_rng(7))
    run = ewoo_run(sq.loss, sq.domain, X, y, resolution=32)
    res = conditional_variance_check(sq, run, sq.eta, sq.B, m=20_000, seed=7, X=X, y=y)
    assert res.n_flagged == 0
    assert res.xi.shape == (32,)


def test_constant_run_matches_bernstein_quantities(sq):
    f = np.array([0.2, 0.4])
    run = OnlineRun("fixed", np.tile(f, (3, 1)), np.zeros(3))
    res = conditional_variance_check(sq, run, sq.eta, sq.B, m=50_000, seed=8)
    st = excess_loss_stats(sq, f, sq.eta, 50_000, np.random.default_rng(9))
    var = st.second_moment - st.mean ** 2
    assert np.allclose(res.variances, var, rtol=0.05)
    assert np.allclose(res.excess, sq.excess_risk(f)[0])


def test_checks_are_seeded(sq):
    pts = default_test_points(sq, seed=1, n_random=5)[:10]
    a = central_check(sq, sq.eta, pts, m=2000, seed=11)
    b = central_check(sq, sq.eta, pts, m=2000, seed=11)
    assert [r["estimate"] for r in a.rows] == [r["estimate"] for r in b.rows]


def test_lemma3_examples():
    assert lemma3_threshold(8.0, 1.0, 1.0, 11, 1000, 0.1) == pytest.approx(0.076753, abs=1e-6)
    vals = [lemma3_threshold(8.0, 1.0, 1.0, 11, n, 0.1) for n in (10, 1000, 10 ** 6)]
    assert vals == sorted(vals, reverse=True) and vals[-1] < 1e-4
    with pytest.raises(PreconditionError):
        lemma3_threshold(8.0, 1.0, 1.0, 1, 1000, 0.1)


def test_lemma3_continuity_in_q():
    a = lemma3_threshold(8.0, 1.0, 1.0, 11, 1000, 0.1)
    b = lemma3_threshold(8.0, 0.999, 1.0, 11, 1000, 0.1)
    # d/dq of x ** (1 / (2 - q)) at q = 1 is x log x (plus a smaller B-term): |log x| ~ 2.6 here
    assert abs(a - b) <= 1e-3 * 1.05 * abs(math.log(a)) * a
