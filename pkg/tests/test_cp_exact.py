import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from coarsening.cp_exact import coarsening_rate_cp, evolve_cp, pushforward_w, state_at
from coarsening.profiles import make_gaussian, make_self_similar


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_self_similar_linear_growth(beta):
    tr = evolve_cp(make_self_similar(beta), 10.0, 1e-3)
    assert np.max(np.abs(tr["lambda"] - (1 + beta * tr.t))) <= 1e-8
    assert np.allclose(tr["dlambda_dt"], beta, atol=1e-10)


def test_zero_horizon_identity():
    tr = evolve_cp(make_self_similar(1.0), 0.0)
    assert (tr["u"][0], tr["v"][0], tr["lambda"][0]) == (1.0, 0.0, 1.0)


def test_exponential_pushforward_conserves_mass():
    p = make_self_similar(1.0)
    tr = evolve_cp(p, 2.0, 1e-3)
    s = state_at(p, tr.last("v"), 2.0)
    w = lambda x: float(pushforward_w(p, s, x))  # noqa: E731
    assert w(0.7) == pytest.approx(math.exp(-s.v) * math.exp(-s.u * 0.7), rel=1e-12)
    assert quad(w, 0, math.inf, epsabs=0, epsrel=1e-12)[0] == pytest.approx(1.0, rel=1e-9)


def test_pushforward_identity_at_zero():
    p = make_gaussian(2.0)
    s = state_at(p, 0.0, 0.0)
    xs = np.linspace(0, 3, 7)
    assert np.allclose(pushforward_w(p, s, xs), p.w(xs))


def test_pushforward_past_support():
    p = make_self_similar(0.5)
    s = state_at(p, 0.5)
    assert float(pushforward_w(p, s, 10.0)) == 0.0


def test_gaussian_rate_below_one():
    p = make_gaussian(1.0)
    assert coarsening_rate_cp(p, state_at(p, 0.0, 0.0)) < 1.0
    tr = evolve_cp(p, 5.0, 1e-3)
    assert np.all(tr["dlambda_dt"] < 1.0)
    assert np.all(np.diff(tr["lambda"]) > 0)


def test_conservation_residual_small():
    tr = evolve_cp(make_gaussian(1.0), 20.0, 1e-3)
    assert np.max(np.abs(tr["conservation_residual"])) < 1e-10


def test_log_time_matches_linear_time():
    p = make_gaussian(1.0)
    a = evolve_cp(p, 50.0, 1e-3)
    b = evolve_cp(p, 50.0, 1e-3, log_time=True)
    assert b.last("lambda") == pytest.approx(a.last("lambda"), rel=1e-9)


@given(st.floats(0.3, 3.0), st.floats(0.0, 3.0))
def test_rate_is_beta_at_v(beta, v):
    p = make_self_similar(beta)
    if math.isfinite(p.x_inf):
        v = min(v, 0.9 * p.x_inf)
    assert coarsening_rate_cp(p, state_at(p, v)) == pytest.approx(beta)
