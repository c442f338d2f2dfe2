import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from coarsening.errors import InvalidDataError, InvalidParameterError
from coarsening.profiles import (
    evaluate,
    make_gaussian,
    make_point_mass,
    make_self_similar,
    make_tabulated,
    normalize,
    scaled,
    support_grid,
    validate_inviscid_data,
)


def quad_moments(p):
    hi = p.x_inf if math.isfinite(p.x_inf) else math.inf
    m0 = quad(lambda x: float(p.density(x)), 0, hi, epsabs=0, epsrel=1e-12, limit=200)[0]
    m1 = quad(lambda x: x * float(p.density(x)), 0, hi, epsabs=0, epsrel=1e-12, limit=200)[0]
    return m0, m1


def test_exponential_values():
    p = make_self_similar(1.0)
    e = evaluate(p, 2.0)
    assert e.w == pytest.approx(math.exp(-2), rel=1e-14)
    assert e.h == pytest.approx(math.exp(-2), rel=1e-14)
    assert e.v == pytest.approx(1.0)
    assert e.beta == pytest.approx(1.0)
    assert evaluate(p, 0.0).v == pytest.approx(1.0)


def test_half_values():
    p = make_self_similar(0.5)
    e = evaluate(p, 1.0)
    assert (e.w, e.h, e.v, e.beta) == pytest.approx((0.5, 0.25, 2.0, 0.5), rel=1e-14)
    e0 = evaluate(p, 0.0)
    assert (e0.w, e0.h, e0.v, e0.beta) == pytest.approx((1.0, 1.0, 1.0, 0.5), rel=1e-14)


def test_past_support_flagged():
    e = evaluate(make_self_similar(0.5), 3.0)
    assert not e.in_support and e.w == 0.0


@pytest.mark.parametrize("beta", [0.25, 0.5, 1.0, 2.0, 3.0])
def test_self_similar_normalised_by_quadrature(beta):
    m0, m1 = quad_moments(make_self_similar(beta))
    assert m0 == pytest.approx(1.0, abs=1e-10)
    assert m1 == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("L", [0.5, 1.0, 3.0, 10.0, 100.0])
def test_gaussian_normalised_by_quadrature(L):
    p = make_gaussian(L)
    m0, m1 = quad_moments(p)
    assert m0 == pytest.approx(1.0, abs=1e-10)
    assert m1 == pytest.approx(1.0, abs=1e-10)
    assert float(p.v(0.0)) == pytest.approx(1.0, abs=1e-10)
    assert float(p.beta(0.0)) < 1.0


def test_gaussian_constants_frozen():
    # frozen from a quadrature oracle: a = I1/I0, K = a/I0 with
    # I_k = int y^k exp(-y - y^2/2) dy
    p = make_gaussian(1.0)
    assert p.a == pytest.approx(0.5251352761609812, rel=1e-12)
    assert p.K == pytest.approx(0.8009023344296511, rel=1e-12)


def test_gaussian_large_L_tends_to_exponential():
    p = make_gaussian(1e6)
    assert p.a == pytest.approx(1.0, abs=1e-5)
    assert p.K == pytest.approx(1.0, abs=1e-5)
    assert float(p.w(2.0)) == pytest.approx(math.exp(-2.0), rel=1e-4)


def test_tabulated_constant_v_is_exponential():
    x = np.linspace(0, 40, 81)
    p = make_tabulated(x, np.ones_like(x))
    xs = np.array([0.3, 1.7, 5.0])
    assert np.allclose(p.w(xs), np.exp(-xs), rtol=1e-10)


def test_tabulated_half_profile_beta():
    z = np.linspace(0, 1.9, 400)
    p = make_tabulated(z, 2.0 / (2.0 - z), x_inf=2.0)
    xs = np.linspace(0.05, 1.8, 30)
    assert np.allclose(p.beta(xs), 0.5, atol=1e-4)


def test_tabulated_decreasing_rejected():
    with pytest.raises(InvalidDataError):
        make_tabulated([0, 1, 2], [1.0, 2.0, 1.5])


@pytest.mark.parametrize("bad", [dict(x_nodes=[0.5, 1], v_values=[1, 1]), dict(x_nodes=[0, 0], v_values=[1, 1])])
def test_tabulated_bad_nodes(bad):
    with pytest.raises(InvalidParameterError):
        make_tabulated(**bad)


def test_normalize_identity_and_scaling():
    p = make_self_similar(0.5)
    assert normalize(p) is p
    big = scaled(p, 3.0)
    n = normalize(big)
    assert n.scale == pytest.approx(3.0)
    xs = np.array([0.1, 0.5, 1.2])
    assert np.allclose(big.beta(3 * xs), n.beta(xs), rtol=1e-12)


def test_point_mass():
    p = normalize(make_point_mass(2.0))
    assert p.mean == pytest.approx(1.0, rel=1e-12)
    assert float(p.v(0.25)) == pytest.approx(1.0 / (1.0 - 0.25), rel=1e-6)


def test_validation_reports():
    assert validate_inviscid_data(make_self_similar(0.5), 0.1).passed
    rep = validate_inviscid_data(make_self_similar(1.0), 2.0)
    assert "epsilon_below_mean" in rep.failures()
    # v rising faster than v**2
    z = np.linspace(0, 1, 11)
    rep = validate_inviscid_data(make_tabulated(z, 1.0 + 5.0 * z), 0.1)
    assert "rise_bounded_by_v_squared" in rep.failures()


@given(st.floats(0.2, 4.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_w_h_nonincreasing_self_similar(beta, a, b):
    p = make_self_similar(beta)
    x1, x2 = sorted((a * p.x_inf if math.isfinite(p.x_inf) else 10 * a, b * p.x_inf if math.isfinite(p.x_inf) else 10 * b))
    assert float(p.w(x2)) <= float(p.w(x1)) + 1e-15
    assert float(p.h(x2)) <= float(p.h(x1)) + 1e-15


@given(st.floats(0.5, 50.0), st.floats(0.0, 20.0))
def test_gaussian_beta_below_one_and_v_increasing(L, x):
    p = make_gaussian(L)
    assert float(p.beta(x)) < 1.0
    assert float(p.dv(x)) > 0


@given(st.floats(0.2, 4.0), st.floats(0.2, 5.0))
def test_beta_dilation_invariant(beta, factor):
    p = make_self_similar(beta)
    q = scaled(p, factor)
    xs = support_grid(p, 9)[1:-1]
    assert np.allclose(q.beta(factor * xs), p.beta(xs), rtol=1e-10)
