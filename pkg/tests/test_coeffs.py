import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from coarsening.coeffs import CoeffPath, Coeffs, advance, characteristic_map, const_A_closed_form
from coarsening.errors import InvalidParameterError


def ode_oracle(A_fn, T):
    """m1' = A m1, m2' = 1 + A m2, sigma2' = 1 + 2 A sigma2."""

    def rhs(t, y):
        a = A_fn(t)
        return [a * y[0], 1 + a * y[1], 1 + 2 * a * y[2]]

    sol = solve_ivp(rhs, (0, T), [1.0, 0.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-14)
    return sol.y[:, -1]


def test_zero_drift():
    c = advance(Coeffs(), 0.0, 2.5)
    assert (c.m1, c.m2, c.sigma2) == (1.0, 2.5, 2.5)


@pytest.mark.parametrize("a,t", [(0.3, 1.0), (1.0, 2.0), (2.0, 0.5)])
def test_constant_A_matches_ode(a, t):
    c = const_A_closed_form(a, t)
    ref = ode_oracle(lambda s: a, t)
    assert np.allclose([c.m1, c.m2, c.sigma2], ref, rtol=1e-10)
    assert (c.m1, c.m2, c.sigma2) == pytest.approx(
        (math.exp(a * t), math.expm1(a * t) / a, math.expm1(2 * a * t) / (2 * a)), rel=1e-14
    )


def test_characteristic_map_values():
    assert characteristic_map(const_A_closed_form(0.0, 1.5), 2.0) == pytest.approx(3.5)
    c = const_A_closed_form(1.0, 1.0)
    assert characteristic_map(c, 0.0) == pytest.approx((math.e - 1) / math.e, rel=1e-14)


def test_negative_A_rejected():
    with pytest.raises(InvalidParameterError):
        advance(Coeffs(), -1.0, 0.1)
    with pytest.raises(InvalidParameterError):
        CoeffPath.constant(-1.0, 1.0, 10)


def test_path_second_order_for_varying_A():
    A = lambda s: 1.0 / (1.0 + s)  # noqa: E731
    ref = ode_oracle(A, 2.0)
    errs = []
    for n in (50, 100, 200):
        c = CoeffPath.from_function(A, 2.0, n).final()
        errs.append(abs(c.sigma2 - ref[2]))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_at_time_between_nodes():
    p = CoeffPath.constant(0.7, 1.0, 10)
    c = p.at_time(0.437)
    ref = const_A_closed_form(0.7, 0.437)
    assert (c.m1, c.m2, c.sigma2) == pytest.approx((ref.m1, ref.m2, ref.sigma2), rel=1e-13)


def test_two_time_consistent():
    p = CoeffPath.from_function(lambda s: 1.0 + s, 1.0, 100)
    r, m2, s2 = p.two_time(30, 100)
    # composing [0, s] with [s, T] reproduces [0, T]
    a, b = p.at(30), p.final()
    assert r * a.m1 == pytest.approx(b.m1, rel=1e-13)
    assert r * a.m2 + m2 == pytest.approx(b.m2, rel=1e-13)
    assert r * r * a.sigma2 + s2 == pytest.approx(b.sigma2, rel=1e-13)


@given(st.floats(0.0, 3.0), st.floats(1e-3, 2.0))
def test_semigroup_halves(a, t):
    full = advance(Coeffs(), a, t)
    half = advance(advance(Coeffs(), a, t / 2), a, t / 2)
    for f in ("m1", "m2", "sigma2"):
        assert getattr(half, f) == pytest.approx(getattr(full, f), rel=1e-13)


@given(st.floats(0.0, 3.0), st.floats(1e-3, 2.0), st.floats(-2.0, 5.0))
def test_lambda_ratio_identity(a, t, x):
    # d/dt (m2/m1) = 1/m1 on a constant-A step, checked by central differences
    h = 1e-5 * t
    f = lambda s: characteristic_map(const_A_closed_form(a, s), 0.0)  # noqa: E731
    deriv = (f(t + h) - f(t - h)) / (2 * h)
    assert deriv == pytest.approx(1.0 / const_A_closed_form(a, t).m1, rel=1e-6)


@given(st.lists(st.floats(0.0, 2.0), min_size=2, max_size=20))
def test_sigma2_dominates_m2_over_m1(As):
    # with A >= 0, sigma2/m1 >= m2 ... so m2/sigma2 lies in (0, 1]
    p = CoeffPath(np.linspace(0, 1, len(As) + 1), As)
    c = p.final()
    assert 0 < c.m2 / c.sigma2 <= 1 + 1e-12
