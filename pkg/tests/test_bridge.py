import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad

from coarsening import bridge as b
from coarsening.coeffs import CoeffPath, const_A_closed_form
from coarsening.errors import InvalidParameterError


def test_green_peak_driftless():
    c = const_A_closed_form(0.0, 2.0)
    assert float(b.green_full(c, 0.3, 1.0 - 2.0, 1.0)) == pytest.approx(1 / math.sqrt(2 * math.pi * 0.3 * 2.0))


@pytest.mark.parametrize("a", [0.0, 1.0])
def test_green_normalised(a):
    c = const_A_closed_form(a, 1.0)
    mass = quad(lambda x: float(b.green_full(c, 0.2, x, 1.0)), -np.inf, np.inf, epsabs=1e-13)[0]
    assert mass == pytest.approx(1.0, abs=1e-10)


def test_green_constant_A_moments():
    c = const_A_closed_form(1.0, 1.0)
    eps = 0.2
    mean = quad(lambda x: x * float(b.green_full(c, eps, x, 1.0)), -np.inf, np.inf, epsabs=1e-13)[0]
    var = quad(lambda x: (x - 1) ** 2 * float(b.green_full(c, eps, x, 1.0)), -np.inf, np.inf, epsabs=1e-13)[0]
    assert mean == pytest.approx(1.0, abs=1e-10)
    assert var == pytest.approx(eps * (math.e**2 - 1) / 2, rel=1e-9)


def test_action_values():
    c = const_A_closed_form(0.7, 1.3)
    y = 0.4
    assert float(b.action_q(c, c.m1 * y - c.m2, y)) == pytest.approx(0.0, abs=1e-30)
    c0 = const_A_closed_form(0.0, 2.0)
    assert float(b.action_q(c0, 1.5, 0.5)) == pytest.approx((1.5 + 2.0 - 0.5) ** 2 / 4.0)


@given(st.floats(0.0, 2.0), st.floats(0.1, 3.0), st.floats(0.05, 2.0), st.floats(-3, 3), st.floats(-3, 3))
def test_action_green_identity(a, T, eps, x, y):
    c = const_A_closed_form(a, T)
    G = float(b.green_full(c, eps, x, y))
    q = float(b.action_q(c, x, y))
    if G > 1e-250:
        assert -eps * math.log(G * math.sqrt(2 * math.pi * eps * c.sigma2)) == pytest.approx(q, abs=1e-12 * (1 + q))


def test_bridge_mean_ends_and_driftless_line():
    p = CoeffPath.constant(1.0, 1.0, 100)
    assert b.bridge_mean(p, 2.0, 0.5, 0.0) == pytest.approx(0.5, abs=1e-14)
    assert b.bridge_mean(p, 2.0, 0.5, 1.0) == pytest.approx(2.0, abs=1e-13)
    p0 = CoeffPath.constant(0.0, 2.0, 100)
    s = np.linspace(0, 2, 9)
    assert np.allclose(b.bridge_mean(p0, 1.5, 0.5, s), 0.5 + (1.5 - 0.5) * s / 2, atol=1e-13)


def test_bridge_cov_driftless_and_ends():
    p0 = CoeffPath.constant(0.0, 2.0, 100)
    for s in (0.3, 1.0, 1.7):
        assert b.bridge_cov(p0, s, s) == pytest.approx(s * (2 - s) / 2, rel=1e-13)
    p = CoeffPath.from_function(lambda s: 1 / (1 + s), 1.0, 200)
    for s in (0.0, 0.4, 1.0):
        assert b.bridge_cov(p, 0.0, s) == pytest.approx(0.0, abs=1e-15)
        assert b.bridge_cov(p, 1.0, s) == pytest.approx(0.0, abs=1e-15)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_bridge_cov_symmetric_and_variance_formula(s1, s2):
    p = CoeffPath.from_function(lambda s: 1 + s, 1.0, 64)
    assert b.bridge_cov(p, s1, s2) == pytest.approx(b.bridge_cov(p, s2, s1), rel=1e-14, abs=1e-16)
    # variance = sigma2(0,s) sigma2(s,T)/sigma2(T)
    _, _, s_sT = b._two_time(p, s1, 1.0)
    assert b.bridge_cov(p, s1, s1) == pytest.approx(p.at_time(s1).sigma2 * s_sT / p.final().sigma2, rel=1e-12, abs=1e-16)


def test_spec_validation():
    with pytest.raises(InvalidParameterError):
        b.BridgeSpec.constant_A(0.0, 1.0, 0.5, 1.0, 1.0, n_steps=5)
    with pytest.raises(InvalidParameterError):
        b.BridgeSpec.constant_A(0.0, 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(InvalidParameterError):
        b.BridgeSpec.constant_A(0.0, 1.0, 0.5, 1.0, 1.0, monitor=(2.0,))
    spec = b.BridgeSpec.constant_A(0.0, 1.0, 0.5, 1.0, 1.0, n_paths=10)
    with pytest.raises(InvalidParameterError):
        b.sample_bridge(spec, "nope")


@pytest.mark.parametrize("method", b.METHODS)
def test_driftless_midpoint_variance(method):
    eps = 0.5
    spec = b.BridgeSpec.constant_A(0.0, 1.0, eps, 1.0, 1.0, n_steps=500, n_paths=40_000, seed=5, monitor=(0.5,))
    batch = b.sample_bridge(spec, method)
    assert abs(batch.var[0] - eps / 4) <= 3 * batch.var_se[0]
    assert abs(batch.mean[0] - 1.0) <= 3 * batch.mean_se[0]
    assert batch.endpoint_error <= 1e-12


def test_identical_across_threads():
    spec = b.BridgeSpec.constant_A(1.0, 1.0, 0.3, 1.0, 0.5, n_steps=100, n_paths=10_000, seed=9, monitor=(0.5,))
    one = b.sample_bridge(spec, threads=1)
    four = b.sample_bridge(spec, threads=4)
    assert one.p_hat == four.p_hat
    assert np.array_equal(one.mean, four.mean) and np.array_equal(one.var, four.var)


def test_few_steps_warn():
    spec = b.BridgeSpec.constant_A(0.0, 1.0, 0.5, 1.0, 1.0, n_steps=20, n_paths=100)
    assert b.sample_bridge(spec, "markov_drift").meta["warnings"]
    assert not b.sample_bridge(spec, "kernel_factor").meta["warnings"]
    coarse = b.BridgeSpec.constant_A(0.0, 1.0, 0.5, 0.1, 0.1, n_steps=20, n_paths=100)
    assert b.sample_bridge(coarse, "kernel_factor").meta["warnings"]


def test_far_endpoint_survives():
    spec = b.BridgeSpec.constant_A(0.0, 1.0, 0.1, 1.0, 20.0, n_steps=100, n_paths=5000)
    assert b.survival_probability_mc(spec)[0] == 1.0


def test_crossing_correction_removes_bias():
    exact = -math.expm1(-4.0)
    spec = b.BridgeSpec.constant_A(0.0, 1.0, 0.5, 1.0, 1.0, n_steps=50, n_paths=50_000, seed=2)
    naive = b.sample_bridge(spec, crossing_correction=False)
    fixed = b.sample_bridge(spec)
    assert naive.p_hat - exact > 5 * naive.se
    assert abs(fixed.p_hat - exact) <= 3 * fixed.se


def test_prop51_rhs_values():
    c0 = const_A_closed_form(0.0, 2.0)
    assert b.prop51_rhs(c0, 0.7, 1.5) == pytest.approx(-math.expm1(-2 * 0.7 * 1.5 / 2.0), rel=1e-14)
    assert b.prop51_rhs(c0, 1e-12, 1.0) == pytest.approx(0.0, abs=1e-11)
    assert b.prop51_rhs(c0, 1e6, 1.0) == 1.0
    e = math.e
    mu = 1 - (e - 1) / ((e * e - 1) / 2) + e / ((e * e - 1) / 2)
    assert b.prop51_rhs(const_A_closed_form(1.0, 1.0), 1.0, 1.0) == pytest.approx(-math.expm1(-2 * mu), rel=1e-14)


@given(st.floats(0.01, 3), st.floats(0.01, 3), st.floats(0.05, 2), st.floats(0.1, 3))
def test_dirichlet_ratio(x, y, eps, T):
    full = float(b.green_full(const_A_closed_form(0.0, T), eps, x, y))
    if full > 1e-200:
        ratio = float(b.green_dirichlet_driftless(x, y, eps, T)) / full
        assert ratio == pytest.approx(-math.expm1(-2 * x * y / (eps * T)), rel=1e-12, abs=1e-14)


def test_dirichlet_vanishes_at_zero():
    assert float(b.green_dirichlet_driftless(0.0, 1.0, 0.3, 1.0)) == pytest.approx(0.0, abs=1e-15)


def test_exit_probability_limits():
    assert b.exit_prob_drifted_bm(1.0, 1e3, 0.5) == pytest.approx(-math.expm1(-1.0), rel=1e-14)
    assert b.exit_prob_drifted_bm(5.0, 10.0, 50.0) == pytest.approx(1.0)
    with pytest.raises(InvalidParameterError):
        b.exit_prob_drifted_bm(2.0, 1.0, 0.5)


@pytest.mark.slow
def test_standardised_errors_are_normal():
    exact = -math.expm1(-4.0)
    z = []
    for seed in range(50):
        spec = b.BridgeSpec.constant_A(0.0, 1.0, 0.5, 1.0, 1.0, n_steps=200, n_paths=20_000, seed=100 + seed)
        p, se = b.survival_probability_mc(spec)
        z.append((p - exact) / se)
    assert stats.kstest(z, "norm").pvalue > 0.01
