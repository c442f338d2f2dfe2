import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coarsening import diffusive as d
from coarsening.errors import InvalidParameterError
from coarsening.profiles import make_gaussian, make_self_similar

EXP = make_self_similar(1.0)


def test_init_grid_normalised():
    s = d.init_grid(EXP, 0.1, 0.01, 30.0)
    assert s.mass_x == pytest.approx(1.0, abs=1e-12)
    # Riemann sums put Lambda within dx/2 of the continuous mean
    assert s.lam == pytest.approx(1.0, abs=0.6 * s.dx)


def test_init_delta():
    s = d.init_delta(1e-3)
    assert s.c[0] == pytest.approx(1e6)
    assert s.mass_x == pytest.approx(1.0, abs=1e-12)
    assert s.lam == pytest.approx(1e-3)


def test_init_grid_too_short():
    with pytest.raises(InvalidParameterError):
        d.init_grid(EXP, 0.1, 0.01, 5.0)


def test_epsilon_must_cover_two_cells():
    with pytest.raises(InvalidParameterError):
        d.init_grid(EXP, 0.01, 0.01)


def test_zero_step_is_identity():
    s = d.init_grid(EXP, 0.1, 0.02)
    s2 = d.step_diffusive(s, 0.0)
    assert np.array_equal(s.c, s2.c) and s2.t == s.t


def test_cfl_violation():
    s = d.init_grid(EXP, 0.1, 0.02)
    with pytest.raises(InvalidParameterError):
        d.step_diffusive(s, 1.0)


def test_single_step_matches_hand_stencil():
    s = d.init_grid(make_gaussian(1.0), 0.1, 0.05)
    dt = 0.5 * d.CFL * min(s.dx**2 / s.epsilon, s.dx / max(1.0, s.x_max / s.lam - 1.0))
    c = np.concatenate([[0.0], s.c, [0.0]])
    x = s.dx * np.arange(c.size)
    J = (x / s.lam - 1.0) * c
    # backward-difference flux plus centred diffusion
    ref = s.c + dt * (-(J[1:-1] - J[:-2]) / s.dx + 0.5 * s.epsilon * (c[2:] - 2 * c[1:-1] + c[:-2]) / s.dx**2)
    out = d.step_diffusive(s, dt)
    assert np.allclose(out.c, ref, rtol=1e-12, atol=1e-14 * s.c.max())


def test_smereka_closed_form_values():
    dx = 1e-3
    sol = d.smereka_explicit(dx, dx)
    assert sol.u == pytest.approx(0.5)
    assert sol.v == pytest.approx(dx * math.log(2))
    c0 = d.smereka_explicit(dx, 0.0).c(5)
    assert c0[0] == pytest.approx(1 / dx**2) and np.all(c0[1:] == 0)
    c = d.smereka_explicit(dx, 0.7).c(200_000)
    x = dx * np.arange(1, c.size + 1)
    assert np.sum(x * c) * dx == pytest.approx(1.0, rel=1e-9)
    assert np.sum(x * c) / np.sum(c) == pytest.approx(dx + 0.7, rel=1e-9)


@given(st.floats(1e-4, 1e-2), st.floats(1e-3, 20.0))
def test_smereka_ode_residual(dx, t):
    # exp(-v/dx) = dv/dt, with dv/dt by complex step
    h = 1e-20 * t
    dv = (dx * np.log1p(complex(t, h) / dx)).imag / h
    v = d.smereka_explicit(dx, t).v
    assert abs(math.exp(-v / dx) - dv) <= 1e-12


def test_smereka_run_tracks_lambda():
    dx = 5e-3
    tr = d.run_to(d.init_delta(dx), 1.0, [0.25, 0.5, 0.75])
    assert np.max(np.abs(tr["lambda"] - (dx + tr.t))) <= 10 * dx
    assert np.all(tr["min_c"] >= 0)
    fin = tr.meta["final_state"]
    assert d.coarsening_rate_diffusive(fin, "scheme") == pytest.approx(1.0, rel=0.05)


def test_smereka_rate_at_one():
    tr = d.run_to(d.init_delta(1e-3), 1.0)
    fin = tr.meta["final_state"]
    assert d.coarsening_rate_diffusive(fin, "scheme") == pytest.approx(1.0, rel=0.05)


def test_rate_zero_when_empty_near_origin():
    s = d.init_grid(EXP, 0.1, 0.02)
    c = s.c.copy()
    c[:10] = 0.0
    s = d._state_from_c(c, s.dx, s.epsilon)
    assert d.coarsening_rate_diffusive(s) == 0.0


def test_boundary_layer_slope_scales_like_inverse_epsilon():
    vals = []
    for eps in (0.1, 0.05, 0.025):
        fin = d.run_to(d.init_grid(EXP, eps, eps / 4), 1.0).meta["final_state"]
        vals.append(eps * fin.c[0] / fin.dx)
    assert max(vals) / min(vals) < 1.1


def test_endpoint_only_and_monotone_lambda():
    tr = d.run_to(d.init_grid(make_gaussian(1.0), 0.1, 0.025), 2.0)
    assert list(tr.t) == [0.0, 2.0]
    assert tr.meta["min_lambda_increment"] >= -1e-12


def test_converges_to_cp_for_small_noise():
    tr = d.run_to(d.init_grid(EXP, 0.05, 0.0125), 2.0, [0.5, 1.0, 1.5])
    assert np.max(np.abs(tr["lambda"] - (1 + tr.t))) <= 0.05


def test_conservation_defect_small():
    tr = d.run_to(d.init_delta(2e-3), 2.0, [1.0])
    assert np.max(np.abs(tr["mass_x"] - 1.0)) <= 1e-3


def test_grid_extension_keeps_earlier_cells():
    s = d.init_grid(EXP, 0.1, 0.05)
    n0 = s.c.size
    tr = d.run_to(s, 5.0, [1.0])
    assert tr.meta["grid_extensions"] >= 1
    assert tr.meta["final_state"].c.size % n0 == 0


def test_predictor_corrector_close_to_explicit():
    s = d.init_grid(make_gaussian(1.0), 0.1, 0.025)
    a = d.run_to(s, 1.0).last("lambda")
    b = d.run_to(s, 1.0, predictor_corrector=True).last("lambda")
    assert a == pytest.approx(b, rel=1e-3)


def test_deterministic():
    s = d.init_grid(make_gaussian(1.0), 0.1, 0.025)
    a = d.run_to(s, 1.0).meta["final_state"].c
    b = d.run_to(s, 1.0).meta["final_state"].c
    assert np.array_equal(a, b)


# viscous v-form


def test_viscous_exponential_nearly_linear():
    gaps = []
    for dx in (0.02, 0.01, 0.005):
        st_ = d.init_viscous(EXP, 0.1, 0.5, dx, 30.0)
        tr = d.run_viscous(st_, 1.0)
        gaps.append(abs(tr.last("lambda") - 2.0))
        assert np.min(tr["min_gamma"]) >= -1e-10
    assert gaps[0] > gaps[1] > gaps[2] and gaps[-1] < 0.02


def test_viscous_flags_bound_violation():
    assert d.run_viscous(d.init_viscous(make_gaussian(1.0), 0.5, 0.2, 0.01, 20.0), 0.1).meta["lambda_monotonicity_asserted"]
    tr = d.run_viscous(d.init_viscous(EXP, 2.0, 0.2, 0.01, 20.0), 0.1)
    assert not tr.meta["lambda_monotonicity_asserted"]


def test_viscous_boundary_condition():
    tr = d.run_viscous(d.init_viscous(make_gaussian(1.0), 0.1, 0.5, 0.01, 20.0), 0.5)
    fin = tr.meta["final_state"]
    assert fin.gamma[0] == 0.0
    assert fin.lam == pytest.approx(1.0 / fin.v[0])


def test_viscous_bad_nu():
    with pytest.raises(InvalidParameterError):
        d.init_viscous(EXP, 0.1, 0.0, 0.01, 10.0)


@pytest.mark.slow
def test_viscous_matches_c_form_at_unit_viscosity():
    p = make_gaussian(1.0)
    c_form = d.run_to(d.init_grid(p, 0.1, 1e-3), 1.0).last("lambda")
    v_form = d.run_viscous(d.init_viscous(p, 0.1, 1.0, 1e-3, 20.0), 1.0).last("lambda")
    assert v_form == pytest.approx(c_form, rel=0.02)


def test_viscous_monotonicity_loss_halts():
    from dataclasses import replace

    from coarsening.errors import ConstraintViolationError

    s = d.init_viscous(EXP, 0.1, 0.5, 0.05, 10.0)
    v = s.v.copy()
    v[50:] = 0.5
    with pytest.raises(ConstraintViolationError):
        d.run_viscous(replace(s, v=v), 0.1)
