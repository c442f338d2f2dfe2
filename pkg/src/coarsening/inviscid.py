"""Inviscid perturbation of the coarsening model, solved by characteristics.

For ``v = w/h`` the characteristics give ``v(x, t) = v0(z)/m1`` where ``z``
solves

    z + eps * (sigma2/m1**2) * v0(z) = (x + m2)/m1.

At ``x = 0`` the constraint ``v(0, t) = 1/Lambda`` closes the system: ``z``
is an algebraic function of ``(m1, m2, sigma2)``, ``Lambda = m1/v0(z)``, and

    m1' = m1/Lambda,  m2' = 1 + m2/Lambda,  sigma2' = 1 + 2 sigma2/Lambda.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.optimize import brentq

from .coeffs import Coeffs, characteristic_map
from .errors import (
    ConstraintViolationError,
    InvalidDataError,
    InvalidParameterError,
    NumericError,
)
from .profiles import Profile, normalize, scalar_fns, validate_inviscid_data
from .trajectory import Trajectory

__all__ = [
    "InviscidState",
    "solve_z",
    "v_at",
    "evolve_inviscid",
    "coarsening_rate_inviscid",
    "fixed_point_bootstrap",
    "BootstrapResult",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InviscidState:
    t: float
    coeffs: Coeffs
    z: float
    lam: float
    epsilon: float


def _solve(v0, k: float, F: float, x_inf: float) -> float:
    """Root of ``z + k v0(z) = F`` on ``[0, F]``; caller checked solvability."""
    if k == 0.0:
        return F
    phi = lambda z: z + k * v0(z) - F  # noqa: E731
    lo = 0.0
    f_lo = phi(lo)
    if f_lo >= 0.0:
        if f_lo <= 1e-12 * (1.0 + abs(F)):
            return 0.0
        raise ConstraintViolationError(
            f"no nonnegative foot point: eps sigma2/m1^2 v0(0) = {k * v0(0.0):.6g} exceeds F = {F:.6g}"
        )
    hi = min(F, math.nextafter(x_inf, 0.0))
    while not phi(hi) > 0.0:
        # only reachable when v0 is finite at the support end
        if hi >= F:
            return F
        hi = 0.5 * (hi + F)
    try:
        z = brentq(phi, lo, hi, xtol=1e-15 * (1.0 + abs(F)), rtol=1e-15, maxiter=200)
    except (RuntimeError, ValueError) as exc:
        raise NumericError(f"foot-point solve failed: {exc}") from exc
    return z


def solve_z(profile: Profile, coeffs: Coeffs, epsilon: float, x: float) -> float:
    """Foot of the characteristic reaching ``x`` at time ``coeffs.t``."""
    F = characteristic_map(coeffs, x)
    k = epsilon * coeffs.sigma2 / coeffs.m1**2
    return _solve(scalar_fns(profile).v, k, F, profile.x_inf)


def v_at(profile: Profile, state: InviscidState, x: float) -> float:
    z = solve_z(profile, state.coeffs, state.epsilon, x)
    return float(profile.v(z)) / state.coeffs.m1


def _rate(v0z: float, dv0z: float, m1: float, k: float, eps: float) -> float:
    # v(0,t) = v0(z)/m1 and v_x(0,t) = v0'(z) z_x / m1 with z_x = 1/(m1 (1 + k v0'(z)))
    V = v0z / m1
    Vx = dv0z / (m1 * m1 * (1.0 + k * dv0z))
    return 1.0 - (1.0 - eps * V) * Vx / (V * V)


def coarsening_rate_inviscid(profile: Profile, state: InviscidState) -> float:
    c = state.coeffs
    f = scalar_fns(profile)
    k = state.epsilon * c.sigma2 / c.m1**2
    return _rate(f.v(state.z), f.dv(state.z), c.m1, k, state.epsilon)


def _prepare(profile: Profile, epsilon: float, delta0: float) -> Profile:
    if epsilon < 0:
        raise InvalidParameterError("epsilon must be nonnegative")
    p = normalize(profile)
    report = validate_inviscid_data(p, epsilon, delta0=delta0)
    if not report.passed:
        raise InvalidDataError("inviscid data rejected: " + "; ".join(report.messages))
    return p


def evolve_inviscid(
    profile: Profile,
    epsilon: float,
    t_end: float,
    dt: float = 1e-3,
    *,
    log_time: bool = False,
    delta0: float = 0.1,
    record_every: int = 1,
) -> Trajectory:
    """RK4 on ``(m1, m2, sigma2)`` with one monotone root solve per stage.

    With ``log_time`` the step is taken in ``log(1 + t)``.  Monotonicity of
    ``z`` and ``Lambda`` and the bound ``eps v(0,t) < 1`` are checked every
    step; a violation raises :class:`ConstraintViolationError`.
    """
    p = _prepare(profile, epsilon, delta0)
    if t_end < 0 or dt <= 0:
        raise InvalidParameterError("need t_end >= 0 and dt > 0")
    f = scalar_fns(p)
    v0, dv0 = f.v, f.dv
    x_inf = p.x_inf
    eps = float(epsilon)

    def closure(y):
        m1, m2, s2 = y
        k = eps * s2 / (m1 * m1)
        z = _solve(v0, k, m2 / m1, x_inf)
        return z, v0(z), k

    def rhs(s, y):
        _, vz, _ = closure(y)
        A = vz / y[0]
        g = math.exp(s) if log_time else 1.0
        return (g * vz, g * (1.0 + y[1] * A), g * (1.0 + 2.0 * y[2] * A))

    s_end = math.log1p(t_end) if log_time else float(t_end)
    n = int(math.ceil(s_end / dt - 1e-9)) if s_end > 0 else 0
    step = s_end / n if n else 0.0

    y = (1.0, 0.0, 0.0)
    rows = []

    def record(s, y):
        z, vz, k = closure(y)
        t = math.expm1(s) if log_time else s
        lam = y[0] / vz
        rows.append((t, z, y[0], y[1], y[2], lam, _rate(vz, dv0(z), y[0], k, eps), eps * vz / y[0]))

    record(0.0, y)
    prev_z, prev_lam = rows[-1][1], rows[-1][5]
    for i in range(n):
        s = i * step
        k1 = rhs(s, y)
        y2 = tuple(y[j] + 0.5 * step * k1[j] for j in range(3))
        k2 = rhs(s + 0.5 * step, y2)
        y3 = tuple(y[j] + 0.5 * step * k2[j] for j in range(3))
        k3 = rhs(s + 0.5 * step, y3)
        y4 = tuple(y[j] + step * k3[j] for j in range(3))
        k4 = rhs(s + step, y4)
        y = tuple(y[j] + step / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]) for j in range(3))
        z, vz, _ = closure(y)
        lam = y[0] / vz
        t_now = math.expm1(s + step) if log_time else s + step
        tol = 1e-8 * (1.0 + abs(lam))
        if z < prev_z - 1e-8 * (1.0 + z) or lam < prev_lam - tol:
            raise ConstraintViolationError(f"monotonicity lost at t={t_now:.6g}", time=t_now)
        if eps * vz / y[0] >= 1.0:
            raise ConstraintViolationError(f"eps v(0,t) reached 1 at t={t_now:.6g}", time=t_now)
        prev_z, prev_lam = z, lam
        if (i + 1) % record_every == 0 or i == n - 1:
            record(s + step, y)

    cols = list(zip(*rows))
    names = ["t", "z", "m1", "m2", "sigma2", "lambda", "dlambda_dt", "eps_v0"]
    meta = {"solver": "inviscid", "epsilon": eps, "dt": dt, "log_time": log_time}
    return Trajectory(dict(zip(names, cols)), meta)


@dataclass
class BootstrapResult:
    t: np.ndarray
    V: np.ndarray
    lam: np.ndarray
    iterations: int
    contraction_factor: float
    history: list


def fixed_point_bootstrap(
    profile: Profile,
    epsilon: float,
    T: float | None = None,
    *,
    delta0: float = 0.1,
    delta1: float = 0.09,
    n_grid: int = 2001,
    tol: float = 1e-13,
    max_iter: int = 200,
) -> BootstrapResult:
    """Iterate ``V -> v(0, .)`` computed with ``A = V`` until it stops moving.

    Coefficients are built from ``V`` by cumulative Simpson quadrature using
    ``m2/m1 = int 1/m1`` and ``sigma2/m1^2 = int 1/m1^2``.
    """
    p = normalize(profile)
    f = scalar_fns(p)
    v00 = f.v(0.0)
    if epsilon > 0 and not (1.0 + delta0) * v00 < 1.0 / epsilon:
        raise InvalidParameterError("contraction needs (1 + delta0) v0(0) < 1/epsilon")
    T_max = delta1 / v00
    if T is None:
        T = T_max
    if not 0 < T <= T_max * (1 + 1e-12):
        raise InvalidParameterError(f"T must lie in (0, {T_max:.6g}] for the contraction argument")
    t = np.linspace(0.0, T, n_grid)
    V = np.full(n_grid, v00)
    history = []
    for it in range(1, max_iter + 1):
        log_m1 = cumulative_simpson(V, x=t, initial=0.0)
        m1 = np.exp(log_m1)
        F = cumulative_simpson(1.0 / m1, x=t, initial=0.0)
        K = epsilon * cumulative_simpson(1.0 / (m1 * m1), x=t, initial=0.0)
        z = np.array([_solve(f.v, K[i], F[i], p.x_inf) for i in range(n_grid)])
        V_new = np.array([f.v(zi) for zi in z]) / m1
        diff = float(np.max(np.abs(V_new - V)))
        history.append(diff)
        V = V_new
        if diff < tol:
            break
    else:
        raise NumericError(f"no convergence after {max_iter} iterations, last change {history[-1]:.3e}")
    ratios = [b / a for a, b in zip(history[:-1], history[1:]) if a > 1e3 * tol]
    factor = max(ratios) if ratios else 0.0
    if factor >= 1.0:
        raise NumericError(f"iteration not contracting, factor {factor:.3g}")
    return BootstrapResult(t=t, V=V, lam=1.0 / V, iterations=it, contraction_factor=factor, history=history)
