"""Diagnostics computed from solver output.

Beta profiles and log-concavity from grids, doubling times, the length-scale
recursion for Gaussian data, ``C/log t`` rate fits, semiclassical (Hopf-Lax)
propagation of ``q = -log h`` and epsilon-convergence tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .coeffs import Coeffs, CoeffPath
from .cp_exact import evolve_cp
from .diffusive import coarsening_rate_diffusive, init_grid, run_to, survival_from_grid
from .errors import InvalidDataError, InvalidParameterError, NumericError
from .profiles import Profile, make_gaussian, normalize
from .trajectory import Trajectory

__all__ = [
    "BetaProfileReport",
    "beta_profile_from_grid",
    "LogConcavityReport",
    "log_concavity_check",
    "gaussian_beta",
    "DoublingTime",
    "doubling_time",
    "LRecursion",
    "gaussian_L_recursion",
    "RateFit",
    "rate_fit_log",
    "HopfLax",
    "hopf_lax_propagate",
    "eps_convergence_study",
]

W_FLOOR = 1e-12


@dataclass
class BetaProfileReport:
    x: np.ndarray
    beta: np.ndarray
    sup_beta: float
    tail_start: float
    floor: float


def beta_profile_from_grid(c, dx: float, *, x0: float = 0.0, floor: float = W_FLOOR) -> BetaProfileReport:
    """``beta = c h / w**2`` with ``w, h`` cumulated right to left.

    ``c`` holds density values at ``x0 + i dx``.  Points where ``w`` falls
    below ``floor`` times its value at the first point are masked (NaN),
    since the quotient amplifies truncation and round-off in the tail.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or c.size < 3:
        raise InvalidDataError("need a 1-D grid of at least 3 values")
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise InvalidDataError("grid values must be finite and nonnegative")
    if not np.any(c > 0):
        raise InvalidDataError("grid is identically zero")
    w, h = survival_from_grid(c, dx)
    x = x0 + dx * np.arange(c.size)
    ok = w >= floor * w[0]
    beta = np.full(c.size, np.nan)
    beta[ok] = c[ok] * h[ok] / (w[ok] * w[ok])
    masked = np.nonzero(~ok)[0]
    tail = float(x[masked[0]]) if masked.size else math.inf
    return BetaProfileReport(x=x, beta=beta, sup_beta=float(np.nanmax(beta)), tail_start=tail, floor=floor)


@dataclass
class LogConcavityReport:
    passed: bool
    tol: float
    min_u: float
    sup_beta: float
    violations: np.ndarray = field(default_factory=lambda: np.empty(0))


def log_concavity_check(
    *, c=None, v=None, dx: float, x0: float = 0.0, tol: float = 1e-6, floor: float = W_FLOOR
) -> LogConcavityReport:
    """``h`` is log-concave iff ``v = w/h`` is nondecreasing iff ``sup beta <= 1``.

    Pass exactly one of ``c`` (density grid) or ``v`` (grid of ``w/h``).
    ``violations`` lists the grid points where the test fails.
    """
    if (c is None) == (v is None):
        raise InvalidParameterError("pass exactly one of c or v")
    if c is not None:
        rep = beta_profile_from_grid(c, dx, x0=x0, floor=floor)
        ok = np.isfinite(rep.beta)
        w, h = survival_from_grid(np.asarray(c, dtype=float), dx)
        vv = w[ok] / h[ok]
        u = np.diff(vv) / dx if vv.size > 1 else np.zeros(1)
        bad = rep.x[ok & (np.nan_to_num(rep.beta, nan=-np.inf) > 1.0 + tol)]
        return LogConcavityReport(
            passed=bad.size == 0, tol=tol, min_u=float(np.min(u)), sup_beta=rep.sup_beta, violations=bad
        )
    vv = np.asarray(v, dtype=float)
    u = np.diff(vv) / dx
    x = x0 + dx * np.arange(vv.size)
    bad = x[:-1][u < -tol]
    # beta = 1 - u/v^2 at the left node of each interval
    sup_beta = float(np.max(1.0 - u / vv[:-1] ** 2))
    return LogConcavityReport(passed=bad.size == 0, tol=tol, min_u=float(np.min(u)), sup_beta=sup_beta, violations=bad)


def gaussian_beta(L: float, z: float) -> float:
    """Beta function at ``z`` of the density proportional to ``exp(-z - z**2/(2L))``."""
    if not L > 0 or z < 0:
        raise InvalidParameterError("need L > 0 and z >= 0")
    d = 1.0 / (L * (1.0 + z / L) ** 2)
    num, e1 = quad(lambda x: x * math.exp(-x - 0.5 * d * x * x), 0.0, math.inf, epsabs=0, epsrel=1e-13, limit=200)
    den, e0 = quad(lambda x: math.exp(-x - 0.5 * d * x * x), 0.0, math.inf, epsabs=0, epsrel=1e-13, limit=200)
    if not (math.isfinite(num) and math.isfinite(den)) or e0 > 1e-9 * den or e1 > 1e-9 * num:
        raise NumericError(f"quadrature failed for L={L}, z={z}")
    return num / (den * den)


@dataclass(frozen=True)
class DoublingTime:
    time: float | None
    lam_end: float

    @property
    def reached(self) -> bool:
        return self.time is not None


def doubling_time(trajectory: Trajectory) -> DoublingTime:
    """First time ``Lambda`` reaches twice its initial value (linear interpolation)."""
    t = trajectory.t
    lam = trajectory["lambda"]
    target = 2.0 * lam[0]
    hit = np.nonzero(lam >= target)[0]
    if hit.size == 0:
        return DoublingTime(None, float(lam[-1]))
    k = int(hit[0])
    if k == 0:
        return DoublingTime(float(t[0]), float(lam[-1]))
    frac = (target - lam[k - 1]) / (lam[k] - lam[k - 1])
    return DoublingTime(float(t[k - 1] + frac * (t[k] - t[k - 1])), float(lam[-1]))


@dataclass
class LRecursion:
    L: float
    A_of_L: float
    a: float
    mu: float
    lam: float
    t_double: float
    refit_residual: float

    @property
    def delta(self) -> float:
        return self.A_of_L - self.L


def gaussian_L_recursion(L: float, *, L0: float = 0.5, dt: float = 1e-3, refit_tol: float = 1e-8) -> LRecursion:
    """Length scale of the Gaussian reached at the doubling time, rescaled to unit mean.

    The doubling time comes from ``cp_exact``.  The transport itself is the
    exact affine map ``X -> (X - v)/u`` conditioned on ``X > v``, with ``v``
    fixed by ``w0(v) = 1/2``.  The evolved density is checked against the
    refitted Gaussian on a grid.
    """
    if not L >= L0:
        raise InvalidParameterError(f"L must be at least {L0}")
    p = make_gaussian(L)
    v = brentq(lambda s: float(p.w(s)) - 0.5, 0.0, 50.0 * (1.0 + 1.0 / p.a), xtol=1e-15, rtol=1e-15)
    u = float(p.h(v))
    lam = 1.0 / float(p.w(v))
    traj = evolve_cp(p, 4.0, dt, record_every=1)
    td = doubling_time(traj)
    if not td.reached:
        raise NumericError(f"Lambda did not double for L={L}")
    s = 1.0 + p.a * v / L
    a_new = p.a * u * lam * s
    L_new = L * s * s
    q = make_gaussian(L_new)
    # evolved, unit-mean survival function against the refitted one
    x = np.linspace(0.0, 20.0 / q.a, 2001)
    evolved = p.w(u * lam * x + v) / p.w(v)
    resid = float(np.max(np.abs(evolved - q.w(x))))
    if not (resid < refit_tol and abs(a_new - q.a) < refit_tol * q.a):
        raise NumericError(f"Gaussian refit residual {resid:.3e} (a mismatch {a_new - q.a:.3e})")
    return LRecursion(L=L, A_of_L=L_new, a=p.a, mu=v, lam=u, t_double=td.time, refit_residual=resid)


@dataclass
class RateFit:
    window: tuple
    t: np.ndarray
    gap: np.ndarray
    C: float
    band: tuple
    band_ok: bool
    skipped: str | None = None


def rate_fit_log(trajectory: Trajectory, window, n_samples: int = 16, *, tol: float = 1e-12) -> RateFit:
    """Fit ``1 - dLambda/dt = C/log t`` on geometric samples and test the ``[C/3, 3C]`` band."""
    lo, hi = map(float, window)
    if n_samples < 8:
        raise InvalidParameterError("need at least 8 samples")
    t_all = trajectory.t
    if not (1.0 < lo < hi and t_all[0] <= lo and hi <= t_all[-1] * (1 + 1e-12)):
        raise InvalidParameterError(f"window {window} not inside the trajectory")
    t = np.geomspace(lo, hi, n_samples)
    t[-1] = min(t[-1], t_all[-1])
    gap = 1.0 - trajectory.interp("dlambda_dt", t)
    nan = float("nan")
    if np.any(gap <= tol):
        return RateFit((lo, hi), t, gap, nan, (nan, nan), False, "1 - dLambda/dt not positive in window")
    if np.any(np.diff(gap) > tol * np.maximum(gap[:-1], 1.0)):
        return RateFit((lo, hi), t, gap, nan, (nan, nan), False, "1 - dLambda/dt not decreasing in window")
    r = 1.0 / np.log(t)
    C = float(np.sum(gap * r) / np.sum(r * r))
    scaled = gap * np.log(t)
    band = (float(np.min(scaled)), float(np.max(scaled)))
    ok = C / 3.0 <= band[0] and band[1] <= 3.0 * C
    return RateFit((lo, hi), t, gap, C, band, bool(ok))


@dataclass
class HopfLax:
    q: float
    beta: float
    y_min: float
    dq: float
    d2q: float


def _coeffs(coeffs, t) -> Coeffs:
    if isinstance(coeffs, CoeffPath):
        return coeffs.final() if t is None else coeffs.at_time(t)
    return coeffs


def hopf_lax_propagate(q0, coeffs, epsilon: float, x: float, t: float | None = None) -> HopfLax:
    """Semiclassical value of ``q = -log h`` at ``(x, t)`` from convex ``q0``.

    ``q0`` is a pair ``(y_grid, values)``, interpolated by a cubic spline.  The
    minimisation over ``y`` is bracketed on the grid (the objective is convex),
    narrowed by golden section and polished by a root solve of the derivative.
    """
    y, qv = (np.asarray(a, dtype=float) for a in q0)
    if y.ndim != 1 or y.shape != qv.shape or y.size < 4 or np.any(np.diff(y) <= 0):
        raise InvalidDataError("q0 must be a pair of equal-length increasing grids")
    d2 = np.diff(qv, 2)
    if np.any(d2 < -1e-10 * (1.0 + np.max(np.abs(qv)))):
        raise InvalidDataError(f"q0 is not convex near y={y[1 + int(np.argmin(d2))]:.6g}")
    c = _coeffs(coeffs, t)
    if not (epsilon > 0 and c.sigma2 > 0):
        raise InvalidParameterError("need epsilon > 0 and sigma2 > 0")
    sp = CubicSpline(y, qv)
    sp1, sp2 = sp.derivative(1), sp.derivative(2)
    k = epsilon * c.sigma2
    F = x + c.m2

    def phi(s):
        return (F - c.m1 * s) ** 2 / (2.0 * k) + float(sp(s))

    def dphi(s):
        return -c.m1 * (F - c.m1 * s) / k + float(sp1(s))

    vals = (F - c.m1 * y) ** 2 / (2.0 * k) + qv
    i = int(np.argmin(vals))
    if i == 0 or i == y.size - 1:
        raise InvalidDataError("minimiser lies at the edge of the q0 grid; widen the grid")
    res = minimize_scalar(phi, bracket=(y[i - 1], y[i], y[i + 1]), method="golden", tol=1e-10)
    a, b = y[i - 1], y[i + 1]
    if dphi(a) < 0 < dphi(b):
        ym = brentq(dphi, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    else:
        ym = float(res.x)
    q = 0.5 * math.log(2.0 * math.pi * epsilon) + 0.5 * math.log(c.sigma2) - 2.0 * math.log(c.m1) + phi(ym)
    g1, g2 = float(sp1(ym)), float(sp2(ym))
    denom = 1.0 + k / c.m1**2 * g2
    dq = g1 / c.m1
    d2q = g2 / c.m1**2 / denom
    beta0 = 1.0 - g2 / (g1 * g1)
    beta = 1.0 - (1.0 - beta0) / denom
    return HopfLax(q=q, beta=beta, y_min=ym, dq=dq, d2q=d2q)


def eps_convergence_study(
    profile: Profile,
    eps_list,
    T: float = 1.0,
    *,
    dx: float = 1e-3,
    n_times: int = 21,
    cp_dt: float = 1e-4,
    stencil: str = "second_order",
) -> list[dict]:
    """Compare diffusive runs at each ``eps`` with the undiffused solution on ``[0, T]``.

    Columns: ``lambda_gap`` (sup over output times), ``w_gap`` (sup over the
    grid at ``T``), ``flux_gap`` (boundary flux against the undiffused density
    at 0) and ``rate_gap`` (coarsening rate against ``beta0(v(T))``).
    ``resolved`` is false when ``eps < 4 dx``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidParameterError("eps_list must be decreasing")
    p = normalize(profile)
    cp = evolve_cp(p, T, cp_dt)
    v_T = float(cp["v"][-1])
    u_T = float(cp["u"][-1])
    rate0 = float(p.beta(v_T))
    c0_at_0 = u_T * float(p.density(v_T))
    times = list(np.linspace(0.0, T, n_times)[1:-1])
    rows = []
    for eps in eps_list:
        st = init_grid(p, eps, dx)
        tr = run_to(st, T, times, stencil=stencil)
        fin = tr.meta["final_state"]
        lam0 = cp.interp("lambda", tr.t)
        c_full = np.concatenate([[0.0], fin.c])
        w_eps, _ = survival_from_grid(c_full, dx)
        x = dx * np.arange(c_full.size)
        w_0 = p.w(u_T * x + v_T)
        cx = coarsening_rate_diffusive(fin, stencil) * fin.mass**2 / (0.5 * eps)
        rows.append(
            {
                "epsilon": eps,
                "dx": dx,
                "lambda_gap": float(np.max(np.abs(tr["lambda"] - lam0))),
                "w_gap": float(np.max(np.abs(w_eps - w_0))),
                "flux_gap": float(abs(0.5 * eps * cx - c0_at_0)),
                "rate_gap": float(abs(coarsening_rate_diffusive(fin, stencil) - rate0)),
                "lambda_T": fin.lam,
                "resolved": eps >= 4.0 * dx,
            }
        )
    return rows
