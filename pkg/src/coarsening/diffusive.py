"""Finite differences for the diffusive coarsening model.

c-form: on cells ``x_n = n dx`` (``n >= 1``, ``c(0) = 0``)

    dc/dt + (J(x) - J(x - dx))/dx = (eps/2) (c(x+dx) + c(x-dx) - 2c(x))/dx**2,
    J = (x/Lambda - 1) c,   Lambda = int x c / int c,

stepped with explicit Euler.  Because ``sum J = (M1/Lambda - M0)/dx = 0`` the
first moment is conserved by the scheme up to far-field truncation.

v-form (viscosity ``nu``): ``v = w/h`` on nodes ``x_j = j dx`` (``j >= 0``)

    v_t + (x/Lambda - 1 + eps v) v_x + v/Lambda = (eps nu/2) v_xx,
    v_x(0) = v(0)**2,   Lambda = 1/v(0).

``nu = 1`` is the same model as the c-form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .coeffs import Coeffs, advance
from .errors import ConstraintViolationError, InvalidParameterError, NumericError
from .profiles import Profile, normalize
from .trajectory import Trajectory

__all__ = [
    "DiffusiveState",
    "ViscousState",
    "init_grid",
    "init_delta",
    "step_diffusive",
    "coarsening_rate_diffusive",
    "smereka_explicit",
    "SmerekaSolution",
    "run_to",
    "init_viscous",
    "step_viscous_v",
    "run_viscous",
    "survival_from_grid",
]

log = logging.getLogger(__name__)

TAIL_TOL = 1e-10
CFL = 0.4
# negative mass tolerated from round-off, relative to the total
NEG_TOL = 1e-12


@dataclass
class DiffusiveState:
    t: float
    dx: float
    epsilon: float
    c: np.ndarray
    lam: float
    mass: float
    mass_x: float

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(1, self.c.size + 1)

    @property
    def x_max(self) -> float:
        return self.dx * self.c.size


def _moments(c, dx):
    x = dx * np.arange(1, c.size + 1)
    m0 = float(np.sum(c) * dx)
    m1 = float(np.sum(x * c) * dx)
    return m0, m1


def _check_eps_dx(epsilon, dx):
    if not (dx > 0 and epsilon > 0):
        raise InvalidParameterError("dx and epsilon must be positive")
    # below this the upwind flux at x < Lambda outruns diffusion and c can go negative
    if epsilon < 2.0 * dx * (1.0 - 1e-12):
        raise InvalidParameterError(f"need epsilon >= 2 dx for a positive scheme (eps={epsilon}, dx={dx})")


def _state_from_c(c, dx, epsilon, t=0.0) -> DiffusiveState:
    m0, m1 = _moments(c, dx)
    return DiffusiveState(t=t, dx=dx, epsilon=epsilon, c=c, lam=m1 / m0, mass=m0, mass_x=m1)


def _boundary_mass(c) -> float:
    """Mass of the outermost cell relative to the total."""
    total = float(np.sum(c))
    return float(c[-1]) / total if total > 0 else 0.0


def init_grid(profile: Profile, epsilon: float, dx: float, x_max: float | None = None) -> DiffusiveState:
    """Sample the normalised profile's density on the cells, then rescale to ``int x c = 1``.

    ``x_max=None`` picks the smallest power-of-two multiple of ``dx`` (at
    least 64 cells) whose outermost cell holds under ``TAIL_TOL`` of the mass.
    """
    _check_eps_dx(epsilon, dx)
    p = normalize(profile)
    if x_max is None:
        n = 64
        while True:
            c = np.asarray(p.density(dx * np.arange(1, n + 1)))
            if (np.sum(c) > 0 and _boundary_mass(c) <= TAIL_TOL and p.w(n * dx) <= TAIL_TOL) or n > 1 << 26:
                break
            n *= 2
    else:
        n = int(round(x_max / dx))
        if n < 3:
            raise InvalidParameterError("x_max must cover at least 3 cells")
        if p.w(n * dx) > TAIL_TOL:
            raise InvalidParameterError(f"x_max={x_max} leaves mass {p.w(n * dx):.3g} beyond the grid")
        c = np.asarray(p.density(dx * np.arange(1, n + 1)))
    c = np.array(c, dtype=float)
    _, m1 = _moments(c, dx)
    c /= m1
    return _state_from_c(c, dx, epsilon)


def init_delta(dx: float, epsilon: float | None = None, n_cells: int = 64) -> DiffusiveState:
    """All mass in the first cell: ``c(dx) = 1/dx**2``."""
    eps = 2.0 * dx if epsilon is None else epsilon
    _check_eps_dx(eps, dx)
    c = np.zeros(n_cells)
    c[0] = 1.0 / dx**2
    return _state_from_c(c, dx, eps)


@njit(cache=True, fastmath=True)
def _euler_pass(cur, nxt, dt, dx, D, inv_lam):
    """One explicit step written as ``a_i c[i-1] + b_i c[i] + d c[i+1]``.

    Returns the zeroth and first moment sums and the sum of ``|nxt|``; a
    running minimum would stop the loop from vectorising.
    """
    n = cur.size
    r = dt / dx
    Dd = D * dt
    q = dt * inv_lam
    # cell i sits at x = (i + 1) dx; b_i = b0 - q i, a_i = a0 + q i
    b0 = 1.0 + r - 2.0 * Dd - q
    a0 = Dd - r
    c0 = b0 * cur[0] + Dd * cur[1]
    nxt[0] = c0
    n0 = c0
    n1 = c0
    na = abs(c0)
    for i in range(1, n - 1):
        fi = float(i)
        ci = (a0 + q * fi) * cur[i - 1] + (b0 - q * fi) * cur[i] + Dd * cur[i + 1]
        nxt[i] = ci
        n0 += ci
        n1 += (fi + 1.0) * ci
        na += abs(ci)
    fi = float(n - 1)
    ci = (a0 + q * fi) * cur[n - 2] + (b0 - q * fi) * cur[n - 1]
    nxt[n - 1] = ci
    n0 += ci
    n1 += (fi + 1.0) * ci
    na += abs(ci)
    return n0, n1 * dx, na


@njit(cache=True)
def _c_kernel(c, buf, dx, eps, t, t_target, cfl, pc, check_every, tail_tol, neg_tol):
    """Explicit steps until ``t_target`` or until the grid needs extending.

    ``c`` and ``buf`` are swapped every step.  Returns (t, lam, steps,
    status, min_dlam, neg_mass, last_rate, swapped); status 0 done, 1 extend
    grid, 2 negative mass above ``neg_tol`` times the total.  ``swapped``
    means the result is in ``buf``.
    """
    n = c.size
    D = 0.5 * eps / (dx * dx)
    m0 = 0.0
    m1 = 0.0
    for i in range(n):
        m0 += c[i]
        m1 += (i + 1) * dx * c[i]
    lam = m1 / m0
    steps = 0
    min_dlam = np.inf
    neg_mass = 0.0
    last_rate = np.nan
    status = 0
    cur = c
    nxt = buf
    swapped = False
    while t < t_target * (1.0 - 1e-15) and t_target - t > 1e-300:
        amax = max(1.0, n * dx / lam - 1.0)
        dt = cfl * min(dx * dx / eps, dx / amax)
        if t + dt > t_target:
            dt = t_target - t
        lam_use = lam
        if pc:
            # half step only to evaluate Lambda at the midpoint
            h0, h1, _ = _euler_pass(cur, nxt, 0.5 * dt, dx, D, 1.0 / lam)
            lam_use = h1 / h0
        n0, n1, na = _euler_pass(cur, nxt, dt, dx, D, 1.0 / lam_use)
        tmp = cur
        cur = nxt
        nxt = tmp
        swapped = not swapped
        t += dt
        steps += 1
        lam_new = n1 / n0
        dl = lam_new - lam
        if dl < min_dlam:
            min_dlam = dl
        last_rate = dl / dt
        lam = lam_new
        neg = 0.5 * (na - n0)
        if neg > neg_mass:
            neg_mass = neg
        if neg > neg_tol * n0:
            status = 2
            break
        if steps % check_every == 0 and cur[n - 1] > tail_tol * n0:
            status = 1
            break
    return t, lam, steps, status, min_dlam, neg_mass, last_rate, swapped


def step_diffusive(state: DiffusiveState, dt: float, *, predictor_corrector: bool = False) -> DiffusiveState:
    """One explicit step; ``dt`` must respect the stability limit."""
    if dt < 0:
        raise InvalidParameterError("dt must be nonnegative")
    if dt == 0:
        return replace(state, c=state.c.copy())
    amax = max(1.0, state.x_max / state.lam - 1.0)
    limit = CFL * min(state.dx**2 / state.epsilon, state.dx / amax)
    if dt > limit * (1 + 1e-12):
        raise InvalidParameterError(f"dt={dt:.3g} exceeds the stability limit {limit:.3g}")
    c = state.c.copy()
    buf = np.empty_like(c)
    t, _, _, status, _, _, _, swapped = _c_kernel(
        c, buf, state.dx, state.epsilon, 0.0, dt, 1.0, predictor_corrector, 1 << 30, TAIL_TOL, NEG_TOL
    )
    if swapped:
        c = buf
    if status == 2:
        i = int(np.argmin(c))
        raise NumericError(f"negative density {c[i]:.3g} in cell {i + 1}")
    return _state_from_c(c, state.dx, state.epsilon, state.t + dt)


def coarsening_rate_diffusive(state: DiffusiveState, stencil: str = "second_order") -> float:
    """``(eps/2) c_x(0) / (int c)**2``.

    ``second_order`` uses ``(4 c1 - c2)/(2 dx)``; ``scheme`` uses ``c1/dx``,
    the slope the discrete scheme itself loses mass through (exact for the
    ``eps = 2 dx`` explicit solution, whose boundary layer is one cell wide).
    """
    c = state.c
    if stencil == "second_order":
        cx = (4.0 * c[0] - c[1]) / (2.0 * state.dx)
    elif stencil == "scheme":
        cx = c[0] / state.dx
    else:
        raise InvalidParameterError(f"unknown stencil {stencil!r}")
    if state.mass <= 0:
        return 0.0
    return 0.5 * state.epsilon * cx / state.mass**2


@dataclass(frozen=True)
class SmerekaSolution:
    dx: float
    t: float
    u: float
    v: float
    lam: float

    def c(self, n_cells: int) -> np.ndarray:
        """``u (1-u)^{n-1} exp(-v/dx) / dx**2`` for ``n = 1..n_cells``."""
        if self.u == 1.0:
            out = np.zeros(n_cells)
            out[0] = math.exp(-self.v / self.dx) / self.dx**2
            return out
        n = np.arange(1, n_cells + 1)
        log_c = math.log(self.u) + (n - 1) * math.log1p(-self.u) - self.v / self.dx - 2 * math.log(self.dx)
        return np.exp(log_c)


def smereka_explicit(dx: float, t: float) -> SmerekaSolution:
    """Closed-form solution of the ``eps = 2 dx`` scheme from the delta datum."""
    if t < 0 or dx <= 0:
        raise InvalidParameterError("need t >= 0 and dx > 0")
    return SmerekaSolution(dx=dx, t=t, u=1.0 / (1.0 + t / dx), v=dx * math.log1p(t / dx), lam=dx + t)


def survival_from_grid(c, dx):
    """Right-to-left trapezoid cumulation: ``w`` and ``h`` at the cell points."""
    c = np.asarray(c, dtype=float)
    seg = 0.5 * dx * (c[1:] + c[:-1])
    w = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    segw = 0.5 * dx * (w[1:] + w[:-1])
    h = np.concatenate([np.cumsum(segw[::-1])[::-1], [0.0]])
    return w, h


def run_to(
    state: DiffusiveState,
    t_end: float,
    output_times=None,
    *,
    predictor_corrector: bool = False,
    hook=None,
    stencil: str = "second_order",
    cfl: float = CFL,
    max_cells: int = 1 << 25,
) -> Trajectory:
    """Step to ``t_end``, recording at ``output_times`` (and the endpoints).

    The grid is doubled with zero padding whenever the outermost cell holds
    more than ``TAIL_TOL`` of the mass.  ``hook(state)`` is called at every
    recorded time.  ``meta['final_state']`` holds the last state.
    """
    if not t_end > state.t:
        raise InvalidParameterError("t_end must exceed the current time")
    times = sorted({float(s) for s in (output_times or []) if state.t < s < t_end} | {float(t_end)})
    c = state.c.copy()
    buf = np.empty_like(c)
    dx, eps = state.dx, state.epsilon
    t = state.t
    rows = []
    min_dlam = math.inf
    total_steps = 0
    extensions = 0

    def record(st: DiffusiveState):
        rate = coarsening_rate_diffusive(st, stencil)
        rows.append((st.t, st.lam, rate, st.mass, st.mass_x, float(np.min(st.c))))
        if hook is not None:
            hook(st)

    record(replace(state, c=c.copy()))
    for target in times:
        while True:
            t, lam, steps, status, mdl, _, _, swapped = _c_kernel(
                c, buf, dx, eps, t, target, cfl, predictor_corrector, 64, TAIL_TOL, NEG_TOL
            )
            if swapped:
                c, buf = buf, c
            total_steps += steps
            min_dlam = min(min_dlam, mdl)
            if status == 2:
                i = int(np.argmin(c))
                raise NumericError(f"negative density {c[i]:.3g} in cell {i + 1} at t={t:.6g}")
            if status == 1:
                if 2 * c.size > max_cells:
                    raise NumericError(f"grid would exceed {max_cells} cells at t={t:.6g}")
                c = np.concatenate([c, np.zeros(c.size)])
                buf = np.empty_like(c)
                extensions += 1
                continue
            break
        st = _state_from_c(c.copy(), dx, eps, target)
        t = target
        record(st)
    cols = list(zip(*rows))
    names = ["t", "lambda", "dlambda_dt", "mass", "mass_x", "min_c"]
    meta = {
        "solver": "diffusive",
        "epsilon": eps,
        "dx": dx,
        "steps": total_steps,
        "grid_extensions": extensions,
        "min_lambda_increment": min_dlam,
        "final_state": _state_from_c(c, dx, eps, t),
    }
    return Trajectory(dict(zip(names, cols)), meta)


# ---------------------------------------------------------------------------
# v-form


@dataclass
class ViscousState:
    t: float
    dx: float
    epsilon: float
    nu: float
    v: np.ndarray
    lam: float
    gamma: np.ndarray
    far_slope: float
    coeffs: Coeffs = field(default_factory=Coeffs)
    tail: str = "initial"

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.v.size)


def _gamma(v, dx):
    vx = np.empty_like(v)
    vx[1:-1] = (v[2:] - v[:-2]) / (2 * dx)
    vx[0] = v[0] ** 2
    vx[-1] = (v[-1] - v[-2]) / dx
    return v * v - vx


def init_viscous(
    profile: Profile, epsilon: float, nu: float, dx: float, x_max: float, tail: str = "initial"
) -> ViscousState:
    """Sample ``v`` of the normalised profile on ``[0, x_max]``.

    ``tail='initial'`` holds the far-field slope at its initial value;
    ``tail='compact'`` uses ``1/(eps sigma2(t))`` and needs ``x_max`` inside
    the support.
    """
    if not (0 < nu <= 1):
        raise InvalidParameterError("nu must lie in (0, 1]")
    if not (dx > 0 and epsilon > 0 and x_max > 2 * dx):
        raise InvalidParameterError("need dx, epsilon > 0 and x_max > 2 dx")
    if tail not in ("initial", "compact"):
        raise InvalidParameterError(f"unknown tail rule {tail!r}")
    p = normalize(profile)
    if x_max >= p.x_inf:
        raise InvalidParameterError("x_max must lie inside the support for the v-form")
    x = dx * np.arange(int(round(x_max / dx)) + 1)
    v = np.asarray(p.v(x), dtype=float)
    slope = float(p.dv(x[-1]))
    return ViscousState(
        t=0.0, dx=dx, epsilon=epsilon, nu=nu, v=v, lam=1.0 / v[0], gamma=_gamma(v, dx), far_slope=slope, tail=tail
    )


@njit(cache=True, fastmath=True)
def _v_pass(cur, nxt, dt, dx, Dn, inv_lam, eps, far_slope):
    """One explicit upwind step.

    The branch-free interior loop vectorises; the boundary nodes use the
    ghost values ``v[-1] = v[1] - 2 dx v[0]**2`` and ``v[n] = v[n-1] + dx slope``.
    """
    n = cur.size
    r = dt / dx
    k = dt * inv_lam
    q = dx * inv_lam
    Dd = Dn * dt
    vj = cur[0]
    left = cur[1] - 2.0 * dx * vj * vj
    vel = -1.0 + eps * vj
    nxt[0] = vj - r * (max(vel, 0.0) * (vj - left) + min(vel, 0.0) * (cur[1] - vj)) - k * vj + Dd * (cur[1] + left - 2.0 * vj)
    for j in range(1, n - 1):
        vj = cur[j]
        vel = float(j) * q - 1.0 + eps * vj
        up = max(vel, 0.0)
        dn = min(vel, 0.0)
        lft = cur[j - 1]
        rgt = cur[j + 1]
        nxt[j] = vj - r * (up * (vj - lft) + dn * (rgt - vj)) - k * vj + Dd * (rgt + lft - 2.0 * vj)
    vj = cur[n - 1]
    right = vj + dx * far_slope
    vel = (n - 1) * q - 1.0 + eps * vj
    nxt[n - 1] = vj - r * (max(vel, 0.0) * (vj - cur[n - 2]) + min(vel, 0.0) * (right - vj)) - k * vj + Dd * (
        right + cur[n - 2] - 2.0 * vj
    )


@njit(cache=True)
def _monotone(v, tol):
    for j in range(v.size - 1):
        if v[j + 1] < v[j] - tol * abs(v[j]):
            return False
    return True


@njit(cache=True)
def _v_kernel(v, buf, dx, eps, nu, t, t_target, cfl, far_slope, mono_tol, check_every):
    """Explicit upwind steps; returns (t, steps, status, min_dlam, last_rate, sumA, swapped).

    status 0 done, 1 monotonicity lost.  ``sumA`` is the integral of 1/Lambda.
    ``v`` and ``buf`` alternate; ``swapped`` means the result is in ``buf``.
    While ``v`` is increasing the velocity ``x/Lambda - 1 + eps v`` is too, so
    its largest magnitude sits at an end of the grid; monotonicity itself is
    checked every ``check_every`` steps and at the end.
    """
    n = v.size
    Dn = 0.5 * eps * nu / (dx * dx)
    steps = 0
    status = 0
    min_dlam = np.inf
    last_rate = np.nan
    sum_a = 0.0
    cur = v
    nxt = buf
    swapped = False
    if not _monotone(cur, mono_tol):
        return t, steps, 1, min_dlam, last_rate, sum_a, swapped
    while t < t_target * (1.0 - 1e-15) and t_target - t > 1e-300:
        lam = 1.0 / cur[0]
        vmax = max(abs(-1.0 + eps * cur[0]), abs((n - 1) * dx / lam - 1.0 + eps * cur[n - 1]))
        dt = cfl * min(dx * dx / (eps * nu), dx / max(vmax, 1e-300))
        if t + dt > t_target:
            dt = t_target - t
        _v_pass(cur, nxt, dt, dx, Dn, 1.0 / lam, eps, far_slope)
        tmp = cur
        cur = nxt
        nxt = tmp
        swapped = not swapped
        t += dt
        steps += 1
        sum_a += dt / lam
        lam_new = 1.0 / cur[0]
        dl = lam_new - lam
        if dl < min_dlam:
            min_dlam = dl
        last_rate = dl / dt
        if steps % check_every == 0 and not _monotone(cur, mono_tol):
            status = 1
            break
    if status == 0 and not _monotone(cur, mono_tol):
        status = 1
    return t, steps, status, min_dlam, last_rate, sum_a, swapped


def step_viscous_v(state: ViscousState, dt: float) -> ViscousState:
    """One explicit step of the v-form; ``dt`` must respect the stability limit."""
    v = state.v.copy()
    vel = state.x / state.lam - 1.0 + state.epsilon * v
    limit = CFL * min(state.dx**2 / (state.epsilon * state.nu), state.dx / float(np.max(np.abs(vel))))
    if dt > limit * (1 + 1e-12):
        raise InvalidParameterError(f"dt={dt:.3g} exceeds the stability limit {limit:.3g}")
    return _advance_viscous(state, v, state.t + dt, cfl=1.0)[0]


def _far_slope(state: ViscousState) -> float:
    if state.tail == "compact" and state.coeffs.sigma2 > 0:
        return 1.0 / (state.epsilon * state.coeffs.sigma2)
    return state.far_slope


def _advance_viscous(state: ViscousState, v, target, cfl):
    buf = np.empty_like(v)
    t, steps, status, mdl, rate, sum_a, swapped = _v_kernel(
        v, buf, state.dx, state.epsilon, state.nu, state.t, target, cfl, _far_slope(state), 1e-12, 16
    )
    if swapped:
        v = buf
    if status == 1:
        raise ConstraintViolationError(f"v lost monotonicity at t={t:.6g}", time=t)
    el = target - state.t
    coeffs = advance(state.coeffs, sum_a / el, el) if el > 0 else state.coeffs
    new = replace(state, t=target, v=v, lam=1.0 / v[0], gamma=_gamma(v, state.dx), coeffs=coeffs)
    return new, steps, mdl, rate


def run_viscous(state: ViscousState, t_end: float, output_times=None, *, cfl: float = CFL, hook=None) -> Trajectory:
    """Step the v-form to ``t_end``; columns t, lambda, dlambda_dt, v0, min_gamma."""
    if not t_end > state.t:
        raise InvalidParameterError("t_end must exceed the current time")
    times = sorted({float(s) for s in (output_times or []) if state.t < s < t_end} | {float(t_end)})
    bound_ok = state.v[0] <= 1.0 / (state.epsilon * (1.0 - state.nu)) if state.nu < 1 else True
    if not bound_ok:
        log.warning("v(0,0) exceeds 1/(eps (1 - nu)); Lambda need not be monotone")
    rows = [(state.t, state.lam, math.nan, state.v[0], float(np.min(state.gamma)))]
    if hook is not None:
        hook(state)
    min_dlam = math.inf
    total = 0
    cur = state
    for target in times:
        cur, steps, mdl, rate = _advance_viscous(cur, cur.v.copy(), target, cfl)
        total += steps
        min_dlam = min(min_dlam, mdl)
        rows.append((cur.t, cur.lam, rate, cur.v[0], float(np.min(cur.gamma))))
        if hook is not None:
            hook(cur)
    if not np.all(np.isfinite(cur.v)):
        raise NumericError("non-finite values in the v-form solution")
    cols = list(zip(*rows))
    names = ["t", "lambda", "dlambda_dt", "v0", "min_gamma"]
    meta = {
        "solver": "viscous",
        "epsilon": state.epsilon,
        "nu": state.nu,
        "dx": state.dx,
        "steps": total,
        "min_lambda_increment": min_dlam,
        "lambda_monotonicity_asserted": bool(bound_ok),
        "final_state": cur,
    }
    return Trajectory(dict(zip(names, cols)), meta)
