"""Drift-integrated coefficients for the linear drift ``b(y, s) = A(s) y - 1``.

With ``A = 1/Lambda``::

    m1(t)     = exp(int_0^t A)
    m2(t)     = int_0^t exp(int_s^t A) ds
    sigma2(t) = int_0^t exp(2 int_s^t A) ds

and the characteristic map is ``F(x, t) = (x + m2) / m1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "Coeffs",
    "advance",
    "characteristic_map",
    "const_A_closed_form",
    "CoeffPath",
]


def _expm1_over(x: float, dt: float) -> float:
    """``(e^x - 1)/x * dt`` with the ``x -> 0`` limit."""
    if abs(x) < 1e-300:
        return dt
    return math.expm1(x) / x * dt


@dataclass(frozen=True)
class Coeffs:
    t: float = 0.0
    m1: float = 1.0
    m2: float = 0.0
    sigma2: float = 0.0


def advance(c: Coeffs, A_now: float, dt: float) -> Coeffs:
    """Exact update over a step on which ``A`` is constant."""
    if dt < 0:
        raise InvalidParameterError(f"dt must be nonnegative, got {dt}")
    if A_now < 0:
        raise InvalidParameterError(f"A must be nonnegative, got {A_now}")
    x = A_now * dt
    g = math.exp(x)
    return Coeffs(
        t=c.t + dt,
        m1=c.m1 * g,
        m2=c.m2 * g + _expm1_over(x, dt),
        sigma2=c.sigma2 * g * g + _expm1_over(2.0 * x, dt),
    )


def characteristic_map(c: Coeffs, x):
    return (x + c.m2) / c.m1


def const_A_closed_form(a: float, t: float) -> Coeffs:
    if a < 0 or t < 0:
        raise InvalidParameterError("a and t must be nonnegative")
    return Coeffs(t=t, m1=math.exp(a * t), m2=_expm1_over(a * t, t), sigma2=_expm1_over(2 * a * t, t))


class CoeffPath:
    """One-time coefficients accumulated on a grid, with two-time lookups.

    ``A`` is taken constant on each cell, equal to its value at the cell
    midpoint, so every cell update is exact and the path is second order in
    the grid spacing.  Two-time values use

        m1(s,t) = m1(t)/m1(s)
        m2(s,t) = m2(t) - m1(s,t) m2(s)
        sigma2(s,t) = sigma2(t) - m1(s,t)^2 sigma2(s)
    """

    def __init__(self, t_grid, A_cells):
        t = np.asarray(t_grid, dtype=float)
        A = np.asarray(A_cells, dtype=float)
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise InvalidParameterError("t_grid must start at 0 and increase")
        if A.shape != (t.size - 1,):
            raise InvalidParameterError("need one A value per grid cell")
        if np.any(A < 0):
            raise InvalidParameterError("A must be nonnegative")
        n = t.size
        m1 = np.empty(n)
        m2 = np.empty(n)
        s2 = np.empty(n)
        c = Coeffs()
        m1[0], m2[0], s2[0] = 1.0, 0.0, 0.0
        dts = np.diff(t)
        for i in range(n - 1):
            c = advance(c, float(A[i]), float(dts[i]))
            m1[i + 1], m2[i + 1], s2[i + 1] = c.m1, c.m2, c.sigma2
        self.t = t
        self.A = A
        self.m1 = m1
        self.m2 = m2
        self.sigma2 = s2
        # log m1 avoids overflow when forming ratios
        self.log_m1 = np.concatenate([[0.0], np.cumsum(A * dts)])

    @classmethod
    def constant(cls, a: float, T: float, n_steps: int) -> "CoeffPath":
        t = np.linspace(0.0, T, n_steps + 1)
        return cls(t, np.full(n_steps, float(a)))

    @classmethod
    def from_function(cls, A_fn, T: float, n_steps: int) -> "CoeffPath":
        t = np.linspace(0.0, T, n_steps + 1)
        mid = 0.5 * (t[1:] + t[:-1])
        return cls(t, np.asarray([A_fn(s) for s in mid], dtype=float))

    @classmethod
    def from_lambda_samples(cls, s, lam, T: float, n_steps: int) -> "CoeffPath":
        """``A = 1/Lambda`` with ``Lambda`` linearly interpolated from samples."""
        s = np.asarray(s, dtype=float)
        lam = np.asarray(lam, dtype=float)
        if np.any(lam <= 0):
            raise InvalidParameterError("Lambda samples must be positive")
        t = np.linspace(0.0, T, n_steps + 1)
        mid = 0.5 * (t[1:] + t[:-1])
        return cls(t, 1.0 / np.interp(mid, s, lam))

    @property
    def T(self) -> float:
        return float(self.t[-1])

    def at(self, i: int) -> Coeffs:
        return Coeffs(t=float(self.t[i]), m1=float(self.m1[i]), m2=float(self.m2[i]), sigma2=float(self.sigma2[i]))

    def final(self) -> Coeffs:
        return self.at(-1)

    def at_time(self, s: float) -> Coeffs:
        """Coefficients at any ``s`` in ``[0, T]``, exact for the cellwise-constant ``A``."""
        if not 0.0 <= s <= self.T * (1 + 1e-12):
            raise InvalidParameterError(f"time {s} outside [0, {self.T}]")
        i = int(np.searchsorted(self.t, s, side="right")) - 1
        i = min(max(i, 0), self.A.size - 1)
        return advance(self.at(i), float(self.A[i]), max(s - float(self.t[i]), 0.0))

    def two_time(self, i, j):
        """``(m1, m2, sigma2)`` between grid indices ``i <= j`` (arrays allowed)."""
        i = np.asarray(i)
        j = np.asarray(j)
        r = np.exp(self.log_m1[j] - self.log_m1[i])
        m2 = self.m2[j] - r * self.m2[i]
        s2 = self.sigma2[j] - r * r * self.sigma2[i]
        return r, np.maximum(m2, 0.0), np.maximum(s2, 0.0)
