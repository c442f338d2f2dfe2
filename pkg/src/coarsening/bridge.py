"""Endpoint-conditioned linear diffusions and their survival probabilities.

The unconditioned process is ``dY = (A(s) Y - 1) ds + sqrt(eps) dB``.  Given
``Y(0) = y`` and ``Y(T) = x`` it is Gaussian with mean ``bridge_mean`` and
covariance ``eps * bridge_cov``.  Sampling is done either by Euler-Maruyama
with the conditioning drift (``markov_drift``) or by drawing the Gaussian
process directly (``kernel_factor``, exact at the grid points).

Random streams are Philox generators keyed by ``(seed, chunk)`` with a fixed
chunk size, so results do not depend on how many threads run the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coeffs import Coeffs, CoeffPath
from .errors import InvalidParameterError

__all__ = [
    "BridgeSpec",
    "PathBatch",
    "green_full",
    "action_q",
    "bridge_mean",
    "bridge_cov",
    "sample_bridge",
    "survival_probability_mc",
    "prop51_rhs",
    "prop51_drift",
    "green_dirichlet_driftless",
    "exit_prob_drifted_bm",
    "exit_prob_mc",
    "METHODS",
]

METHODS = ("markov_drift", "kernel_factor")
CHUNK = 4096


def _coeffs_at(coeffs, T=None) -> Coeffs:
    if isinstance(coeffs, CoeffPath):
        return coeffs.final() if T is None else coeffs.at_time(T)
    if T is not None and not math.isclose(coeffs.t, T, rel_tol=1e-12, abs_tol=1e-15):
        raise InvalidParameterError(f"coefficients are for t={coeffs.t}, not T={T}")
    return coeffs


def green_full(coeffs, epsilon: float, x, y, T=None):
    """Transition density of ``Y(T) = x`` given ``Y(0) = y``."""
    c = _coeffs_at(coeffs, T)
    if not c.sigma2 > 0:
        raise InvalidParameterError("sigma2(T) must be positive")
    var = epsilon * c.sigma2
    d = np.asarray(x, dtype=float) - (c.m1 * np.asarray(y, dtype=float) - c.m2)
    return np.exp(-0.5 * d * d / var) / math.sqrt(2.0 * math.pi * var)


def action_q(coeffs, x, y, T=None):
    """Minimal action ``(x + m2 - m1 y)**2 / (2 sigma2)``."""
    c = _coeffs_at(coeffs, T)
    if not c.sigma2 > 0:
        raise InvalidParameterError("sigma2(T) must be positive")
    d = np.asarray(x, dtype=float) + c.m2 - c.m1 * np.asarray(y, dtype=float)
    return d * d / (2.0 * c.sigma2)


def _two_time(path: CoeffPath, s1: float, s2: float):
    a = path.at_time(s1)
    b = path.at_time(s2)
    r = b.m1 / a.m1
    return r, max(b.m2 - r * a.m2, 0.0), max(b.sigma2 - r * r * a.sigma2, 0.0)


def bridge_mean(path: CoeffPath, x: float, y: float, s):
    """Mean of the conditioned process at time(s) ``s``; also the optimal path."""
    T = path.T
    ST = path.final().sigma2
    out = []
    for si in np.atleast_1d(np.asarray(s, dtype=float)):
        if not 0.0 <= si <= T * (1 + 1e-12):
            raise InvalidParameterError(f"s={si} outside [0, {T}]")
        c0s = path.at_time(si)
        r_sT, m2_sT, s2_sT = _two_time(path, si, T)
        val = (x * r_sT * c0s.sigma2 + y * c0s.m1 * s2_sT + r_sT * m2_sT * c0s.sigma2 - c0s.m2 * s2_sT) / ST
        out.append(val)
    return out[0] if np.ndim(s) == 0 else np.asarray(out)


def bridge_cov(path: CoeffPath, s1: float, s2: float) -> float:
    """Covariance kernel of the conditioned process, without the ``eps`` factor."""
    T = path.T
    lo, hi = min(s1, s2), max(s1, s2)
    if lo < 0 or hi > T * (1 + 1e-12):
        raise InvalidParameterError("times must lie in [0, T]")
    r12, _, _ = _two_time(path, lo, hi)
    _, _, s2_hT = _two_time(path, hi, T)
    return r12 * path.at_time(lo).sigma2 * s2_hT / path.final().sigma2


@dataclass(frozen=True)
class BridgeSpec:
    """A conditioned path problem on the grid of ``path``."""

    path: CoeffPath
    epsilon: float
    y: float
    x: float
    n_paths: int = 100_000
    seed: int = 0
    monitor: tuple = ()

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidParameterError("epsilon must be positive")
        if self.n_steps < 10:
            raise InvalidParameterError("need at least 10 time steps")
        if self.n_paths < 1:
            raise InvalidParameterError("need at least one path")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidParameterError("endpoints must be finite")
        for s in self.monitor:
            if not 0 <= s <= self.T:
                raise InvalidParameterError(f"monitor time {s} outside [0, {self.T}]")

    @property
    def T(self) -> float:
        return self.path.T

    @property
    def n_steps(self) -> int:
        return self.path.A.size

    @classmethod
    def constant_A(cls, a: float, T: float, epsilon: float, y: float, x: float, n_steps: int = 1000, **kw):
        return cls(CoeffPath.constant(a, T, n_steps), epsilon, y, x, **kw)

    @classmethod
    def from_lambda(cls, s, lam, T: float, epsilon: float, y: float, x: float, n_steps: int = 1000, **kw):
        """``A = 1/Lambda`` with ``Lambda`` linearly interpolated from solver output."""
        return cls(CoeffPath.from_lambda_samples(s, lam, T, n_steps), epsilon, y, x, **kw)

    def monitor_indices(self) -> np.ndarray:
        t = self.path.t
        idx = [int(np.argmin(np.abs(t - s))) for s in self.monitor]
        return np.asarray(idx, dtype=int)


@dataclass
class PathBatch:
    n_paths: int
    survival_flags: np.ndarray
    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    endpoint_error: float
    method: str
    meta: dict = field(default_factory=dict)

    @property
    def p_hat(self) -> float:
        return float(np.mean(self.survival_flags))

    @property
    def se(self) -> float:
        p = self.p_hat
        return math.sqrt(p * (1.0 - p) / self.n_paths)

    @property
    def mean_se(self) -> np.ndarray:
        return np.sqrt(self.var / self.n_paths)

    @property
    def var_se(self) -> np.ndarray:
        # Gaussian marginals: Var(sample variance) = 2 var^2/(n - 1)
        return self.var * math.sqrt(2.0 / max(self.n_paths - 1, 1))


def _rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk])))


class _Grid:
    """Per-step arrays shared by all chunks of one spec."""

    def __init__(self, spec: BridgeSpec):
        p = spec.path
        n = spec.n_steps
        self.dt = np.diff(p.t)
        idx = np.arange(n + 1)
        r, m2, s2 = p.two_time(idx, np.full(n + 1, n))
        self.m1_sT, self.m2_sT, self.s2_sT = r, m2, s2
        ST = p.sigma2[-1]
        # exact conditioned mean at the grid points
        self.mean = (
            spec.x * r * p.sigma2 + spec.y * p.m1 * s2 + r * m2 * p.sigma2 - p.m2 * s2
        ) / ST
        # variance increments of int dB/m1 over each cell
        q = p.sigma2 * np.exp(-2.0 * p.log_m1)
        self.inc_sd = np.sqrt(np.maximum(np.diff(q), 0.0))
        self.gain = np.exp(p.log_m1)
        self.pull = 1.0 - s2 / ST


def _markov_chunk(spec: BridgeSpec, g: _Grid, rng, n: int, mon, crossing: bool):
    eps, x = spec.epsilon, spec.x
    steps = spec.n_steps
    A = spec.path.A
    Y = np.full(n, float(spec.y))
    alive = Y > 0
    snaps = np.empty((len(mon), n))
    where = {int(k): j for j, k in enumerate(mon)}
    if 0 in where:
        snaps[where[0]] = Y
    for i in range(steps):
        dt = g.dt[i]
        xi = rng.standard_normal(n)
        u = rng.random(n)
        if i < steps - 1:
            r = g.m1_sT[i]
            drift = A[i] * Y - 1.0 + r * (x + g.m2_sT[i] - r * Y) / g.s2_sT[i]
            Yn = Y + drift * dt + math.sqrt(eps * dt) * xi
        else:
            # the conditioning drift is singular at T; pin the endpoint
            Yn = np.full(n, float(x))
        alive &= Yn > 0
        if crossing:
            with np.errstate(over="ignore", invalid="ignore"):
                p_cross = np.exp(-2.0 * np.maximum(Y, 0.0) * np.maximum(Yn, 0.0) / (eps * dt))
            alive &= u >= p_cross
        Y = Yn
        if i + 1 in where:
            snaps[where[i + 1]] = Y
    return alive, snaps, Y


def _kernel_chunk(spec: BridgeSpec, g: _Grid, rng, n: int, mon, crossing: bool):
    eps = spec.epsilon
    steps = spec.n_steps
    G = rng.standard_normal((n, steps)) * g.inc_sd
    u = rng.random((n, steps))
    M = np.zeros((n, steps + 1))
    np.cumsum(G, axis=1, out=M[:, 1:])
    W = M[:, -1:]
    Y = g.mean + math.sqrt(eps) * g.gain * (M - g.pull * W)
    alive = np.all(Y > 0, axis=1)
    if crossing:
        a = np.maximum(Y[:, :-1], 0.0)
        b = np.maximum(Y[:, 1:], 0.0)
        p_cross = np.exp(-2.0 * a * b / (eps * g.dt))
        alive &= np.all(u >= p_cross, axis=1)
    return alive, Y[:, mon].T.copy(), Y[:, -1]


def sample_bridge(
    spec: BridgeSpec,
    method: str = "kernel_factor",
    *,
    crossing_correction: bool = True,
    threads: int = 1,
) -> PathBatch:
    """Sample ``spec.n_paths`` conditioned paths and reduce them to a batch summary.

    A path survives if it stays positive at every grid point and, between
    grid points, passes the Brownian-bridge crossing test.
    """
    if method not in METHODS:
        raise InvalidParameterError(f"method must be one of {METHODS}")
    g = _Grid(spec)
    mon = spec.monitor_indices()
    sizes = [CHUNK] * (spec.n_paths // CHUNK)
    if spec.n_paths % CHUNK:
        sizes.append(spec.n_paths % CHUNK)
    work = _markov_chunk if method == "markov_drift" else _kernel_chunk

    def run(k):
        return work(spec, g, _rng(spec.seed, k), sizes[k], mon, crossing_correction)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(k) for k in range(len(sizes))]

    flags = np.concatenate([p[0] for p in parts])
    # chunk-ordered pairwise combination keeps the reduction order fixed
    count = 0
    mean = np.zeros(len(mon))
    m2 = np.zeros(len(mon))
    err_sum = 0.0
    for (_, snaps, Yend), nk in zip(parts, sizes):
        mk = snaps.mean(axis=1)
        vk = ((snaps - mk[:, None]) ** 2).sum(axis=1)
        delta = mk - mean
        tot = count + nk
        mean = mean + delta * nk / tot
        m2 = m2 + vk + delta * delta * count * nk / tot
        count = tot
        err_sum += float(np.sum(np.abs(Yend - spec.x)))
    var = m2 / max(count - 1, 1)
    meta = {"n_steps": spec.n_steps, "seed": spec.seed, "chunk": CHUNK, "crossing_correction": crossing_correction}
    warnings = []
    if method == "markov_drift" and spec.n_steps < 100:
        warnings.append("fewer than 100 steps: Euler-Maruyama bias in the variance is O(eps dt)")
    noise = math.sqrt(spec.epsilon * spec.T / spec.n_steps)
    if noise > 0.5 * min(abs(spec.x), abs(spec.y)):
        warnings.append(f"per-step noise {noise:.3g} is not small against the endpoints")
    meta["warnings"] = warnings
    return PathBatch(
        n_paths=count,
        survival_flags=flags,
        times=spec.path.t[mon],
        mean=mean,
        var=var,
        endpoint_error=err_sum / count,
        method=method,
        meta=meta,
    )


def survival_probability_mc(spec: BridgeSpec, method: str = "kernel_factor", *, threads: int = 1, **kw):
    """``(p_hat, SE)`` for ``P(inf Y > 0 | Y(0)=y, Y(T)=x)``."""
    if not (spec.x > 0 and spec.y > 0):
        raise InvalidParameterError("x and y must be positive")
    batch = sample_bridge(spec, method, threads=threads, **kw)
    return batch.p_hat, batch.se


def prop51_rhs(coeffs, lambda_factor: float, y: float, T=None) -> float:
    """Small-noise limit of the survival ratio with end point ``lambda_factor * eps``."""
    c = _coeffs_at(coeffs, T)
    if isinstance(coeffs, CoeffPath) and np.any(coeffs.A < 0):
        raise InvalidParameterError("A must be nonnegative")
    mu = 1.0 - c.m2 / c.sigma2 + c.m1 * y / c.sigma2
    return -math.expm1(-2.0 * lambda_factor * mu)


def prop51_drift(coeffs, y: float, T=None) -> float:
    c = _coeffs_at(coeffs, T)
    return 1.0 - c.m2 / c.sigma2 + c.m1 * y / c.sigma2


def green_dirichlet_driftless(x, y, epsilon: float, T: float):
    """Absorbed-at-zero density for the pure ``-1`` drift, by the image construction."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(y <= 0):
        raise InvalidParameterError("need x >= 0 and y > 0")
    pre = 1.0 / math.sqrt(2.0 * math.pi * epsilon * T)
    direct = np.exp(-((x - y + T) ** 2) / (2.0 * epsilon * T))
    image = np.exp(-2.0 * x / epsilon - (x + y - T) ** 2 / (2.0 * epsilon * T))
    return pre * (direct - image)


def exit_prob_drifted_bm(lambda_prime: float, Lambda_prime: float, mu: float) -> float:
    """Probability that ``dZ = mu dt + sqrt(eps) dB`` from ``lambda' eps`` leaves ``[0, Lambda' eps]`` at the top."""
    if not 0 < lambda_prime < Lambda_prime:
        raise InvalidParameterError("need 0 < lambda' < Lambda'")
    if not mu > 0:
        raise InvalidParameterError("mu must be positive")
    return math.expm1(-2.0 * mu * lambda_prime) / math.expm1(-2.0 * mu * Lambda_prime)


def exit_prob_mc(
    lambda_prime: float,
    Lambda_prime: float,
    mu: float,
    n_paths: int = 100_000,
    dtau: float = 1e-2,
    seed: int = 0,
    max_steps: int = 1_000_000,
):
    """Monte Carlo for :func:`exit_prob_drifted_bm`.

    In the time unit ``t/eps`` and length unit ``eps`` the process is a unit
    Brownian motion with drift ``mu``; ``eps`` drops out.  Steps are exact in
    law and both walls get the bridge crossing correction.
    """
    if not 0 < lambda_prime < Lambda_prime or not mu > 0:
        raise InvalidParameterError("need 0 < lambda' < Lambda' and mu > 0")
    top = 0
    done = 0
    sizes = [CHUNK] * (n_paths // CHUNK) + ([n_paths % CHUNK] if n_paths % CHUNK else [])
    sd = math.sqrt(dtau)
    L = float(Lambda_prime)
    for k, n in enumerate(sizes):
        rng = _rng(seed, k)
        Z = np.full(n, float(lambda_prime))
        for _ in range(max_steps):
            if Z.size == 0:
                break
            Zn = Z + mu * dtau + sd * rng.standard_normal(Z.size)
            u = rng.random((2, Z.size))
            a, b = np.maximum(Z, 0.0), np.maximum(Zn, 0.0)
            low = (Zn <= 0) | (u[0] < np.exp(-2.0 * a * b / dtau))
            a, b = np.maximum(L - Z, 0.0), np.maximum(L - Zn, 0.0)
            high = ~low & ((Zn >= L) | (u[1] < np.exp(-2.0 * a * b / dtau)))
            top += int(np.count_nonzero(high))
            keep = ~(low | high)
            done += Z.size - int(np.count_nonzero(keep))
            Z = Zn[keep]
        else:
            raise InvalidParameterError("paths did not exit; raise max_steps or dtau")
    p = top / done
    return p, math.sqrt(p * (1.0 - p) / done)

