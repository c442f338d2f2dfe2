"""The ten end-to-end acceptance checks, shared by the test suite and ``coarsening accept``.

Each check returns a :class:`CheckResult`; ``passed`` includes the runtime
budget.  Seeds are fixed so Monte Carlo checks are reproducible.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import analysis, bridge, cp_exact, diffusive, inviscid
from .profiles import make_gaussian, make_self_similar


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    runtime: float
    budget: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d} {self.name} ({self.runtime:.1f}s / {self.budget:.0f}s)"


def _timed(number, name, budget, fn) -> CheckResult:
    t0 = time.perf_counter()
    ok, details = fn()
    dt = time.perf_counter() - t0
    details["within_budget"] = dt < budget
    return CheckResult(number, name, bool(ok) and dt < budget, dt, budget, details)


def self_similar_exactness() -> CheckResult:
    def run():
        errs = {}
        for b in (0.5, 1.0, 2.0):
            tr = cp_exact.evolve_cp(make_self_similar(b), 10.0, 1e-3)
            errs[b] = float(np.max(np.abs(tr["lambda"] - (1.0 + b * tr.t))))
        return max(errs.values()) <= 1e-7, {"max_error": errs}

    return _timed(1, "self-similar exactness", 1.0, run)


def smereka_golden() -> CheckResult:
    dx = 1e-3
    # the explicit Euler defect is about 0.6 dt/dx relative; the default CFL
    # factor gives ~1.5%, so this run halves it
    cfl = 0.2

    def run():
        l1 = []

        def hook(st):
            if st.t > 0:
                ex = diffusive.smereka_explicit(dx, st.t).c(st.c.size)
                l1.append(float(np.sum(np.abs(st.c - ex)) / np.sum(ex)))

        st = diffusive.init_delta(dx)
        tr = diffusive.run_to(st, 5.0, list(np.arange(0.25, 5.0, 0.25)), hook=hook, cfl=cfl)
        exact = dx + tr.t
        lam_err = float(np.max(np.abs(tr["lambda"] - exact) / exact))
        ok = lam_err <= 0.01 and max(l1) <= 0.02
        return ok, {"lambda_rel_error": lam_err, "snapshot_l1": max(l1), "cfl": cfl}

    return _timed(2, "Smereka golden test", 60.0, run)


def inviscid_fixed_point() -> CheckResult:
    def run():
        p = make_self_similar(1.0)
        tr = inviscid.evolve_inviscid(p, 0.1, 100.0, 1e-2, record_every=10)
        lam_err = float(np.max(np.abs(tr["lambda"] - (1.0 + tr.t))))
        gaps = {}
        for name, prof in (("exponential", p), ("gaussian", make_gaussian(1.0))):
            bs = inviscid.fixed_point_bootstrap(prof, 0.1)
            T = float(bs.t[-1])
            ev = inviscid.evolve_inviscid(prof, 0.1, T, T / (bs.t.size - 1))
            gaps[name] = float(np.max(np.abs(ev["lambda"] - bs.lam)))
        ok = lam_err <= 1e-6 and max(gaps.values()) <= 1e-8
        return ok, {"lambda_error": lam_err, "bootstrap_gap": gaps}

    return _timed(3, "inviscid fixed point", 10.0, run)


def selection_and_log_rate() -> CheckResult:
    def run():
        tr = inviscid.evolve_inviscid(make_self_similar(0.5), 0.1, 1e4, 1e-3, log_time=True)
        ratio = tr.last("lambda") / 1e4
        late = tr.t >= 1.0
        rate = tr["dlambda_dt"][late]
        increasing = bool(np.all(np.diff(rate) >= -1e-12)) and rate[-1] < 1.0
        fit = analysis.rate_fit_log(tr, (1e2, 1e4))
        ok = 0.9 <= ratio <= 1.1 and increasing and fit.band_ok
        return ok, {"lambda_over_t": ratio, "rate_increasing": increasing, "C": fit.C, "band": fit.band}

    return _timed(4, "selection principle and log rate", 60.0, run)


def gaussian_cp_rate() -> CheckResult:
    def run():
        tr = cp_exact.evolve_cp(make_gaussian(1.0), 1e6, 1e-3, log_time=True)
        fit = analysis.rate_fit_log(tr, (1e2, 1e6))
        deltas = {L: analysis.gaussian_L_recursion(L).delta for L in (1, 2, 5, 10, 50)}
        d0, d1 = min(deltas.values()), max(deltas.values())
        ok = fit.band_ok and 0 < d0 <= d1
        return ok, {"C": fit.C, "band": fit.band, "deltas": deltas, "delta0": d0, "delta1": d1}

    return _timed(5, "Gaussian CP rate", 60.0, run)


def driftless_first_passage() -> CheckResult:
    def run():
        spec = bridge.BridgeSpec.constant_A(0.0, 1.0, 0.5, 1.0, 1.0, n_steps=1000, n_paths=100_000, seed=11)
        p, se = bridge.survival_probability_mc(spec)
        exact = -math.expm1(-4.0)
        q, qse = bridge.exit_prob_mc(1.0, 3.0, 0.5, n_paths=100_000, seed=12)
        qex = bridge.exit_prob_drifted_bm(1.0, 3.0, 0.5)
        ok = abs(p - exact) <= 3 * se and abs(q - qex) <= 3 * qse
        return ok, {"p_hat": p, "se": se, "exact": exact, "exit_hat": q, "exit_se": qse, "exit_exact": qex}

    return _timed(6, "driftless first passage", 30.0, run)


def prop51_limit() -> CheckResult:
    def run():
        rhs = bridge.prop51_rhs(bridge.BridgeSpec.constant_A(1.0, 1.0, 0.1, 1.0, 1.0, n_paths=1).path, 1.0, 1.0)
        gaps = {}
        for k, eps in enumerate((0.2, 0.1, 0.05, 0.02)):
            spec = bridge.BridgeSpec.constant_A(1.0, 1.0, eps, 1.0, eps, n_steps=1000, n_paths=200_000, seed=20 + k)
            p, _ = bridge.survival_probability_mc(spec)
            gaps[eps] = abs(p - rhs)
        g = list(gaps.values())
        ok = all(b < a for a, b in zip(g, g[1:])) and g[-1] <= 0.02
        return ok, {"rhs": rhs, "gaps": gaps}

    return _timed(7, "small-noise survival limit", 300.0, run)


def eps_convergence() -> CheckResult:
    def run():
        rows = analysis.eps_convergence_study(make_self_similar(1.0), [0.2, 0.1, 0.05], 1.0, dx=1e-3)
        lam = [r["lambda_gap"] for r in rows]
        rate = [r["rate_gap"] for r in rows]
        dec = lambda s: all(b < a for a, b in zip(s, s[1:]))  # noqa: E731
        return dec(lam) and dec(rate), {"lambda_gap": lam, "rate_gap": rate}

    return _timed(8, "epsilon convergence", 600.0, run)


def diffusive_properties(eps_list=(0.2, 0.1, 0.05), dx_factor=0.25) -> CheckResult:
    def run():
        out = {}
        ok = True
        for name, prof in (("exponential", make_self_similar(1.0)), ("gaussian", make_gaussian(1.0))):
            for eps in eps_list:
                sup = []

                def hook(st):
                    c = np.concatenate([[0.0], st.c])
                    sup.append(analysis.beta_profile_from_grid(c, st.dx).sup_beta)

                st = diffusive.init_grid(prof, eps, dx_factor * eps)
                times = list(np.arange(0.5, 10.01, 0.5)) + [20.0, 50.0]
                tr = diffusive.run_to(st, 100.0, times, hook=hook)
                win = (tr.t >= 1.0) & (tr.t <= 10.0)
                rec = {
                    "min_dlambda": tr.meta["min_lambda_increment"],
                    "lambda_100": tr.last("lambda"),
                    "max_rate_1_10": float(np.max(tr["dlambda_dt"][win])),
                    "sup_beta": max(sup),
                }
                out[f"{name}/{eps}"] = rec
                ok &= (
                    rec["min_dlambda"] >= -1e-12
                    and rec["lambda_100"] > 50
                    and rec["max_rate_1_10"] <= 3.0
                    and rec["sup_beta"] <= 1.05
                )
        return ok, out

    return _timed(9, "diffusive monotonicity, divergence, rate bound, log-concavity", 600.0, run)


def bridge_moments() -> CheckResult:
    def run():
        out = {}
        ok = True
        mon = (0.1, 0.3, 0.5, 0.7, 0.9)
        eps = 0.5
        for a in (0.0, 1.0):
            spec = bridge.BridgeSpec.constant_A(a, 1.0, eps, 1.0, 1.0, n_steps=1000, n_paths=100_000, seed=30, monitor=mon)
            mean = bridge.bridge_mean(spec.path, 1.0, 1.0, np.asarray(mon))
            var = eps * np.array([bridge.bridge_cov(spec.path, s, s) for s in mon])
            batches = {}
            for k, m in enumerate(bridge.METHODS):
                b = bridge.sample_bridge(bridge.BridgeSpec(**{**spec.__dict__, "seed": 30 + k}), m)
                batches[m] = b
                zm = np.abs(b.mean - mean) / b.mean_se
                zv = np.abs(b.var - var) / b.var_se
                out[f"A={a}/{m}"] = {"max_z_mean": float(zm.max()), "max_z_var": float(zv.max())}
                ok &= bool(np.all(zm <= 3) and np.all(zv <= 3))
            b1, b2 = batches.values()
            zm = np.abs(b1.mean - b2.mean) / np.hypot(b1.mean_se, b2.mean_se)
            zv = np.abs(b1.var - b2.var) / np.hypot(b1.var_se, b2.var_se)
            pooled = (b1.p_hat + b2.p_hat) / 2
            zp = abs(b1.p_hat - b2.p_hat) / math.sqrt(max(pooled * (1 - pooled), 1e-300) * (1 / b1.n_paths + 1 / b2.n_paths))
            out[f"A={a}/cross"] = {"max_z_mean": float(zm.max()), "max_z_var": float(zv.max()), "z_survival": zp}
            ok &= bool(np.all(zm <= 3) and np.all(zv <= 3) and zp <= 2.576)
        return ok, out

    return _timed(10, "bridge moment suite", 60.0, run)


CHECKS = {
    1: self_similar_exactness,
    2: smereka_golden,
    3: inviscid_fixed_point,
    4: selection_and_log_rate,
    5: gaussian_cp_rate,
    6: driftless_first_passage,
    7: prop51_limit,
    8: eps_convergence,
    9: diffusive_properties,
    10: bridge_moments,
}


def run_all(only=None, echo=print) -> list[CheckResult]:
    results = []
    for k, fn in CHECKS.items():
        if only and k not in only:
            continue
        r = fn()
        if echo:
            echo(r.line())
        results.append(r)
    return results
