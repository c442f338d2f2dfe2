"""Command line: ``coarsening run | sweep | accept``.

A run is described by a YAML file with a ``model`` key, a ``profile``
section (not needed for ``bridge``) and a section named after the model::

    model: diffusive
    profile: {kind: gaussian, L: 1.0}
    diffusive: {epsilon: 0.1, dx: 0.001, t_end: 1.0, output_times: [0.5]}
    seed: 1

Unknown keys are rejected before anything is computed.  Exit codes: 0 ok,
2 config error, 3 invalid parameters or data, 4 numeric or constraint
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import math
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from . import acceptance, analysis, bridge, cp_exact, diffusive, inviscid
from .coeffs import CoeffPath
from .errors import CoarseningError, ConfigError, InvalidDataError, InvalidParameterError
from .profiles import make_gaussian, make_point_mass, make_self_similar, make_tabulated
from .trajectory import fmt, write_csv

log = logging.getLogger("coarsening")

MODELS = ("cp", "inviscid", "diffusive", "viscous", "bridge", "study")

# section key -> (type, default); a default of ... means required
_NUM = (int, float)
SECTIONS = {
    "cp": {"t_end": (_NUM, ...), "dt": (_NUM, 1e-3), "log_time": (bool, False), "record_every": (int, 1)},
    "inviscid": {
        "epsilon": (_NUM, ...),
        "t_end": (_NUM, ...),
        "dt": (_NUM, 1e-3),
        "log_time": (bool, False),
        "record_every": (int, 1),
        "delta0": (_NUM, 0.1),
    },
    "diffusive": {
        "epsilon": (_NUM, ...),
        "dx": (_NUM, ...),
        "t_end": (_NUM, ...),
        "x_max": (_NUM, None),
        "output_times": (list, []),
        "predictor_corrector": (bool, False),
        "cfl": (_NUM, diffusive.CFL),
        "initial": (str, "profile"),
    },
    "viscous": {
        "epsilon": (_NUM, ...),
        "nu": (_NUM, 1.0),
        "dx": (_NUM, ...),
        "x_max": (_NUM, ...),
        "t_end": (_NUM, ...),
        "output_times": (list, []),
        "tail": (str, "initial"),
        "cfl": (_NUM, diffusive.CFL),
    },
    "bridge": {
        "epsilon": (_NUM, ...),
        "T": (_NUM, ...),
        "y": (_NUM, ...),
        "x": (_NUM, None),
        "lambda": (_NUM, None),
        "A": (_NUM, None),
        "lambda_samples": (dict, None),
        "n_paths": (int, 100_000),
        "n_steps": (int, 1000),
        "method": (str, "kernel_factor"),
        "monitor": (list, []),
        "crossing_correction": (bool, True),
    },
    "study": {"eps_list": (list, ...), "T": (_NUM, 1.0), "dx": (_NUM, 1e-3), "n_times": (int, 21)},
}
LIST_VALUED = {"output_times", "monitor", "eps_list"}
PROFILE_KEYS = {
    "self_similar": {"beta": (_NUM, ...)},
    "exponential": {},
    "gaussian": {"L": (_NUM, ...)},
    "point_mass": {"c": (_NUM, 1.0), "n_nodes": (int, 1024)},
    "tabulated": {
        "x": (list, None),
        "v": (list, None),
        "csv": (str, None),
        "x_inf": (_NUM, math.inf),
        "method": (str, "pchip"),
    },
}
TOP_KEYS = {"model", "profile", "seed", "out", *MODELS}


# ---------------------------------------------------------------------------
# config


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    return cfg


def _type_ok(val, typ, default) -> bool:
    if val is None:
        return default is None
    if typ == _NUM:
        return isinstance(val, _NUM) and not isinstance(val, bool)
    if typ is list:
        return isinstance(val, list) and all(isinstance(v, _NUM) and not isinstance(v, bool) for v in val)
    return isinstance(val, typ)


def _check_section(name, given, schema, *, allow_lists: bool):
    if not isinstance(given, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    unknown = sorted(set(given) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {unknown}")
    out = {}
    for key, (typ, default) in schema.items():
        if key not in given:
            if default is ...:
                raise ConfigError(f"missing required key {name}.{key}")
            out[key] = default
            continue
        val = given[key]
        # in a sweep a list (of lists, for list-valued keys) is an axis
        axis = allow_lists and isinstance(val, list) and (typ is not list or (val and isinstance(val[0], list)))
        for item in val if axis else [val]:
            if not _type_ok(item, typ, default):
                raise ConfigError(f"{name}.{key} has the wrong type: {item!r}")
        out[key] = val
    return out


def validate_config(cfg: dict, *, allow_lists: bool = False) -> dict:
    """Structural validation; returns a normalised copy with defaults filled in."""
    unknown = sorted(set(cfg) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    model = cfg.get("model")
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {model!r}")
    extra = sorted(m for m in MODELS if m in cfg and m != model)
    if extra:
        raise ConfigError(f"sections for other models present: {extra}")
    out = {"model": model, "seed": cfg.get("seed", 0), "out": cfg.get("out")}
    if not isinstance(out["seed"], int) or isinstance(out["seed"], bool) or out["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    out[model] = _check_section(model, cfg.get(model, {}), SECTIONS[model], allow_lists=allow_lists)
    if model != "bridge":
        prof = cfg.get("profile")
        if not isinstance(prof, dict) or prof.get("kind") not in PROFILE_KEYS:
            raise ConfigError(f"profile.kind must be one of {sorted(PROFILE_KEYS)}")
        body = {k: v for k, v in prof.items() if k != "kind"}
        out["profile"] = {"kind": prof["kind"], **_check_section("profile", body, PROFILE_KEYS[prof["kind"]], allow_lists=allow_lists)}
    elif "profile" in cfg:
        raise ConfigError("bridge runs take no profile")
    return out


def build_profile(spec: dict):
    kind = spec["kind"]
    if kind == "self_similar":
        return make_self_similar(spec["beta"])
    if kind == "exponential":
        return make_self_similar(1.0)
    if kind == "gaussian":
        return make_gaussian(spec["L"])
    if kind == "point_mass":
        return make_point_mass(spec["c"], spec["n_nodes"])
    if spec["csv"] is not None:
        if spec["x"] is not None or spec["v"] is not None:
            raise InvalidParameterError("give either profile.csv or profile.x and profile.v")
        try:
            data = np.genfromtxt(spec["csv"], delimiter=",", comments="#")
        except OSError as exc:
            raise InvalidDataError(f"cannot read tabulated profile: {exc}") from exc
        data = np.atleast_2d(data)
        if data.shape[1] != 2:
            raise InvalidDataError("tabulated profile CSV needs two columns (x, v)")
        data = data[~np.isnan(data).all(axis=1)]  # header row
        x, v = data[:, 0], data[:, 1]
    elif spec["x"] is None or spec["v"] is None:
        raise InvalidParameterError("tabulated profiles need profile.x and profile.v, or profile.csv")
    else:
        x, v = spec["x"], spec["v"]
    return make_tabulated(x, v, spec["x_inf"], spec["method"])


# ---------------------------------------------------------------------------
# runs


def _bridge_spec(p: dict, seed: int) -> bridge.BridgeSpec:
    if (p["x"] is None) == (p["lambda"] is None):
        raise InvalidParameterError("give exactly one of bridge.x or bridge.lambda")
    x = p["x"] if p["x"] is not None else p["lambda"] * p["epsilon"]
    if (p["A"] is None) == (p["lambda_samples"] is None):
        raise InvalidParameterError("give exactly one of bridge.A or bridge.lambda_samples")
    common = dict(n_paths=p["n_paths"], seed=seed, monitor=tuple(p["monitor"]))
    if p["A"] is not None:
        path = CoeffPath.constant(p["A"], p["T"], p["n_steps"])
    else:
        ls = p["lambda_samples"]
        if set(ls) != {"s", "lambda"}:
            raise ConfigError("lambda_samples needs exactly the keys s and lambda")
        path = CoeffPath.from_lambda_samples(ls["s"], ls["lambda"], p["T"], p["n_steps"])
    return bridge.BridgeSpec(path, p["epsilon"], p["y"], x, **common)


def execute(cfg: dict, out: Path, threads: int = 1) -> tuple[list[Path], dict]:
    """Run one validated config; returns written files and headline numbers."""
    model = cfg["model"]
    p = cfg[model]
    files = []
    head = {}
    if model == "cp":
        tr = cp_exact.evolve_cp(build_profile(cfg["profile"]), p["t_end"], p["dt"], log_time=p["log_time"], record_every=p["record_every"])
        files.append(tr.to_csv(out / "trajectory.csv"))
        head = {"lambda_end": tr.last("lambda"), "rate_end": tr.last("dlambda_dt")}
    elif model == "inviscid":
        tr = inviscid.evolve_inviscid(
            build_profile(cfg["profile"]), p["epsilon"], p["t_end"], p["dt"],
            log_time=p["log_time"], record_every=p["record_every"], delta0=p["delta0"],
        )
        files.append(tr.to_csv(out / "trajectory.csv"))
        head = {"lambda_end": tr.last("lambda"), "rate_end": tr.last("dlambda_dt")}
    elif model == "diffusive":
        if p["initial"] == "delta":
            st = diffusive.init_delta(p["dx"], p["epsilon"])
        elif p["initial"] == "profile":
            st = diffusive.init_grid(build_profile(cfg["profile"]), p["epsilon"], p["dx"], p["x_max"])
        else:
            raise InvalidParameterError("diffusive.initial must be 'profile' or 'delta'")
        tr = diffusive.run_to(st, p["t_end"], p["output_times"], predictor_corrector=p["predictor_corrector"], cfl=p["cfl"])
        fin = tr.meta["final_state"]
        files.append(tr.to_csv(out / "trajectory.csv"))
        files.append(write_csv(out / "snapshot.csv", ["x", "c"], zip(fin.x, fin.c)))
        head = {"lambda_end": tr.last("lambda"), "rate_end": tr.last("dlambda_dt"), "mass_x_end": tr.last("mass_x")}
    elif model == "viscous":
        st = diffusive.init_viscous(build_profile(cfg["profile"]), p["epsilon"], p["nu"], p["dx"], p["x_max"], p["tail"])
        tr = diffusive.run_viscous(st, p["t_end"], p["output_times"], cfl=p["cfl"])
        fin = tr.meta["final_state"]
        files.append(tr.to_csv(out / "trajectory.csv"))
        files.append(write_csv(out / "snapshot.csv", ["x", "v"], zip(fin.x, fin.v)))
        head = {"lambda_end": tr.last("lambda"), "min_gamma_end": tr.last("min_gamma")}
    elif model == "bridge":
        spec = _bridge_spec(p, cfg["seed"])
        batch = bridge.sample_bridge(spec, p["method"], crossing_correction=p["crossing_correction"], threads=threads)
        lam = spec.x / spec.epsilon
        rhs = bridge.prop51_rhs(spec.path, lam, spec.y)
        rows = [(spec.epsilon, lam, spec.y, spec.T, batch.p_hat, batch.se, rhs)]
        files.append(write_csv(out / "survival.csv", ["epsilon", "lambda", "y", "T", "p_hat", "se", "rhs_limit"], rows))
        if len(batch.times):
            mean = bridge.bridge_mean(spec.path, spec.x, spec.y, batch.times)
            var = spec.epsilon * np.array([bridge.bridge_cov(spec.path, s, s) for s in batch.times])
            files.append(
                write_csv(
                    out / "moments.csv",
                    ["s", "mean", "mean_se", "mean_exact", "var", "var_se", "var_exact"],
                    zip(batch.times, batch.mean, batch.mean_se, mean, batch.var, batch.var_se, var),
                )
            )
        head = {"p_hat": batch.p_hat, "se": batch.se, "rhs_limit": rhs, "warnings": batch.meta["warnings"]}
    elif model == "study":
        rows = analysis.eps_convergence_study(build_profile(cfg["profile"]), p["eps_list"], p["T"], dx=p["dx"], n_times=p["n_times"])
        names = list(rows[0])
        files.append(write_csv(out / "study.csv", names, ([r[k] for k in names] for r in rows)))
        head = {"rows": len(rows)}
    return files, head


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "numba", "pyyaml"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_manifest(out: Path, *, command, config, seed, files, status, wall, error=None, extra=None) -> Path:
    man = {
        "command": command,
        "status": status,
        "error_class": type(error).__name__ if error else None,
        "error": str(error) if error else None,
        "config": config,
        "seed": seed,
        "versions": _versions(),
        "wall_time_s": wall,
        "files": [{"path": f.name, "sha256": _sha256(f)} for f in files],
    }
    if extra:
        man.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(man, indent=2, default=str) + "\n")
    return path


# ---------------------------------------------------------------------------
# subcommands


def _prepare(args, *, allow_lists: bool):
    cfg = validate_config(load_config(args.config), allow_lists=allow_lists)
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = Path(args.out or cfg.get("out") or "out")
    return cfg, out


def cmd_run(args) -> int:
    cfg, out = _prepare(args, allow_lists=False)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files, error, head = [], None, {}
    try:
        files, head = execute(cfg, out, args.threads)
    except CoarseningError as exc:
        error = exc
    status = "ok" if error is None else "error"
    write_manifest(
        out, command="run", config=cfg, seed=cfg["seed"], files=files, status=status,
        wall=time.perf_counter() - t0, error=error, extra={"summary": head},
    )
    if error is not None:
        log.error("%s: %s", type(error).__name__, error)
        return error.exit_code
    return 0


def sweep_cells(cfg: dict) -> tuple[list[str], list[dict]]:
    """Cartesian product over every list given for a scalar key, in key order."""
    model = cfg["model"]
    axes = []
    for sect in (model, "profile"):
        for key, val in (cfg.get(sect) or {}).items():
            if not isinstance(val, list) or key in ("x", "v"):
                continue
            if key in LIST_VALUED and not (val and isinstance(val[0], list)):
                continue
            if not val:
                raise InvalidParameterError(f"sweep list {sect}.{key} is empty")
            axes.append((sect, key, val))
    if not axes:
        raise InvalidParameterError("a sweep needs at least one list-valued parameter")
    names = [f"{s}.{k}" for s, k, _ in axes]
    cells = []
    for combo in itertools.product(*(v for _, _, v in axes)):
        c = {k: (dict(v) if isinstance(v, dict) else v) for k, v in cfg.items()}
        for (sect, key, _), val in zip(axes, combo):
            c[sect][key] = val
        cells.append(c)
    return names, cells


def cmd_sweep(args) -> int:
    cfg, out = _prepare(args, allow_lists=True)
    names, cells = sweep_cells(cfg)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    def one(k_cell):
        k, cell = k_cell
        cell_out = out / f"cell_{k:04d}"
        cell_out.mkdir(exist_ok=True)
        try:
            files, head = execute(cell, cell_out, 1)
            return files, head, None
        except CoarseningError as exc:
            return [], {}, exc

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as ex:
            results = list(ex.map(one, enumerate(cells)))
    else:
        results = [one(kc) for kc in enumerate(cells)]

    head_keys = sorted({k for _, h, _ in results for k, v in h.items() if not isinstance(v, (list, dict))})
    header = ["cell", *names, "status", "error_class", *head_keys]
    rows = []
    all_files = []
    for k, ((files, head, err), cell) in enumerate(zip(results, cells)):
        vals = [cell[n.split(".")[0]][n.split(".")[1]] for n in names]
        row = [k, *[v if not isinstance(v, list) else json.dumps(v) for v in vals]]
        row += ["ok" if err is None else "error", type(err).__name__ if err else ""]
        row += [head.get(h, "") if not isinstance(head.get(h, ""), float) else fmt(head[h]) for h in head_keys]
        rows.append([str(r) if not isinstance(r, (int, float)) else fmt(r) for r in row])
        all_files += files
    agg = write_csv(out / "sweep.csv", header, rows)
    write_manifest(
        out, command="sweep", config=cfg, seed=cfg["seed"], files=[agg, *all_files], status="ok",
        wall=time.perf_counter() - t0, extra={"cells": len(cells), "failed": sum(e is not None for _, _, e in results)},
    )
    return 0


def cmd_accept(args) -> int:
    only = set(args.only) if args.only else None
    results = acceptance.run_all(only)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [(r.number, r.name, "pass" if r.passed else "fail", r.runtime, r.budget) for r in results]
        f = write_csv(out / "acceptance.csv", ["criterion", "name", "status", "runtime_s", "budget_s"], rows)
        (out / "acceptance.json").write_text(json.dumps([r.__dict__ for r in results], indent=2, default=str) + "\n")
        write_manifest(
            out, command="accept", config={"only": sorted(only) if only else None}, seed=None,
            files=[f, out / "acceptance.json"], status="ok", wall=sum(r.runtime for r in results),
        )
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} passed")
    return 0 if n_fail == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coarsening", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run one experiment"), ("sweep", "run the Cartesian product of list parameters")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--threads", type=int, default=1)
    sp = sub.add_parser("accept", help="run the acceptance checks and print a pass/fail table")
    sp.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    sp.add_argument("--out", type=Path)
    sp.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "accept": cmd_accept}
    try:
        return handlers[args.command](args)
    except CoarseningError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
