"""Command-line front end: run / validate / sweep driven by a JSON config.

Exit codes: 0 success, 1 a comparison ran but missed its threshold,
2 config schema violation, 3 numerical abort inside the pipeline.
Reports are deterministic for a fixed config and seed (no timestamps).
Set RESPONSE_LOG=DEBUG|INFO|WARNING for progress logging on stderr.
"""

import argparse
import json
import logging
import os
import sys as _sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import systems as systems_mod
from .systems import make_builtin, zero_perturbation, validate_system
from .orbit import generate_orbit, OrbitDivergedError
from .frames import compute_frames, RankCollapseError, TangencyError
from .response import (RunConfig, linear_response, equivalence_check)
from . import oracles

log = logging.getLogger("orbitresponse")

CONFIG_VERSION = 1

_RUN_KEYS = {
    "version", "command", "system", "n_steps", "spinup", "seed", "w_max",
    "w_select", "t_trunc", "n_replicas", "centered", "zero_perturbation",
    "warmup", "warmdown",
}
_SYSTEM_KEYS = {"name", "params"}
_VALIDATE_KEYS = {"version", "command", "system", "checks", "n_steps", "spinup",
                  "seed", "dgamma", "n_orbits", "w", "n_bins", "n_terms",
                  "horizon", "n_probe", "n_push", "t_sum", "zero_perturbation"}
_SWEEP_KEYS = {"version", "command", "system", "axis", "values", "base"}


class ConfigError(ValueError):
    pass


def _check_keys(cfg, allowed, where):
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _require(cfg, key, where):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r} in {where}")
    return cfg[key]


def _load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    version = cfg.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")
    return cfg


def _build_system(cfg):
    scfg = _require(cfg, "system", "config")
    if not isinstance(scfg, dict):
        raise ConfigError("'system' must be an object with 'name'")
    _check_keys(scfg, _SYSTEM_KEYS, "'system'")
    name = _require(scfg, "name", "'system'")
    try:
        sys_def = make_builtin(name, scfg.get("params") or {})
    except systems_mod.UnknownSystemError as exc:
        raise ConfigError(str(exc)) from exc
    except systems_mod.ParameterRangeError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.get("zero_perturbation"):
        sys_def = zero_perturbation(sys_def)
    return sys_def


def _run_config(cfg):
    fields = {k: cfg[k] for k in
              ("n_steps", "spinup", "seed", "w_max", "w_select", "t_trunc",
               "n_replicas", "centered", "warmup", "warmdown") if k in cfg}
    return RunConfig(**fields)


def cmd_run(cfg, seed_override=None):
    _check_keys(cfg, _RUN_KEYS, "run config")
    sys_def = _build_system(cfg)
    rc = _run_config(cfg)
    if seed_override is not None:
        rc.seed = seed_override
    log.info("run: system=%s n_steps=%d replicas=%d", sys_def.name, rc.n_steps,
             rc.n_replicas)
    report = linear_response(sys_def, rc)
    return report.to_dict(), 0


def _triangle_rows(sys_def, cfg):
    n_steps = int(cfg.get("n_steps", 100_000))
    seed = int(cfg.get("seed", 0))
    dg = float(cfg.get("dgamma", 1e-3))
    rc = RunConfig(n_steps=n_steps, seed=seed,
                   w_select=int(cfg.get("w", 16)),
                   w_max=max(32, int(cfg.get("w", 16))))
    fast = linear_response(sys_def, rc)
    fd, fd_se, _ = oracles.fd_response(sys_def, dgamma=dg, n_steps=n_steps,
                                       n_orbits=int(cfg.get("n_orbits", 8)),
                                       seed=seed + 1)
    rows = [_row("fast_vs_fd", fast.total, fd,
                 3 * float(np.hypot(fast.total_stderr, fd_se)))]
    if sys_def.dim == 1:
        nb = int(cfg.get("n_bins", 2048))
        ul, _ = oracles.ulam_response(sys_def, nb, int(cfg.get("n_terms", 30)), dg)
        ul2, _ = oracles.ulam_response(sys_def, nb // 2, int(cfg.get("n_terms", 30)), dg)
        grid_err = abs(ul - ul2)
        rows.append(_row("fast_vs_ulam", fast.total, ul,
                         max(grid_err, 3 * fast.total_stderr)))
        rows.append(_row("fd_vs_ulam", fd, ul, max(grid_err, 3 * fd_se)))
    return rows


def _row(check, a, b, tol):
    return {"check": check, "value_a": float(a), "value_b": float(b),
            "defect": abs(float(a) - float(b)), "tol": float(tol),
            "pass": bool(abs(float(a) - float(b)) <= tol)}


def cmd_validate(cfg, seed_override=None):
    _check_keys(cfg, _VALIDATE_KEYS, "validate config")
    sys_def = _build_system(cfg)
    checks = cfg.get("checks", ["derivatives", "triangle", "equivalence"])
    seed = int(cfg.get("seed", 0)) if seed_override is None else seed_override
    rows = []
    for check in checks:
        log.info("validate: %s", check)
        if check == "derivatives":
            rep = validate_system(sys_def, n_probe=100, seed=seed)
            for key in ("duality", "hess_symmetry"):
                rows.append(_row(f"derivatives_{key}", rep[key], 0.0, 1e-10))
            rows.append(_row("derivatives_jvp_fd", rep["jvp_fd_h"], 0.0, 1e-3))
            rows.append(_row("derivatives_dpert_fd", rep["dpert_fd"], 0.0, 1e-6))
            rows.append(_row("derivatives_pert_map_fd", rep["pert_map_fd"],
                             0.0, 1e-6))
        elif check == "triangle":
            rows.extend(_triangle_rows(sys_def, cfg))
        elif check == "equivalence":
            rep = equivalence_check(sys_def, w=int(cfg.get("w", 8)),
                                    seed=seed,
                                    n_steps=int(cfg.get("n_steps", 100_000)))
            rows.append(_row("uc_tangent_vs_adjoint", rep.uc_tangent,
                             rep.uc_adjoint, rep.tol))
        elif check == "decay":
            orb = generate_orbit(sys_def, seed=seed, spinup=1000,
                                 n_steps=int(cfg.get("n_steps", 20_000)))
            frames = compute_frames(sys_def, orb, seed=seed)
            slope, _ = oracles.decay_check(sys_def, orb, frames,
                                           n_probe=int(cfg.get("n_probe", 8)),
                                           n_push=int(cfg.get("n_push", 12)))
            rows.append({"check": "decay_slope", "value_a": float(slope),
                         "value_b": None, "defect": None, "tol": None,
                         "pass": bool(slope < 0)})
        elif check == "ensemble":
            orb = generate_orbit(sys_def, seed=seed, spinup=1000,
                                 n_steps=int(cfg.get("n_steps", 20_000)))
            ens = oracles.ensemble_response(sys_def, orb,
                                            int(cfg.get("horizon", 20)))
            rows.append({"check": "ensemble_terms", "value_a": None,
                         "value_b": None, "defect": None, "tol": None,
                         "pass": True,
                         "terms": [float(t) for t in ens["terms"]]})
        else:
            raise ConfigError(f"unknown check {check!r}")
    ok = all(r["pass"] for r in rows)
    return {"system": sys_def.name, "rows": rows, "all_pass": ok}, (0 if ok else 1)


def _sweep_cell(args):
    axis, value, base = args
    base = dict(base)
    if axis == "N":
        base["n_steps"] = int(value)
        out, _ = cmd_run(base)
        return {"axis": axis, "value": value, "total": out["total"],
                "stderr": out["total_stderr"], "sc": out["sc"], "uc": out["uc"]}
    if axis == "dgamma":
        sys_def = _build_system(base)
        val, se, _ = oracles.fd_response(
            sys_def, dgamma=float(value),
            n_steps=int(base.get("n_steps", 100_000)),
            n_orbits=int(base.get("n_orbits", 8)) if "n_orbits" in base else 8,
            seed=int(base.get("seed", 0)))
        return {"axis": axis, "value": value, "total": val, "stderr": se}
    raise ConfigError(f"axis {axis!r} not dispatched per-cell")


def cmd_sweep(cfg, threads=1, seed_override=None):
    _check_keys(cfg, _SWEEP_KEYS, "sweep config")
    axis = _require(cfg, "axis", "sweep config")
    values = _require(cfg, "values", "sweep config")
    base = dict(cfg.get("base", {}))
    base["system"] = _require(cfg, "system", "sweep config")
    if seed_override is not None:
        base["seed"] = seed_override
    rows = []
    if axis in ("N", "dgamma"):
        base.setdefault("version", CONFIG_VERSION)
        seeds = [int(base.get("seed", 0)) + i for i in range(len(values))]
        cells = []
        for v, s in zip(values, seeds):
            b = dict(base)
            b["seed"] = s
            cells.append((axis, v, b))
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(_sweep_cell, cells))
        else:
            rows = [_sweep_cell(c) for c in cells]
    elif axis == "W":
        b = dict(base)
        b.setdefault("version", CONFIG_VERSION)
        b["w_max"] = int(max(values))
        out, _ = cmd_run(b)
        rows = [{"axis": "W", "value": r["w"], "total": r["uc"],
                 "stderr": r["stderr"]} for r in out["w_sweep"]
                if r["w"] in set(int(v) for v in values)]
    elif axis == "bins":
        sys_def = _build_system(base)
        for v in values:
            val, detail = oracles.ulam_response(
                sys_def, int(v), int(base.get("n_terms", 30)),
                float(base.get("dgamma", 1e-3)))
            rows.append({"axis": "bins", "value": int(v), "total": val,
                         "stderr": 0.0})
    else:
        raise ConfigError(f"unknown sweep axis {axis!r} "
                          "(expected one of N, W, bins, dgamma)")
    return {"axis": axis, "rows": rows}, 0


def _emit(payload, out_path, fmt):
    if fmt == "json":
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        rows = payload.get("rows") or payload.get("w_sweep") or [payload]
        cols = sorted({k for r in rows for k in r
                       if not isinstance(r[k], (list, dict))})
        lines = [",".join(cols)]
        for r in rows:
            lines.append(",".join(repr(r.get(c, "")) if isinstance(r.get(c), float)
                                  else str(r.get(c, "")) for c in cols))
        text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        _sys.stdout.write(text)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="orbitresponse",
        description="Linear response of chaotic maps sampled along one orbit.")
    parser.add_argument("command", choices=["run", "validate", "sweep"])
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", default=None, help="output path (default stdout)")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes for sweep cells")
    parser.add_argument("--format", choices=["json", "csv"], default="json")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=getattr(logging, os.environ.get("RESPONSE_LOG", "WARNING").upper(),
                      logging.WARNING),
        stream=_sys.stderr, format="%(name)s %(levelname)s %(message)s")

    try:
        cfg = _load_config(args.config)
        if "command" in cfg and cfg["command"] != args.command:
            raise ConfigError(
                f"config is for command {cfg['command']!r}, not {args.command!r}")
        if args.command == "run":
            payload, code = cmd_run(cfg, seed_override=args.seed)
        elif args.command == "validate":
            payload, code = cmd_validate(cfg, seed_override=args.seed)
        else:
            payload, code = cmd_sweep(cfg, threads=args.threads,
                                      seed_override=args.seed)
    except ConfigError as exc:
        _sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (OrbitDivergedError, RankCollapseError, TangencyError) as exc:
        _sys.stderr.write(f"numerical abort: {type(exc).__name__}: {exc}\n")
        return 3
    _emit(payload, args.out, args.format)
    return code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
