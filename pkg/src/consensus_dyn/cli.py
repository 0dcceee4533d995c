"""Experiment command line.

Subcommands: optimize | sample | meanfield | verify | render, each driven by
one JSON config file.  Every config field is validated before any computation
and unknown keys are rejected.  Numeric report files are deterministic for a
fixed config (byte-identical across reruns); wall-clock metadata lives only in
the sidecar manifest.

Exit codes: 0 success, 2 config error, 3 particle blow-up, 4 verification
failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import math
import os
import platform
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .diagnostics import (BumpTestFunction, fp_residual, make_bump,
                          residual_report_from_samples, wasserstein2)
from .dynamics import (DynamicsConfig, ExplicitInit, GaussianInit, InitialLaw,
                       UniformBoxInit, derive_seed, gaussian_stationary_reference,
                       integrate)
from .errors import BlowUpError, ConfigError
from .measures import Ensemble
from .objectives import BUILTIN_OBJECTIVES, Objective, builtin_objective
from .verify import FAMILIES, run_families

__all__ = ["EXIT_BLOWUP", "EXIT_CONFIG", "EXIT_OK", "EXIT_VERIFY",
           "ResultTable", "RunConfig", "main",
           "run_meanfield", "run_optimize", "run_sample", "run_verify"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_VERIFY = 4

WORKERS_ENV = "CONSENSUS_DYN_WORKERS"

_SCHEMA_PREFIX = "cdyn"
_SCHEMA_VERSION = "v1"


@dataclass(frozen=True)
class ResultTable:
    """A delimited report: fixed column order, schema-tagged rows."""

    schema: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]


@dataclass(frozen=True)
class RunConfig:
    """Validated payload of one CLI invocation."""

    subcommand: str
    seed: int
    raw: dict
    config_hash: str
    out_dir: Path
    workers: int
    objective: Objective | None = None
    objective_spec: dict | None = None
    dynamics: DynamicsConfig | None = None
    block: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# config parsing


def _check_keys(d: dict, path: str, required: tuple = (), optional: tuple = ()):
    if not isinstance(d, dict):
        raise ConfigError(f"{path} must be an object")
    unknown = sorted(set(d) - set(required) - set(optional))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {path}")
    missing = sorted(set(required) - set(d))
    if missing:
        raise ConfigError(f"missing required key(s) {missing} in {path}")


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{path} must be finite")
    return value


def _as_int(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path} must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path} must be >= {minimum}")
    return value


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path} must be true or false")
    return value


def _as_vector(value, path: str, dim: int) -> np.ndarray:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return np.full(dim, float(value))
    if not isinstance(value, list) or len(value) != dim:
        raise ConfigError(f"{path} must be a number or a list of {dim} numbers")
    return np.array([_as_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _as_matrix(value, path: str, dim: int) -> np.ndarray:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value) * np.eye(dim)
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path} must be a number, a length-{dim} list, or a {dim}x{dim} matrix")
    if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        if len(value) != dim:
            raise ConfigError(f"{path} diagonal must have length {dim}")
        return np.diag([float(v) for v in value])
    rows = []
    for i, row in enumerate(value):
        rows.append(_as_vector(row, f"{path}[{i}]", dim))
    if len(rows) != dim:
        raise ConfigError(f"{path} must be {dim}x{dim}")
    return np.array(rows)


def _build_objective(spec, path: str = "objective") -> tuple[Objective, dict]:
    _check_keys(spec, path, required=("id", "dim"),
                optional=("m", "a", "amplitude"))
    obj_id = spec["id"]
    if obj_id not in BUILTIN_OBJECTIVES:
        raise ConfigError(f"{path}.id must be one of {list(BUILTIN_OBJECTIVES)}")
    dim = _as_int(spec["dim"], f"{path}.dim", minimum=1)
    kwargs: dict[str, Any] = {}
    if obj_id == "rastrigin":
        if "m" in spec or "a" in spec:
            raise ConfigError(f"{path}: rastrigin takes no m or a")
        if "amplitude" in spec:
            kwargs["amplitude"] = _as_number(spec["amplitude"], f"{path}.amplitude")
    else:
        if "amplitude" in spec:
            raise ConfigError(f"{path}.amplitude applies to rastrigin only")
        if "a" in spec:
            kwargs["a"] = _as_matrix(spec["a"], f"{path}.a", dim)
        if obj_id == "quadratic-shifted":
            if "m" not in spec:
                raise ConfigError(f"{path}.m is required for quadratic-shifted")
            kwargs["m"] = _as_vector(spec["m"], f"{path}.m", dim)
        elif "m" in spec:
            raise ConfigError(f"{path}: id 'quadratic' is centered, m is not allowed")
    try:
        obj = builtin_objective(obj_id, dim, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    stored = {"id": obj_id, "dim": dim}
    for k, v in kwargs.items():
        stored[k] = v.tolist() if isinstance(v, np.ndarray) else v
    return obj, stored


def _build_init(spec, path: str, dim: int, default: InitialLaw) -> InitialLaw:
    if spec is None:
        return default
    _check_keys(spec, path, required=("kind",),
                optional=("mean", "cov", "lo", "hi", "positions"))
    kind = spec["kind"]
    try:
        if kind == "gaussian":
            _check_keys(spec, path, required=("kind",), optional=("mean", "cov"))
            mean = _as_vector(spec.get("mean", 0.0), f"{path}.mean", dim)
            cov = _as_matrix(spec.get("cov", 1.0), f"{path}.cov", dim)
            return GaussianInit(mean=mean, cov=cov)
        if kind == "uniform_box":
            _check_keys(spec, path, required=("kind", "lo", "hi"))
            return UniformBoxInit(lo=_as_vector(spec["lo"], f"{path}.lo", dim),
                                  hi=_as_vector(spec["hi"], f"{path}.hi", dim))
        if kind == "explicit":
            _check_keys(spec, path, required=("kind", "positions"))
            pos = spec["positions"]
            if not isinstance(pos, list) or not pos:
                raise ConfigError(f"{path}.positions must be a non-empty list of points")
            rows = [_as_vector(p, f"{path}.positions[{i}]", dim) for i, p in enumerate(pos)]
            return ExplicitInit(positions=np.array(rows))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.kind must be gaussian, uniform_box or explicit")


_DEFAULT_SPREAD_THRESHOLD = 1e-3
_DEFAULT_DISTANCE_THRESHOLD = 0.1


def _build_dynamics(spec, path: str, subcommand: str, seed: int, dim: int,
                    needs_j: bool) -> DynamicsConfig:
    required = ["mode", "beta", "dt", "t_final"]
    optional = ["lambda", "record_stride", "cbo_isotropic", "init"]
    if needs_j:
        required.append("j")
    else:
        # ensemble sizes come from meanfield.j_list
        pass
    _check_keys(spec, path, required=tuple(required), optional=tuple(optional))

    mode = spec["mode"]
    if mode not in ("cbo", "cbs"):
        raise ConfigError(f"{path}.mode must be 'cbo' or 'cbs'")
    beta = _as_number(spec["beta"], f"{path}.beta")

    if subcommand == "optimize":
        lam = _as_number(spec.get("lambda", 1.0), f"{path}.lambda")
        if lam != 1.0:
            raise ConfigError("optimize requires lambda = 1")
    elif subcommand == "sample":
        if mode != "cbs":
            raise ConfigError("sample requires mode 'cbs'")
        derived = 1.0 / (1.0 + beta)
        lam = _as_number(spec.get("lambda", derived), f"{path}.lambda")
        if abs(lam - derived) > 1e-12:
            raise ConfigError(
                f"sample requires lambda = 1/(1+beta) = {derived!r}, got {lam!r}")
        lam = derived
    else:
        if "lambda" not in spec:
            raise ConfigError(f"{path}.lambda is required for {subcommand}")
        lam = _as_number(spec["lambda"], f"{path}.lambda")

    stride = _as_int(spec.get("record_stride", 1), f"{path}.record_stride", minimum=1)
    if subcommand == "meanfield" and stride != 1:
        raise ConfigError("meanfield requires record_stride = 1 (quadrature grid)")

    if subcommand == "optimize":
        default_init: InitialLaw = UniformBoxInit(lo=np.full(dim, -3.0), hi=np.full(dim, 3.0))
    else:
        default_init = GaussianInit(mean=np.zeros(dim), cov=np.eye(dim))
    init = _build_init(spec.get("init"), f"{path}.init", dim, default_init)

    j = _as_int(spec["j"], f"{path}.j", minimum=2) if needs_j else 2
    try:
        return DynamicsConfig(
            mode=mode, lam=lam, beta=beta,
            dt=_as_number(spec["dt"], f"{path}.dt"),
            t_final=_as_number(spec["t_final"], f"{path}.t_final"),
            j=j, seed=seed, init=init, record_stride=stride,
            cbo_isotropic=_as_bool(spec.get("cbo_isotropic", False),
                                   f"{path}.cbo_isotropic"),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_run_config(subcommand: str, config_path: str, out: str | None,
                    seed_override: int | None, workers: int | None) -> RunConfig:
    """Read, validate and freeze one JSON config."""
    try:
        text = Path(config_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    if subcommand == "verify":
        _check_keys(raw, "config", optional=("seed", "verify"))
    else:
        _check_keys(raw, "config", required=("objective", "dynamics"),
                    optional=("seed", subcommand))

    seed = _as_int(raw.get("seed", 0), "config.seed", minimum=0)
    if seed_override is not None:
        if seed_override < 0:
            raise ConfigError("--seed must be >= 0")
        seed = seed_override

    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        if env is not None:
            try:
                workers = int(env)
            except ValueError as exc:
                raise ConfigError(f"{WORKERS_ENV} must be an integer") from exc
    workers = 1 if workers is None else workers
    if workers < 1:
        raise ConfigError("workers must be >= 1")

    config_hash = hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()
    out_dir = Path(out) if out is not None else (
        Path("consensus-dyn-out") / f"{subcommand}-{config_hash[:8]}")

    objective = None
    obj_spec = None
    dynamics = None
    block = raw.get(subcommand, {})
    if subcommand != "verify":
        objective, obj_spec = _build_objective(raw["objective"])
        dynamics = _build_dynamics(raw["dynamics"], "dynamics", subcommand, seed,
                                   objective.dim, needs_j=subcommand != "meanfield")
        block = _validate_block(subcommand, block, dynamics, objective)
    else:
        block = _validate_verify_block(block)

    return RunConfig(subcommand=subcommand, seed=seed, raw=raw,
                     config_hash=config_hash, out_dir=out_dir, workers=workers,
                     objective=objective, objective_spec=obj_spec,
                     dynamics=dynamics, block=block)


def _validate_block(subcommand: str, block, dynamics: DynamicsConfig,
                    objective: Objective) -> dict:
    path = subcommand
    if subcommand == "optimize":
        _check_keys(block, path, optional=("spread_threshold", "distance_threshold"))
        return {
            "spread_threshold": _as_number(
                block.get("spread_threshold", _DEFAULT_SPREAD_THRESHOLD),
                f"{path}.spread_threshold"),
            "distance_threshold": _as_number(
                block.get("distance_threshold", _DEFAULT_DISTANCE_THRESHOLD),
                f"{path}.distance_threshold"),
        }
    if subcommand == "sample":
        _check_keys(block, path, optional=())
        return {}
    # meanfield
    _check_keys(block, path, required=("j_list", "reps", "phi"),
                optional=("rep_seeds",))
    j_list = block["j_list"]
    if not isinstance(j_list, list) or len(j_list) < 3:
        raise ConfigError(f"{path}.j_list must list at least 3 ensemble sizes")
    j_values = [_as_int(j, f"{path}.j_list[{i}]", minimum=2) for i, j in enumerate(j_list)]
    if sorted(set(j_values)) != j_values:
        raise ConfigError(f"{path}.j_list must be strictly ascending")
    reps = _as_int(block["reps"], f"{path}.reps", minimum=10)
    phi_spec = block["phi"]
    _check_keys(phi_spec, f"{path}.phi", required=("radius",), optional=("center",))
    radius = _as_number(phi_spec["radius"], f"{path}.phi.radius")
    if radius <= 0.0:
        raise ConfigError(f"{path}.phi.radius must be > 0")
    center_spec = phi_spec.get("center", "initial-mean")
    if center_spec == "initial-mean":
        center = _initial_mean(dynamics.init)
    else:
        center = _as_vector(center_spec, f"{path}.phi.center", objective.dim)
    rep_seeds = None
    if "rep_seeds" in block:
        raw_seeds = block["rep_seeds"]
        if not isinstance(raw_seeds, list) or len(raw_seeds) != reps:
            raise ConfigError(f"{path}.rep_seeds must list exactly reps = {reps} seeds")
        rep_seeds = [_as_int(s, f"{path}.rep_seeds[{i}]", minimum=0)
                     for i, s in enumerate(raw_seeds)]
        if len(set(rep_seeds)) != len(rep_seeds):
            raise ConfigError(f"{path}.rep_seeds must be distinct")
    return {"j_list": j_values, "reps": reps,
            "phi": make_bump(center, radius), "rep_seeds": rep_seeds}


def _validate_verify_block(block) -> dict:
    _check_keys(block, "verify", optional=("checks", "corrupt_certificate"))
    checks = block.get("checks", list(FAMILIES))
    if not isinstance(checks, list) or len(checks) == 0:
        raise ConfigError("verify.checks must be a non-empty list")
    for name in checks:
        if name not in FAMILIES:
            raise ConfigError(f"unknown check family {name!r}; "
                              f"known: {sorted(FAMILIES)}")
    return {"checks": checks,
            "corrupt_certificate": _as_bool(block.get("corrupt_certificate", False),
                                            "verify.corrupt_certificate")}


def _initial_mean(init: InitialLaw) -> np.ndarray:
    if isinstance(init, GaussianInit):
        return init.mean.copy()
    if isinstance(init, UniformBoxInit):
        return 0.5 * (init.lo + init.hi)
    return init.positions.mean(axis=0)


# ---------------------------------------------------------------------------
# report emission


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.16e}"
    return str(value)


def write_csv(path: Path, table: ResultTable) -> None:
    lines = [",".join(table.columns)]
    for row in table.rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8", newline="")


def _emit(rc: RunConfig, tables: dict[str, ResultTable],
          reports: dict[str, dict]) -> list[str]:
    rc.out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in tables.items():
        write_csv(rc.out_dir / name, table)
        written.append(name)
    for name, payload in reports.items():
        write_json(rc.out_dir / name, payload)
        written.append(name)
    manifest = {
        "schema": f"{_SCHEMA_PREFIX}.manifest.{_SCHEMA_VERSION}",
        "subcommand": rc.subcommand,
        "config": rc.raw,
        "config_sha256": rc.config_hash,
        "seed": rc.seed,
        "outputs": written,
        "platform": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "system": platform.system(),
            "machine": platform.machine(),
        },
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    write_json(rc.out_dir / "manifest.json", manifest)
    return written + ["manifest.json"]


def _schema(name: str) -> str:
    return f"{_SCHEMA_PREFIX}.{name}.{_SCHEMA_VERSION}"


def _provenance(cfg: DynamicsConfig) -> tuple:
    return (cfg.seed, cfg.j, cfg.dt, cfg.t_final, cfg.lam, cfg.beta, cfg.mode)


_PROVENANCE_COLS = ("seed", "j", "dt", "t_final", "lambda", "beta", "mode")


# ---------------------------------------------------------------------------
# subcommand runners


def run_optimize(rc: RunConfig) -> tuple[dict, dict, int]:
    """Consensus search for the minimizer; one trace table with summary row."""
    cfg, obj = rc.dynamics, rc.objective
    traj = integrate(cfg, obj)
    minimizer = obj.analytic_minimizer
    schema = _schema("optimize")
    columns = ("schema",) + _PROVENANCE_COLS + (
        "row", "t", "consensus_spread", "min_cov_eig", "ess",
        "raw_moment_p1", "raw_moment_p2", "raw_moment_p3",
        "dist_to_minimizer", "success")
    rows = []
    dist = None
    for i, t in enumerate(traj.times):
        if minimizer is not None:
            dist = float(np.linalg.norm(traj.weighted[i].mean - minimizer))
        rows.append((schema,) + _provenance(cfg) + (
            "step", float(t), float(traj.consensus_spread[i]),
            float(traj.min_cov_eig[i]), float(traj.weighted[i].ess),
            float(traj.raw_moments[i, 0]), float(traj.raw_moments[i, 1]),
            float(traj.raw_moments[i, 2]), dist, None))
    final_spread = float(traj.consensus_spread[-1])
    success = final_spread < rc.block["spread_threshold"]
    if minimizer is not None:
        success = success and dist < rc.block["distance_threshold"]
    rows.append((schema,) + _provenance(cfg) + (
        "summary", float(traj.times[-1]), final_spread,
        float(traj.min_cov_eig[-1]), float(traj.weighted[-1].ess),
        float(traj.raw_moments[-1, 0]), float(traj.raw_moments[-1, 1]),
        float(traj.raw_moments[-1, 2]), dist, success))
    table = ResultTable(schema=schema, columns=columns, rows=tuple(rows))
    return {"optimize_trace.csv": table}, {}, EXIT_OK


def run_sample(rc: RunConfig) -> tuple[dict, dict, int]:
    """Stationary-law sampling trace; compares against the Gaussian reference
    when the objective is quadratic."""
    cfg, obj = rc.dynamics, rc.objective
    traj = integrate(cfg, obj)
    d = obj.dim
    quadratic = obj.quadratic_form is not None
    schema = _schema("sample")
    columns = ["schema", *_PROVENANCE_COLS, "row", "t"]
    columns += [f"mean_{i}" for i in range(d)]
    columns += [f"cov_{i}_{k}" for i in range(d) for k in range(d)]
    if quadratic:
        columns += ["mean_abs_err_max", "cov_rel_fro_err"]

    if quadratic:
        ref_mean, ref_cov = gaussian_stationary_reference(obj)
        ref_norm = float(np.linalg.norm(ref_cov))

    rows = []
    for i, t in enumerate(traj.times):
        pos = traj.snapshots[i].positions
        mean = pos.mean(axis=0)
        centered = pos - mean
        cov = centered.T @ centered / pos.shape[0]
        row = [schema, *_provenance(cfg), "step", float(t)]
        row += [float(v) for v in mean]
        row += [float(v) for v in cov.ravel()]
        if quadratic:
            row += [None, None]
        rows.append(tuple(row))

    final_pos = traj.snapshots[-1].positions
    final_mean = final_pos.mean(axis=0)
    centered = final_pos - final_mean
    final_cov = centered.T @ centered / final_pos.shape[0]
    row = [schema, *_provenance(cfg), "summary", float(traj.times[-1])]
    row += [float(v) for v in final_mean]
    row += [float(v) for v in final_cov.ravel()]
    if quadratic:
        mean_err = float(np.max(np.abs(final_mean - ref_mean)))
        cov_err = float(np.linalg.norm(final_cov - ref_cov)) / ref_norm
        row += [mean_err, cov_err]
    rows.append(tuple(row))
    table = ResultTable(schema=schema, columns=tuple(columns), rows=tuple(rows))
    return {"sample_trace.csv": table}, {}, EXIT_OK


def _meanfield_task(payload: dict) -> tuple[int, int, float, np.ndarray]:
    """One (J, replicate) integration; module-level so worker pools can run it."""
    obj, _ = _build_objective(payload["objective"])
    cfg: DynamicsConfig = payload["cfg"]
    phi: BumpTestFunction = payload["phi"]
    j, rep, rep_seed = payload["j"], payload["rep"], payload["rep_seed"]
    sub = replace(cfg, j=j, seed=rep_seed)
    try:
        traj = integrate(sub, obj)
    except BlowUpError as exc:
        raise BlowUpError(f"replicate blew up (J={j}, rep={rep}): {exc}",
                          step=exc.step) from exc
    res = fp_residual(traj, obj, cfg.beta, cfg.lam, phi, cfg.t_final)
    return j, rep, res, traj.snapshots[-1].positions


def run_meanfield(rc: RunConfig) -> tuple[dict, dict, int]:
    """Residual decay across ensemble sizes plus cross-size W2 shrink."""
    cfg = rc.dynamics
    j_values = rc.block["j_list"]
    reps = rc.block["reps"]
    phi = rc.block["phi"]
    rep_seeds = rc.block["rep_seeds"]

    payloads = []
    for j in j_values:
        for rep in range(reps):
            if rep_seeds is None:
                rep_seed = derive_seed(cfg.seed, j, rep)
            else:
                rep_seed = derive_seed(rep_seeds[rep], j)
            payloads.append({"objective": rc.objective_spec, "cfg": cfg,
                             "phi": phi, "j": j, "rep": rep,
                             "rep_seed": rep_seed})

    if rc.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=rc.workers) as pool:
            outcomes = list(pool.map(_meanfield_task, payloads, chunksize=4))
    else:
        outcomes = [_meanfield_task(p) for p in payloads]

    residuals = np.empty((len(j_values), reps))
    finals: dict[tuple[int, int], np.ndarray] = {}
    for j, rep, res, pos in outcomes:
        residuals[j_values.index(j), rep] = res
        finals[(j, rep)] = pos

    report = residual_report_from_samples(j_values, reps, residuals, cfg.seed)

    schema_r = _schema("meanfield-residuals")
    res_cols = ("schema",) + _PROVENANCE_COLS + ("rep", "rep_seed", "residual")
    res_rows = []
    for k, j in enumerate(j_values):
        for rep in range(reps):
            prov = (cfg.seed, j, cfg.dt, cfg.t_final, cfg.lam, cfg.beta, cfg.mode)
            seed_used = next(p["rep_seed"] for p in payloads
                             if p["j"] == j and p["rep"] == rep)
            res_rows.append((schema_r,) + prov + (rep, seed_used,
                                                  float(residuals[k, rep])))

    schema_w = _schema("meanfield-w2")
    w2_cols = ("schema",) + _PROVENANCE_COLS + ("j_large", "rep", "w2")
    w2_rows = []
    medians = []
    for j_small, j_large in zip(j_values, j_values[1:]):
        dists = []
        for rep in range(reps):
            small = Ensemble(finals[(j_small, rep)])
            large = Ensemble(finals[(j_large, rep)][:j_small])
            dists.append(wasserstein2(small, large))
            prov = (cfg.seed, j_small, cfg.dt, cfg.t_final, cfg.lam, cfg.beta,
                    cfg.mode)
            w2_rows.append((schema_w,) + prov + (j_large, rep, float(dists[-1])))
        medians.append(float(np.median(dists)))
    monotone = all(m1 > m2 for m1, m2 in zip(medians, medians[1:]))

    json_report = {
        "schema": _schema("meanfield-report"),
        "j_values": list(j_values),
        "reps": reps,
        "mean_square_residual": [float(v) for v in report.mean_square],
        "slope": report.slope,
        "slope_ci95": [report.slope_ci[0], report.slope_ci[1]],
        "w2_pairs": [
            {"j_small": js, "j_large": jl, "median_w2": m}
            for (js, jl), m in zip(zip(j_values, j_values[1:]), medians)
        ],
        "w2_median_monotone_decreasing": monotone,
        "provenance": {
            "seed": cfg.seed, "dt": cfg.dt, "t_final": cfg.t_final,
            "lambda": cfg.lam, "beta": cfg.beta, "mode": cfg.mode,
        },
    }
    tables = {
        "meanfield_residuals.csv": ResultTable(schema_r, res_cols, tuple(res_rows)),
        "meanfield_w2.csv": ResultTable(schema_w, w2_cols, tuple(w2_rows)),
    }
    return tables, {"meanfield_report.json": json_report}, EXIT_OK


def run_verify(rc: RunConfig) -> tuple[dict, dict, int]:
    """Run the selected randomized check families; exit 4 on any failure."""
    results = run_families(rc.block["checks"], seed=rc.seed,
                           corrupt_certificate=rc.block["corrupt_certificate"])
    schema = _schema("verify")
    columns = ("schema",) + _PROVENANCE_COLS + (
        "family", "cases", "failures", "worst_margin")
    rows = []
    for res in results:
        rows.append((schema, rc.seed, None, None, None, None, None, "verify",
                     res.family, res.cases, res.failures, res.worst_margin))
    table = ResultTable(schema=schema, columns=columns, rows=tuple(rows))
    failed = any(res.failures > 0 for res in results)
    return ({"verify_results.csv": table}, {},
            EXIT_VERIFY if failed else EXIT_OK)


# ---------------------------------------------------------------------------
# entry point


def _dispatch(args) -> int:
    if args.subcommand == "render":
        from .render import render_run
        out = Path(args.out) if args.out is not None else None
        written = render_run(args.config, out)
        print(f"rendered {len(written)} file(s)")
        return EXIT_OK

    rc = load_run_config(args.subcommand, args.config, args.out, args.seed,
                         args.workers)
    runner = {"optimize": run_optimize, "sample": run_sample,
              "meanfield": run_meanfield, "verify": run_verify}[args.subcommand]
    tables, reports, code = runner(rc)
    files = _emit(rc, tables, reports)
    print(f"wrote {len(files)} file(s) to {rc.out_dir}")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="consensus-dyn",
        description="Consensus particle dynamics experiments")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, text in (
        ("optimize", "consensus search for a minimizer"),
        ("sample", "stationary-law sampling run"),
        ("meanfield", "residual decay across ensemble sizes"),
        ("verify", "randomized inequality check families"),
        ("render", "data files and figures from a finished run"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default ${WORKERS_ENV} or 1)")
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    raise SystemExit(main())
