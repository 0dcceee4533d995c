"""Render a finished run directory into plain data files and figures.

Reads the run manifest, mirrors every CSV as a whitespace-delimited .dat file
(gnuplot-friendly: `#`-prefixed header, empty fields written as nan) and draws
matplotlib figures appropriate to the subcommand.  matplotlib is imported
lazily and only here, with the Agg backend, so library users never pay for it.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .errors import ConfigError

__all__ = ["render_run"]


def _load_manifest(source) -> tuple[Path, dict]:
    path = Path(source)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise ConfigError(f"no manifest found at {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    for key in ("subcommand", "outputs"):
        if key not in manifest:
            raise ConfigError(f"manifest {path} lacks the {key!r} field")
    return path.parent, manifest


def _read_csv(path: Path) -> tuple[list[str], list[dict]]:
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            columns = next(reader)
        except StopIteration as exc:
            raise ConfigError(f"{path} is empty") from exc
        rows = [dict(zip(columns, row)) for row in reader]
    return columns, rows


def _num(field: str) -> float:
    if field == "":
        return math.nan
    try:
        return float(field)
    except ValueError:
        return math.nan


def _write_dat(path: Path, columns: list[str], rows: list[dict]) -> None:
    lines = ["# " + " ".join(columns)]
    for row in rows:
        fields = []
        for col in columns:
            v = row.get(col, "")
            fields.append("nan" if v == "" else v)
        lines.append(" ".join(fields))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="")


def _agg_pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=150)


def _figure_optimize(plt, rows: list[dict], out: Path) -> list[Path]:
    steps = [r for r in rows if r["row"] == "step"]
    t = [_num(r["t"]) for r in steps]
    spread = [_num(r["consensus_spread"]) for r in steps]
    dist = [_num(r["dist_to_minimizer"]) for r in steps]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogy(t, spread, label="ensemble spread")
    if not all(math.isnan(v) for v in dist):
        ax.semilogy(t, dist, label="distance to minimizer")
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.legend()
    ax.set_title("consensus optimization trace")
    path = out / "optimize_trace.png"
    _save(fig, path)
    plt.close(fig)
    return [path]


def _figure_sample(plt, columns: list[str], rows: list[dict], out: Path) -> list[Path]:
    steps = [r for r in rows if r["row"] == "step"]
    t = [_num(r["t"]) for r in steps]
    mean_cols = [c for c in columns if c.startswith("mean_")]
    var_cols = [c for c in columns if c.startswith("cov_")
                and c.split("_")[1] == c.split("_")[2]]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    for c in mean_cols:
        ax1.plot(t, [_num(r[c]) for r in steps], label=c)
    ax1.set_xlabel("t")
    ax1.set_title("sample mean")
    ax1.legend(fontsize="small")
    for c in var_cols:
        ax2.plot(t, [_num(r[c]) for r in steps], label=c)
    ax2.set_xlabel("t")
    ax2.set_title("sample variances")
    ax2.legend(fontsize="small")
    path = out / "sample_trace.png"
    _save(fig, path)
    plt.close(fig)
    return [path]


def _figure_meanfield(plt, run_dir: Path, out: Path) -> list[Path]:
    report_path = run_dir / "meanfield_report.json"
    if not report_path.is_file():
        return []
    report = json.loads(report_path.read_text(encoding="utf-8"))
    j_values = report["j_values"]
    ms = report["mean_square_residual"]
    slope = report["slope"]
    written = []

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.loglog(j_values, ms, "o-", label="mean-square residual")
    # fitted power law through the first point
    fit = [ms[0] * (j / j_values[0]) ** slope for j in j_values]
    ax.loglog(j_values, fit, "--", label=f"fit slope {slope:.2f}")
    ax.set_xlabel("ensemble size J")
    ax.set_ylabel("mean-square residual")
    ax.set_title("weak residual decay")
    ax.legend()
    path = out / "meanfield_scaling.png"
    _save(fig, path)
    plt.close(fig)
    written.append(path)

    pairs = report.get("w2_pairs", [])
    if pairs:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.loglog([p["j_small"] for p in pairs],
                  [p["median_w2"] for p in pairs], "s-")
        ax.set_xlabel("smaller ensemble size J")
        ax.set_ylabel("median W2 to the next size")
        ax.set_title("cross-size transport distance")
        path = out / "meanfield_w2.png"
        _save(fig, path)
        plt.close(fig)
        written.append(path)
    return written


def _figure_verify(plt, rows: list[dict], out: Path) -> list[Path]:
    families = [r["family"] for r in rows]
    failures = [_num(r["failures"]) for r in rows]
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.bar(range(len(families)), failures)
    ax.set_xticks(range(len(families)))
    ax.set_xticklabels(families, rotation=30, ha="right", fontsize="small")
    ax.set_ylabel("failing cases")
    ax.set_title("verification families")
    path = out / "verify_failures.png"
    _save(fig, path)
    plt.close(fig)
    return [path]


def render_run(source, out_dir: Path | None = None) -> list[Path]:
    """Emit .dat mirrors and figures for the run at `source`.

    source is a run directory or a manifest path; out_dir defaults to the
    run directory itself.  Returns the written paths.
    """
    run_dir, manifest = _load_manifest(source)
    out = Path(out_dir) if out_dir is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)
    subcommand = manifest["subcommand"]

    written: list[Path] = []
    csv_data: dict[str, tuple[list[str], list[dict]]] = {}
    for name in manifest["outputs"]:
        if not name.endswith(".csv"):
            continue
        src = run_dir / name
        if not src.is_file():
            raise ConfigError(f"manifest lists {name} but {src} is missing")
        columns, rows = _read_csv(src)
        csv_data[name] = (columns, rows)
        dat = out / (Path(name).stem + ".dat")
        _write_dat(dat, columns, rows)
        written.append(dat)

    plt = _agg_pyplot()
    if subcommand == "optimize" and "optimize_trace.csv" in csv_data:
        written += _figure_optimize(plt, csv_data["optimize_trace.csv"][1], out)
    elif subcommand == "sample" and "sample_trace.csv" in csv_data:
        columns, rows = csv_data["sample_trace.csv"]
        written += _figure_sample(plt, columns, rows, out)
    elif subcommand == "meanfield":
        written += _figure_meanfield(plt, run_dir, out)
    elif subcommand == "verify" and "verify_results.csv" in csv_data:
        written += _figure_verify(plt, csv_data["verify_results.csv"][1], out)
    return written
