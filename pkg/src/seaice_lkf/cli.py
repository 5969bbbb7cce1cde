"""Command-line interface: ``seaice-lkf {run,matrix,detect,summarize,grid-info}``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure, 3 matrix
finished with some failed runs.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .benchmark import BenchmarkAborted, read_snapshot, run_benchmark
from .config import ConfigError, RunSpec, load_matrix, load_run
from .discretization import discretization
from .grid import Staggering, build_quad_grid, dof_counts
from .lkf import (DetectorParams, detect, lkf_stats, regrid_2km, write_segments_csv,
                  write_stats_csv)

log = logging.getLogger("seaice_lkf")

OUTPUT_ENV = "SEAICE_LKF_OUTPUT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

SUMMARY_FIELDS = [
    "staggering", "doubled_cells", "h_km", "solver", "velocity_dof", "tracer_dof",
    "lkf_count", "lkf_total_length_km", "wall_time_s", "volume_drift",
    "count_q_minus", "count_q_plus", "sensitivity", "status", "label",
]
_STAG_ORDER = {s.value: i for i, s in enumerate(Staggering)}


def output_root(arg: str | None) -> Path:
    """``--out`` wins, then ``$SEAICE_LKF_OUTPUT``, then ``./runs``."""
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


# -- detection on a finished run -------------------------------------------------

def _final_image(run_dir: Path):
    sidecar = run_dir / "final.json"
    if not sidecar.exists():
        raise FileNotFoundError(f"{run_dir} has no final snapshot (final.json)")
    fields, meta = read_snapshot(sidecar)
    g = meta["grid"]
    grid = build_quad_grid(g["L"], g["h"], g["hy"])
    mesh = discretization(grid, meta["staggering"]).mesh
    return regrid_2km(fields["shear"], mesh), meta


def detect_run(run_dir, params: DetectorParams = DetectorParams(), delta: float = 0.05) -> dict:
    """Detect LKFs in the final snapshot; write segments and stats CSVs."""
    run_dir = Path(run_dir)
    image, meta = _final_image(run_dir)
    segs = detect(image, params)
    stats = lkf_stats(segs)
    counts = []
    for q in (params.threshold_quantile - delta, params.threshold_quantile + delta):
        q = min(max(q, 1e-3), 1 - 1e-3)
        counts.append(lkf_stats(detect(image, replace(params, threshold_quantile=q))).count)
    extra = {
        "count_q_minus": counts[0], "count_q_plus": counts[1],
        "sensitivity": max(abs(c - stats.count) for c in counts),
    }
    write_segments_csv(run_dir / "lkf_segments.csv", segs)
    write_stats_csv(run_dir / "lkf_stats.csv", stats, extra)
    return {"lkf_count": stats.count, "lkf_total_length_km": stats.total_length_km, **extra}


def _summary_row(spec: RunSpec, run_dir: Path, wall: float, drift: float, det: dict) -> dict:
    b = spec.benchmark
    grid = b.build_grid()
    dof = dof_counts(grid, b.staggering)
    return {
        "staggering": b.staggering.value, "doubled_cells": int(b.doubled_cells), "h_km": b.h / 1e3,
        "solver": b.solver.scheme, "velocity_dof": dof.velocity_dof, "tracer_dof": dof.tracer_dof,
        "wall_time_s": round(wall, 3), "volume_drift": drift, "status": "ok", "label": spec.label, **det,
    }


def execute(spec: RunSpec, root: Path, n_steps: int | None = None, delta: float = 0.05) -> dict:
    """Run one configuration into ``root/label`` and return its summary row."""
    run_dir = root / spec.label
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "input.json").write_text(json.dumps(spec.raw, indent=2, sort_keys=True, default=str))
    res = run_benchmark(spec.benchmark, run_dir, n_steps=n_steps)
    det = detect_run(run_dir, spec.detector, delta)
    row = _summary_row(spec, run_dir, res.wall_time, res.volume_drift, det)
    (run_dir / "summary.json").write_text(json.dumps(row, indent=2, sort_keys=True))
    return row


def _execute_safe(args):
    spec, root, n_steps, delta = args
    try:
        return execute(spec, root, n_steps, delta)
    except Exception as exc:  # a failed run must not stop the matrix
        b = spec.benchmark
        return {
            "staggering": b.staggering.value, "doubled_cells": int(b.doubled_cells), "h_km": b.h / 1e3,
            "solver": b.solver.scheme, "status": f"failed: {exc}", "label": spec.label,
        }


# -- summary tables ---------------------------------------------------------------

def _sort_key(row):
    return (_STAG_ORDER.get(row["staggering"], 99), int(row.get("doubled_cells", 0) or 0),
            float(row["h_km"]), row["solver"])


def read_summary(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_summary(root: Path, rows: list[dict]) -> Path:
    """Merge ``rows`` into ``root/summary.csv`` (keyed by label) and sort it."""
    path = root / "summary.csv"
    merged = {r["label"]: r for r in read_summary(path)}
    for r in rows:
        merged[r["label"]] = {k: r.get(k, "") for k in SUMMARY_FIELDS}
    out = sorted(merged.values(), key=_sort_key)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        w.writerows(out)
    write_plot_data(root, out)
    return path


def write_plot_data(root: Path, rows: list[dict]) -> None:
    """Per-figure CSVs: LKF count and length against resolution and against dof."""
    ok = [r for r in rows if r.get("status") == "ok"]
    series = [
        ("plot_lkf_vs_h.csv", ["staggering", "doubled_cells", "solver", "h_km"]),
        ("plot_lkf_vs_dof.csv", ["staggering", "doubled_cells", "solver", "velocity_dof"]),
    ]
    for name, keys in series:
        with open(root / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys + ["lkf_count", "lkf_total_length_km"])
            for r in sorted(ok, key=lambda r: (_sort_key(r), float(r[keys[-1]]))):
                w.writerow([r[k] for k in keys] + [r["lkf_count"], r["lkf_total_length_km"]])


# -- subcommands -------------------------------------------------------------------

def cmd_run(a) -> int:
    spec = load_run(a.config)
    row = execute(spec, output_root(a.out), a.steps)
    write_summary(output_root(a.out), [row])
    print(json.dumps(row, indent=2))
    return EXIT_OK


def cmd_matrix(a) -> int:
    m = load_matrix(a.config)
    root = output_root(a.out)
    root.mkdir(parents=True, exist_ok=True)
    workers = a.workers or m.workers
    jobs = [(spec, root, a.steps, m.sensitivity_delta) for spec in m.runs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_execute_safe, jobs))
    else:
        rows = [_execute_safe(j) for j in jobs]
    path = write_summary(root, rows)
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        print(f"run {r['label']} {r['status']}", file=sys.stderr)
    print(f"summary written to {path} ({len(rows) - len(failed)}/{len(rows)} runs ok)")
    if failed:
        return EXIT_PARTIAL if len(failed) < len(rows) else EXIT_RUNTIME
    return EXIT_OK


def cmd_detect(a) -> int:
    params = DetectorParams(threshold_quantile=a.quantile) if a.quantile is not None else DetectorParams()
    stats = detect_run(Path(a.run_dir), params, a.delta)
    print(json.dumps(stats, indent=2))
    return EXIT_OK


def cmd_summarize(a) -> int:
    root = output_root(a.root)
    rows = [json.loads(p.read_text()) for p in sorted(root.glob("*/summary.json"))]
    if not rows:
        print(f"no finished runs under {root}", file=sys.stderr)
        return EXIT_RUNTIME
    path = write_summary(root, rows)
    print(path.read_text(), end="")
    return EXIT_OK


def cmd_grid_info(a) -> int:
    grid = build_quad_grid(a.L_km * 1e3, a.h_km * 1e3, a.h_km * 5e2 if a.doubled else None)
    info = grid.describe()
    info["dof"] = dof_counts(grid, a.staggering).as_dict()
    print(json.dumps(info, indent=2, default=str))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seaice-lkf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one benchmark configuration")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./runs)")
    r.add_argument("--steps", type=int, help="stop after this many steps")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("matrix", help="run a staggering x resolution x solver matrix")
    m.add_argument("--config", required=True)
    m.add_argument("--out")
    m.add_argument("--workers", type=int)
    m.add_argument("--steps", type=int)
    m.set_defaults(func=cmd_matrix)

    d = sub.add_parser("detect", help="detect LKFs in a finished run directory")
    d.add_argument("run_dir")
    d.add_argument("--quantile", type=float)
    d.add_argument("--delta", type=float, default=0.05, help="quantile offset for the sensitivity columns")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("summarize", help="collect finished runs into summary.csv")
    s.add_argument("root", nargs="?")
    s.set_defaults(func=cmd_summarize)

    g = sub.add_parser("grid-info", help="print grid geometry and dof counts")
    g.add_argument("--h-km", dest="h_km", type=float, default=8.0)
    g.add_argument("--L-km", dest="L_km", type=float, default=512.0)
    g.add_argument("--staggering", default="B", choices=[s.value for s in Staggering])
    g.add_argument("--doubled", action="store_true", help="B-grid with twice the cells")
    g.set_defaults(func=cmd_grid_info)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BenchmarkAborted, FileNotFoundError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
