"""
On-disk artifacts: per-run CSV, aggregate CSV, summary CSV, JSON manifest and
oracle files. Floats are written with 17 significant digits so that reading a
file back reproduces the in-memory values exactly.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from . import __version__
from .config import canonical, config_hash
from .experiment import METRICS, ExperimentResult
from .optimizer import RunTrace

RUN_COLUMNS = ("k",) + METRICS
AGG_COLUMNS = ("k", "sweep_id") + tuple(
    f"{m}_{stat}" for m in METRICS for stat in ("median", "q25", "q75")
)
SUMMARY_COLUMNS = ("sweep_id", "final_k", "final_median", "auc_median", "n_runs", "n_divergent")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def slug(sweep_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", sweep_id)


def write_run_csv(path, trace: RunTrace) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RUN_COLUMNS)
        for r in range(len(trace)):
            w.writerow([fmt(trace.k[r])] + [fmt(trace.metric(m)[r]) for m in METRICS])


def read_run_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {"k": np.array([int(r["k"]) for r in rows], dtype=int)}
    for m in METRICS:
        out[m] = np.array([float(r[m]) for r in rows])
    return out


def write_aggregate_csv(path, result: ExperimentResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGG_COLUMNS)
        for sid, agg in result.aggregates.items():
            for r, k in enumerate(agg.k):
                row = [fmt(k), sid]
                for m in METRICS:
                    row += [fmt(agg.median[m][r]), fmt(agg.q25[m][r]), fmt(agg.q75[m][r])]
                w.writerow(row)


def read_aggregate_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_summary_csv(path, result: ExperimentResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in result.summary():
            w.writerow([row["sweep_id"]] + [fmt(row[c]) for c in SUMMARY_COLUMNS[1:]])


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_experiment(out_dir, result: ExperimentResult, extra_files=()) -> dict:
    """Write raw traces, aggregates, summary and manifest; return the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"aggregate": "aggregate.csv", "summary": "summary.csv", "raw": {}}
    for sid, traces in result.traces.items():
        names = []
        for t in traces:
            rel = f"raw/{slug(sid)}/seed_{t.seed}.csv"
            write_run_csv(out / rel, t)
            names.append(rel)
        files["raw"][sid] = names
    write_aggregate_csv(out / files["aggregate"], result)
    write_summary_csv(out / files["summary"], result)
    for key, rel in extra_files:
        files[key] = rel

    cfg = result.config
    manifest = {
        "version": __version__,
        "config_hash": config_hash(cfg),
        "config": canonical(cfg),
        "master_seed": cfg.master_seed,
        "seeds": cfg.seeds,
        "sweep_ids": [p.sweep_id for p in result.points],
        "divergence_counts": result.divergence_counts,
        "diverged_runs": {
            sid: [t.seed for t in ts if t.diverged] for sid, ts in result.traces.items()
        },
        "theta_star": {k: [float(v) for v in th] for k, th in result.theta_star.items()},
        "files": files,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def oracle_payload(config, solutions) -> dict:
    """``solutions`` maps problem key -> (problem spec, theta, OracleInfo)."""
    return {
        "version": __version__,
        "config_hash": config_hash(config),
        "problems": [
            {
                "problem_key": key,
                "problem": spec_dict,
                "theta_star": [float(v) for v in theta],
                "residual": info.residual,
                "iterations": info.iterations,
                "step": info.step,
                "tol": info.tol,
            }
            for key, (spec_dict, theta, info) in solutions.items()
        ],
    }


def read_oracle(path) -> dict[str, np.ndarray]:
    data = json.loads(Path(path).read_text())
    return {p["problem_key"]: np.array(p["theta_star"]) for p in data["problems"]}

