"""
Command-line front end.

    clipdsp validate --config fig2
    clipdsp oracle   --config fig2 --out out/fig2
    clipdsp run      --config fig2 --out out/fig2 --jobs 4
    clipdsp sweep    --config fig2 --param tail_index --values 1.5,2,3

Exit codes: 0 success, 1 validation failure, 2 config/parse error,
3 one or more runs diverged.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import oracle_payload, read_oracle, write_experiment, write_json
from .config import (
    ConfigError,
    available_presets,
    config_hash,
    load_config,
    parse_sweep_values,
    resolve_config_path,
)
from .errors import ClipDSPError, NoConvergence, UnknownParameter
from .experiment import SWEEP_PARAMS, ExperimentConfig, problem_key, run_experiment
from .graph import (
    consensus_contraction_bound,
    matrix_power_deviations,
    validate_doubly_stochastic,
)
from .noise import estimate_delta_moment, sample_noise
from .optimizer import validate_schedules
from .problem import gradient_bound, solve_centralized

EXIT_OK, EXIT_INVALID, EXIT_PARSE, EXIT_DIVERGED = 0, 1, 2, 3
OUT_ENV = "CLIPDSP_OUT"
DEFAULT_OUT = "clipdsp-out"

log = logging.getLogger("clipdsp")


@dataclasses.dataclass
class Check:
    name: str
    passed: bool
    detail: str
    overridable: bool = False


def _load(args) -> tuple[ExperimentConfig, dict]:
    config, output = load_config(resolve_config_path(args.config))
    if args.seed is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    if args.override_schedule_check:
        config = dataclasses.replace(config, override_schedule_check=True)
    return config, output


def _out_dir(args, output: dict) -> Path:
    return Path(args.out or output.get("dir") or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def graph_checks(config: ExperimentConfig, k_max: int = 200) -> list[Check]:
    try:
        A = config.graph.build()
    except (ClipDSPError, ValueError) as exc:
        return [Check("graph.build", False, str(exc))]
    rep = validate_doubly_stochastic(A)
    checks = [
        Check("graph.row_sums", rep.max_row_dev <= rep.tol, f"max |row sum - 1| = {rep.max_row_dev:.3g}"),
        Check("graph.col_sums", rep.max_col_dev <= rep.tol, f"max |col sum - 1| = {rep.max_col_dev:.3g}"),
        Check("graph.entries", rep.in_unit_interval, "all entries in [0, 1]"),
        Check("graph.connected", rep.connected, "strongly connected" if rep.connected else "not strongly connected"),
    ]
    if A.n > 1 and rep.passed:
        bound = consensus_contraction_bound(A)
        dev = matrix_power_deviations(A, k_max)
        ks = np.arange(1, k_max + 1)
        ok = bool(np.all(dev <= bound(ks) + 1e-12))
        checks.append(
            Check(
                "graph.contraction",
                ok,
                f"eta={A.eta:.6g} N={A.n} Q={A.edge_count_q} theta={bound.theta:.6g} "
                f"beta={bound.beta:.6g}; max_ij|[A^k]_ij-1/N| <= theta beta^k for k<={k_max}",
            )
        )
    return checks


def problem_checks(config: ExperimentConfig, n_samples: int = 10_000) -> tuple[list[Check], float | None]:
    try:
        inst = config.problem.build()
    except (ClipDSPError, ValueError) as exc:
        return [Check("problem.build", False, str(exc))], None
    c0 = gradient_bound(inst)
    rng = np.random.default_rng(0)
    pts = inst.omega.sample(rng, n_samples)
    emp = max(
        float(np.linalg.norm(inst.gradients(np.broadcast_to(p, (inst.n_agents, inst.dim))), axis=1).max())
        for p in pts[:: max(1, n_samples // 2000)]
    )
    checks = [
        Check("problem.gradient_bound", emp <= c0, f"C0={c0:.6g} >= sampled max {emp:.6g}"),
        Check("problem.strong_convexity", inst.mu_modulus > 0, f"Hessian lower bound {inst.mu_modulus:.6g}"),
    ]
    return checks, c0


def noise_checks(config: ExperimentConfig, dim: int, n_samples: int = 100_000) -> list[Check]:
    model = config.noise.build(dim)
    rng = np.random.default_rng(config.master_seed)
    delta = config.schedules.delta
    mean = sample_noise(model, rng, n_samples).mean(axis=0)
    worst = float(np.abs(mean).max())
    checks = [Check("noise.zero_mean", worst <= 0.1, f"max |coordinate mean| = {worst:.4g} over {n_samples} draws")]
    if model.kind == "shifted_pareto" and delta >= model.gamma:
        checks.append(Check("noise.delta_moment", False, f"E||xi||^{delta:g} infinite for tail index {model.gamma:g}"))
    else:
        m = estimate_delta_moment(model, delta, n_samples, rng)
        checks.append(Check("noise.delta_moment", np.isfinite(m), f"E||xi||^{delta:g} ~ {m:.4g} (nu ~ {m ** (1 / delta):.4g})"))
    return checks


def schedule_checks(config: ExperimentConfig, c0: float) -> list[Check]:
    rep = validate_schedules(config.schedules, c0)
    return [
        Check(f"schedules.{c.name}", c.passed, "; ".join(c.inequalities), overridable=True)
        for c in rep.checks
    ]


def collect_checks(config: ExperimentConfig) -> list[tuple[str, Check]]:
    rows: list[tuple[str, Check]] = []
    seen = set()

    def add(scope, checks):
        for c in checks:
            key = (c.name, c.detail)
            if key not in seen:
                seen.add(key)
                rows.append((scope, c))

    add("all", graph_checks(config))
    for point in config.sweep_points():
        cfg = point.config
        pchecks, c0 = problem_checks(cfg)
        add(point.sweep_id, pchecks)
        if c0 is None:
            continue
        add(point.sweep_id, schedule_checks(cfg, c0))
        add(point.sweep_id, noise_checks(cfg, cfg.problem.build().dim))
    return rows


def print_table(rows, stream=None) -> None:
    stream = stream or sys.stdout
    width = max(len(c.name) for _, c in rows)
    for scope, c in rows:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status}  {c.name:<{width}}  [{scope}] {c.detail}", file=stream)


def _blocking(rows, override: bool) -> list[Check]:
    return [c for _, c in rows if not c.passed and not (override and c.overridable)]


def cmd_validate(args) -> int:
    config, _ = _load(args)
    rows = collect_checks(config)
    print_table(rows)
    blocking = _blocking(rows, config.override_schedule_check)
    print(f"{'OK' if not blocking else 'FAILED'}: {len(rows) - sum(not c.passed for _, c in rows)}/{len(rows)} checks passed")
    return EXIT_OK if not blocking else EXIT_INVALID


def _solve_all(config: ExperimentConfig):
    solutions = {}
    for point in config.sweep_points():
        spec = point.config.problem
        key = problem_key(spec)
        if key not in solutions:
            theta, info = solve_centralized(spec.build(), tol=config.oracle_tol, full_output=True)
            solutions[key] = (dataclasses.asdict(spec), theta, info)
    return solutions


def cmd_oracle(args) -> int:
    config, output = _load(args)
    out = _out_dir(args, output)
    out.mkdir(parents=True, exist_ok=True)
    solutions = _solve_all(config)
    path = out / "oracle.json"
    write_json(path, oracle_payload(config, solutions))
    for key, (_, theta, info) in solutions.items():
        print(f"{key}: theta* = {np.array2string(theta, precision=8)}  residual={info.residual:.3g}  iterations={info.iterations}")
    print(f"wrote {path}")
    return EXIT_OK


def _execute(args, config: ExperimentConfig, output: dict, extra=None) -> int:
    rows = [("all", c) for c in graph_checks(config, k_max=1)]
    for point in config.sweep_points():
        try:
            c0 = gradient_bound(point.config.problem.build())
        except (ClipDSPError, ValueError) as exc:
            rows.append((point.sweep_id, Check("problem.build", False, str(exc))))
            continue
        rows += [(point.sweep_id, c) for c in schedule_checks(point.config, c0)]
    blocking = _blocking(rows, config.override_schedule_check)
    if blocking:
        print_table([r for r in rows if not r[1].passed], stream=sys.stderr)
        print("refusing to run; fix the config or pass --override-schedule-check", file=sys.stderr)
        return EXIT_INVALID

    out = _out_dir(args, output)
    theta_star = None
    oracle = Path(args.oracle) if args.oracle else out / "oracle.json"
    if oracle.exists():
        theta_star = read_oracle(oracle)
        log.info("using oracle %s", oracle)
    result = run_experiment(config, jobs=args.jobs, theta_star=theta_star)
    extra_files = []
    if extra is not None:
        extra_files.append(extra(out, result))
    write_experiment(out, result, extra_files)

    print(f"config {config_hash(config)[:12]}  seeds {config.seeds[0]}..{config.seeds[-1]}  T={config.T}")
    for row in result.summary():
        print(
            f"{row['sweep_id']:<32} final median dist {row['final_median']:.6g}  "
            f"AUC {row['auc_median']:.6g}  diverged {row['n_divergent']}/{row['n_runs']}"
        )
    print(f"wrote {out}")
    return EXIT_DIVERGED if any(result.divergence_counts.values()) else EXIT_OK


def cmd_run(args) -> int:
    config, output = _load(args)
    return _execute(args, config, output)


def cmd_sweep(args) -> int:
    config, output = _load(args)
    if args.param not in SWEEP_PARAMS:
        raise UnknownParameter(args.param)
    values = parse_sweep_values(args.param, args.values)
    config = config.with_sweep(args.param, values)

    def comparison(out, result):
        rel = f"sweep_{args.param}.csv"
        out.mkdir(parents=True, exist_ok=True)
        with open(out / rel, "w") as fh:
            fh.write("sweep_id,final_k,final_median,auc_median,n_runs,n_divergent\n")
            for row in result.summary():
                fh.write(
                    f"{row['sweep_id']},{row['final_k']},{row['final_median']:.17g},"
                    f"{row['auc_median']:.17g},{row['n_runs']},{row['n_divergent']}\n"
                )
        return ("sweep", rel)

    return _execute(args, config, output, extra=comparison)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clipdsp",
        description="Clipped distributed stochastic subgradient projection under heavy-tailed noise.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", required=True,
        help=f"config file, or a bundled preset ({', '.join(available_presets())})",
    )
    common.add_argument("--seed", type=int, help="override run.master_seed")
    common.add_argument("--out", help=f"output directory (default: output.dir, ${OUT_ENV}, ./{DEFAULT_OUT})")
    common.add_argument("--override-schedule-check", action="store_true",
                        help="run even if the step-size conditions fail")

    p = sub.add_parser("validate", parents=[common], help="check graph, problem, noise and schedules")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("oracle", parents=[common], help="solve for theta* and write oracle.json")
    p.set_defaults(func=cmd_oracle)

    execution = argparse.ArgumentParser(add_help=False)
    execution.add_argument("--jobs", type=int, default=1, help="concurrent runs")
    execution.add_argument("--oracle", help="oracle.json to read theta* from (default: <out>/oracle.json if present)")

    p = sub.add_parser("run", parents=[common, execution], help="run the configured experiment")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", parents=[common, execution], help="run one curve per parameter value")
    p.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMS)}")
    p.add_argument("--values", required=True, help="comma-separated values, e.g. 1.5,2,3 or on,off")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except UnknownParameter as exc:
        print(f"unknown sweep parameter {exc.args[0]!r}; expected one of {', '.join(SWEEP_PARAMS)}", file=sys.stderr)
        return EXIT_PARSE
    except NoConvergence as exc:
        print(f"oracle did not converge: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ClipDSPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
