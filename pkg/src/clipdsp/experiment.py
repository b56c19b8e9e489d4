"""
Multi-seed experiments over sweep points, with median/IQR aggregation.

Seeds follow ``master_seed + seed_index``; the same seed list is reused at
every sweep point so comparisons between points share noise streams.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import UnknownParameter
from .graph import PAPER_EDGES, AdjacencyMatrix, build_graph
from .metrics import consensus_error, distance_to_optimum  # noqa: F401  (re-exported)
from .noise import NoiseModel
from .optimizer import RunTrace, SchedulePair, record_iterations, run
from .problem import (
    PAPER_FEATURES,
    PAPER_LABELS,
    ConstraintSet,
    LogisticRidgeData,
    LogisticRidgeProblem,
    ProblemInstance,
    QuadraticProblem,
    solve_centralized,
)

log = logging.getLogger(__name__)

METRICS = RunTrace.METRICS

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class ProblemSpec:
    """Declarative problem: ``paper-v``, inline ``logistic-ridge`` or ``quadratic``."""

    kind: str = "paper-v"
    mu: float = 1.0
    omega: str = "box"
    bound: float = 1.0
    labels: tuple | None = None
    features: tuple | None = None
    centers: tuple | None = None
    weight: float = 1.0

    def build(self) -> ProblemInstance:
        if self.kind == "quadratic":
            centers = np.asarray(self.centers, dtype=float)
            return QuadraticProblem(centers, self._omega(centers.shape[1]), self.weight)
        if self.kind == "paper-v":
            labels, features = PAPER_LABELS, PAPER_FEATURES
        else:
            labels, features = self.labels, self.features
        data = LogisticRidgeData(np.asarray(labels), np.asarray(features), self.mu)
        return LogisticRidgeProblem(data, self._omega(data.features.shape[1]))

    def _omega(self, dim):
        if self.omega == "box":
            return ConstraintSet.box(dim, self.bound)
        return ConstraintSet.ball(dim, self.bound)


@dataclass(frozen=True)
class GraphSpec:
    preset: str | None = "paper-v"
    n: int | None = None
    edges: tuple | None = None
    edge_count_q: int | None = None
    weights: tuple | None = None

    def build(self) -> AdjacencyMatrix:
        if self.preset == "paper-v":
            return build_graph(6, PAPER_EDGES, self.edge_count_q)
        if self.preset == "single":
            return AdjacencyMatrix.trivial()
        if self.preset == "matrix":
            return AdjacencyMatrix.from_weights(self.weights, self.edge_count_q)
        return build_graph(self.n, self.edges, self.edge_count_q)


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "shifted_pareto"
    gamma: float = 2.0
    w_min: float = 1.0
    sigma: float = 1.0

    def build(self, dim: int) -> NoiseModel:
        return NoiseModel(self.kind, dim, self.gamma, self.w_min, self.sigma)


# sweepable name -> (config section, field)
SWEEP_PARAMS = {
    "tail_index": ("noise", "gamma"),
    "w_min": ("noise", "w_min"),
    "sigma": ("noise", "sigma"),
    "mu": ("problem", "mu"),
    "alpha_coeff": ("schedules", "alpha_coeff"),
    "alpha_exp": ("schedules", "alpha_exp"),
    "tau_coeff": ("schedules", "tau_coeff"),
    "tau_exp": ("schedules", "tau_exp"),
    "delta": ("schedules", "delta"),
    "clipping": (None, None),
}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec = ProblemSpec()
    graph: GraphSpec = GraphSpec()
    noise: NoiseSpec = NoiseSpec()
    schedules: SchedulePair = SchedulePair(10.0, 1.0, 10.0, 0.4, 1.5)
    T: int = 10_000
    n_seeds: int = 20
    master_seed: int = 0
    stride: int = 10
    clipping: tuple[bool, ...] = (True,)
    sweep_param: str | None = None
    sweep_values: tuple = ()
    x0: float | tuple = 0.0
    override_schedule_check: bool = False
    exclude_divergent: bool = False
    oracle_tol: float = 1e-10

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ValueError("need at least one seed")
        if self.sweep_param is not None and self.sweep_param not in SWEEP_PARAMS:
            raise UnknownParameter(self.sweep_param)
        if len(set(self.sweep_values)) != len(self.sweep_values):
            raise ValueError("sweep values must be distinct")

    @property
    def seeds(self) -> list[int]:
        return [self.master_seed + i for i in range(self.n_seeds)]

    def with_sweep(self, param: str, values) -> "ExperimentConfig":
        if param not in SWEEP_PARAMS:
            raise UnknownParameter(param)
        return dataclasses.replace(self, sweep_param=param, sweep_values=tuple(values))

    def sweep_points(self) -> list["SweepPoint"]:
        """Every (sweep value x clipping mode) combination, in a fixed order."""
        if self.sweep_param == "clipping":
            return [SweepPoint(f"clipping={_onoff(c)}", self, bool(c)) for c in self.sweep_values]
        if self.sweep_param is None:
            return [SweepPoint(f"clipping={_onoff(c)}", self, c) for c in self.clipping]
        section, name = SWEEP_PARAMS[self.sweep_param]
        points = []
        for value in self.sweep_values:
            part = dataclasses.replace(getattr(self, section), **{name: value})
            cfg = dataclasses.replace(self, **{section: part})
            for c in self.clipping:
                sid = f"{self.sweep_param}={value:g},clipping={_onoff(c)}"
                points.append(SweepPoint(sid, cfg, c))
        return points


def _onoff(flag) -> str:
    return "on" if flag else "off"


@dataclass(frozen=True)
class SweepPoint:
    sweep_id: str
    config: ExperimentConfig
    clipping: bool


@dataclass
class AggregateTrace:
    """Per-iteration median and quartiles across seeds of each metric."""

    sweep_id: str
    k: np.ndarray
    median: dict[str, np.ndarray]
    q25: dict[str, np.ndarray]
    q75: dict[str, np.ndarray]
    n_runs: int
    n_divergent: int

    def final_median(self, metric: str = "dist_to_opt") -> float:
        return float(self.median[metric][-1])

    def auc(self, metric: str = "dist_to_opt") -> float:
        """Trapezoidal area under the median curve over recorded iterations."""
        m = self.median[metric]
        if not np.all(np.isfinite(m)):
            return float("inf")
        return float(_trapezoid(m, self.k))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    theta_star: dict[str, np.ndarray]
    traces: dict[str, list[RunTrace]]
    aggregates: dict[str, AggregateTrace]
    points: list[SweepPoint] = field(default_factory=list)

    @property
    def divergence_counts(self) -> dict[str, int]:
        return {sid: agg.n_divergent for sid, agg in self.aggregates.items()}

    def summary(self, metric: str = "dist_to_opt") -> list[dict]:
        return [
            {
                "sweep_id": sid,
                "final_k": int(agg.k[-1]),
                "final_median": agg.final_median(metric),
                "auc_median": agg.auc(metric),
                "n_runs": agg.n_runs,
                "n_divergent": agg.n_divergent,
            }
            for sid, agg in self.aggregates.items()
        ]


def _quantile(values: np.ndarray, q: float) -> np.ndarray:
    # linear interpolation along axis 0 that keeps +inf instead of producing nan
    s = np.sort(values, axis=0)
    pos = q * (s.shape[0] - 1)
    lo, hi = int(np.floor(pos)), int(np.ceil(pos))
    frac = pos - lo
    a, b = s[lo], s[hi]
    with np.errstate(invalid="ignore"):
        out = a + (b - a) * frac
    return np.where(np.isinf(a) | np.isinf(b), np.where(frac > 0, b, a), out)


def aggregate(sweep_id: str, traces: list[RunTrace], exclude_divergent: bool = False) -> AggregateTrace:
    """Median and IQR across runs.

    Diverged runs count as ``+inf`` after their last finite record, unless
    ``exclude_divergent`` drops them.
    """
    n_div = sum(t.diverged for t in traces)
    used = [t for t in traces if not (exclude_divergent and t.diverged)]
    if not used:
        raise ValueError(f"{sweep_id}: no runs left to aggregate")
    k = record_iterations(used[0].T, used[0].stride)
    median, q25, q75 = {}, {}, {}
    for m in METRICS:
        table = np.full((len(used), len(k)), np.inf)
        for r, t in enumerate(used):
            table[r, : len(t)] = t.metric(m)
        median[m] = _quantile(table, 0.5)
        q25[m] = _quantile(table, 0.25)
        q75[m] = _quantile(table, 0.75)
    return AggregateTrace(sweep_id, k, median, q25, q75, n_runs=len(traces), n_divergent=n_div)


def problem_key(spec: ProblemSpec) -> str:
    """Short content hash identifying a problem spec (used to match oracle files)."""
    blob = json.dumps(dataclasses.asdict(spec), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _run_one(point: SweepPoint, seed: int, theta_star: np.ndarray) -> RunTrace:
    cfg = point.config
    instance = cfg.problem.build()
    return run(
        instance,
        cfg.graph.build(),
        cfg.noise.build(instance.dim),
        cfg.schedules,
        cfg.T,
        seed,
        point.clipping,
        theta_star=theta_star,
        stride=cfg.stride,
        x0=cfg.x0,
        override_schedule_check=cfg.override_schedule_check,
    )


def run_experiment(config: ExperimentConfig, jobs: int = 1, theta_star=None) -> ExperimentResult:
    """Run every (sweep point x seed) and aggregate per sweep point.

    ``theta_star`` optionally maps :func:`problem_key` to a precomputed
    optimum; missing ones are solved here. ``jobs > 1`` dispatches runs to a
    process pool with results identical to the sequential path.
    """
    points = config.sweep_points()
    known = dict(theta_star or {})
    theta_star = {}
    for p in points:
        key = problem_key(p.config.problem)
        if key not in theta_star:
            if key in known:
                theta_star[key] = np.asarray(known[key], dtype=float)
            else:
                theta_star[key] = solve_centralized(p.config.problem.build(), tol=config.oracle_tol)

    tasks = [(p, s, theta_star[problem_key(p.config.problem)]) for p in points for s in config.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one, *t) for t in tasks]
            results = [f.result() for f in futures]
    else:
        results = [_run_one(*t) for t in tasks]

    traces: dict[str, list[RunTrace]] = {p.sweep_id: [] for p in points}
    for (p, _, _), trace in zip(tasks, results):
        traces[p.sweep_id].append(trace)
    aggregates = {
        sid: aggregate(sid, ts, config.exclude_divergent) for sid, ts in traces.items()
    }
    for sid, agg in aggregates.items():
        if agg.n_divergent:
            log.warning("%s: %d of %d runs diverged", sid, agg.n_divergent, agg.n_runs)
    return ExperimentResult(config, theta_star, traces, aggregates, points)
