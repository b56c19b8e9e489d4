"""
TOML experiment configs.

Every table and key is optional; missing values take the defaults of the
six-agent logistic regression preset. The README lists every key.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from fractions import Fraction
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .experiment import SWEEP_PARAMS, ExperimentConfig, GraphSpec, NoiseSpec, ProblemSpec
from .optimizer import SchedulePair

SECTIONS = {
    "problem": {"preset", "mu", "omega", "bound", "labels", "features", "centers", "weight"},
    "graph": {"preset", "n", "edges", "weights", "edge_count"},
    "noise": {"kind", "tail_index", "w_min", "sigma"},
    "schedules": {"alpha_coeff", "alpha_exp", "tau_coeff", "tau_exp", "delta"},
    "run": {
        "T", "seeds", "master_seed", "stride", "clipping", "x0", "oracle_tol",
        "exclude_divergent", "override_schedule_check",
    },
    "sweep": {"param", "values"},
    "output": {"dir"},
}


def preset_path(name: str) -> Path:
    return Path(str(resources.files("clipdsp") / "presets" / f"{name}.toml"))


def available_presets() -> list[str]:
    folder = resources.files("clipdsp") / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".toml"))


def resolve_config_path(arg: str) -> Path:
    """A file path, or the name of a bundled preset such as ``fig2``."""
    path = Path(arg)
    if path.exists() or arg not in available_presets():
        return path
    return preset_path(arg)


def load_config(path) -> tuple[ExperimentConfig, dict]:
    """Parse a config file into an :class:`ExperimentConfig` and its output table."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", str(path)) from exc
    return parse_config(text)


def parse_config(text: str) -> tuple[ExperimentConfig, dict]:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        loc = None
        lineno = getattr(exc, "lineno", None)
        if lineno is not None:
            loc = f"line {lineno}, column {exc.colno}"
        raise ConfigError(getattr(exc, "msg", str(exc)), loc) from exc

    for section, value in raw.items():
        if section not in SECTIONS:
            raise ConfigError("unknown table", section)
        if not isinstance(value, dict):
            raise ConfigError("expected a table", section)
        for key in value:
            if key not in SECTIONS[section]:
                raise ConfigError("unknown key", f"{section}.{key}")

    fields = _Fields(raw)
    problem = _problem(fields)
    graph = _graph(fields)
    noise = NoiseSpec(
        kind=fields.choice("noise.kind", ("shifted_pareto", "gaussian", "zero"), "shifted_pareto"),
        gamma=fields.number("noise.tail_index", 2.0, lo=1.0, strict=True),
        w_min=fields.number("noise.w_min", 1.0, lo=0.0, strict=True),
        sigma=fields.number("noise.sigma", 1.0, lo=0.0),
    )
    try:
        schedules = SchedulePair(
            alpha_coeff=fields.number("schedules.alpha_coeff", 10.0),
            alpha_exp=fields.number("schedules.alpha_exp", 1.0),
            tau_coeff=fields.number("schedules.tau_coeff", 10.0),
            tau_exp=fields.number("schedules.tau_exp", 0.4),
            delta=fields.number("schedules.delta", 1.5),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), "schedules") from exc

    seeds = fields.integer("run.seeds", 20, lo=1)
    clipping = fields.get("run.clipping", [True])
    if isinstance(clipping, bool):
        clipping = [clipping]
    if not clipping or not all(isinstance(c, bool) for c in clipping):
        raise ConfigError("expected a boolean or a nonempty list of booleans", "run.clipping")
    x0 = fields.get("run.x0", 0.0)
    if isinstance(x0, list):
        x0 = tuple(float(v) for v in x0)
    elif isinstance(x0, (int, float)) and not isinstance(x0, bool):
        x0 = float(x0)
    else:
        raise ConfigError("expected a number or a list of numbers", "run.x0")

    sweep_param = fields.get("sweep.param", None)
    sweep_values: tuple = ()
    if sweep_param is not None:
        if sweep_param not in SWEEP_PARAMS:
            raise ConfigError(f"unknown sweep parameter {sweep_param!r}", "sweep.param")
        sweep_values = parse_sweep_values(sweep_param, fields.get("sweep.values", None))

    config = ExperimentConfig(
        problem=problem,
        graph=graph,
        noise=noise,
        schedules=schedules,
        T=fields.integer("run.T", 10_000, lo=1),
        n_seeds=seeds,
        master_seed=fields.integer("run.master_seed", 0),
        stride=fields.integer("run.stride", 10, lo=1),
        clipping=tuple(clipping),
        sweep_param=sweep_param,
        sweep_values=sweep_values,
        x0=x0,
        override_schedule_check=fields.boolean("run.override_schedule_check", False),
        exclude_divergent=fields.boolean("run.exclude_divergent", False),
        oracle_tol=fields.number("run.oracle_tol", 1e-10, lo=0.0, strict=True),
    )
    return config, dict(raw.get("output", {}))


def parse_sweep_values(param: str, values) -> tuple:
    """Coerce sweep values: booleans (or ``on``/``off``) for clipping, floats otherwise."""
    if isinstance(values, str):
        values = [v.strip() for v in values.split(",") if v.strip()]
    if not isinstance(values, list) or not values:
        raise ConfigError("expected a nonempty list", "sweep.values")
    out = []
    for v in values:
        if param == "clipping":
            if isinstance(v, bool):
                out.append(v)
            elif str(v).lower() in ("on", "true", "1"):
                out.append(True)
            elif str(v).lower() in ("off", "false", "0"):
                out.append(False)
            else:
                raise ConfigError(f"cannot read {v!r} as on/off", "sweep.values")
        else:
            try:
                out.append(float(v))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"cannot read {v!r} as a number", "sweep.values") from exc
    if len(set(out)) != len(out):
        raise ConfigError("values must be distinct", "sweep.values")
    return tuple(out)


class _Fields:
    def __init__(self, raw):
        self.raw = raw

    def get(self, dotted, default):
        section, key = dotted.split(".")
        return self.raw.get(section, {}).get(key, default)

    def has(self, dotted):
        section, key = dotted.split(".")
        return key in self.raw.get(section, {})

    def number(self, dotted, default, lo=None, strict=False):
        v = self.get(dotted, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"expected a number, got {v!r}", dotted)
        v = float(v)
        if lo is not None and (v <= lo if strict else v < lo):
            raise ConfigError(f"must be {'>' if strict else '>='} {lo:g}, got {v:g}", dotted)
        return v

    def integer(self, dotted, default, lo=None):
        v = self.get(dotted, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"expected an integer, got {v!r}", dotted)
        if lo is not None and v < lo:
            raise ConfigError(f"must be >= {lo}, got {v}", dotted)
        return v

    def boolean(self, dotted, default):
        v = self.get(dotted, default)
        if not isinstance(v, bool):
            raise ConfigError(f"expected true or false, got {v!r}", dotted)
        return v

    def choice(self, dotted, options, default):
        v = self.get(dotted, default)
        if v not in options:
            raise ConfigError(f"expected one of {', '.join(options)}; got {v!r}", dotted)
        return v

    def matrix(self, dotted, allow_fractions=False):
        v = self.get(dotted, None)
        if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
            raise ConfigError("expected a nonempty list of lists", dotted)
        try:
            return tuple(tuple(_real(x, allow_fractions) for x in row) for row in v)
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError(str(exc), dotted) from exc


def _real(x, allow_fractions):
    if isinstance(x, bool):
        raise TypeError(f"expected a number, got {x!r}")
    if isinstance(x, str) and allow_fractions:
        return float(Fraction(x))
    if not isinstance(x, (int, float)):
        raise TypeError(f"expected a number, got {x!r}")
    return float(x)


def _problem(f: _Fields) -> ProblemSpec:
    kind = f.choice("problem.preset", ("paper-v", "logistic-ridge", "quadratic"), "paper-v")
    spec = ProblemSpec(
        kind=kind,
        mu=f.number("problem.mu", 1.0, lo=0.0),
        omega=f.choice("problem.omega", ("box", "ball"), "box"),
        bound=f.number("problem.bound", 1.0, lo=0.0, strict=True),
        weight=f.number("problem.weight", 1.0, lo=0.0, strict=True),
    )
    if kind == "logistic-ridge":
        labels = f.get("problem.labels", None)
        if not isinstance(labels, list) or not all(v in (1, -1) and not isinstance(v, bool) for v in labels):
            raise ConfigError("expected a list of +1/-1 labels", "problem.labels")
        features = f.matrix("problem.features")
        if len(features) != len(labels) or len({len(r) for r in features}) != 1:
            raise ConfigError("need one equal-length feature row per label", "problem.features")
        spec = dataclasses.replace(spec, labels=tuple(float(v) for v in labels), features=features)
    elif kind == "quadratic":
        centers = f.matrix("problem.centers")
        if len({len(r) for r in centers}) != 1:
            raise ConfigError("center rows must have equal length", "problem.centers")
        spec = dataclasses.replace(spec, centers=centers)
    return spec


def _graph(f: _Fields) -> GraphSpec:
    preset = f.choice("graph.preset", ("paper-v", "single", "edges", "matrix"), "paper-v")
    q = f.get("graph.edge_count", None)
    if q is not None:
        q = f.integer("graph.edge_count", None, lo=1)
    if preset == "edges":
        n = f.integer("graph.n", None, lo=2) if f.has("graph.n") else None
        if n is None:
            raise ConfigError("required for an edge-list graph", "graph.n")
        edges = f.matrix("graph.edges", allow_fractions=True)
        for idx, e in enumerate(edges):
            if len(e) != 3 or not (float(e[0]).is_integer() and float(e[1]).is_integer()):
                raise ConfigError("each edge is [i, j, weight] with integer i, j", f"graph.edges[{idx}]")
        edges = tuple((int(i), int(j), w) for i, j, w in edges)
        return GraphSpec(preset="edges", n=n, edges=edges, edge_count_q=q)
    if preset == "matrix":
        weights = f.matrix("graph.weights", allow_fractions=True)
        return GraphSpec(preset="matrix", n=len(weights), weights=weights, edge_count_q=q)
    return GraphSpec(preset=preset, edge_count_q=q)


def canonical(config: ExperimentConfig) -> dict:
    return dataclasses.asdict(config)


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form; insensitive to formatting and comments."""
    blob = json.dumps(canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
