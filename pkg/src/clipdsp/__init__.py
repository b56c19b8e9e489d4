"""Clipped distributed stochastic subgradient projection under heavy-tailed noise."""

__version__ = "0.1.0"

from .graph import (  # noqa: E402
    AdjacencyMatrix,
    ContractionBound,
    build_graph,
    consensus_contraction_bound,
    matrix_power_deviation,
    mix,
    validate_doubly_stochastic,
)
from .noise import NoiseModel, estimate_delta_moment, sample_noise, sample_pareto  # noqa: E402
from .optimizer import RunTrace, SchedulePair, agent_step, clip, run, validate_schedules  # noqa: E402
from .problem import (  # noqa: E402
    ConstraintSet,
    LogisticRidgeData,
    build_paper_instance,
    global_objective,
    gradient_bound,
    project,
    solve_centralized,
)
from .experiment import ExperimentConfig, run_experiment  # noqa: E402
