"""Per-iteration run metrics."""

import numpy as np

from .errors import DimensionMismatch


def distance_to_optimum(states, theta_star) -> float:
    """``sum_i ||x_i - theta*||``."""
    x = np.atleast_2d(np.asarray(states, dtype=float))
    t = np.asarray(theta_star, dtype=float)
    if x.shape[1] != t.shape[-1]:
        raise DimensionMismatch(f"states have dimension {x.shape[1]}, optimum {t.shape[-1]}")
    return float(np.linalg.norm(x - t, axis=1).sum())


def consensus_error(states) -> float:
    """``sum_i ||x_i - mean_j x_j||``."""
    x = np.atleast_2d(np.asarray(states, dtype=float))
    return float(np.linalg.norm(x - x.mean(axis=0), axis=1).sum())
