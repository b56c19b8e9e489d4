"""
Zero-mean gradient noise, including heavy-tailed shifted Pareto noise whose
variance is infinite for tail index <= 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MomentDiverges

KINDS = ("shifted_pareto", "gaussian", "zero")


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    dim: int
    gamma: float = 2.0
    w_min: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.kind == "shifted_pareto" and not (self.gamma > 1 and self.w_min > 0):
            raise ValueError("shifted Pareto needs gamma > 1 and w_min > 0")
        if self.kind == "gaussian" and self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def shift(self) -> float:
        """Mean of the unshifted Pareto variable, ``gamma w_min / (gamma - 1)``."""
        return self.gamma * self.w_min / (self.gamma - 1)

    @property
    def finite_variance(self) -> bool:
        return self.kind != "shifted_pareto" or self.gamma > 2


def pareto_from_uniform(u, gamma: float, w_min: float):
    """Inverse CDF of the Pareto law, ``w_min * u**(-1/gamma)``."""
    return w_min * np.asarray(u, dtype=float) ** (-1.0 / gamma)


def pareto_cdf(w, gamma: float, w_min: float):
    w = np.asarray(w, dtype=float)
    return np.where(w > w_min, 1.0 - (w_min / np.maximum(w, w_min)) ** gamma, 0.0)


def sample_pareto(rng: np.random.Generator, gamma: float, w_min: float, size=None):
    """Pareto variates with density ``gamma w_min^gamma / w^(gamma+1)`` on ``(w_min, inf)``."""
    if not (gamma > 1 and w_min > 0):
        raise ValueError("need gamma > 1 and w_min > 0")
    # U in (0, 1]: excluding 0 keeps samples finite
    u = 1.0 - rng.random(size)
    return pareto_from_uniform(u, gamma, w_min)


def sample_noise(model: NoiseModel, rng: np.random.Generator, size=None) -> np.ndarray:
    """One noise vector, or ``size`` independent ones stacked as rows."""
    shape = (model.dim,) if size is None else (size, model.dim)
    if model.kind == "zero":
        return np.zeros(shape)
    if model.kind == "gaussian":
        return model.sigma * rng.standard_normal(shape)
    return sample_pareto(rng, model.gamma, model.w_min, shape) - model.shift


def estimate_delta_moment(
    model: NoiseModel,
    delta: float,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 10**6,
) -> float:
    """Monte-Carlo estimate of ``E ||xi||^delta``, accumulated in chunks."""
    if not 1 < delta <= 2:
        raise ValueError("delta must lie in (1, 2]")
    if model.kind == "shifted_pareto" and delta >= model.gamma:
        raise MomentDiverges(f"E||xi||^{delta} is infinite for tail index {model.gamma}")
    if model.kind == "zero":
        return 0.0
    total = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        xi = sample_noise(model, rng, m)
        total += float((np.linalg.norm(xi, axis=1) ** delta).sum())
        done += m
    return total / n_samples
