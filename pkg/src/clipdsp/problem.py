"""
Constrained convex problem instances ``min_{theta in Omega} sum_i f_i(theta)``,
Euclidean projections, gradient bounds and a centralized reference solver.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, NoConvergence, Unbounded
from .graph import PAPER_EDGES, AdjacencyMatrix, build_graph

PAPER_LABELS = (1.0, -1.0, 1.0, -1.0, 1.0, -1.0)
PAPER_FEATURES = (
    (0.462, 0.798, 0.0, 0.335, 0.163, 0.102),
    (0.167, 0.309, 0.355, 0.482, 0.375, 0.614),
    (0.155, 0.664, 0.021, 0.507, 0.316, 0.422),
    (0.094, 0.133, 0.538, 0.651, 0.211, 0.465),
    (0.568, 0.58, 0.055, 0.025, 0.11, 0.57),
    (0.07, 0.3, 0.683, 0.38, 0.493, 0.225),
)


@dataclass(frozen=True)
class ConstraintSet:
    """A box ``lower <= x <= upper`` or a Euclidean ball ``||x - center|| <= radius``."""

    kind: str
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind == "box":
            lo = np.asarray(self.lower, dtype=float)
            hi = np.asarray(self.upper, dtype=float)
            if lo.shape != hi.shape or lo.ndim != 1:
                raise DimensionMismatch("box bounds must be 1-d and of equal length")
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise Unbounded("box bounds must be finite")
            if np.any(lo > hi):
                raise ValueError("box is empty (lower > upper)")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        elif self.kind == "ball":
            c = np.asarray(self.center, dtype=float)
            if c.ndim != 1:
                raise DimensionMismatch("ball center must be 1-d")
            if self.radius is None or not (0 < self.radius < math.inf):
                raise Unbounded("ball radius must be positive and finite")
            object.__setattr__(self, "center", c)
        else:
            raise ValueError(f"unknown constraint kind {self.kind!r}")

    @classmethod
    def box(cls, dim: int, bound: float = 1.0) -> "ConstraintSet":
        return cls("box", lower=np.full(dim, -bound), upper=np.full(dim, bound))

    @classmethod
    def ball(cls, dim: int, radius: float = 1.0, center=None) -> "ConstraintSet":
        c = np.zeros(dim) if center is None else center
        return cls("ball", center=c, radius=radius)

    @property
    def dim(self) -> int:
        return len(self.lower) if self.kind == "box" else len(self.center)

    def max_norm(self) -> float:
        """``max_{x in Omega} ||x||``."""
        if self.kind == "box":
            return float(np.linalg.norm(np.maximum(np.abs(self.lower), np.abs(self.upper))))
        return float(np.linalg.norm(self.center) + self.radius)

    def max_distance(self, point) -> float:
        """``max_{x in Omega} ||x - point||``."""
        p = np.asarray(point, dtype=float)
        if self.kind == "box":
            far = np.maximum(np.abs(self.lower - p), np.abs(self.upper - p))
            return float(np.linalg.norm(far))
        return float(np.linalg.norm(self.center - p) + self.radius)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))
        return bool(np.all(np.linalg.norm(x - self.center, axis=-1) <= self.radius + tol))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform samples from Omega, shape ``(size, dim)``."""
        if self.kind == "box":
            return rng.uniform(self.lower, self.upper, size=(size, self.dim))
        d = self.dim
        direction = rng.standard_normal((size, d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        r = self.radius * rng.random(size) ** (1.0 / d)
        return self.center + direction * r[:, None]


def project(omega: ConstraintSet, x) -> np.ndarray:
    """Euclidean projection onto ``omega``.

    Accepts a single vector or a stack of row vectors ``(m, dim)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != omega.dim:
        raise DimensionMismatch(f"expected dimension {omega.dim}, got {x.shape[-1]}")
    if omega.kind == "box":
        return np.clip(x, omega.lower, omega.upper)
    offset = x - omega.center
    norm = np.linalg.norm(offset, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norm > omega.radius, omega.radius / norm, 1.0)
    return omega.center + offset * scale


class ProblemInstance:
    """Sum of local objectives ``f_i`` over a shared constraint set.

    Subclasses provide ``local_objective``, ``local_gradient``,
    ``gradient_bound`` and ``smoothness`` (a Lipschitz constant of the global
    gradient). ``mu_modulus`` is a lower bound on the Hessian of every ``f_i``.
    """

    n_agents: int
    dim: int
    omega: ConstraintSet
    mu_modulus: float

    def local_objective(self, i: int, theta) -> float:
        raise NotImplementedError

    def local_gradient(self, i: int, theta) -> np.ndarray:
        raise NotImplementedError

    def gradient_bound(self) -> float:
        raise NotImplementedError

    def smoothness(self) -> float:
        raise NotImplementedError

    @property
    def objectives(self):
        return [functools.partial(self.local_objective, i) for i in range(self.n_agents)]

    @property
    def gradients_fns(self):
        return [functools.partial(self.local_gradient, i) for i in range(self.n_agents)]

    def gradients(self, X) -> np.ndarray:
        """Row ``i`` is ``grad f_i(X[i])``."""
        return np.stack([self.local_gradient(i, x) for i, x in enumerate(X)])

    def objective(self, theta) -> float:
        return float(sum(self.local_objective(i, theta) for i in range(self.n_agents)))

    def gradient(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return self.gradients(np.broadcast_to(theta, (self.n_agents, self.dim))).sum(axis=0)


@dataclass(frozen=True)
class LogisticRidgeData:
    labels: np.ndarray
    features: np.ndarray
    mu_ridge: float

    def __post_init__(self):
        a = np.asarray(self.labels, dtype=float)
        q = np.asarray(self.features, dtype=float)
        if q.ndim != 2 or a.shape != (q.shape[0],):
            raise DimensionMismatch("need one label per feature row")
        if not np.all(np.isin(a, (-1.0, 1.0))):
            raise ValueError("labels must be +1 or -1")
        if not np.all(np.isfinite(q)):
            raise ValueError("features must be finite")
        if self.mu_ridge < 0:
            raise ValueError("mu_ridge must be nonnegative")
        object.__setattr__(self, "labels", a)
        object.__setattr__(self, "features", q)


def local_objective(data: LogisticRidgeData, i: int, theta) -> float:
    """``f_i = (1/N) log(1 + exp(-a_i q_i^T theta)) + (mu/(2N)) theta^T theta``.

    With N = 6 these are the 1/6 and mu/12 weights of the six-agent instance.
    """
    n = len(data.labels)
    theta = np.asarray(theta, dtype=float)
    margin = data.labels[i] * (data.features[i] @ theta)
    return float(np.logaddexp(0.0, -margin) / n + data.mu_ridge / (2 * n) * (theta @ theta))


def local_gradient(data: LogisticRidgeData, i: int, theta) -> np.ndarray:
    n = len(data.labels)
    theta = np.asarray(theta, dtype=float)
    a, q = data.labels[i], data.features[i]
    return -a * expit(-a * (q @ theta)) / n * q + data.mu_ridge / n * theta


class LogisticRidgeProblem(ProblemInstance):
    def __init__(self, data: LogisticRidgeData, omega: ConstraintSet):
        if omega.dim != data.features.shape[1]:
            raise DimensionMismatch("constraint set and features disagree on dimension")
        self.data = data
        self.omega = omega
        self.n_agents = len(data.labels)
        self.dim = data.features.shape[1]
        # Hessian of the ridge term; the logistic part only adds curvature
        self.mu_modulus = data.mu_ridge / self.n_agents

    def local_objective(self, i, theta):
        return local_objective(self.data, i, theta)

    def local_gradient(self, i, theta):
        return local_gradient(self.data, i, theta)

    def gradients(self, X):
        d = self.data
        n = self.n_agents
        margins = d.labels * np.einsum("ij,ij->i", d.features, X)
        weights = -d.labels * expit(-margins) / n
        return weights[:, None] * d.features + (d.mu_ridge / n) * X

    def objective(self, theta):
        d = self.data
        theta = np.asarray(theta, dtype=float)
        margins = d.labels * (d.features @ theta)
        return float(np.logaddexp(0.0, -margins).sum() / self.n_agents + d.mu_ridge / 2 * (theta @ theta))

    def gradient_bound(self):
        # sigma < 1 bounds the logistic part by ||q_i||/N
        n = self.n_agents
        logistic = np.linalg.norm(self.data.features, axis=1).max() / n
        return float(logistic + self.data.mu_ridge / n * self.omega.max_norm())

    def smoothness(self):
        # sigma' <= 1/4 for every logistic term, plus the summed ridge curvature
        q_sq = (np.linalg.norm(self.data.features, axis=1) ** 2).sum()
        return float(q_sq / (4 * self.n_agents) + self.data.mu_ridge)


class QuadraticProblem(ProblemInstance):
    """``f_i(theta) = weight_i * ||theta - center_i||^2``."""

    def __init__(self, centers, omega: ConstraintSet, weights=1.0):
        c = np.atleast_2d(np.asarray(centers, dtype=float))
        if c.shape[1] != omega.dim:
            raise DimensionMismatch("centers and constraint set disagree on dimension")
        w = np.broadcast_to(np.asarray(weights, dtype=float), (c.shape[0],)).copy()
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        self.centers = c
        self.weights = w
        self.omega = omega
        self.n_agents, self.dim = c.shape
        self.mu_modulus = float(2 * w.min())

    def local_objective(self, i, theta):
        diff = np.asarray(theta, dtype=float) - self.centers[i]
        return float(self.weights[i] * (diff @ diff))

    def local_gradient(self, i, theta):
        return 2 * self.weights[i] * (np.asarray(theta, dtype=float) - self.centers[i])

    def gradients(self, X):
        return 2 * self.weights[:, None] * (X - self.centers)

    def gradient_bound(self):
        return float(max(2 * w * self.omega.max_distance(c) for w, c in zip(self.weights, self.centers)))

    def smoothness(self):
        return float(2 * self.weights.sum())

    def minimizer(self) -> np.ndarray:
        """Closed form: project the weighted centroid (exact for boxes and balls)."""
        centroid = self.weights @ self.centers / self.weights.sum()
        return project(self.omega, centroid)


def gradient_bound(instance: ProblemInstance) -> float:
    """Certified ``C0 >= max_i sup_{theta in Omega} ||grad f_i(theta)||``."""
    if getattr(instance, "omega", None) is None:
        raise Unbounded("problem has no constraint set; gradients are not bounded")
    return instance.gradient_bound()


def global_objective(instance: ProblemInstance, theta) -> float:
    return instance.objective(theta)


def fixed_point_residual(instance: ProblemInstance, theta, step: float) -> float:
    theta = np.asarray(theta, dtype=float)
    return float(np.linalg.norm(theta - project(instance.omega, theta - step * instance.gradient(theta))))


@dataclass(frozen=True)
class OracleInfo:
    residual: float
    iterations: int
    step: float
    tol: float


def projected_gradient_descent(instance: ProblemInstance, x0, steps):
    """Yield the iterates ``x_{k+1} = P[x_k - steps[k] grad f(x_k)]`` of the global objective."""
    x = project(instance.omega, np.asarray(x0, dtype=float))
    for step in steps:
        x = project(instance.omega, x - step * instance.gradient(x))
        yield x


def solve_centralized(
    instance: ProblemInstance,
    tol: float = 1e-10,
    max_iter: int = 10**6,
    x0=None,
    full_output: bool = False,
):
    """Noise-free projected gradient descent with step ``1/L`` to a fixed point.

    Stops once ``||x - P[x - grad f(x)/L]|| <= tol``.

    Returns
    -------
    theta : ndarray
        Approximate minimizer over Omega.
    info : OracleInfo
        Only when ``full_output`` is true.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    step = 1.0 / instance.smoothness()
    x = project(instance.omega, np.zeros(instance.dim) if x0 is None else x0)
    for it in range(max_iter + 1):
        x_new = project(instance.omega, x - step * instance.gradient(x))
        residual = float(np.linalg.norm(x - x_new))
        if residual <= tol:
            break
        x = x_new
    else:
        raise NoConvergence(f"residual {residual:.3g} > {tol:g} after {max_iter} iterations")
    if full_output:
        return x, OracleInfo(residual=residual, iterations=it, step=step, tol=tol)
    return x


def paper_data(mu: float = 1.0) -> LogisticRidgeData:
    return LogisticRidgeData(
        labels=np.array(PAPER_LABELS), features=np.array(PAPER_FEATURES), mu_ridge=mu
    )


def build_paper_instance(mu: float = 1.0, omega: str = "box") -> tuple[LogisticRidgeProblem, AdjacencyMatrix]:
    """Regularized logistic regression over the six-agent "V" network.

    ``omega`` is ``"box"`` for ``[-1, 1]^6`` or ``"ball"`` for the unit ball.
    """
    dim = len(PAPER_FEATURES[0])
    constraint = ConstraintSet.box(dim) if omega == "box" else ConstraintSet.ball(dim)
    return LogisticRidgeProblem(paper_data(mu), constraint), build_graph(6, PAPER_EDGES)
