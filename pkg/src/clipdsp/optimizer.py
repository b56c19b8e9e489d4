"""
Clipped distributed stochastic subgradient projection.

Each iteration every agent averages its neighbours' states, evaluates its
local gradient plus noise at the average, clips the result to norm ``tau_k``,
takes a step of size ``alpha_k`` and projects back onto the constraint set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, IdentityViolation, ScheduleInvalid
from .graph import AdjacencyMatrix
from .metrics import consensus_error, distance_to_optimum
from .noise import NoiseModel, sample_noise
from .problem import ConstraintSet, ProblemInstance, gradient_bound, project, solve_centralized

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SchedulePair:
    """Power-law schedules ``alpha_k = a (k+1)^-p`` and ``tau_k = c (k+1)^q``.

    ``delta`` is the order of the noise moment assumed bounded.
    """

    alpha_coeff: float
    alpha_exp: float
    tau_coeff: float
    tau_exp: float
    delta: float = 1.5

    def __post_init__(self):
        if self.alpha_coeff <= 0 or self.tau_coeff <= 0:
            raise ValueError("schedule coefficients must be positive")
        if self.alpha_exp < 0 or self.tau_exp < 0:
            raise ValueError("schedule exponents must be nonnegative")
        if not 1 < self.delta <= 2:
            raise ValueError("delta must lie in (1, 2]")

    def alpha(self, k):
        return self.alpha_coeff * (np.asarray(k, dtype=float) + 1) ** -self.alpha_exp

    def tau(self, k):
        return self.tau_coeff * (np.asarray(k, dtype=float) + 1) ** self.tau_exp


@dataclass
class ConditionCheck:
    name: str
    passed: bool
    inequalities: list[str]


@dataclass
class ScheduleReport:
    schedules: SchedulePair
    c0: float
    checks: list[ConditionCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> ConditionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _ineq(label, lhs, op, rhs):
    ok = {">": lhs > rhs, ">=": lhs >= rhs, "<=": lhs <= rhs}[op]
    return ok, f"{label}: {lhs:.6g} {op} {rhs:.6g} [{'ok' if ok else 'FAIL'}]"


def validate_schedules(s: SchedulePair, c0: float) -> ScheduleReport:
    """Closed-form check of the convergence conditions for power-law schedules.

    c1: sum alpha = inf and sum alpha^2 < inf.
    c2: tau_k >= 2 C0 for all k and alpha_k tau_k -> 0.
    c3: sum alpha^2 tau^2 < inf and sum alpha tau^(2 - 2 delta) < inf.
    """
    p, q, c, d = s.alpha_exp, s.tau_exp, s.tau_coeff, s.delta
    report = ScheduleReport(schedules=s, c0=c0)
    groups = {
        "c1": [
            _ineq("sum alpha_k diverges (p <= 1)", p, "<=", 1.0),
            _ineq("sum alpha_k^2 converges (2p > 1)", 2 * p, ">", 1.0),
        ],
        "c2": [
            # tau is non-decreasing, so tau_0 = c is its minimum
            _ineq("tau_k >= 2 C0 (c >= 2 C0)", c, ">=", 2 * c0),
            _ineq("alpha_k tau_k -> 0 (p > q)", p, ">", q),
        ],
        "c3": [
            _ineq("sum alpha_k^2 tau_k^2 converges (2p - 2q > 1)", 2 * p - 2 * q, ">", 1.0),
            _ineq(
                "sum alpha_k tau_k^(2-2delta) converges (p + (2delta - 2) q > 1)",
                p + (2 * d - 2) * q,
                ">",
                1.0,
            ),
        ],
    }
    for name, results in groups.items():
        report.checks.append(
            ConditionCheck(name, all(ok for ok, _ in results), [text for _, text in results])
        )
    return report


def clip(g, tau: float) -> np.ndarray:
    """``min(1, tau / ||g||) g``; a zero vector is returned unchanged."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    g = np.asarray(g, dtype=float)
    norm = np.linalg.norm(g)
    if norm <= tau:
        return g.copy()
    return g * (tau / norm)


def clip_rows(G: np.ndarray, tau: float) -> np.ndarray:
    """Clip each row of ``G`` independently."""
    norms = np.linalg.norm(G, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(norms > tau, tau / norms, 1.0)
    return G * factor[:, None]


def agent_step(v_i, grad, noise, alpha: float, tau: float, omega: ConstraintSet) -> np.ndarray:
    """``P_Omega[v_i - alpha * clip(grad + noise, tau)]``."""
    v_i, grad, noise = (np.asarray(a, dtype=float) for a in (v_i, grad, noise))
    if not (v_i.shape == grad.shape == noise.shape == (omega.dim,)):
        raise DimensionMismatch("state, gradient and noise must share the problem dimension")
    return project(omega, v_i - alpha * clip(grad + noise, tau))


def clipping_bias_bound(nu: float, delta: float, tau) -> float:
    """``(2 nu)^delta tau^(1 - delta)``."""
    return (2 * nu) ** delta * np.asarray(tau, dtype=float) ** (1 - delta)


def estimate_clipping_bias(
    grad,
    model: NoiseModel,
    tau: float,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 10**6,
) -> tuple[np.ndarray, float]:
    """Monte-Carlo mean of ``clip(grad + xi, tau) - grad``.

    Returns the bias vector and the standard error of its norm (root sum of
    the per-coordinate standard errors squared).
    """
    grad = np.asarray(grad, dtype=float)
    total = np.zeros_like(grad)
    total_sq = np.zeros_like(grad)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        b = clip_rows(grad + sample_noise(model, rng, m), tau) - grad
        total += b.sum(axis=0)
        total_sq += (b * b).sum(axis=0)
        done += m
    mean = total / n_samples
    var = np.maximum(total_sq / n_samples - mean**2, 0.0) * n_samples / (n_samples - 1)
    return mean, float(np.sqrt((var / n_samples).sum()))


@dataclass
class RunTrace:
    """Metrics recorded every ``stride`` iterations (and at the last one).

    ``k[r]`` is the number of completed updates when record ``r`` was taken.
    A diverged run is truncated at the last finite record.
    """

    k: np.ndarray
    dist_to_opt: np.ndarray
    consensus_err: np.ndarray
    subopt_gap: np.ndarray
    final_states: np.ndarray
    stride: int
    T: int
    seed: int
    clipping: bool
    diverged: bool = False
    diverged_at: int | None = None

    METRICS = ("dist_to_opt", "consensus_err", "subopt_gap")

    def __len__(self):
        return len(self.k)

    def metric(self, name: str) -> np.ndarray:
        if name not in self.METRICS:
            raise KeyError(name)
        return getattr(self, name)

    def at(self, k: int, metric: str = "dist_to_opt") -> float:
        idx = np.nonzero(self.k == k)[0]
        if not idx.size:
            raise KeyError(f"iteration {k} was not recorded")
        return float(self.metric(metric)[idx[0]])


def record_iterations(T: int, stride: int) -> np.ndarray:
    """``stride, 2 stride, ...`` capped at ``T``: ``ceil(T / stride)`` entries ending at ``T``."""
    ks = np.arange(stride, T + stride, stride)
    ks[-1] = T
    return ks


def run(
    instance: ProblemInstance,
    graph: AdjacencyMatrix,
    noise_model: NoiseModel,
    schedules: SchedulePair,
    T: int,
    seed: int,
    clipping: bool = True,
    *,
    theta_star=None,
    stride: int = 10,
    x0=None,
    override_schedule_check: bool = False,
    check_identities: bool = False,
) -> RunTrace:
    """Simulate ``T`` synchronous iterations of all agents.

    Parameters
    ----------
    clipping : bool
        False gives the unclipped distributed stochastic subgradient
        projection baseline.
    theta_star : ndarray, optional
        Reference optimum; solved with :func:`solve_centralized` when omitted.
    x0 : array_like, optional
        Initial state, shared by all agents (shape ``(dim,)``) or per agent
        (``(n, dim)``); projected onto Omega. Defaults to zero.
    check_identities : bool
        Verify every iteration that the change of the state average equals
        the average post-mixing displacement.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n, dim = instance.n_agents, instance.dim
    if graph.n != n:
        raise DimensionMismatch(f"graph has {graph.n} agents, problem has {n}")
    if noise_model.dim != dim:
        raise DimensionMismatch(f"noise dimension {noise_model.dim} != problem dimension {dim}")
    report = validate_schedules(schedules, gradient_bound(instance))
    if not report.passed:
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        if not override_schedule_check:
            raise ScheduleInvalid(f"schedules violate {failed}")
        log.warning("running with schedules that violate %s", failed)

    if theta_star is None:
        theta_star = solve_centralized(instance)
    theta_star = np.asarray(theta_star, dtype=float)
    f_star = instance.objective(theta_star)

    omega = instance.omega
    start = np.zeros(dim) if x0 is None else np.asarray(x0, dtype=float)
    X = project(omega, np.broadcast_to(start, (n, dim)).astype(float))
    W = graph.weights
    rng = np.random.default_rng(seed)
    alphas = schedules.alpha(np.arange(T))
    taus = schedules.tau(np.arange(T))

    ks = record_iterations(T, stride)
    out = np.zeros((3, len(ks)))
    n_rec = 0
    diverged_at = None

    # overflow is detected below and reported as divergence, not as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(T):
            V = W @ X
            G = instance.gradients(V) + sample_noise(noise_model, rng, n)
            if clipping:
                G = clip_rows(G, taus[k])
            X_new = project(omega, V - alphas[k] * G)
            if not np.all(np.isfinite(X_new)):
                diverged_at = k + 1
                log.info("run seed=%d diverged at iteration %d", seed, k + 1)
                break
            if check_identities:
                lhs = X_new.mean(axis=0) - X.mean(axis=0)
                rhs = (X_new - V).mean(axis=0)
                if np.abs(lhs - rhs).max() > 1e-12:
                    raise IdentityViolation(f"average update identity off by {np.abs(lhs - rhs).max():.3g} at k={k}")
            X = X_new
            if k + 1 == ks[n_rec]:
                y = X.mean(axis=0)
                out[0, n_rec] = distance_to_optimum(X, theta_star)
                out[1, n_rec] = consensus_error(X)
                out[2, n_rec] = max(instance.objective(y) - f_star, 0.0)
                n_rec += 1

    return RunTrace(
        k=ks[:n_rec],
        dist_to_opt=out[0, :n_rec],
        consensus_err=out[1, :n_rec],
        subopt_gap=out[2, :n_rec],
        final_states=X,
        stride=stride,
        T=T,
        seed=seed,
        clipping=clipping,
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
    )
