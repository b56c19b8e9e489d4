"""
Communication graphs: doubly stochastic mixing matrices and the consensus
contraction bound for their powers.

Agents are indexed 1..n in edge lists (as in config files) and 0..n-1 in
arrays.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DuplicateEdge, NegativeDiagonal, NotConnected

DEFAULT_TOL = 1e-10

# "V" network of the six-agent logistic regression instance.
PAPER_EDGES = (
    (1, 2, 1 / 3),
    (2, 3, 1 / 3),
    (2, 5, 1 / 3),
    (5, 6, 1 / 3),
    (5, 4, 1 / 3),
    (1, 6, 2 / 3),
    (3, 4, 2 / 3),
)


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Mixing weights ``weights[i, j]``: how much agent i takes from agent j.

    ``eta`` is the smallest weight on a communication link and
    ``edge_count_q`` the number of undirected links.
    """

    n: int
    weights: np.ndarray
    eta: float
    edge_count_q: int

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.n, self.n):
            raise DimensionMismatch(f"weights must be {self.n}x{self.n}, got {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_weights(cls, weights, edge_count_q=None) -> "AdjacencyMatrix":
        """Wrap an explicit weight matrix, reading links off its off-diagonal support."""
        w = np.asarray(weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionMismatch(f"weights must be square, got {w.shape}")
        n = w.shape[0]
        off = w.copy()
        np.fill_diagonal(off, 0.0)
        positive = off[off > 0]
        eta = float(positive.min()) if positive.size else 1.0
        if edge_count_q is None:
            links = (off > 0) | (off.T > 0)
            edge_count_q = int(np.count_nonzero(np.triu(links, 1)))
        return cls(n=n, weights=w, eta=eta, edge_count_q=edge_count_q)

    @classmethod
    def trivial(cls) -> "AdjacencyMatrix":
        """Single agent, ``A = [1]``. Useful to degenerate a run to plain PGD."""
        return cls(n=1, weights=np.ones((1, 1)), eta=1.0, edge_count_q=0)

    @property
    def links(self) -> list[tuple[int, int]]:
        """Undirected links as 0-based pairs ``(i, j)``, ``i < j``."""
        off = self.weights > 0
        i, j = np.nonzero(np.triu(off | off.T, 1))
        return list(zip(i.tolist(), j.tolist()))


@dataclass(frozen=True)
class ContractionBound:
    theta: float
    beta: float

    def __call__(self, k):
        return self.theta * self.beta ** np.asarray(k, dtype=float)


@dataclass
class ValidationReport:
    max_row_dev: float
    max_col_dev: float
    min_positive_weight: float
    min_diagonal: float
    connected: bool
    in_unit_interval: bool
    tol: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def build_graph(n: int, edges, edge_count_q: int | None = None) -> AdjacencyMatrix:
    """Build a symmetric doubly stochastic matrix from undirected weighted links.

    Parameters
    ----------
    n : int
        Number of agents.
    edges : iterable of (i, j, weight)
        1-based agent indices; each undirected link listed once. The weight is
        applied to both directions.
    edge_count_q : int, optional
        Override for the link count used by the contraction bound.

    Returns
    -------
    AdjacencyMatrix
        Diagonal entries are the row residuals ``1 - sum_{j != i} a_ij``.
    """
    if n < 2:
        raise ValueError("need at least 2 agents (use AdjacencyMatrix.trivial for 1)")
    w = np.zeros((n, n))
    seen = set()
    listed = []
    for edge in edges:
        i, j, weight = edge
        i, j, weight = int(i), int(j), float(weight)
        if not (1 <= i <= n and 1 <= j <= n) or i == j:
            raise ValueError(f"invalid link ({i}, {j}) for n={n}")
        if not 0.0 < weight < 1.0:
            raise ValueError(f"link ({i}, {j}) weight {weight} outside (0, 1)")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DuplicateEdge(f"link {key} listed more than once")
        seen.add(key)
        listed.append(weight)
        w[i - 1, j - 1] = w[j - 1, i - 1] = weight

    off_sums = w.sum(axis=1)
    bad = np.nonzero(off_sums > 1.0 + DEFAULT_TOL)[0]
    if bad.size:
        i = int(bad[0])
        raise NegativeDiagonal(
            f"agent {i + 1}: off-diagonal weights sum to {off_sums[i]:.6g} > 1"
        )
    np.fill_diagonal(w, np.clip(1.0 - off_sums, 0.0, None))

    if not _connected(w > 0):
        raise NotConnected("communication graph is not connected")
    q = len(seen) if edge_count_q is None else int(edge_count_q)
    return AdjacencyMatrix(n=n, weights=w, eta=min(listed), edge_count_q=q)


def _connected(support: np.ndarray) -> bool:
    # BFS on the undirected skeleton; equals strong connectivity for symmetric support
    n = support.shape[0]
    adj = support | support.T
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.nonzero(adj[i] & ~seen)[0]:
            seen[j] = True
            queue.append(j)
    return bool(seen.all())


def _strongly_connected(support: np.ndarray) -> bool:
    n = support.shape[0]

    def reach(adj):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in np.nonzero(adj[i] & ~seen)[0]:
                seen[j] = True
                queue.append(j)
        return seen.all()

    return bool(reach(support) and reach(support.T))


def validate_doubly_stochastic(A: AdjacencyMatrix, tol: float = DEFAULT_TOL) -> ValidationReport:
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = A.weights
    row_dev = float(np.abs(w.sum(axis=1) - 1.0).max())
    col_dev = float(np.abs(w.sum(axis=0) - 1.0).max())
    off = w.copy()
    np.fill_diagonal(off, 0.0)
    positive = off[off > 0]
    min_pos = float(positive.min()) if positive.size else 0.0
    in_unit = bool(np.all((w >= -tol) & (w <= 1.0 + tol)))
    connected = A.n == 1 or _strongly_connected(off > 0)

    report = ValidationReport(
        max_row_dev=row_dev,
        max_col_dev=col_dev,
        min_positive_weight=min_pos,
        min_diagonal=float(np.diag(w).min()),
        connected=connected,
        in_unit_interval=in_unit,
        tol=tol,
    )
    if row_dev > tol:
        report.failures.append(f"row sums deviate from 1 by {row_dev:.3g}")
    if col_dev > tol:
        report.failures.append(f"column sums deviate from 1 by {col_dev:.3g}")
    if not in_unit:
        report.failures.append("entries outside [0, 1]")
    if not connected:
        report.failures.append("graph is not strongly connected")
    return report


def consensus_contraction_bound(A: AdjacencyMatrix) -> ContractionBound:
    """Constants (theta, beta) with ``|[A^k]_ij - 1/N| <= theta * beta**k``."""
    base = 1.0 - A.eta / (4.0 * A.n**2)
    return ContractionBound(theta=base**-2, beta=base ** (1.0 / A.edge_count_q))


def matrix_power_deviation(A: AdjacencyMatrix, k: int) -> float:
    """``max_ij |[A^k]_ij - 1/N|`` by repeated multiplication."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return float(matrix_power_deviations(A, k)[-1])


def matrix_power_deviations(A: AdjacencyMatrix, k_max: int) -> np.ndarray:
    """Deviations for every power ``k = 1..k_max`` (entry ``k-1``)."""
    w = A.weights
    out = np.empty(k_max)
    power = w.copy()
    for k in range(k_max):
        if k:
            power = power @ w
        out[k] = np.abs(power - 1.0 / A.n).max()
    return out


def mix(A: AdjacencyMatrix, states) -> np.ndarray:
    """One consensus round: ``v_i = sum_j a_ij x_j``.

    ``states`` is an ``(n, dim)`` array or a list of ``n`` equal-length vectors.
    """
    try:
        x = np.asarray(states, dtype=float)
    except ValueError as exc:
        raise DimensionMismatch("state vectors differ in dimension") from exc
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != A.n:
        raise DimensionMismatch(f"expected {A.n} state vectors, got shape {x.shape}")
    return A.weights @ x


def random_graph(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.3) -> AdjacencyMatrix:
    """Random connected symmetric doubly stochastic graph.

    A random spanning tree plus independent extra links. Weights are
    ``u / (1 + max(deg_i, deg_j))`` with ``u ~ U[0.2, 1]``, which keeps every
    self-weight at least as large as the smallest link weight.
    """
    links = set()
    order = rng.permutation(n)
    for pos in range(1, n):
        parent = order[rng.integers(pos)]
        child = order[pos]
        links.add((min(parent, child), max(parent, child)))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra_edge_prob:
                links.add((i, j))
    deg = np.zeros(n, dtype=int)
    for i, j in links:
        deg[i] += 1
        deg[j] += 1
    edges = [
        (i + 1, j + 1, rng.uniform(0.2, 1.0) / (1 + max(deg[i], deg[j])))
        for i, j in sorted(links)
    ]
    return build_graph(n, edges)
