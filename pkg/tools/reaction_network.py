"""
Reaction network tool: Q-matrix validation, stationary distribution,
symmetric edge weights and the detailed-balance diagnostic.
Every downstream tool consumes the ReactionNetwork built here.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from tools.errors import BadQMatrix, InvalidState, NotConnected, NotDetailedBalanced

logger = logging.getLogger(__name__)

# ---------- Tool Schemas ----------
TOOL_SCHEMA = {
    "name": "reaction_network",
    "description": "Build a linear reaction network from a Q-matrix and check detailed balance.",
    "operations": {
        "build_network": {"q": "QMatrix", "raw": "bool (accept non-detailed-balanced)"},
        "detailed_balance_residual": {"network": "ReactionNetwork"},
        "linear_rate_equation": {"network": "ReactionNetwork", "x0": "simplex vector",
                                 "times": "increasing times"},
    },
    "returns": "ReactionNetwork | float | Trajectory",
}

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
SYMMETRY_TOL = 1e-10
SIMPLEX_TOL = 1e-12


# ---------- Domain types ----------
@dataclass(frozen=True)
class QMatrix:
    """Generator of a continuous-time Markov chain on d species."""
    entries: np.ndarray

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    def __post_init__(self):
        q = np.array(self.entries, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise BadQMatrix(f"Q-matrix must be square, got shape {q.shape}")
        if q.shape[0] < 2:
            raise BadQMatrix("Q-matrix needs at least two species")
        if not np.all(np.isfinite(q)):
            raise BadQMatrix("Q-matrix has non-finite entries")
        off = q.copy()
        np.fill_diagonal(off, 0.0)
        if np.any(off < 0.0):
            i, j = np.argwhere(off < 0.0)[0]
            raise BadQMatrix(f"negative off-diagonal rate Q[{i},{j}] = {q[i, j]}")
        scale = np.max(np.abs(q)) if q.size else 0.0
        row_sums = q.sum(axis=1)
        worst = int(np.argmax(np.abs(row_sums)))
        if abs(row_sums[worst]) > ROW_SUM_TOL * max(scale, 1.0):
            raise BadQMatrix(f"row {worst} sums to {row_sums[worst]:.3e}, expected 0")
        q.setflags(write=False)
        object.__setattr__(self, "entries", q)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], infer_diagonal: bool = True) -> "QMatrix":
        """Build from row-major config rows; optionally infer the diagonal from row-sum-zero."""
        q = np.array(rows, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise BadQMatrix(f"Q rows must form a square matrix, got shape {q.shape}")
        if infer_diagonal:
            np.fill_diagonal(q, 0.0)
            np.fill_diagonal(q, -q.sum(axis=1))
        return cls(q)


@dataclass(frozen=True)
class SimplexState:
    """A point of the probability simplex."""
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def d(self) -> int:
        return self.x.shape[0]

    @property
    def interior_margin(self) -> float:
        return float(self.x.min())

    @property
    def is_interior(self) -> bool:
        return self.interior_margin > 0.0

    @classmethod
    def from_vector(cls, x: Sequence[float], tol: float = SIMPLEX_TOL) -> "SimplexState":
        """Validate a probability vector and wrap it.

        Raises:
            InvalidState: negative entries or a sum away from 1.
        """
        arr = np.asarray(x, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise InvalidState(f"state must be a vector of length >= 2, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidState("state has non-finite entries")
        if np.any(arr < 0.0):
            raise InvalidState(f"state has negative entries: {arr}")
        if abs(arr.sum() - 1.0) > tol:
            raise InvalidState(f"state sums to {arr.sum():.15g}, expected 1")
        return cls(arr)


@dataclass(frozen=True)
class ReactionNetwork:
    """Linear reaction network with stationary vector and symmetric weights."""
    q: QMatrix
    x_stat: np.ndarray
    omega: np.ndarray
    detailed_balanced: bool = True

    @property
    def d(self) -> int:
        return self.q.d

    @property
    def rates(self) -> np.ndarray:
        return self.q.entries

    def edges(self) -> List[Tuple[int, int]]:
        """Directed edges (i, j) with Q_ij > 0."""
        q = self.q.entries
        return [(i, j) for i in range(self.d) for j in range(self.d) if i != j and q[i, j] > 0.0]


@dataclass
class Trajectory:
    """Time-stamped simplex states of an ODE run."""
    times: np.ndarray
    states: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.times.shape[0]


def as_state_vector(x: Any) -> np.ndarray:
    """Accept a SimplexState or a raw vector."""
    if isinstance(x, SimplexState):
        return x.x
    return np.asarray(x, dtype=float)


# ---------- Construction ----------
def _strongly_connected(q: np.ndarray) -> bool:
    d = q.shape[0]
    adjacency = (q > 0.0) & ~np.eye(d, dtype=bool)
    for graph in (adjacency, adjacency.T):
        seen = {0}
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in np.flatnonzero(graph[i]):
                if j not in seen:
                    seen.add(int(j))
                    queue.append(int(j))
        if len(seen) != d:
            return False
    return True


def stationary_vector(q: QMatrix) -> np.ndarray:
    """Least-squares solve of [Q^T; 1^T] x = [0; 1]."""
    d = q.d
    system = np.vstack([q.entries.T, np.ones((1, d))])
    rhs = np.zeros(d + 1)
    rhs[-1] = 1.0
    x, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    if np.any(x <= 0.0):
        raise NotConnected(f"stationary vector is not positive: {x}")
    return x / x.sum()


def build_network(q: QMatrix, raw: bool = False) -> ReactionNetwork:
    """Build the network: stationary x^s and weights omega_ij = Q_ij x^s_i.

    Args:
        q: Validated Q-matrix.
        raw: Accept networks that violate detailed balance (diagnostics only).

    Returns:
        The ReactionNetwork.

    Raises:
        NotConnected: the rate graph is not strongly connected.
        NotDetailedBalanced: omega is not symmetric and ``raw`` is False.
    """
    if not _strongly_connected(q.entries):
        raise NotConnected("rate graph is not strongly connected; x^s is not unique")
    x_stat = stationary_vector(q)
    residual = np.max(np.abs(q.entries.T @ x_stat))
    if residual > STATIONARY_TOL * max(np.max(np.abs(q.entries)), 1.0):
        raise NotConnected(f"stationary solve residual {residual:.3e} too large")

    omega = q.entries * x_stat[:, None]
    asym = np.max(np.abs(omega - omega.T))
    balanced = asym <= SYMMETRY_TOL * max(np.max(np.abs(omega)), 1e-300)
    if balanced:
        omega = 0.5 * (omega + omega.T)
    elif not raw:
        raise NotDetailedBalanced(f"omega asymmetry {asym:.3e} exceeds tolerance")
    else:
        logger.info("accepting non-detailed-balanced network in raw mode (asymmetry %.3e)", asym)
    omega.setflags(write=False)
    x_stat.setflags(write=False)
    return ReactionNetwork(q=q, x_stat=x_stat, omega=omega, detailed_balanced=bool(balanced))


def detailed_balance_residual(network: ReactionNetwork) -> float:
    """max_ij |Q_ij x^s_i - Q_ji x^s_j|."""
    flux = network.rates * network.x_stat[:, None]
    return float(np.max(np.abs(flux - flux.T)))


# ---------- Thermodynamic limit ----------
def linear_rate_equation(network: ReactionNetwork, x0: Any, times: Sequence[float]) -> Trajectory:
    """Exact solution x(t) = exp(t Q^T) x0 of the rate equation."""
    x0 = as_state_vector(x0)
    times = np.asarray(times, dtype=float)
    qt = network.rates.T
    states = np.array([expm(t * qt) @ x0 for t in times])
    return Trajectory(times=times, states=states, meta={"solver": "matrix_exponential"})


def random_detailed_balanced(d: int, rng: np.random.Generator, density: float = 1.0,
                             weight_range: Tuple[float, float] = (0.2, 2.0)) -> ReactionNetwork:
    """Random detailed-balanced network: positive x^s, symmetric omega on a connected graph.

    A ring of edges is always present; every other pair is added with
    probability ``density``.
    """
    x_stat = 0.2 / d + 0.8 * rng.dirichlet(np.ones(d))
    omega = np.zeros((d, d))
    low, high = weight_range
    for i in range(d):
        for j in range(i + 1, d):
            ring = j == i + 1 or (i == 0 and j == d - 1)
            if ring or rng.random() < density:
                omega[i, j] = omega[j, i] = rng.uniform(low, high)
    q = omega / x_stat[:, None]
    np.fill_diagonal(q, -q.sum(axis=1))
    return build_network(QMatrix(q))


def two_point_network(rate_12: float = 1.0, rate_21: float = 1.0) -> ReactionNetwork:
    """Two-species network X1 <-> X2."""
    return build_network(QMatrix.from_rows([[0.0, rate_12], [rate_21, 0.0]]))


def network_summary(network: ReactionNetwork) -> Dict[str, Any]:
    """Plain-dict view for traces and logs."""
    return {
        "d": network.d,
        "x_stat": network.x_stat.tolist(),
        "n_edges": len(network.edges()),
        "detailed_balanced": network.detailed_balanced,
        "db_residual": detailed_balance_residual(network),
    }


def coerce_state(x: Any, d: Optional[int] = None) -> SimplexState:
    """Wrap vectors as SimplexState, checking the dimension when given."""
    state = x if isinstance(x, SimplexState) else SimplexState.from_vector(x)
    if d is not None and state.d != d:
        raise InvalidState(f"state has dimension {state.d}, network has {d}")
    return state
