"""
Jump process tool: exact Gillespie simulation of the molecule-count process,
the chemical master equation on the count lattice, and the WKB transform
psi_h = -h log p of its law.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.stats import multinomial

from tools.errors import InvalidState, LatticeTooLarge, UnstableTimestep, ZeroPropensityDeadlock
from tools.reaction_network import ReactionNetwork, SimplexState, as_state_vector
from utils.accel import maybe_jit
from utils.rng import StreamId, UniformBuffer, stream_for

logger = logging.getLogger(__name__)

# ---------- Tool Schemas ----------
TOOL_SCHEMA = {
    "name": "jump_process",
    "description": "Gillespie SSA, chemical master equation and WKB transform on the count lattice.",
    "operations": {
        "simulate_ssa": {"network": "ReactionNetwork", "N": "int >= 1", "x0": "lattice state",
                         "t_end": "float >= 0", "stream": "StreamId | Generator"},
        "simulate_ssa_ensemble": {"network": "ReactionNetwork", "N": "int >= 1", "x0": "lattice state",
                                  "times": "sample times", "n_paths": "int >= 1", "seed": "int",
                                  "threads": "int"},
        "solve_cme": {"network": "ReactionNetwork", "N": "int >= 1", "p0": "LatticeDistribution",
                      "t_end": "float", "dt": "float"},
        "cme_stationary": {"network": "ReactionNetwork", "N": "int >= 1"},
        "wkb_transform": {"p": "LatticeDistribution", "h": "float"},
    },
    "returns": "JumpTrajectory | SsaEnsemble | LatticeDistribution | LatticeField",
}

MAX_LATTICE = 10 ** 6
CME_STABILITY = 0.5
NEGATIVE_CLIP = -1e-14


# =====================================================================
# Lattice indexing (colexicographic ranking of compositions of N)
# =====================================================================
def lattice_size(N: int, d: int) -> int:
    return comb(N + d - 1, d - 1)


class Lattice:
    """Compositions of N into d parts, ranked colexicographically.

    A composition maps to the (d-1)-subset c_k = (l_1 + ... + l_k) + k - 1
    of {0, ..., N + d - 2}; its rank is sum_k C(c_k, k).
    """

    def __init__(self, N: int, d: int):
        if N < 0 or d < 2:
            raise InvalidState(f"lattice needs N >= 0 and d >= 2, got N={N}, d={d}")
        self.N = N
        self.d = d
        self.size = lattice_size(N, d)
        if self.size > MAX_LATTICE:
            raise LatticeTooLarge(f"lattice has {self.size} states, cap is {MAX_LATTICE}")
        rows = N + d
        table = np.zeros((rows, d), dtype=np.int64)
        table[:, 0] = 1
        for n in range(1, rows):
            table[n, 1:] = table[n - 1, 1:] + table[n - 1, :-1]
        self._binom = table
        self._states: Optional[np.ndarray] = None

    def rank(self, counts: np.ndarray) -> np.ndarray:
        counts = np.asarray(counts, dtype=np.int64)
        partial = np.cumsum(counts[..., :-1], axis=-1)
        k = np.arange(1, self.d)
        c = partial + k - 1
        return np.sum(self._binom[c, k], axis=-1)

    def unrank(self, ranks: Any) -> np.ndarray:
        r = np.array(ranks, dtype=np.int64, ndmin=1)
        partial = np.empty(r.shape + (self.d - 1,), dtype=np.int64)
        for k in range(self.d - 1, 0, -1):
            c = np.searchsorted(self._binom[:, k], r, side="right") - 1
            r = r - self._binom[c, k]
            partial[..., k - 1] = c - (k - 1)
        counts = np.empty(partial.shape[:-1] + (self.d,), dtype=np.int64)
        counts[..., 0] = partial[..., 0]
        counts[..., 1:-1] = np.diff(partial, axis=-1)
        counts[..., -1] = self.N - partial[..., -1]
        return counts

    @property
    def states(self) -> np.ndarray:
        if self._states is None:
            self._states = self.unrank(np.arange(self.size))
        return self._states


def lattice_states(N: int, d: int) -> np.ndarray:
    return Lattice(N, d).states


@dataclass
class LatticeDistribution:
    """Probability vector over the lattice, indexed by colex rank."""
    N: int
    d: int
    probs: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def lattice(self) -> Lattice:
        return Lattice(self.N, self.d)

    def total(self) -> float:
        return float(self.probs.sum())

    def prob_of(self, counts: Sequence[int]) -> float:
        return float(self.probs[int(self.lattice.rank(np.asarray(counts)))])

    def marginal(self, i: int) -> np.ndarray:
        """P[l_i = n] for n = 0..N."""
        return np.bincount(self.lattice.states[:, i], weights=self.probs, minlength=self.N + 1)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.lattice.states, columns=[f"l_{i + 1}" for i in range(self.d)])
        frame["p"] = self.probs
        return frame


@dataclass
class LatticeField:
    """Scalar field on the lattice; +inf marks states outside the support."""
    N: int
    d: int
    values: np.ndarray


def delta_distribution(N: int, counts: Sequence[int]) -> LatticeDistribution:
    counts = np.asarray(counts, dtype=np.int64)
    if np.any(counts < 0) or counts.sum() != N:
        raise InvalidState(f"counts {counts.tolist()} are not a composition of N={N}")
    lattice = Lattice(N, counts.size)
    probs = np.zeros(lattice.size)
    probs[int(lattice.rank(counts))] = 1.0
    return LatticeDistribution(N=N, d=counts.size, probs=probs)


def multinomial_law(N: int, x_stat: Sequence[float]) -> LatticeDistribution:
    """Multinomial(N, x^s): the stationary CME law of a linear network."""
    x_stat = np.asarray(x_stat, dtype=float)
    lattice = Lattice(N, x_stat.size)
    probs = multinomial.pmf(lattice.states, N, x_stat)
    return LatticeDistribution(N=N, d=x_stat.size, probs=np.asarray(probs, dtype=float))


# =====================================================================
# Chemical master equation
# =====================================================================
def cme_generator(network: ReactionNetwork, lattice: Lattice) -> sparse.csr_matrix:
    """Sparse A with dp/dt = A p; reaction i -> j fires at rate Q_ij l_i."""
    states = lattice.states
    q = network.rates
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []
    for i, j in network.edges():
        source = np.flatnonzero(states[:, i] > 0)
        moved = states[source].copy()
        moved[:, i] -= 1
        moved[:, j] += 1
        target = lattice.rank(moved)
        rate = q[i, j] * states[source, i]
        rows += [target, source]
        cols += [source, source]
        vals += [rate, -rate]
    if not rows:
        return sparse.csr_matrix((lattice.size, lattice.size))
    return sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(lattice.size, lattice.size)).tocsr()


def solve_cme(network: ReactionNetwork, N: int, p0: LatticeDistribution, t_end: float,
              dt: float) -> LatticeDistribution:
    """Forward-integrate the chemical master equation with classic RK4.

    Raises:
        LatticeTooLarge: more than 10^6 lattice states.
        UnstableTimestep: dt times the largest outflow rate exceeds 0.5.
    """
    if p0.N != N or p0.d != network.d:
        raise InvalidState(f"p0 lives on lattice (N={p0.N}, d={p0.d}), expected (N={N}, d={network.d})")
    lattice = Lattice(N, network.d)
    a = cme_generator(network, lattice)
    max_out = float(np.max(-a.diagonal())) if lattice.size else 0.0
    if dt <= 0.0 or dt * max_out > CME_STABILITY:
        raise UnstableTimestep(f"dt={dt} with max outflow {max_out:.3e} violates dt * outflow <= {CME_STABILITY}")

    p = p0.probs.astype(float).copy()
    t = 0.0
    clipped = 0
    steps = 0
    while t < t_end - 1e-12 * max(t_end, 1.0):
        step = min(dt, t_end - t)
        k1 = a @ p
        k2 = a @ (p + 0.5 * step * k1)
        k3 = a @ (p + 0.5 * step * k2)
        k4 = a @ (p + step * k3)
        p = p + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        negative = p < 0.0
        if np.any(negative):
            if np.any(p < NEGATIVE_CLIP):
                clipped += int(np.count_nonzero(p < NEGATIVE_CLIP))
            p[negative] = 0.0
        t += step
        steps += 1
    if clipped:
        logger.warning("CME: clipped %d probabilities below %.0e", clipped, NEGATIVE_CLIP)
    logger.debug("CME: %d RK4 steps on %d states, final mass %.15f", steps, lattice.size, p.sum())
    return LatticeDistribution(N=N, d=network.d, probs=p,
                               meta={"t": t_end, "steps": steps, "clipped": clipped})


def cme_stationary(network: ReactionNetwork, N: int) -> LatticeDistribution:
    """Null vector of the CME generator, normalized by replacing one equation with sum(p) = 1."""
    lattice = Lattice(N, network.d)
    a = cme_generator(network, lattice).tolil()
    a[lattice.size - 1, :] = np.ones(lattice.size)
    rhs = np.zeros(lattice.size)
    rhs[-1] = 1.0
    p = spsolve(a.tocsc(), rhs) if lattice.size > 1 else np.ones(1)
    p = np.maximum(np.asarray(p, dtype=float), 0.0)
    return LatticeDistribution(N=N, d=network.d, probs=p / p.sum(), meta={"stationary": True})


def wkb_transform(p: LatticeDistribution, h: float) -> LatticeField:
    """psi_h = -h log p on the support; +inf where p = 0."""
    with np.errstate(divide="ignore"):
        values = np.where(p.probs > 0.0, -h * np.log(p.probs), np.inf)
    return LatticeField(N=p.N, d=p.d, values=values)


# =====================================================================
# Gillespie direct method
# =====================================================================
def _gillespie_chunk(counts, src, dst, rate, t, t_end, uniforms, jump_times, jump_edges):
    """Run jumps with consecutive uniform pairs until t_end or the buffer runs out.

    Returns (jumps, time, status) with status 1 = reached t_end,
    0 = buffer exhausted, -1 = all propensities zero.
    """
    n_edges = src.shape[0]
    n = 0
    k = 0
    while k + 1 < uniforms.shape[0]:
        total = 0.0
        for e in range(n_edges):
            total += rate[e] * counts[src[e]]
        if total <= 0.0:
            return n, t, -1
        t_next = t - np.log(1.0 - uniforms[k]) / total
        if t_next >= t_end:
            return n, t, 1
        target = uniforms[k + 1] * total
        acc = 0.0
        chosen = n_edges - 1
        for e in range(n_edges):
            acc += rate[e] * counts[src[e]]
            if target < acc:
                chosen = e
                break
        while rate[chosen] * counts[src[chosen]] <= 0.0:
            chosen -= 1
        counts[src[chosen]] -= 1
        counts[dst[chosen]] += 1
        t = t_next
        jump_times[n] = t
        jump_edges[n] = chosen
        n += 1
        k += 2
    return n, t, 0


_gillespie_kernel = maybe_jit(_gillespie_chunk)


@dataclass
class JumpTrajectory:
    """Jump epochs and integer counts of one SSA run."""
    times: np.ndarray
    counts: np.ndarray
    N: int
    stream: Optional[StreamId] = None

    @property
    def states(self) -> np.ndarray:
        return self.counts / self.N

    def __len__(self) -> int:
        return self.times.shape[0]


@dataclass
class SsaEnsemble:
    """Counts of many trajectories sampled on a common time grid."""
    times: np.ndarray
    counts: np.ndarray
    N: int
    seed: int

    @property
    def states(self) -> np.ndarray:
        return self.counts / self.N

    def mean_states(self) -> np.ndarray:
        return self.states.mean(axis=0)

    def frequency(self, coordinate: int, value: int) -> np.ndarray:
        """Fraction of paths with count ``value`` in ``coordinate`` at each time."""
        return np.mean(self.counts[:, :, coordinate] == value, axis=0)


def lattice_counts(x0: Any, N: int, d: int) -> np.ndarray:
    """Counts N * x0, requiring x0 to sit on the lattice of resolution 1/N."""
    if N < 1:
        raise InvalidState(f"N must be >= 1, got {N}")
    x = as_state_vector(x0)
    if x.size != d:
        raise InvalidState(f"state has dimension {x.size}, network has {d}")
    scaled = x * N
    counts = np.rint(scaled).astype(np.int64)
    if np.any(np.abs(scaled - counts) > 1e-9 * N) or np.any(counts < 0) or counts.sum() != N:
        raise InvalidState(f"x0={x.tolist()} is not on the lattice with N={N}")
    return counts


def _edge_arrays(network: ReactionNetwork) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    edges = network.edges()
    src = np.array([i for i, _ in edges], dtype=np.int64)
    dst = np.array([j for _, j in edges], dtype=np.int64)
    rate = np.array([network.rates[i, j] for i, j in edges], dtype=float)
    moves = np.zeros((len(edges), network.d), dtype=np.int64)
    moves[np.arange(len(edges)), src] -= 1
    moves[np.arange(len(edges)), dst] += 1
    return src, dst, rate, moves


def _as_generator(stream: Union[StreamId, np.random.Generator]) -> np.random.Generator:
    return stream.generator() if isinstance(stream, StreamId) else stream


def _run_ssa(network: ReactionNetwork, counts0: np.ndarray, t_end: float, rng: np.random.Generator,
             sample_times: Optional[np.ndarray] = None):
    """Drive the kernel chunk by chunk; returns the full path or the sampled states."""
    src, dst, rate, moves = _edge_arrays(network)
    counts = counts0.copy()
    buffer = UniformBuffer(rng)
    t = 0.0
    jump_times = np.empty(buffer.size // 2)
    jump_edges = np.empty(buffer.size // 2, dtype=np.int64)
    full_times: List[np.ndarray] = [np.zeros(1)]
    full_counts: List[np.ndarray] = [counts0[None, :].copy()]
    sampled = None
    next_sample = 0
    if sample_times is not None:
        sampled = np.empty((sample_times.size, counts0.size), dtype=np.int64)
    before = counts0.copy()
    while True:
        n, t, status = _gillespie_kernel(counts, src, dst, rate, t, t_end, buffer.take(),
                                         jump_times, jump_edges)
        if status == -1:
            raise ZeroPropensityDeadlock(f"all propensities vanished at t={t}")
        path = before + np.cumsum(moves[jump_edges[:n]], axis=0) if n else np.empty((0, counts.size),
                                                                                    dtype=np.int64)
        if sampled is None:
            if n:
                full_times.append(jump_times[:n].copy())
                full_counts.append(path)
        else:
            horizon = np.inf if status == 1 else (jump_times[n - 1] if n else t)
            rows = np.vstack([before[None, :], path])
            while next_sample < sample_times.size and sample_times[next_sample] < horizon:
                idx = np.searchsorted(jump_times[:n], sample_times[next_sample], side="right")
                sampled[next_sample] = rows[idx]
                next_sample += 1
        if n:
            before = path[-1].copy()
        if status == 1:
            break
    if sampled is not None:
        return sampled
    return np.concatenate(full_times), np.vstack(full_counts)


def simulate_ssa(network: ReactionNetwork, N: int, x0: Any, t_end: float,
                 stream: Union[StreamId, np.random.Generator]) -> JumpTrajectory:
    """Exact sample path of the counting process up to t_end (Gillespie direct method).

    The returned path lists every jump epoch and ends with the pre-t_end
    state recorded at t_end.
    """
    if t_end < 0.0:
        raise InvalidState(f"t_end must be >= 0, got {t_end}")
    counts0 = lattice_counts(x0, N, network.d)
    stream_id = stream if isinstance(stream, StreamId) else None
    if t_end == 0.0:
        return JumpTrajectory(times=np.zeros(1), counts=counts0[None, :], N=N, stream=stream_id)
    times, counts = _run_ssa(network, counts0, t_end, _as_generator(stream))
    times = np.append(times, t_end)
    counts = np.vstack([counts, counts[-1]])
    return JumpTrajectory(times=times, counts=counts, N=N, stream=stream_id)


def simulate_ssa_ensemble(network: ReactionNetwork, N: int, x0: Any, times: Sequence[float],
                          n_paths: int, seed: int, threads: int = 1) -> SsaEnsemble:
    """Independent SSA paths sampled at ``times``; path i uses stream (seed, ssa, i)."""
    if n_paths < 1:
        raise InvalidState(f"n_paths must be >= 1, got {n_paths}")
    sample_times = np.asarray(times, dtype=float)
    if np.any(np.diff(sample_times) < 0.0) or np.any(sample_times < 0.0):
        raise InvalidState("sample times must be nonnegative and nondecreasing")
    counts0 = lattice_counts(x0, N, network.d)
    t_end = float(sample_times[-1]) if sample_times.size else 0.0
    out = np.empty((n_paths, sample_times.size, network.d), dtype=np.int64)

    def one(index: int) -> None:
        out[index] = _run_ssa(network, counts0, t_end,
                              stream_for(seed, "ssa", index), sample_times)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one, range(n_paths)))
    else:
        for index in range(n_paths):
            one(index)
    logger.info("SSA ensemble: %d paths, N=%d, %d sample times", n_paths, N, sample_times.size)
    return SsaEnsemble(times=sample_times, counts=out, N=N, seed=seed)


def trajectory_frame(times: np.ndarray, states: np.ndarray) -> pd.DataFrame:
    """CSV layout shared by every trajectory artifact: t, x_1..x_d."""
    frame = pd.DataFrame(states, columns=[f"x_{i + 1}" for i in range(states.shape[1])])
    frame.insert(0, "t", times)
    return frame


def as_simplex(counts: np.ndarray, N: int) -> SimplexState:
    return SimplexState.from_vector(np.asarray(counts) / N)
