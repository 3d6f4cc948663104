"""
Langevin tool: Euler-Maruyama for the Wasserstein diffusion on the simplex
in its eigen-noise and edge-Brownian forms, with the forward-Ito drift
correction h div K, the effective potential and boundary reflection.
Paths are stepped in blocks of 1024 so one block shares every batched
geometry evaluation.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from tools.errors import DomainError, InvalidState, StepLeftSimplex
from tools.onsager_geometry import (
    MeanFunction,
    POTENTIALS,
    decompose_batch,
    divergence_k,
    log_volume_batch,
    onsager_derivative,
    onsager_matrix,
    potential_batch,
)
from tools.reaction_network import ReactionNetwork, coerce_state
from utils.rng import StreamId, make_stream, normal_array, tag_of

logger = logging.getLogger(__name__)

# ---------- Tool Schemas ----------
TOOL_SCHEMA = {
    "name": "langevin",
    "description": "Wasserstein Langevin SDE on the simplex: single paths and block-parallel ensembles.",
    "operations": {
        "effective_potential": {"network": "ReactionNetwork", "mf": "MeanFunction", "x": "SimplexState",
                                "h": "float >= 0", "potential": "free_energy | none"},
        "simulate_sde": {"network": "ReactionNetwork", "mf": "MeanFunction", "x0": "SimplexState",
                         "cfg": "SdeConfig"},
        "simulate_ensemble": {"network": "ReactionNetwork", "mf": "MeanFunction", "x0": "SimplexState",
                              "cfg": "SdeConfig", "n_paths": "int >= 1", "seed": "int",
                              "threads": "int", "sample_times": "list[float]"},
    },
    "returns": "tuple | SdeTrajectory | SdeEnsemble",
}

BLOCK_SIZE = 1024
STATE_FLOOR = 1e-15
REFLECTION_WARN_RATE = 0.01
REFLECTION_RULE = "mirror-renormalize (heuristic for d >= 3)"
NOISE_FORMS = ("eigen", "edge")


@dataclass(frozen=True)
class SdeConfig:
    """Step parameters of one SDE run.

    ``noise=False`` switches the Brownian increments off; only then may h be 0.
    """
    h: float
    dt: float
    t_end: float
    noise_form: str = "eigen"
    reflection: bool = True
    stream: Optional[StreamId] = None
    potential: str = "free_energy"
    ito_correction: bool = True
    frozen_sigma: bool = False
    noise: bool = True

    def validate(self) -> "SdeConfig":
        if self.h < 0.0 or (self.h == 0.0 and self.noise):
            raise DomainError(f"h must be > 0 (or 0 with noise off), got {self.h}")
        if not self.dt > 0.0:
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if self.dt > self.t_end:
            raise DomainError(f"dt={self.dt} exceeds t_end={self.t_end}")
        if self.noise_form not in NOISE_FORMS:
            raise DomainError(f"noise_form must be one of {NOISE_FORMS}, got {self.noise_form!r}")
        if self.potential not in POTENTIALS:
            raise DomainError(f"potential must be one of {POTENTIALS}, got {self.potential!r}")
        return self

    @property
    def n_steps(self) -> int:
        return int(np.ceil(self.t_end / self.dt - 1e-9))


@dataclass
class SdeTrajectory:
    times: np.ndarray
    states: np.ndarray
    reflection_count: int
    meta: Dict[str, Any] = field(default_factory=dict)


@dataclass
class SdeEnsemble:
    """Ensemble states at the sample times, shape (n_times, n_paths, d)."""
    times: np.ndarray
    samples: np.ndarray
    reflection_count: int
    n_steps: int
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.samples.shape[1]

    def final(self) -> np.ndarray:
        return self.samples[-1]

    def histogram(self, coordinate: int = 0, time_index: int = -1,
                  bins: int = 50) -> Tuple[np.ndarray, np.ndarray]:
        """Counts on uniform bins of [0, 1]: (edges, counts)."""
        edges = np.linspace(0.0, 1.0, bins + 1)
        counts, _ = np.histogram(self.samples[time_index, :, coordinate], bins=edges)
        return edges, counts

    def summary(self) -> Dict[str, Any]:
        final = self.final()
        return {
            "n_paths": self.n_paths,
            "mean": final.mean(axis=0).tolist(),
            "variance": final.var(axis=0, ddof=1).tolist() if self.n_paths > 1 else [0.0] * final.shape[1],
            "std_error": (final.std(axis=0, ddof=1) / np.sqrt(self.n_paths)).tolist()
            if self.n_paths > 1 else [0.0] * final.shape[1],
            "reflection_count": self.reflection_count,
            "reflection_rate": self.reflection_count / max(self.n_paths * self.n_steps, 1),
            "reflection_rule": REFLECTION_RULE,
        }


# =====================================================================
# Effective potential and drift
# =====================================================================
def effective_potential_batch(network: ReactionNetwork, mf: MeanFunction, x: np.ndarray, h: float,
                              potential: str = "free_energy", k: Optional[np.ndarray] = None,
                              dk: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """psi_hat = psi - (h/2) log|g| and its ambient gradient."""
    value, grad = potential_batch(network, mf, x, potential)
    if h == 0.0:
        return value, grad
    log_g, grad_log_g = log_volume_batch(network, mf, x, k=k, dk=dk)
    return value - 0.5 * h * log_g, grad - 0.5 * h * grad_log_g


def effective_potential(network: ReactionNetwork, mf: MeanFunction, x: Any, h: float,
                        potential: str = "free_energy") -> Tuple[float, np.ndarray]:
    """Effective potential including the volume-element correction.

    Args:
        network: Detailed-balanced network.
        mf: Mean function.
        x: Interior state.
        h: Fluctuation parameter; h = 0 returns the free energy itself.
        potential: ``free_energy`` or ``none``.

    Returns:
        Tuple ``(value, gradient)``.
    """
    state = coerce_state(x, network.d)
    if not state.is_interior:
        raise InvalidState("effective potential needs an interior point")
    value, grad = effective_potential_batch(network, mf, state.x[None, :], h, potential)
    return float(value[0]), grad[0]


def sde_drift(network: ReactionNetwork, mf: MeanFunction, x: np.ndarray, cfg: SdeConfig,
              k: Optional[np.ndarray] = None) -> np.ndarray:
    """Forward-Ito drift -K grad psi_hat + h div K for a batch of states."""
    if k is None:
        k = onsager_matrix(network, mf, x)
    if cfg.h == 0.0:
        _, grad = potential_batch(network, mf, x, cfg.potential)
        return -np.einsum("pij,pj->pi", k, grad)
    dk = onsager_derivative(network, mf, x)
    _, grad_hat = effective_potential_batch(network, mf, x, cfg.h, cfg.potential, k=k, dk=dk)
    drift = -np.einsum("pij,pj->pi", k, grad_hat)
    if cfg.ito_correction:
        drift = drift + cfg.h * divergence_k(dk)
    return drift


def _pairs(d: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(d, k=1)


def noise_width(d: int, noise_form: str) -> int:
    return d - 1 if noise_form == "eigen" else d * (d - 1) // 2


def sde_noise(k: np.ndarray, xi: np.ndarray, noise_form: str,
              sigma: Optional[np.ndarray] = None) -> np.ndarray:
    """Unscaled increment sigma xi (eigen) or sum_j sqrt|K_ij| xi_ij with xi_ji = -xi_ij (edge)."""
    if noise_form == "eigen":
        if sigma is None:
            lam, u = decompose_batch(k)
            sigma = u * np.sqrt(np.maximum(lam, 0.0))[:, None, :]
        return np.einsum("pil,pl->pi", sigma, xi)
    d = k.shape[-1]
    rows, cols = _pairs(d)
    flow = np.sqrt(np.abs(k[:, rows, cols])) * xi
    out = np.zeros(k.shape[:-1])
    np.add.at(out, (slice(None), rows), flow)
    np.add.at(out, (slice(None), cols), -flow)
    return out


def reflect(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mirror negative coordinates and take the surplus proportionally from the others.

    Returns the corrected batch and a boolean mask of reflected rows.
    """
    negative = x < 0.0
    hit = negative.any(axis=1)
    if not hit.any():
        return x, hit
    y = x[hit].copy()
    neg = negative[hit]
    y[neg] = -y[neg]
    surplus = y.sum(axis=1) - 1.0
    keep = np.where(neg, 0.0, y)
    mass = keep.sum(axis=1)
    ok = mass > surplus
    y[ok] -= keep[ok] * (surplus[ok] / mass[ok])[:, None]
    if (~ok).any():
        bad = np.maximum(y[~ok], STATE_FLOOR)
        y[~ok] = bad / bad.sum(axis=1, keepdims=True)
    x = x.copy()
    x[hit] = y
    return x, hit


def _floor(x: np.ndarray) -> np.ndarray:
    low = x < STATE_FLOOR
    if not low.any():
        return x
    rows = low.any(axis=1)
    y = np.maximum(x[rows], STATE_FLOOR)
    x = x.copy()
    x[rows] = y / y.sum(axis=1, keepdims=True)
    return x


# =====================================================================
# Stepping
# =====================================================================
def _run_block(network: ReactionNetwork, mf: MeanFunction, x0: np.ndarray, cfg: SdeConfig,
               rng: np.random.Generator, record_steps: Sequence[int]) -> Tuple[np.ndarray, int]:
    """Step a block of paths; returns states at ``record_steps`` and the reflection count."""
    x = np.array(x0, dtype=float)
    paths, d = x.shape
    width = noise_width(d, cfg.noise_form)
    record = {step: n for n, step in enumerate(record_steps)}
    out = np.empty((len(record_steps), paths, d))
    if 0 in record:
        out[record[0]] = x
    frozen = None
    if cfg.frozen_sigma and cfg.noise_form == "eigen":
        lam, u = decompose_batch(onsager_matrix(network, mf, x))
        frozen = u * np.sqrt(np.maximum(lam, 0.0))[:, None, :]
    reflections = 0
    t = 0.0
    for step in range(1, cfg.n_steps + 1):
        dt = min(cfg.dt, cfg.t_end - t)
        k = onsager_matrix(network, mf, x)
        move = sde_drift(network, mf, x, cfg, k=k) * dt
        if cfg.noise:
            xi = normal_array(rng, (paths, width))
            move = move + np.sqrt(2.0 * cfg.h * dt) * sde_noise(k, xi, cfg.noise_form, frozen)
        proposal = x + move
        if np.any(proposal < 0.0):
            if not cfg.reflection:
                raise StepLeftSimplex(f"an iterate left the simplex at t={t + dt:.6g}")
            proposal, hit = reflect(proposal)
            reflections += int(hit.sum())
        x = _floor(proposal)
        t += dt
        if step in record:
            out[record[step]] = x
    return out, reflections


def _record_steps(cfg: SdeConfig, sample_times: Optional[Sequence[float]]) -> Tuple[np.ndarray, List[int]]:
    if sample_times is None:
        steps = list(range(cfg.n_steps + 1))
        times = np.minimum(np.arange(cfg.n_steps + 1) * cfg.dt, cfg.t_end)
        return times, steps
    times = np.asarray(sample_times, dtype=float)
    if np.any(times < 0.0) or np.any(times > cfg.t_end + 1e-12):
        raise DomainError(f"sample times must lie in [0, t_end={cfg.t_end}]")
    steps = [min(int(round(tau / cfg.dt)), cfg.n_steps) for tau in times]
    return times, steps


def simulate_sde(network: ReactionNetwork, mf: MeanFunction, x0: Any, cfg: SdeConfig) -> SdeTrajectory:
    """One Euler-Maruyama path of the forward-Ito SDE, recorded at every step."""
    cfg.validate()
    state = coerce_state(x0, network.d)
    if not state.is_interior:
        raise InvalidState("SDE needs an interior initial state")
    stream = cfg.stream or StreamId(0, tag_of("langevin"), 0)
    times, steps = _record_steps(cfg, None)
    out, reflections = _run_block(network, mf, state.x[None, :], cfg, stream.generator(), steps)
    rate = reflections / max(cfg.n_steps, 1)
    if rate > REFLECTION_WARN_RATE:
        logger.warning("reflections on %.2f%% of steps; consider a smaller dt", 100.0 * rate)
    return SdeTrajectory(times=times, states=out[:, 0, :], reflection_count=reflections,
                         meta={"stream": stream, "noise_form": cfg.noise_form,
                               "reflection_rule": REFLECTION_RULE, "reflection_rate": rate})


def simulate_ensemble(network: ReactionNetwork, mf: MeanFunction, x0: Any, cfg: SdeConfig,
                      n_paths: int, seed: int = 0, threads: int = 1,
                      sample_times: Optional[Sequence[float]] = None) -> SdeEnsemble:
    """Block-parallel ensemble; block b of 1024 paths uses stream (seed, langevin, b).

    Results are assembled in block order, so they do not depend on ``threads``;
    with n_paths = 1 the single path equals ``simulate_sde`` on stream index 0.
    """
    cfg.validate()
    if n_paths < 1:
        raise DomainError(f"n_paths must be >= 1, got {n_paths}")
    state = coerce_state(x0, network.d)
    if not state.is_interior:
        raise InvalidState("SDE needs an interior initial state")
    times, steps = _record_steps(cfg, sample_times if sample_times is not None else [0.0, cfg.t_end])
    tag = tag_of("langevin")
    sizes = [min(BLOCK_SIZE, n_paths - start) for start in range(0, n_paths, BLOCK_SIZE)]

    def block(b: int) -> Tuple[np.ndarray, int]:
        x_block = np.broadcast_to(state.x, (sizes[b], network.d))
        return _run_block(network, mf, x_block, cfg, make_stream(seed, tag, b), steps)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(block, range(len(sizes))))
    else:
        results = [block(b) for b in range(len(sizes))]
    samples = np.concatenate([r[0] for r in results], axis=1)
    reflections = sum(r[1] for r in results)
    ensemble = SdeEnsemble(times=times, samples=samples, reflection_count=reflections,
                           n_steps=cfg.n_steps,
                           meta={"seed": seed, "blocks": len(sizes), "noise_form": cfg.noise_form,
                                 "reflection_rule": REFLECTION_RULE})
    rate = ensemble.summary()["reflection_rate"]
    if rate > REFLECTION_WARN_RATE:
        logger.warning("reflections on %.2f%% of path-steps; consider a smaller dt", 100.0 * rate)
    logger.info("SDE ensemble: %d paths in %d blocks, %d steps, %d reflections",
                n_paths, len(sizes), cfg.n_steps, reflections)
    return ensemble


def deterministic(cfg: SdeConfig) -> SdeConfig:
    """Same run with the Brownian increments switched off and h = 0."""
    return replace(cfg, h=0.0, noise=False)
