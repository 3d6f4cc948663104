"""
Wright-Fisher tool: the change of variables y = psi(x) that turns the
canonical two-point Wasserstein diffusion into the continuous Wright-Fisher
model dY = gamma (1/2 - Y) dt + sqrt(2 gamma Y (1 - Y)) dB, its simulation,
and the push-forward checks between the two.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import ks_2samp

from tools.errors import DomainError, InvalidState
from tools.fokker_planck_1d import ThetaProfile, WassersteinCoordinate, wasserstein_coordinate
from tools.langevin import BLOCK_SIZE, SdeConfig, simulate_ensemble
from tools.onsager_geometry import MeanFunction
from tools.reaction_network import ReactionNetwork
from tools.special_functions import inverse_incomplete_beta_half, quad_singular
from utils.rng import StreamId, make_stream, normal_array, tag_of
from utils.stats import ks_critical_value

logger = logging.getLogger(__name__)

# ---------- Tool Schemas ----------
TOOL_SCHEMA = {
    "name": "wright_fisher",
    "description": "Map the canonical Wasserstein diffusion to Wright-Fisher, simulate it and check the push-forward.",
    "operations": {
        "build_transform": {"theta": "ThetaProfile"},
        "simulate_wf": {"gamma": "float > 0", "y0": "float in [0, 1]", "t_end": "float",
                        "dt": "float", "stream": "StreamId"},
        "simulate_wf_ensemble": {"gamma": "float > 0", "y0": "float in [0, 1]", "t_end": "float",
                                 "dt": "float", "n_paths": "int >= 1", "seed": "int", "threads": "int"},
        "pushforward_check": {"network": "ReactionNetwork", "mf": "MeanFunction", "transform": "WfTransform",
                              "n_paths": "int", "t": "float", "dt": "float", "seed": "int",
                              "x0": "float in (0, 1)", "threads": "int"},
    },
    "returns": "WfTransform | WfTrajectory | WfEnsemble | PushforwardReport",
}

INVERSE_BISECTIONS = 60


@dataclass
class WfTransform:
    """psi(x) = sin^2(pi y(x) / 2) with gamma = (pi / Z)^2."""
    theta: ThetaProfile
    coordinate: WassersteinCoordinate
    gamma: float

    @property
    def Z(self) -> float:
        return self.coordinate.Z

    def psi(self, x: Any) -> Any:
        return np.sin(0.5 * np.pi * np.asarray(self.coordinate(x))) ** 2

    def psi_prime(self, x: Any) -> Any:
        x = np.asarray(x, dtype=float)
        y = np.asarray(self.coordinate(x))
        return np.sin(np.pi * y) * 0.5 * np.pi / (self.Z * np.sqrt(self.theta.theta(x)))

    def psi_inverse(self, values: Any) -> Any:
        """Vectorized bisection on x; meant for small arrays."""
        target = np.asarray(values, dtype=float)
        if np.any((target < 0.0) | (target > 1.0)):
            raise DomainError("psi_inverse needs values in [0, 1]")
        lo = np.zeros_like(target)
        hi = np.ones_like(target)
        for _ in range(INVERSE_BISECTIONS):
            mid = 0.5 * (lo + hi)
            above = np.asarray(self.psi(mid)) > target
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        out = 0.5 * (lo + hi)
        return float(out) if out.ndim == 0 else out

    def table(self, n: int = 101) -> pd.DataFrame:
        x = np.linspace(0.0, 1.0, n)
        return pd.DataFrame({"x": x, "psi": self.psi(x)})


def build_transform(theta: ThetaProfile) -> WfTransform:
    """Closed-form transform through B(y, 1/2, 1/2) = 2 arcsin(sqrt(y)).

    Raises:
        NonIntegrableTheta: theta^{-1/2} cannot be integrated.
    """
    coordinate = wasserstein_coordinate(theta)
    gamma = (np.pi / coordinate.Z) ** 2
    logger.debug("WF transform for %s: Z=%.12f gamma=%.12f", theta.name, coordinate.Z, gamma)
    return WfTransform(theta=theta, coordinate=coordinate, gamma=gamma)


def psi_via_incomplete_beta(transform: WfTransform, x: Any) -> Any:
    """psi(x) by inverting B(psi, 1/2, 1/2) = sqrt(gamma) int_0^x theta^{-1/2} numerically."""
    values = np.sqrt(transform.gamma) * np.asarray(transform.coordinate.length(x), dtype=float)
    out = np.vectorize(inverse_incomplete_beta_half, otypes=[float])(np.minimum(values, np.pi))
    return float(out) if out.ndim == 0 else out


def arcsine_density(y: Any) -> Any:
    """Stationary Wright-Fisher density 1 / (pi sqrt(y (1 - y)))."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        out = 1.0 / (np.pi * np.sqrt(y * (1.0 - y)))
    return float(out) if out.ndim == 0 else out


def arcsine_cdf(y: Any) -> Any:
    return 2.0 / np.pi * np.arcsin(np.sqrt(np.clip(y, 0.0, 1.0)))


def stationary_pushforward_l1(transform: WfTransform) -> float:
    """int_0^1 | theta^{-1/2} / Z - arcsine(psi(x)) psi'(x) | dx."""
    def gap(x: np.ndarray) -> np.ndarray:
        direct = 1.0 / (transform.Z * np.sqrt(transform.theta.theta(x)))
        pulled = arcsine_density(transform.psi(x)) * transform.psi_prime(x)
        return np.abs(direct - pulled)
    return quad_singular(gap, 0.0, 1.0, certificate=transform.theta.certificate, tol=1e-9)


# ---------- Simulation ----------
@dataclass
class WfTrajectory:
    times: np.ndarray
    values: np.ndarray
    reflection_count: int
    meta: Dict[str, Any] = field(default_factory=dict)


@dataclass
class WfEnsemble:
    """Samples at the requested times, shape (n_times, n_paths)."""
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

    def means(self) -> np.ndarray:
        return self.samples.mean(axis=1)

    def histogram(self, time_index: int = -1, bins: int = 50) -> Tuple[np.ndarray, np.ndarray]:
        edges = np.linspace(0.0, 1.0, bins + 1)
        counts, _ = np.histogram(self.samples[time_index], bins=edges)
        return edges, counts


def _check_params(gamma: float, y0: float, t_end: float, dt: float) -> int:
    if gamma <= 0.0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    if not 0.0 <= y0 <= 1.0:
        raise InvalidState(f"y0 must lie in [0, 1], got {y0}")
    if not dt > 0.0 or dt > t_end:
        raise DomainError(f"need 0 < dt <= t_end, got dt={dt}, t_end={t_end}")
    return int(np.ceil(t_end / dt - 1e-9))


def _wf_block(gamma: float, y0: np.ndarray, t_end: float, dt: float, n_steps: int, noise: bool,
              rng: np.random.Generator, record_steps: Sequence[int]) -> Tuple[np.ndarray, int]:
    """Euler-Maruyama with mirror reflection at 0 and 1."""
    y = np.array(y0, dtype=float)
    record = {step: n for n, step in enumerate(record_steps)}
    out = np.empty((len(record_steps), y.shape[0]))
    if 0 in record:
        out[record[0]] = y
    reflections = 0
    t = 0.0
    for step in range(1, n_steps + 1):
        h = min(dt, t_end - t)
        move = gamma * (0.5 - y) * h
        if noise:
            spread = np.sqrt(2.0 * gamma * np.maximum(y * (1.0 - y), 0.0) * h)
            move = move + spread * normal_array(rng, y.shape)
        y = y + move
        low = y < 0.0
        high = y > 1.0
        if low.any() or high.any():
            reflections += int(low.sum() + high.sum())
            y = np.where(low, -y, y)
            y = np.where(high, 2.0 - y, y)
            y = np.clip(y, 0.0, 1.0)
        t += h
        if step in record:
            out[record[step]] = y
    return out, reflections


def _wf_record_steps(t_end: float, dt: float, n_steps: int,
                     sample_times: Optional[Sequence[float]]) -> Tuple[np.ndarray, List[int]]:
    if sample_times is None:
        return np.minimum(np.arange(n_steps + 1) * dt, t_end), list(range(n_steps + 1))
    times = np.asarray(sample_times, dtype=float)
    if np.any(times < 0.0) or np.any(times > t_end + 1e-12):
        raise DomainError(f"sample times must lie in [0, t_end={t_end}]")
    return times, [min(int(round(tau / dt)), n_steps) for tau in times]


def simulate_wf(gamma: float, y0: float, t_end: float, dt: float,
                stream: Optional[StreamId] = None, noise: bool = True) -> WfTrajectory:
    """One Wright-Fisher path recorded at every step."""
    n_steps = _check_params(gamma, y0, t_end, dt)
    stream = stream or StreamId(0, tag_of("wright_fisher"), 0)
    times, steps = _wf_record_steps(t_end, dt, n_steps, None)
    out, reflections = _wf_block(gamma, np.array([y0]), t_end, dt, n_steps, noise, stream.generator(), steps)
    return WfTrajectory(times=times, values=out[:, 0], reflection_count=reflections,
                        meta={"stream": stream, "gamma": gamma})


def simulate_wf_ensemble(gamma: float, y0: float, t_end: float, dt: float, n_paths: int, seed: int = 0,
                         threads: int = 1, sample_times: Optional[Sequence[float]] = None,
                         noise: bool = True) -> WfEnsemble:
    """Block-parallel ensemble; block b of 1024 paths uses stream (seed, wright_fisher, b)."""
    n_steps = _check_params(gamma, y0, t_end, dt)
    if n_paths < 1:
        raise DomainError(f"n_paths must be >= 1, got {n_paths}")
    times, steps = _wf_record_steps(t_end, dt, n_steps, sample_times if sample_times is not None else [0.0, t_end])
    tag = tag_of("wright_fisher")
    sizes = [min(BLOCK_SIZE, n_paths - start) for start in range(0, n_paths, BLOCK_SIZE)]

    def block(b: int) -> Tuple[np.ndarray, int]:
        return _wf_block(gamma, np.full(sizes[b], float(y0)), t_end, dt, n_steps, noise,
                         make_stream(seed, tag, b), steps)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(block, range(len(sizes))))
    else:
        results = [block(b) for b in range(len(sizes))]
    samples = np.concatenate([r[0] for r in results], axis=1)
    reflections = sum(r[1] for r in results)
    logger.info("WF ensemble: %d paths, %d steps, %d reflections", n_paths, n_steps, reflections)
    return WfEnsemble(times=times, samples=samples, reflection_count=reflections, n_steps=n_steps,
                      meta={"seed": seed, "gamma": gamma, "blocks": len(sizes)})


# ---------- Push-forward ----------
@dataclass
class PushforwardReport:
    statistic: float
    critical_value: float
    passed: bool
    n_paths: int
    t: float
    x0: float
    y0: float
    pvalue: float = float("nan")

    def summary(self) -> Dict[str, Any]:
        return {"ks": self.statistic, "critical_1pct": self.critical_value, "passed": self.passed,
                "n_paths": self.n_paths, "t": self.t, "x0": self.x0, "y0": self.y0, "pvalue": self.pvalue}


def pushforward_check(network: ReactionNetwork, mf: MeanFunction, transform: WfTransform, n_paths: int,
                      t: float, dt: float, seed: int = 0, x0: float = 0.3, threads: int = 1) -> PushforwardReport:
    """Two-sample KS test between psi(X_t) and Y_t from matched starts y0 = psi(x0).

    X runs the zero-potential Langevin SDE on the two-point network with
    h omega = 1; Y runs the Wright-Fisher model with the transform's gamma.
    """
    if network.d != 2:
        raise DomainError(f"push-forward needs a two-point network, got d = {network.d}")
    omega = float(network.omega[0, 1])
    cfg = SdeConfig(h=1.0 / omega, dt=dt, t_end=t, potential="none")
    x_run = simulate_ensemble(network, mf, [x0, 1.0 - x0], cfg, n_paths, seed=seed, threads=threads)
    mapped = np.asarray(transform.psi(x_run.final()[:, 0]), dtype=float)
    y0 = float(transform.psi(x0))
    y_run = simulate_wf_ensemble(transform.gamma, y0, t, dt, n_paths, seed=seed, threads=threads)
    result = ks_2samp(mapped, y_run.final())
    critical = ks_critical_value(n_paths, n_paths)
    report = PushforwardReport(statistic=float(result.statistic), critical_value=critical,
                               passed=bool(result.statistic < critical), n_paths=n_paths, t=t,
                               x0=x0, y0=y0, pvalue=float(result.pvalue))
    logger.info("push-forward KS=%.4f (critical %.4f) -> %s", report.statistic, critical,
                "pass" if report.passed else "fail")
    return report
