"""
Analysis Agent – orchestrates tool calls for the fp, green, geometry-check and
compare subcommands.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd

from tools import fokker_planck_1d, onsager_geometry, reaction_network
from tools.errors import ConfigError
from tools.fokker_planck_1d import (
    DensityGrid1D,
    GreenFunctionSpec,
    Potential1D,
    STABILITY_CONSTANT,
    ThetaProfile,
    evolve_via_green,
    solve_fp,
    stationary_density,
    wasserstein_coordinate,
)
from tools.onsager_geometry import (
    MeanFunction,
    ScalarField,
    free_energy_gradient_fn,
    hje_residual,
    identity_residuals,
    laplace_beltrami_batch,
    laplace_beltrami_chart,
)
from tools.reaction_network import detailed_balance_residual, random_detailed_balanced
from utils.config import ExperimentConfig, network_from_config
from utils.csv_io import read_csv
from utils.rng import stream_for
from utils.stats import ComparisonReport, Histogram, TabulatedDensity, compare_distributions
from utils.trace import RunTrace, dispatch

logger = logging.getLogger(__name__)

IDENTITY_TOLERANCES = {
    "eigen": 1e-10,
    "null": 1e-10,
    "orthonormal": 1e-10,
    "sum_zero": 1e-10,
    "sigma": 1e-10,
    "row_sum": 1e-10,
    "det_relative": 1e-8,
    "metric_inverse": 1e-8,
    "hje": 1e-10,
    "laplace_beltrami": 1e-4,
}
POINT_MARGIN = 0.1


def _ops(module) -> Dict[str, Any]:
    return module.TOOL_SCHEMA["operations"]


# ---------- Tool Registry ----------
TOOL_REGISTRY = {
    "solve_fp": (solve_fp, _ops(fokker_planck_1d)["solve_fp"]),
    "stationary_density": (stationary_density, None),
    "wasserstein_coordinate": (wasserstein_coordinate, _ops(fokker_planck_1d)["wasserstein_coordinate"]),
    "evolve_via_green": (evolve_via_green, _ops(fokker_planck_1d)["evolve_via_green"]),
    "identity_residuals": (identity_residuals, _ops(onsager_geometry)["identity_residuals"]),
    "hje_residual": (hje_residual, _ops(onsager_geometry)["hje_residual"]),
    "detailed_balance_residual": (detailed_balance_residual, _ops(reaction_network)["detailed_balance_residual"]),
    "compare_distributions": (compare_distributions, None),
}


def _call_tool(trace: RunTrace, tool_name: str, **kwargs) -> Any:
    return dispatch(trace, TOOL_REGISTRY, tool_name, **kwargs)


def theta_from_config(cfg: ExperimentConfig, source: str, constant: float) -> ThetaProfile:
    if source == "canonical":
        return ThetaProfile.canonical()
    if source == "constant":
        return ThetaProfile.constant(constant)
    return ThetaProfile.from_network(network_from_config(cfg), MeanFunction.from_kind(cfg.mean_function.kind))


def initial_density(kind: str, M: int, theta: ThetaProfile) -> DensityGrid1D:
    if kind == "uniform":
        return DensityGrid1D.uniform(M)
    if kind == "linear":
        return DensityGrid1D.from_function(lambda x: 2.0 * x, M)
    return stationary_density(theta, None, 1.0, M)


def run_fp_agent(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Finite-volume Fokker-Planck solve with the stationary density alongside.

    Steps:
      1. stationary_density for the configured theta and potential
      2. solve_fp from the configured initial density (dt = 0 picks 0.9 of the stable step)
    """
    trace = RunTrace()
    section = cfg.fp
    theta = theta_from_config(cfg, section.theta, section.theta_constant)
    potential = None
    if section.potential == "free_energy":
        mf = MeanFunction.from_kind(cfg.mean_function.kind)
        if not mf.has_free_energy:
            raise ConfigError(f"mean function {mf.kind!r} has no free energy")
        potential = Potential1D.from_network(network_from_config(cfg), mf)
    M = section.grid

    # --- Step 1: Stationary density ---
    pi = _call_tool(trace, "stationary_density", theta=theta, V=potential, h=section.h, M=M)

    # --- Step 2: Time evolution ---
    dt = section.dt
    if dt == 0.0:
        theta_max = float(np.max(theta.theta(pi.centers)))
        dt = 0.9 * STABILITY_CONSTANT / (M * M * section.h * section.omega * theta_max)
    p0 = initial_density(section.initial, M, theta)
    result = _call_tool(trace, "solve_fp", theta=theta, V=potential, h=section.h, omega=section.omega,
                        p0=p0, t_end=section.t_end, dt=dt, scheme=section.scheme)
    density = pd.DataFrame({"x": pi.centers, "p": result.density.values, "p_stationary": pi.values})
    summary = pd.DataFrame([{
        "t_end": section.t_end, "dt": dt, "steps": result.steps, "mass": result.density.mass(),
        "l1_to_stationary": result.density.l1_distance(pi), "clipped": result.clipped,
    }])
    return {"trace": trace, "density": density, "summary": summary}


def run_green_agent(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Evolve the initial density with the cosine-series Green function.

    Steps:
      1. wasserstein_coordinate (y(x) and Z)
      2. evolve_via_green at time t
    """
    trace = RunTrace()
    section = cfg.green
    theta = theta_from_config(cfg, section.theta, section.theta_constant)

    # --- Step 1: Coordinate ---
    coordinate = _call_tool(trace, "wasserstein_coordinate", theta=theta)
    spec = GreenFunctionSpec(theta=theta, Z=coordinate.Z, y=coordinate)

    # --- Step 2: Evolution ---
    p0 = initial_density(section.initial, section.grid, theta)
    p_t = _call_tool(trace, "evolve_via_green", spec=spec, p0=p0, t=section.t)
    x = p_t.centers
    density = pd.DataFrame({"x": x, "p": p_t.values, "y": coordinate(x)})
    summary = pd.DataFrame([{"t": section.t, "Z": coordinate.Z, "gap": spec.gap,
                             "terms": p_t.meta.get("terms"), "mass": p_t.mass()}])
    return {"trace": trace, "density": density, "summary": summary}


def interior_points(d: int, n: int, rng: np.random.Generator, margin: float = POINT_MARGIN) -> np.ndarray:
    """Random points with every coordinate at least margin / d."""
    return margin / d + (1.0 - margin) * rng.dirichlet(np.ones(d), size=n)


def _cubic(x: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(x) ** 3, axis=-1)


def _cubic_gradient(x: np.ndarray) -> np.ndarray:
    return 3.0 * np.asarray(x) ** 2


def run_geometry_check(cfg: ExperimentConfig, d: int, samples: int) -> Dict[str, Any]:
    """Onsager/metric identities on a random detailed-balanced network.

    Steps:
      1. detailed_balance_residual of the drawn network
      2. identity_residuals over the sample points
      3. hje_residual of the free energy (logarithmic mean only)
      4. extrinsic versus chart Laplace-Beltrami at a few points
    """
    if d < 2 or samples < 1:
        raise ConfigError(f"geometry-check needs d >= 2 and samples >= 1, got d={d}, samples={samples}")
    trace = RunTrace()
    rng = stream_for(cfg.seed, "geometry", 0)
    network = random_detailed_balanced(d, rng)
    mf = MeanFunction.from_kind(cfg.mean_function.kind)
    points = interior_points(d, samples, rng)
    rows = []

    # --- Step 1: Detailed balance ---
    db = _call_tool(trace, "detailed_balance_residual", network=network)
    rows.append({"identity": "detailed_balance", "residual": db, "tolerance": 1e-10})

    # --- Step 2: Eigen and metric identities ---
    residuals = _call_tool(trace, "identity_residuals", network=network, mf=mf, points=points)
    scale = max(float(np.max(np.abs(network.omega))), 1.0)
    for name, value in residuals.items():
        if name == "min_lambda":
            rows.append({"identity": name, "residual": value, "tolerance": float("nan")})
            continue
        tol = IDENTITY_TOLERANCES[name] * (scale if name in ("eigen", "null", "sigma", "row_sum") else 1.0)
        rows.append({"identity": name, "residual": value, "tolerance": tol})

    # --- Step 3: Hamilton-Jacobi residual of psi_ss ---
    if mf.kind == "logarithmic":
        grad = free_energy_gradient_fn(network, mf)
        worst = max(abs(_call_tool(trace, "hje_residual", network=network, psi_grad=grad, x=p))
                    for p in points[: min(samples, 20)])
        rows.append({"identity": "hje", "residual": worst, "tolerance": IDENTITY_TOLERANCES["hje"] * scale})

    # --- Step 4: Laplace-Beltrami, extrinsic vs chart ---
    check = points[: min(samples, 5)]
    cubic = ScalarField(value=_cubic, gradient=_cubic_gradient)
    extrinsic = laplace_beltrami_batch(network, mf, cubic.gradient, check)
    chart = np.array([laplace_beltrami_chart(network, mf, cubic.value, p) for p in check])
    relative = float(np.max(np.abs(extrinsic - chart) / np.maximum(np.abs(chart), 1.0)))
    rows.append({"identity": "laplace_beltrami", "residual": relative,
                 "tolerance": IDENTITY_TOLERANCES["laplace_beltrami"]})

    frame = pd.DataFrame(rows)
    frame["passed"] = frame["tolerance"].isna() | (frame["residual"] <= frame["tolerance"])
    passed = bool(frame["passed"].all())
    logger.info("geometry-check d=%d samples=%d: %s", d, samples, "pass" if passed else "FAIL")
    return {"trace": trace, "report": frame, "passed": passed}


def load_samples(path: str, bins: int) -> Tuple[Histogram, Any]:
    """Histogram table (bin_left, bin_right, count) or raw samples (column x)."""
    frame, _ = read_csv(Path(path))
    if "x" in frame.columns and "bin_left" not in frame.columns:
        raw = frame["x"].to_numpy(float)
        return Histogram.from_samples(raw, bins=bins), raw
    return Histogram.from_frame(frame), None


def load_density(path: str) -> TabulatedDensity:
    frame, _ = read_csv(Path(path))
    return TabulatedDensity.from_frame(frame)


def run_compare(cfg: ExperimentConfig, samples_path: str, density_path: str) -> Dict[str, Any]:
    """Compare a histogram (or raw samples) against a tabulated density."""
    trace = RunTrace()
    hist, raw = load_samples(samples_path, cfg.compare.bins)
    density = load_density(density_path)
    report: ComparisonReport = _call_tool(trace, "compare_distributions", hist=hist, density=density,
                                          l1_threshold=cfg.compare.l1_threshold, samples=raw,
                                          alpha=cfg.compare.alpha)
    return {"trace": trace, "report": report.to_frame(), "moments": report.moments, "passed": report.passed}
