"""
Simulation Agent – orchestrates tool calls for the ssa, cme, ode, sde and wf subcommands.
Each pipeline dispatches tools through the registry, records the calls in a
RunTrace and returns the tables to be written as CSV artifacts.
"""

import logging
from typing import Any, Dict

import numpy as np
import pandas as pd

from tools import jump_process, langevin, onsager_geometry, reaction_network, wright_fisher
from tools.errors import ConfigError
from tools.fokker_planck_1d import ThetaProfile
from tools.jump_process import (
    cme_stationary,
    delta_distribution,
    lattice_counts,
    simulate_ssa,
    simulate_ssa_ensemble,
    solve_cme,
    trajectory_frame,
    wkb_transform,
)
from tools.langevin import SdeConfig, simulate_ensemble, simulate_sde
from tools.onsager_geometry import MeanFunction, solve_gradient_flow
from tools.reaction_network import linear_rate_equation
from tools.wright_fisher import arcsine_cdf, build_transform, pushforward_check, simulate_wf_ensemble
from utils.config import ExperimentConfig, network_from_config
from utils.rng import StreamId, tag_of
from utils.stats import Histogram
from utils.trace import RunTrace, dispatch

logger = logging.getLogger(__name__)


def _ops(module) -> Dict[str, Any]:
    return module.TOOL_SCHEMA["operations"]


# ---------- Tool Registry ----------
TOOL_REGISTRY = {
    "simulate_ssa": (simulate_ssa, _ops(jump_process)["simulate_ssa"]),
    "simulate_ssa_ensemble": (simulate_ssa_ensemble, _ops(jump_process)["simulate_ssa_ensemble"]),
    "solve_cme": (solve_cme, _ops(jump_process)["solve_cme"]),
    "cme_stationary": (cme_stationary, _ops(jump_process)["cme_stationary"]),
    "wkb_transform": (wkb_transform, _ops(jump_process)["wkb_transform"]),
    "linear_rate_equation": (linear_rate_equation, _ops(reaction_network)["linear_rate_equation"]),
    "solve_gradient_flow": (solve_gradient_flow, _ops(onsager_geometry)["solve_gradient_flow"]),
    "simulate_sde": (simulate_sde, _ops(langevin)["simulate_sde"]),
    "simulate_ensemble": (simulate_ensemble, _ops(langevin)["simulate_ensemble"]),
    "build_transform": (build_transform, _ops(wright_fisher)["build_transform"]),
    "simulate_wf_ensemble": (simulate_wf_ensemble, _ops(wright_fisher)["simulate_wf_ensemble"]),
    "pushforward_check": (pushforward_check, _ops(wright_fisher)["pushforward_check"]),
}


def _call_tool(trace: RunTrace, tool_name: str, **kwargs) -> Any:
    return dispatch(trace, TOOL_REGISTRY, tool_name, **kwargs)


def run_ssa_agent(cfg: ExperimentConfig, threads: int = 1) -> Dict[str, Any]:
    """Single SSA path plus an ensemble sampled on a time grid.

    Steps:
      1. simulate_ssa on stream (seed, ssa, 0)
      2. simulate_ssa_ensemble at the sample times
      3. linear_rate_equation at the same times (thermodynamic-limit reference)
    """
    trace = RunTrace()
    results: Dict[str, Any] = {"trace": trace}
    network = network_from_config(cfg)
    section = cfg.ssa
    times = np.array(section.sample_times or np.linspace(0.0, section.t_end, 11), dtype=float)

    # --- Step 1: One exact path ---
    path = _call_tool(trace, "simulate_ssa", network=network, N=section.N, x0=list(section.x0),
                      t_end=section.t_end, stream=StreamId(cfg.seed, tag_of("ssa"), 0))
    results["path"] = trajectory_frame(path.times, path.states)

    # --- Step 2: Ensemble ---
    ensemble = _call_tool(trace, "simulate_ssa_ensemble", network=network, N=section.N,
                          x0=list(section.x0), times=times, n_paths=section.n_paths,
                          seed=cfg.seed, threads=threads)

    # --- Step 3: Rate-equation reference ---
    exact = _call_tool(trace, "linear_rate_equation", network=network, x0=list(section.x0), times=times)
    frame = trajectory_frame(times, ensemble.mean_states())
    for i in range(network.d):
        frame[f"std_error_{i + 1}"] = ensemble.states[:, :, i].std(axis=0, ddof=1) / np.sqrt(section.n_paths) \
            if section.n_paths > 1 else 0.0
        frame[f"rate_eq_{i + 1}"] = exact.states[:, i]
    results["ensemble"] = frame
    final = ensemble.counts[:, -1, 0]
    results["histogram"] = pd.DataFrame({
        "count_1": np.arange(section.N + 1),
        "frequency": np.bincount(final, minlength=section.N + 1) / section.n_paths,
    })
    return results


def run_cme_agent(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Transient and stationary CME with the WKB field psi_h = -(1/N) log p.

    Steps:
      1. solve_cme from the delta at N * x0
      2. cme_stationary
      3. wkb_transform of both with h = 1/N
    """
    trace = RunTrace()
    network = network_from_config(cfg)
    section = cfg.cme
    p0 = delta_distribution(section.N, lattice_counts(list(section.x0), section.N, network.d))

    # --- Step 1: Transient law ---
    p_t = _call_tool(trace, "solve_cme", network=network, N=section.N, p0=p0,
                     t_end=section.t_end, dt=section.dt)

    # --- Step 2: Stationary law ---
    p_inf = _call_tool(trace, "cme_stationary", network=network, N=section.N)

    # --- Step 3: WKB fields ---
    h = 1.0 / section.N
    psi_t = _call_tool(trace, "wkb_transform", p=p_t, h=h)
    psi_inf = _call_tool(trace, "wkb_transform", p=p_inf, h=h)
    frame = p_t.to_frame()
    frame["p_stationary"] = p_inf.probs
    frame["psi_h"] = psi_t.values
    frame["psi_h_stationary"] = psi_inf.values
    marginals = pd.DataFrame({"count": np.arange(section.N + 1)})
    for i in range(network.d):
        marginals[f"p_{i + 1}"] = p_t.marginal(i)
    return {"trace": trace, "distribution": frame, "marginals": marginals}


def run_ode_agent(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Gradient flow of the free energy; the KL mean is checked against exp(t Q^T) x0."""
    trace = RunTrace()
    network = network_from_config(cfg)
    mf = MeanFunction.from_kind(cfg.mean_function.kind)
    if not mf.has_free_energy:
        raise ConfigError(f"mean function {mf.kind!r} has no free energy; 'ode' needs one")
    section = cfg.ode

    # --- Step 1: Gradient flow ---
    flow = _call_tool(trace, "solve_gradient_flow", network=network, mf=mf, x0=list(section.x0),
                      t_end=section.t_end, dt=section.dt)
    frame = trajectory_frame(flow.times, flow.states)
    frame["free_energy"] = flow.meta["free_energy"]

    # --- Step 2: Linear rate equation (coincides for the logarithmic mean) ---
    if mf.kind == "logarithmic":
        exact = _call_tool(trace, "linear_rate_equation", network=network, x0=list(section.x0),
                           times=flow.times)
        frame["max_deviation"] = np.max(np.abs(flow.states - exact.states), axis=1)
    return {"trace": trace, "trajectory": frame}


def sde_config(cfg: ExperimentConfig, stream_index: int = 0) -> SdeConfig:
    section = cfg.sde
    return SdeConfig(h=section.h, dt=section.dt, t_end=section.t_end, noise_form=section.noise_form,
                     reflection=section.reflection, potential=section.potential,
                     ito_correction=section.ito_correction, frozen_sigma=section.frozen_sigma,
                     stream=StreamId(cfg.seed, tag_of("langevin"), stream_index))


def run_sde_agent(cfg: ExperimentConfig, threads: int = 1) -> Dict[str, Any]:
    """One recorded Langevin path and a histogram of the ensemble at t_end.

    Steps:
      1. simulate_sde on stream (seed, langevin, 0)
      2. simulate_ensemble with blocks of 1024 paths
    """
    trace = RunTrace()
    network = network_from_config(cfg)
    mf = MeanFunction.from_kind(cfg.mean_function.kind)
    section = cfg.sde
    step_cfg = sde_config(cfg)

    # --- Step 1: Single path ---
    path = _call_tool(trace, "simulate_sde", network=network, mf=mf, x0=list(section.x0), cfg=step_cfg)

    # --- Step 2: Ensemble ---
    ensemble = _call_tool(trace, "simulate_ensemble", network=network, mf=mf, x0=list(section.x0),
                          cfg=step_cfg, n_paths=section.n_paths, seed=cfg.seed, threads=threads)
    hist = Histogram.from_samples(ensemble.final()[:, 0], bins=section.bins)
    summary = ensemble.summary()
    summary_frame = pd.DataFrame({
        "coordinate": np.arange(1, network.d + 1),
        "mean": summary["mean"],
        "variance": summary["variance"],
        "std_error": summary["std_error"],
    })
    summary_frame["reflection_rate"] = summary["reflection_rate"]
    return {"trace": trace, "path": trajectory_frame(path.times, path.states),
            "histogram": hist.to_frame(), "summary": summary_frame}


def run_wf_agent(cfg: ExperimentConfig, threads: int = 1) -> Dict[str, Any]:
    """Wright-Fisher transform of the two-point profile, WF ensemble and push-forward test.

    Steps:
      1. build_transform for theta of the configured two-point network
      2. simulate_wf_ensemble from y0 = psi(x0)
      3. pushforward_check (KS between psi(X_t) and Y_t), when enabled
    """
    trace = RunTrace()
    network = network_from_config(cfg)
    if network.d != 2:
        raise ConfigError("'wf' needs a two-species network")
    mf = MeanFunction.from_kind(cfg.mean_function.kind)
    section = cfg.wf
    theta = ThetaProfile.from_network(network, mf)

    # --- Step 1: Transform ---
    transform = _call_tool(trace, "build_transform", theta=theta)
    y0 = float(transform.psi(section.x0))

    # --- Step 2: Wright-Fisher ensemble ---
    ensemble = _call_tool(trace, "simulate_wf_ensemble", gamma=transform.gamma, y0=y0, t_end=section.t_end,
                          dt=section.dt, n_paths=section.n_paths, seed=cfg.seed, threads=threads)
    hist = Histogram.from_samples(ensemble.final(), bins=section.bins)
    hist_frame = hist.to_frame()
    hist_frame["arcsine_mass"] = arcsine_cdf(hist.right) - arcsine_cdf(hist.left)
    results: Dict[str, Any] = {"trace": trace, "transform": transform.table(), "histogram": hist_frame,
                               "gamma": transform.gamma}

    # --- Step 3: Push-forward check ---
    if section.pushforward:
        report = _call_tool(trace, "pushforward_check", network=network, mf=mf, transform=transform,
                            n_paths=section.n_paths, t=section.t_end, dt=section.dt, seed=cfg.seed,
                            x0=section.x0, threads=threads)
        results["pushforward"] = pd.DataFrame([report.summary()])
        results["passed"] = report.passed
    return results
