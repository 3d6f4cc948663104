"""
simplexdiff – stochastic, geometric and Fokker-Planck views of linear reaction networks.
Command-line entry with one subcommand per experiment:
  ssa, cme, ode, sde, fp, green, wf   (simulations and solvers, write CSV artifacts)
  geometry-check                      (Onsager/metric identities on a random network)
  compare                             (histogram or samples vs a tabulated density)

Exit status: 0 success, 1 failed comparison/check, 2 configuration error,
3 numerical failure (the error class is printed on stderr).
"""

import argparse
import logging
import os
import sys
from typing import Any, Callable, Dict, List, Optional

from dotenv import load_dotenv

# Load .env file if present
load_dotenv()

from tools.errors import ConfigError, SimplexDiffError  # noqa: E402
from utils.config import ExperimentConfig, apply_overrides, load_config  # noqa: E402
from utils.csv_io import ArtifactWriter  # noqa: E402

logger = logging.getLogger("simplexdiff")

RUN_COMMANDS = ("ssa", "cme", "ode", "sde", "fp", "green", "wf")


def configure_logging(level: Optional[str]):
    name = (level or os.getenv("SIMPLEXDIFF_LOG_LEVEL") or "INFO").upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        raise ConfigError(f"unknown log level {name!r}")
    logging.basicConfig(level=numeric, stream=sys.stderr,
                        format="%(asctime)s %(levelname)-7s %(name)s: %(message)s", force=True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment file (.toml or .json)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory for CSV artifacts")
    common.add_argument("--threads", type=int, help="worker threads (else SIMPLEXDIFF_THREADS, else 1)")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING, ...")

    run_flags = argparse.ArgumentParser(add_help=False)
    run_flags.add_argument("--dt", type=float, help="time step override")
    run_flags.add_argument("--t-end", type=float, help="horizon override")
    run_flags.add_argument("--paths", type=int, help="number of sample paths")
    run_flags.add_argument("--grid", type=int, help="number of grid cells")

    parser = argparse.ArgumentParser(prog="simplexdiff", description=__doc__.splitlines()[1])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUN_COMMANDS:
        sub.add_parser(name, parents=[common, run_flags], help=f"run the '{name}' experiment")
    geometry = sub.add_parser("geometry-check", parents=[common], help="check the Onsager/metric identities")
    geometry.add_argument("--d", type=int, default=4, help="number of species")
    geometry.add_argument("--samples", type=int, default=200, help="number of random interior points")
    compare = sub.add_parser("compare", parents=[common], help="compare samples with a density")
    compare.add_argument("--samples", required=True, help="histogram CSV or raw-sample CSV (column x)")
    compare.add_argument("--density", required=True, help="density CSV with columns x, p")
    return parser


def _pipelines() -> Dict[str, Callable[..., Dict[str, Any]]]:
    from utils.agent_analysis import run_fp_agent, run_green_agent
    from utils.agent_simulation import run_cme_agent, run_ode_agent, run_sde_agent, run_ssa_agent, run_wf_agent
    return {
        "ssa": lambda cfg, threads: run_ssa_agent(cfg, threads),
        "cme": lambda cfg, threads: run_cme_agent(cfg),
        "ode": lambda cfg, threads: run_ode_agent(cfg),
        "sde": lambda cfg, threads: run_sde_agent(cfg, threads),
        "fp": lambda cfg, threads: run_fp_agent(cfg),
        "green": lambda cfg, threads: run_green_agent(cfg),
        "wf": lambda cfg, threads: run_wf_agent(cfg, threads),
    }


def _write_tables(results: Dict[str, Any], writer: ArtifactWriter):
    import pandas as pd
    for name, value in results.items():
        if isinstance(value, pd.DataFrame):
            writer.write(name, value)


def execute(args: argparse.Namespace) -> int:
    cfg: ExperimentConfig = load_config(args.config)
    cfg = apply_overrides(cfg, args.command, seed=args.seed, dt=getattr(args, "dt", None),
                          t_end=getattr(args, "t_end", None), paths=getattr(args, "paths", None),
                          grid=getattr(args, "grid", None), threads=args.threads, out=args.out)
    threads = cfg.resolved_threads(args.threads)
    config_hash = cfg.config_hash()
    writer = ArtifactWriter(cfg.output.dir, config_hash, cfg.seed, prefix=args.command.replace("-", "_"))
    logger.info("%s: config_hash=%s seed=%d threads=%d", args.command, config_hash, cfg.seed, threads)

    if args.command in RUN_COMMANDS:
        results = _pipelines()[args.command](cfg, threads)
    elif args.command == "geometry-check":
        from utils.agent_analysis import run_geometry_check
        results = run_geometry_check(cfg, args.d, args.samples)
    else:
        from utils.agent_analysis import run_compare
        results = run_compare(cfg, args.samples, args.density)

    _write_tables(results, writer)
    results["trace"].log_summary()
    if results.get("passed") is False:
        logger.warning("%s: check failed", args.command)
        return 1
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(args.log_level)
        return execute(args)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    except SimplexDiffError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
