"""
Experiment configuration: a tree of frozen dataclasses loaded from TOML
(or JSON), with strict key checking, precondition validation, CLI
overrides and a reproducibility hash.
"""

import dataclasses
import hashlib
import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from tools.errors import ConfigError, SimplexDiffError
from tools.reaction_network import QMatrix, SimplexState, build_network
from tools.langevin import NOISE_FORMS
from tools.onsager_geometry import POTENTIALS
from tools.fokker_planck_1d import SCHEMES

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MEAN_KINDS = ("logarithmic", "geometric", "quadratic")
THETA_SOURCES = ("canonical", "network", "constant")
INITIAL_DENSITIES = ("uniform", "linear", "stationary")


@dataclass(frozen=True)
class NetworkConfig:
    q_rows: Tuple[Tuple[float, ...], ...] = ((0.0, 1.0), (1.0, 0.0))
    infer_diagonal: bool = True


@dataclass(frozen=True)
class MeanFunctionConfig:
    kind: str = "logarithmic"


@dataclass(frozen=True)
class SsaConfig:
    N: int = 100
    x0: Tuple[float, ...] = (0.5, 0.5)
    t_end: float = 1.0
    n_paths: int = 1000
    sample_times: Tuple[float, ...] = ()


@dataclass(frozen=True)
class CmeConfig:
    N: int = 20
    x0: Tuple[float, ...] = (0.5, 0.5)
    t_end: float = 1.0
    dt: float = 1e-3


@dataclass(frozen=True)
class OdeConfig:
    x0: Tuple[float, ...] = (0.9, 0.1)
    t_end: float = 2.0
    dt: float = 1e-2


@dataclass(frozen=True)
class SdeSection:
    h: float = 2.0
    dt: float = 2e-3
    t_end: float = 2.0
    x0: Tuple[float, ...] = (0.5, 0.5)
    n_paths: int = 10000
    noise_form: str = "eigen"
    potential: str = "none"
    reflection: bool = True
    ito_correction: bool = True
    frozen_sigma: bool = False
    bins: int = 50


@dataclass(frozen=True)
class FpConfig:
    theta: str = "canonical"
    theta_constant: float = 1.0
    potential: str = "none"
    h: float = 1.0
    omega: float = 1.0
    grid: int = 400
    t_end: float = 0.3
    dt: float = 0.0
    scheme: str = "euler"
    initial: str = "uniform"


@dataclass(frozen=True)
class GreenConfig:
    theta: str = "canonical"
    theta_constant: float = 1.0
    t: float = 0.3
    grid: int = 400
    initial: str = "uniform"


@dataclass(frozen=True)
class WfConfig:
    x0: float = 0.3
    t_end: float = 0.5
    dt: float = 1e-3
    n_paths: int = 20000
    bins: int = 50
    pushforward: bool = True


@dataclass(frozen=True)
class CompareConfig:
    l1_threshold: float = 0.05
    alpha: float = 0.01
    bins: int = 50


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    threads: Optional[int] = None
    network: NetworkConfig = field(default_factory=NetworkConfig)
    mean_function: MeanFunctionConfig = field(default_factory=MeanFunctionConfig)
    ssa: SsaConfig = field(default_factory=SsaConfig)
    cme: CmeConfig = field(default_factory=CmeConfig)
    ode: OdeConfig = field(default_factory=OdeConfig)
    sde: SdeSection = field(default_factory=SdeSection)
    fp: FpConfig = field(default_factory=FpConfig)
    green: GreenConfig = field(default_factory=GreenConfig)
    wf: WfConfig = field(default_factory=WfConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Hash of the settings that determine results; threads and output.dir are left out."""
        data = self.to_dict()
        data.pop("threads")
        data.pop("output")
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def resolved_threads(self, cli_threads: Optional[int] = None) -> int:
        """--threads, else config, else SIMPLEXDIFF_THREADS, else 1."""
        for candidate in (cli_threads, self.threads, os.getenv("SIMPLEXDIFF_THREADS")):
            if candidate is None or candidate == "":
                continue
            try:
                value = int(candidate)
            except ValueError as exc:
                raise ConfigError(f"threads must be an integer, got {candidate!r}") from exc
            if value < 1:
                raise ConfigError(f"threads must be >= 1, got {value}")
            return value
        return 1


SECTIONS = {
    "network": NetworkConfig, "mean_function": MeanFunctionConfig, "ssa": SsaConfig, "cme": CmeConfig,
    "ode": OdeConfig, "sde": SdeSection, "fp": FpConfig, "green": GreenConfig, "wf": WfConfig,
    "compare": CompareConfig, "output": OutputConfig,
}
TOP_LEVEL = ("schema_version", "seed", "threads")


def _freeze(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _build_section(name: str, cls: type, raw: Any):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key '{name}.{key}'")
    return cls(**{key: _freeze(value) for key, value in raw.items()})


def from_dict(raw: Dict[str, Any]) -> ExperimentConfig:
    """Build and validate a config from parsed TOML/JSON."""
    for key in raw:
        if key not in SECTIONS and key not in TOP_LEVEL:
            raise ConfigError(f"unknown key '{key}'")
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    kwargs: Dict[str, Any] = {key: raw[key] for key in TOP_LEVEL if key in raw}
    for name, cls in SECTIONS.items():
        if name in raw:
            kwargs[name] = _build_section(name, cls, raw[name])
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate(cfg)


def load_config(path: Optional[str]) -> ExperimentConfig:
    """Read a .toml or .json experiment file; None gives the defaults."""
    if path is None:
        return validate(ExperimentConfig())
    file = Path(path)
    if not file.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        if file.suffix == ".json":
            raw = json.loads(file.read_text(encoding="utf-8"))
        else:
            with file.open("rb") as handle:
                raw = tomllib.load(handle)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    logger.info("loaded config %s", path)
    return from_dict(raw)


# ---------- Validation ----------
def _require(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)


def _check_state(name: str, x0: Tuple[float, ...], d: int):
    _require(len(x0) == d, f"{name}.x0 has {len(x0)} entries, network has d = {d}")
    try:
        SimplexState.from_vector(list(x0))
    except SimplexDiffError as exc:
        raise ConfigError(f"{name}.x0 is not on the simplex: {exc}") from exc


def _check_run(name: str, dt: float, t_end: float):
    _require(dt > 0.0, f"{name}.dt must be > 0")
    _require(t_end > 0.0, f"{name}.t_end must be > 0")
    _require(dt <= t_end, f"{name}.dt must not exceed {name}.t_end")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Re-check the preconditions of every module the config feeds."""
    _require(isinstance(cfg.seed, int) and cfg.seed >= 0, "seed must be a non-negative integer")
    try:
        network = build_network(QMatrix.from_rows([list(r) for r in cfg.network.q_rows],
                                                  infer_diagonal=cfg.network.infer_diagonal))
    except SimplexDiffError as exc:
        raise ConfigError(f"network: {exc}") from exc
    d = network.d
    _require(cfg.mean_function.kind in MEAN_KINDS, f"mean_function.kind must be one of {MEAN_KINDS}")

    _require(cfg.ssa.N >= 1, "ssa.N must be >= 1")
    _require(cfg.ssa.n_paths >= 1, "ssa.n_paths must be >= 1")
    _require(cfg.ssa.t_end >= 0.0, "ssa.t_end must be >= 0")
    _check_state("ssa", cfg.ssa.x0, d)
    if cfg.ssa.sample_times:
        times = cfg.ssa.sample_times
        _require(all(0.0 <= t <= cfg.ssa.t_end for t in times), "ssa.sample_times must lie in [0, ssa.t_end]")
        _require(all(b > a for a, b in zip(times, times[1:])), "ssa.sample_times must be strictly increasing")
        _require(times[-1] == cfg.ssa.t_end, "ssa.sample_times must end at ssa.t_end")
    _require(cfg.cme.N >= 1, "cme.N must be >= 1")
    _check_state("cme", cfg.cme.x0, d)
    _check_run("cme", cfg.cme.dt, cfg.cme.t_end)
    _check_state("ode", cfg.ode.x0, d)
    _check_run("ode", cfg.ode.dt, cfg.ode.t_end)

    _check_state("sde", cfg.sde.x0, d)
    _check_run("sde", cfg.sde.dt, cfg.sde.t_end)
    _require(cfg.sde.h > 0.0, "sde.h must be > 0")
    _require(cfg.sde.n_paths >= 1, "sde.n_paths must be >= 1")
    _require(cfg.sde.noise_form in NOISE_FORMS, f"sde.noise_form must be one of {NOISE_FORMS}")
    _require(cfg.sde.potential in POTENTIALS, f"sde.potential must be one of {POTENTIALS}")
    _require(cfg.sde.bins >= 2, "sde.bins must be >= 2")
    if cfg.sde.potential == "free_energy":
        _require(cfg.mean_function.kind != "geometric", "the geometric mean has no free energy; use potential 'none'")

    _require(cfg.fp.theta in THETA_SOURCES, f"fp.theta must be one of {THETA_SOURCES}")
    _require(cfg.fp.potential in POTENTIALS, f"fp.potential must be one of {POTENTIALS}")
    _require(cfg.fp.h > 0.0 and cfg.fp.omega > 0.0, "fp.h and fp.omega must be > 0")
    _require(cfg.fp.grid >= 2, "fp.grid must be >= 2")
    _require(cfg.fp.t_end > 0.0, "fp.t_end must be > 0")
    _require(cfg.fp.dt >= 0.0, "fp.dt must be >= 0 (0 picks the stable step)")
    _require(cfg.fp.scheme in SCHEMES, f"fp.scheme must be one of {SCHEMES}")
    _require(cfg.fp.initial in INITIAL_DENSITIES, f"fp.initial must be one of {INITIAL_DENSITIES}")
    _require(cfg.green.theta in THETA_SOURCES, f"green.theta must be one of {THETA_SOURCES}")
    _require(cfg.green.t > 0.0, "green.t must be > 0")
    _require(cfg.green.grid >= 2, "green.grid must be >= 2")
    _require(cfg.green.initial in INITIAL_DENSITIES, f"green.initial must be one of {INITIAL_DENSITIES}")
    if "network" in (cfg.fp.theta, cfg.green.theta):
        _require(d == 2, "theta = 'network' needs a two-species network")

    _require(0.0 < cfg.wf.x0 < 1.0, "wf.x0 must lie in (0, 1)")
    _check_run("wf", cfg.wf.dt, cfg.wf.t_end)
    _require(cfg.wf.n_paths >= 1, "wf.n_paths must be >= 1")
    _require(cfg.wf.bins >= 2, "wf.bins must be >= 2")
    _require(cfg.compare.l1_threshold > 0.0, "compare.l1_threshold must be > 0")
    _require(0.0 < cfg.compare.alpha < 1.0, "compare.alpha must lie in (0, 1)")
    _require(cfg.compare.bins >= 2, "compare.bins must be >= 2")
    if cfg.threads is not None:
        _require(cfg.threads >= 1, "threads must be >= 1")
    return cfg


# ---------- CLI overrides ----------
RUN_TABLES = {"ssa": "ssa", "cme": "cme", "ode": "ode", "sde": "sde", "fp": "fp", "green": "green", "wf": "wf"}


def apply_overrides(cfg: ExperimentConfig, command: str, seed: Optional[int] = None, dt: Optional[float] = None,
                    t_end: Optional[float] = None, paths: Optional[int] = None, grid: Optional[int] = None,
                    threads: Optional[int] = None, out: Optional[str] = None) -> ExperimentConfig:
    """Apply command-line overrides to the subcommand's table, then re-validate."""
    top: Dict[str, Any] = {}
    if seed is not None:
        top["seed"] = seed
    if threads is not None:
        top["threads"] = threads
    if out is not None:
        top["output"] = dataclasses.replace(cfg.output, dir=out)
    table_name = RUN_TABLES.get(command)
    if table_name is not None:
        table = getattr(cfg, table_name)
        names = {f.name for f in dataclasses.fields(table)}
        changes: Dict[str, Any] = {}
        requested = {"--dt": ("dt", dt), "--t-end": ("t" if table_name == "green" else "t_end", t_end),
                     "--paths": ("n_paths", paths), "--grid": ("grid", grid)}
        for flag, (key, value) in requested.items():
            if value is None:
                continue
            if key not in names:
                raise ConfigError(f"{flag} does not apply to '{command}'")
            changes[key] = value
        if changes:
            top[table_name] = dataclasses.replace(table, **changes)
    resolved = dataclasses.replace(cfg, **top)
    return validate(resolved)


def network_from_config(cfg: ExperimentConfig):
    return build_network(QMatrix.from_rows([list(r) for r in cfg.network.q_rows],
                                           infer_diagonal=cfg.network.infer_diagonal))
