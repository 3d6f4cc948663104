"""
CSV artifacts. Every file starts with one comment line
``# config_hash=<16 hex> seed=<seed>`` followed by a pandas-written table
with full double precision.
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import pandas as pd

from tools.errors import ConfigError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def header_line(config_hash: str, seed: int) -> str:
    return f"# config_hash={config_hash} seed={seed}\n"


def write_csv(frame: pd.DataFrame, path: Path, config_hash: str, seed: int) -> Path:
    """Write ``frame`` with the provenance header; one writer per file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write(header_line(config_hash, seed))
        frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %s (%d rows)", path, len(frame))
    return path


def read_header(path: Path) -> Dict[str, str]:
    with Path(path).open("r", encoding="utf-8") as handle:
        first = handle.readline()
    if not first.startswith("#"):
        return {}
    fields = {}
    for token in first.lstrip("#").split():
        key, _, value = token.partition("=")
        fields[key] = value
    return fields


def read_csv(path: Path) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Read an artifact, returning the table and its header fields."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    try:
        frame = pd.read_csv(path, comment="#")
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if frame.empty:
        raise ConfigError(f"{path} has no data rows")
    return frame, read_header(path)


class ArtifactWriter:
    """Writes the artifacts of one subcommand into its output directory."""

    def __init__(self, out_dir: str, config_hash: str, seed: int, prefix: Optional[str] = None):
        self.out_dir = Path(out_dir)
        self.config_hash = config_hash
        self.seed = seed
        self.prefix = prefix
        self.written = []

    def write(self, name: str, frame: pd.DataFrame) -> Path:
        filename = f"{self.prefix}_{name}.csv" if self.prefix else f"{name}.csv"
        path = write_csv(frame, self.out_dir / filename, self.config_hash, self.seed)
        self.written.append(path)
        return path
