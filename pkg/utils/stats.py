"""
Statistical comparison of Monte-Carlo output against reference densities:
histogram L1 distances, one- and two-sample Kolmogorov-Smirnov tests,
moment tables and inverse-CDF sampling from tabulated densities.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from scipy.stats import ks_1samp, ks_2samp

from tools.errors import SupportMismatch

logger = logging.getLogger(__name__)

SUPPORT_TOL = 1e-9


def ks_coefficient(alpha: float = 0.01) -> float:
    """c(alpha) = sqrt(-ln(alpha / 2) / 2); 1.6276 at the 1% level."""
    return float(np.sqrt(-0.5 * np.log(0.5 * alpha)))


def ks_critical_value(n: int, m: Optional[int] = None, alpha: float = 0.01) -> float:
    """Asymptotic KS critical value, two-sample when ``m`` is given."""
    if n < 1 or (m is not None and m < 1):
        raise ValueError("sample sizes must be positive")
    if m is None:
        return ks_coefficient(alpha) / np.sqrt(n)
    return ks_coefficient(alpha) * np.sqrt((n + m) / (n * m))


@dataclass
class Histogram:
    """Counts on bins [left_k, right_k)."""
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def frequency(self) -> np.ndarray:
        return self.counts / max(self.total, 1.0)

    @classmethod
    def from_samples(cls, samples: np.ndarray, bins: int = 50, lower: float = 0.0,
                     upper: float = 1.0) -> "Histogram":
        edges = np.linspace(lower, upper, bins + 1)
        counts, _ = np.histogram(np.asarray(samples, dtype=float), bins=edges)
        return cls(edges[:-1], edges[1:], counts.astype(float))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "Histogram":
        missing = {"bin_left", "bin_right", "count"} - set(frame.columns)
        if missing:
            raise SupportMismatch(f"histogram table lacks columns {sorted(missing)}")
        if frame.empty:
            raise SupportMismatch("histogram table has no rows")
        return cls(frame["bin_left"].to_numpy(float), frame["bin_right"].to_numpy(float),
                   frame["count"].to_numpy(float))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bin_left": self.left, "bin_right": self.right,
                             "count": self.counts, "frequency": self.frequency})


@dataclass
class TabulatedDensity:
    """Density given by cell values on equal cells of [lower, upper]."""
    values: np.ndarray
    lower: float = 0.0
    upper: float = 1.0

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.values.shape[0] + 1)

    def cdf_at_edges(self) -> np.ndarray:
        width = (self.upper - self.lower) / self.values.shape[0]
        cumulative = np.concatenate([[0.0], np.cumsum(self.values) * width])
        return cumulative / cumulative[-1]

    def cdf(self, x: Any) -> Any:
        return np.interp(x, self.edges, self.cdf_at_edges())

    def bin_mass(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        return self.cdf(right) - self.cdf(left)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-CDF sampling of the piecewise-constant density."""
        return np.interp(rng.random(size), self.cdf_at_edges(), self.edges)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "TabulatedDensity":
        if "x" not in frame.columns or "p" not in frame.columns:
            raise SupportMismatch("density table needs columns x and p")
        if frame.empty:
            raise SupportMismatch("density table has no rows")
        x = frame["x"].to_numpy(float)
        width = float(np.mean(np.diff(x))) if x.size > 1 else 1.0
        return cls(frame["p"].to_numpy(float), lower=float(x[0] - 0.5 * width), upper=float(x[-1] + 0.5 * width))


@dataclass
class ComparisonReport:
    l1: float
    ks_statistic: Optional[float]
    ks_critical: Optional[float]
    l1_threshold: float
    moments: pd.DataFrame = field(default_factory=pd.DataFrame)
    mode: str = "histogram"

    @property
    def l1_passed(self) -> bool:
        return self.l1 <= self.l1_threshold

    @property
    def ks_passed(self) -> Optional[bool]:
        if self.ks_statistic is None:
            return None
        return self.ks_statistic < self.ks_critical

    @property
    def passed(self) -> bool:
        return self.l1_passed and self.ks_passed is not False

    def to_frame(self) -> pd.DataFrame:
        rows: List[Dict[str, Any]] = [
            {"metric": "l1", "value": self.l1, "threshold": self.l1_threshold, "passed": self.l1_passed},
        ]
        if self.ks_statistic is not None:
            rows.append({"metric": "ks", "value": self.ks_statistic, "threshold": self.ks_critical,
                         "passed": self.ks_passed})
        return pd.DataFrame(rows)


def _moments(label: str, centers: np.ndarray, weights: np.ndarray) -> Dict[str, Any]:
    weights = weights / max(weights.sum(), 1e-300)
    mean = float(np.dot(weights, centers))
    return {"source": label, "mean": mean, "variance": float(np.dot(weights, (centers - mean) ** 2))}


def _check_support(hist: Histogram, density: TabulatedDensity):
    if hist.left[0] < density.lower - SUPPORT_TOL or hist.right[-1] > density.upper + SUPPORT_TOL:
        raise SupportMismatch(f"histogram support [{hist.left[0]}, {hist.right[-1]}] exceeds density "
                              f"support [{density.lower}, {density.upper}]")


def compare_distributions(hist: Histogram, density: TabulatedDensity, l1_threshold: float = 0.05,
                          samples: Optional[np.ndarray] = None, alpha: float = 0.01) -> ComparisonReport:
    """L1 distance between histogram frequencies and the density's bin masses.

    With raw ``samples`` a one-sample KS test against the density's CDF is added.
    """
    _check_support(hist, density)
    masses = density.bin_mass(hist.left, hist.right)
    l1 = float(np.abs(hist.frequency - masses).sum())
    ks_stat = ks_crit = None
    if samples is not None:
        samples = np.asarray(samples, dtype=float)
        ks_stat = float(ks_1samp(samples, density.cdf).statistic)
        ks_crit = ks_critical_value(samples.size, alpha=alpha)
    centers = 0.5 * (hist.left + hist.right)
    moments = pd.DataFrame([_moments("samples", centers, hist.counts), _moments("density", centers, masses)])
    report = ComparisonReport(l1=min(l1, 2.0), ks_statistic=ks_stat, ks_critical=ks_crit,
                              l1_threshold=l1_threshold, moments=moments,
                              mode="samples" if samples is not None else "histogram")
    logger.info("comparison: L1=%.4g (threshold %.3g)%s", report.l1, l1_threshold,
                f", KS={ks_stat:.4g} (critical {ks_crit:.4g})" if ks_stat is not None else "")
    return report


def compare_densities(first: TabulatedDensity, second: TabulatedDensity, l1_threshold: float = 0.05) -> ComparisonReport:
    """Density-vs-density mode on the union of both cell grids."""
    edges = np.union1d(first.edges, second.edges)
    left, right = edges[:-1], edges[1:]
    a = first.bin_mass(left, right)
    b = second.bin_mass(left, right)
    l1 = float(np.abs(a - b).sum())
    centers = 0.5 * (left + right)
    moments = pd.DataFrame([_moments("first", centers, a), _moments("second", centers, b)])
    return ComparisonReport(l1=min(l1, 2.0), ks_statistic=None, ks_critical=None,
                            l1_threshold=l1_threshold, moments=moments, mode="density")


def two_sample_ks(first: np.ndarray, second: np.ndarray, alpha: float = 0.01) -> Dict[str, float]:
    result = ks_2samp(first, second)
    critical = ks_critical_value(len(first), len(second), alpha)
    return {"statistic": float(result.statistic), "critical": critical, "pvalue": float(result.pvalue),
            "passed": bool(result.statistic < critical)}


def histogram_l1(counts: np.ndarray, masses: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=float)
    return float(np.abs(counts / counts.sum() - np.asarray(masses, dtype=float)).sum())
