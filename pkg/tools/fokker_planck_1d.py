"""
Fokker-Planck tool for the two-point network: conservative finite-volume
solver with zero-flux boundaries, stationary densities, the Wasserstein
coordinate y(x) and the cosine-series Green function.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from tools.errors import (
    DomainError,
    NonIntegrableTheta,
    QuadratureError,
    TruncationWarning,
    UnstableTimestep,
)
from tools.onsager_geometry import MeanFunction, free_energy_batch, two_point_profile
from tools.reaction_network import ReactionNetwork
from tools.special_functions import quad_singular

logger = logging.getLogger(__name__)

# ---------- Tool Schemas ----------
TOOL_SCHEMA = {
    "name": "fokker_planck_1d",
    "description": "Degenerate 1-D Fokker-Planck solver, stationary density and Wasserstein Green function.",
    "operations": {
        "solve_fp": {"theta": "ThetaProfile", "V": "Potential1D", "h": "float > 0", "omega": "float > 0",
                     "p0": "DensityGrid1D", "t_end": "float", "dt": "float", "scheme": "euler | rk2",
                     "snapshot_times": "list[float]"},
        "stationary_density": {"theta": "ThetaProfile", "V": "Potential1D", "h": "float > 0", "M": "int"},
        "wasserstein_coordinate": {"theta": "ThetaProfile"},
        "green_function": {"spec": "GreenFunctionSpec", "t": "float > 0", "x": "array", "z": "array"},
        "evolve_via_green": {"spec": "GreenFunctionSpec", "p0": "DensityGrid1D", "t": "float > 0"},
    },
    "returns": "DensityGrid1D | FpResult | WassersteinCoordinate | array",
}

STABILITY_CONSTANT = 0.25
SERIES_TAIL = 1e-14
MAX_TERMS = 10 ** 5
SCHEMES = ("euler", "rk2")

ScalarFn = Callable[[np.ndarray], np.ndarray]


# ---------- Profiles and potentials ----------
@dataclass(frozen=True)
class ThetaProfile:
    """theta(x) on (0, 1) with its derivative and the endpoint certificate of theta^(-1/2)."""
    theta: ScalarFn
    theta_prime: ScalarFn
    certificate: str = "smooth"
    symmetric: bool = False
    name: str = "custom"

    @classmethod
    def canonical(cls) -> "ThetaProfile":
        """theta(x) = 2 sqrt(x (1 - x))."""
        def theta(x):
            x = np.asarray(x, dtype=float)
            return 2.0 * np.sqrt(np.maximum(x * (1.0 - x), 0.0))

        def theta_prime(x):
            x = np.asarray(x, dtype=float)
            return (1.0 - 2.0 * x) / np.sqrt(x * (1.0 - x))
        return cls(theta, theta_prime, certificate="sqrt", symmetric=True, name="canonical")

    @classmethod
    def constant(cls, c: float = 1.0) -> "ThetaProfile":
        if c <= 0.0:
            raise DomainError(f"constant theta must be positive, got {c}")
        return cls(lambda x: np.full(np.shape(x), float(c)), lambda x: np.zeros(np.shape(x)),
                   certificate="smooth", symmetric=True, name=f"constant({c})")

    @classmethod
    def from_network(cls, network: ReactionNetwork, mf: MeanFunction) -> "ThetaProfile":
        """theta(x) = theta(x / x^s_1, (1 - x) / x^s_2) of a two-species network."""
        profile = two_point_profile(network, mf)
        xs1, xs2 = network.x_stat

        def theta_prime(x):
            x = np.asarray(x, dtype=float)
            s, t = x / xs1, (1.0 - x) / xs2
            return mf.theta_partial_s(s, t) / xs1 - mf.theta_partial_s(t, s) / xs2
        return cls(profile, theta_prime, certificate=mf.certificate,
                   symmetric=bool(abs(xs1 - xs2) < 1e-15), name=f"{mf.kind}-network")


@dataclass(frozen=True)
class Potential1D:
    value: ScalarFn
    derivative: ScalarFn

    @classmethod
    def zero(cls) -> "Potential1D":
        return cls(lambda x: np.zeros(np.shape(x)), lambda x: np.zeros(np.shape(x)))

    @classmethod
    def from_network(cls, network: ReactionNetwork, mf: MeanFunction) -> "Potential1D":
        """V(x) = psi_ss(x, 1 - x), the free energy along the segment."""
        def states(x):
            x = np.asarray(x, dtype=float)
            return np.stack([x, 1.0 - x], axis=-1)

        def value(x):
            return free_energy_batch(network, mf, states(x))[0]

        def derivative(x):
            grad = free_energy_batch(network, mf, states(x))[1]
            return grad[..., 0] - grad[..., 1]
        return cls(value, derivative)


# ---------- Densities ----------
@dataclass
class DensityGrid1D:
    """Cell-centred density on [0, 1] with centres (m + 1/2) / M."""
    values: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return 1.0 / self.M

    @property
    def centers(self) -> np.ndarray:
        return cell_centers(self.M)

    def mass(self) -> float:
        return float(self.values.sum() / self.M)

    def normalized(self) -> "DensityGrid1D":
        return DensityGrid1D(self.values / self.mass(), dict(self.meta))

    def l1_distance(self, other: "DensityGrid1D") -> float:
        if other.M != self.M:
            raise DomainError(f"grids differ: {self.M} vs {other.M} cells")
        return float(np.abs(self.values - other.values).sum() / self.M)

    def inner_product(self, f: Any) -> float:
        """sum_m p_m f(x_m) dx, with f given as values or a callable."""
        fv = f(self.centers) if callable(f) else np.asarray(f, dtype=float)
        return float(np.dot(self.values, fv) / self.M)

    @classmethod
    def from_function(cls, f: ScalarFn, M: int, normalize: bool = True) -> "DensityGrid1D":
        values = np.asarray(f(cell_centers(M)), dtype=float)
        grid = cls(values)
        return grid.normalized() if normalize else grid

    @classmethod
    def uniform(cls, M: int) -> "DensityGrid1D":
        return cls(np.ones(M))

    @classmethod
    def one_hot(cls, M: int, cell: int) -> "DensityGrid1D":
        values = np.zeros(M)
        values[cell] = float(M)
        return cls(values)


def cell_centers(M: int) -> np.ndarray:
    if M < 2:
        raise DomainError(f"grid needs at least 2 cells, got {M}")
    return (np.arange(M) + 0.5) / M


def _theta_on_cells(theta: ThetaProfile, M: int) -> np.ndarray:
    values = np.asarray(theta.theta(cell_centers(M)), dtype=float)
    if np.any(~np.isfinite(values)) or np.any(values <= 0.0):
        raise NonIntegrableTheta(f"theta profile {theta.name!r} is not positive on the cell centres")
    return values


# ---------- Fokker-Planck solver ----------
@dataclass
class FpResult:
    density: DensityGrid1D
    snapshot_times: np.ndarray
    snapshots: List[DensityGrid1D]
    steps: int
    clipped: int = 0


def _flux_operator(theta_c: np.ndarray, v_c: np.ndarray, h: float, omega: float) -> Callable[[np.ndarray], np.ndarray]:
    """dp/dt = (F_{m+1/2} - F_{m-1/2}) / dx with F = h omega a_face D[q], q = p e^{V/h} sqrt(theta)."""
    M = theta_c.shape[0]
    dx = 1.0 / M
    shift = v_c / h - np.min(v_c / h)
    a = np.sqrt(theta_c) * np.exp(-shift)
    to_q = np.sqrt(theta_c) * np.exp(shift)
    a_face = h * omega * np.sqrt(a[:-1] * a[1:]) / (dx * dx)

    def rhs(p: np.ndarray) -> np.ndarray:
        q = p * to_q
        flux = a_face * (q[1:] - q[:-1])
        out = np.zeros_like(p)
        out[:-1] += flux
        out[1:] -= flux
        return out
    return rhs


def solve_fp(theta: ThetaProfile, V: Optional[Potential1D], h: float, omega: float, p0: DensityGrid1D,
             t_end: float, dt: float, scheme: str = "euler",
             snapshot_times: Optional[Sequence[float]] = None) -> FpResult:
    """Finite-volume solve of the zero-flux Fokker-Planck equation up to t_end.

    Args:
        theta: Mobility profile.
        V: Potential; None means zero.
        h: Fluctuation parameter.
        omega: Edge weight.
        p0: Initial density (normalized).
        t_end: Horizon.
        dt: Upper bound on the step.
        scheme: ``euler`` or ``rk2`` (Heun).
        snapshot_times: Times in [0, t_end] at which to keep the density.

    Raises:
        UnstableTimestep: dt > 0.25 dx^2 / (h omega max theta).
    """
    if scheme not in SCHEMES:
        raise DomainError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if h <= 0.0 or omega <= 0.0:
        raise DomainError(f"need h > 0 and omega > 0, got h={h}, omega={omega}")
    M = p0.M
    theta_c = _theta_on_cells(theta, M)
    limit = STABILITY_CONSTANT * (1.0 / M) ** 2 / (h * omega * np.max(theta_c))
    if dt <= 0.0 or dt > limit * (1.0 + 1e-12):
        raise UnstableTimestep(f"dt={dt:.3e} exceeds the stability bound {limit:.3e}")
    potential = V or Potential1D.zero()
    rhs = _flux_operator(theta_c, np.asarray(potential.value(cell_centers(M)), dtype=float), h, omega)

    marks = sorted(set(float(s) for s in (snapshot_times or [])) | {float(t_end)})
    if marks and (marks[0] < 0.0 or marks[-1] > t_end + 1e-12):
        raise DomainError("snapshot times must lie in [0, t_end]")
    p = p0.values.astype(float).copy()
    t = 0.0
    steps = 0
    clipped = 0
    snapshots: List[DensityGrid1D] = []
    snap_times: List[float] = []
    requested = set(float(s) for s in (snapshot_times or []))
    for mark in marks:
        span = mark - t
        n = int(np.ceil(span / dt - 1e-9)) if span > 0.0 else 0
        step = span / n if n else 0.0
        for _ in range(n):
            if scheme == "euler":
                p = p + step * rhs(p)
            else:
                predictor = p + step * rhs(p)
                p = p + 0.5 * step * (rhs(p) + rhs(predictor))
            if p.min() < 0.0:
                clipped += int(np.count_nonzero(p < -1e-14))
                p = np.maximum(p, 0.0)
        steps += n
        t = mark
        if mark in requested:
            snapshots.append(DensityGrid1D(p.copy(), {"t": mark}))
            snap_times.append(mark)
    if clipped:
        logger.warning("FP solver clipped %d negative cell values", clipped)
    logger.debug("FP solve: M=%d, %d steps (%s), final mass %.15f", M, steps, scheme, p.sum() / M)
    return FpResult(density=DensityGrid1D(p, {"t": t_end, "scheme": scheme}),
                    snapshot_times=np.array(snap_times), snapshots=snapshots, steps=steps, clipped=clipped)


def stationary_density(theta: ThetaProfile, V: Optional[Potential1D], h: float, M: int,
                       normalization: str = "discrete") -> DensityGrid1D:
    """pi = e^{-V/h} theta^{-1/2} / Z on the cell centres.

    ``discrete`` normalizes the cell values to unit mass (the fixed point of
    ``solve_fp``); ``exact`` divides by the quadrature value of Z.
    """
    if h <= 0.0:
        raise DomainError(f"h must be positive, got {h}")
    potential = V or Potential1D.zero()
    x = cell_centers(M)
    theta_c = _theta_on_cells(theta, M)
    v = np.asarray(potential.value(x), dtype=float)
    shift = np.min(v)
    values = np.exp(-(v - shift) / h) / np.sqrt(theta_c)
    if normalization == "discrete":
        return DensityGrid1D(values).normalized()
    if normalization != "exact":
        raise DomainError(f"normalization must be 'discrete' or 'exact', got {normalization!r}")

    def weight(r):
        return np.exp(-(np.asarray(potential.value(r), dtype=float) - shift) / h) / np.sqrt(theta.theta(r))
    try:
        z = quad_singular(weight, 0.0, 1.0, certificate=theta.certificate)
    except QuadratureError as exc:
        raise NonIntegrableTheta(f"stationary normalization diverges: {exc}") from exc
    return DensityGrid1D(values / z, {"Z": z * np.exp(shift / h)})


# ---------- Wasserstein coordinate and Green function ----------
@dataclass
class WassersteinCoordinate:
    """y(x) = (1/Z) int_0^x theta^{-1/2}, monotone from 0 to 1."""
    theta: ThetaProfile
    Z: float

    def _integrand(self, r: np.ndarray) -> np.ndarray:
        return 1.0 / np.sqrt(self.theta.theta(r))

    def length(self, x: Any) -> Any:
        """Z * y(x) = W_2((0, 1), (x, 1 - x)); cumulative over sorted points."""
        xs = np.asarray(x, dtype=float)
        flat = xs.ravel()
        if np.any(flat < 0.0) or np.any(flat > 1.0):
            raise DomainError("coordinate arguments must lie in [0, 1]")
        order = np.argsort(flat, kind="stable")
        out = np.empty_like(flat)
        total = 0.0
        previous = 0.0
        for idx in order:
            point = flat[idx]
            if point > previous:
                total += quad_singular(self._integrand, previous, point, certificate=self.theta.certificate)
                previous = point
            out[idx] = total
        return float(out[0]) if xs.ndim == 0 else out.reshape(xs.shape)

    def __call__(self, x: Any) -> Any:
        return self.length(x) / self.Z


def wasserstein_coordinate(theta: ThetaProfile) -> WassersteinCoordinate:
    """Build y(x) and the total length Z = int_0^1 theta^{-1/2}.

    Raises:
        NonIntegrableTheta: quadrature of theta^{-1/2} fails.
    """
    try:
        z = quad_singular(lambda r: 1.0 / np.sqrt(theta.theta(r)), 0.0, 1.0, certificate=theta.certificate)
    except QuadratureError as exc:
        raise NonIntegrableTheta(str(exc)) from exc
    if not np.isfinite(z) or z <= 0.0:
        raise NonIntegrableTheta(f"total length Z={z} is not finite and positive")
    return WassersteinCoordinate(theta=theta, Z=z)


@dataclass
class GreenFunctionSpec:
    theta: ThetaProfile
    Z: float
    y: WassersteinCoordinate
    k_max: int = MAX_TERMS

    @classmethod
    def build(cls, theta: ThetaProfile, k_max: int = MAX_TERMS) -> "GreenFunctionSpec":
        coordinate = wasserstein_coordinate(theta)
        return cls(theta=theta, Z=coordinate.Z, y=coordinate, k_max=k_max)

    @property
    def gap(self) -> float:
        """Slowest decay rate (pi / Z)^2."""
        return (np.pi / self.Z) ** 2


def series_terms(spec: GreenFunctionSpec, t: float) -> int:
    """Number of cosine modes until exp(-(k pi / Z)^2 t) < 1e-14, capped at k_max."""
    needed = int(np.ceil(spec.Z / np.pi * np.sqrt(-np.log(SERIES_TAIL) / t)))
    if needed > spec.k_max:
        warnings.warn(f"Green series truncated at {spec.k_max} terms (needs {needed} at t={t})",
                      TruncationWarning, stacklevel=3)
        logger.warning("Green series truncated at %d terms for t=%.3e", spec.k_max, t)
        return spec.k_max
    return max(needed, 1)


def green_function(spec: GreenFunctionSpec, t: float, x: Any, z: Any) -> Any:
    """G(t, x, z) = theta(x)^{-1/2} / Z [1 + 2 sum_k e^{-(k pi / Z)^2 t} cos(k pi y(z)) cos(k pi y(x))]."""
    if t <= 0.0:
        raise DomainError(f"green_function needs t > 0, got {t}")
    x_arr, z_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
    if np.any((x_arr <= 0.0) | (x_arr >= 1.0) | (z_arr <= 0.0) | (z_arr >= 1.0)):
        raise DomainError("green_function needs x, z in (0, 1)")
    yx = np.asarray(spec.y(x_arr), dtype=float)
    yz = np.asarray(spec.y(z_arr), dtype=float)
    terms = series_terms(spec, t)
    total = np.ones_like(yx)
    chunk = 256
    for start in range(1, terms + 1, chunk):
        k = np.arange(start, min(start + chunk, terms + 1), dtype=float)
        decay = np.exp(-(k * np.pi / spec.Z) ** 2 * t)
        modes = np.cos(np.multiply.outer(yx, k * np.pi)) * np.cos(np.multiply.outer(yz, k * np.pi))
        total = total + 2.0 * np.sum(modes * decay, axis=-1)
    out = total / (np.sqrt(spec.theta.theta(x_arr)) * spec.Z)
    return float(out) if out.ndim == 0 else out


def evolve_via_green(spec: GreenFunctionSpec, p0: DensityGrid1D, t: float) -> DensityGrid1D:
    """p(t, x_m) = sum_n G(t, x_m, z_n) p0_n dz, renormalized to unit mass."""
    if t <= 0.0:
        raise DomainError(f"evolve_via_green needs t > 0, got {t}")
    x = p0.centers
    y = np.asarray(spec.y(x), dtype=float)
    terms = series_terms(spec, t)
    total = np.ones_like(y)
    chunk = 256
    for start in range(1, terms + 1, chunk):
        k = np.arange(start, min(start + chunk, terms + 1), dtype=float)
        decay = np.exp(-(k * np.pi / spec.Z) ** 2 * t)
        basis = np.cos(np.multiply.outer(y, k * np.pi))
        coeffs = p0.values @ basis / p0.M
        total = total + 2.0 * basis @ (decay * coeffs)
    values = np.maximum(total / (np.sqrt(spec.theta.theta(x)) * spec.Z), 0.0)
    grid = DensityGrid1D(values, {"t": t, "terms": terms})
    return grid.normalized()


# ---------- Diagnostics ----------
def heat_coordinate_residual(theta: ThetaProfile, snapshots: Sequence[DensityGrid1D], times: Sequence[float],
                             window: Tuple[float, float] = (0.1, 0.9)) -> float:
    """Relative residual of du/dt = Z^{-2} d^2u/dy^2 for u = Z sqrt(theta) p.

    Needs three snapshots at t - delta, t, t + delta; the spatial second
    derivative uses the three-point formula on the nonuniform y grid.
    """
    if len(snapshots) != 3:
        raise DomainError("heat_coordinate_residual needs exactly three snapshots")
    t0, t1, t2 = (float(s) for s in times)
    if abs((t1 - t0) - (t2 - t1)) > 1e-12 * max(t2, 1.0):
        raise DomainError("snapshot times must be equally spaced")
    coordinate = wasserstein_coordinate(theta)
    x = snapshots[0].centers
    y = np.asarray(coordinate(x), dtype=float)
    root = np.sqrt(theta.theta(x))
    u = [coordinate.Z * root * s.values for s in snapshots]
    du_dt = (u[2] - u[0]) / (t2 - t0)
    mid = u[1]
    second = 2.0 * ((mid[2:] - mid[1:-1]) / (y[2:] - y[1:-1]) - (mid[1:-1] - mid[:-2]) / (y[1:-1] - y[:-2])) \
        / (y[2:] - y[:-2])
    residual = du_dt[1:-1] - second / coordinate.Z ** 2
    inside = (x[1:-1] >= window[0]) & (x[1:-1] <= window[1])
    scale = max(float(np.max(np.abs(du_dt[1:-1][inside]))), 1e-300)
    return float(np.max(np.abs(residual[inside])) / scale)


def fit_decay_rate(times: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log|values| against time."""
    times = np.asarray(times, dtype=float)
    logs = np.log(np.abs(np.asarray(values, dtype=float)))
    slope, _ = np.polyfit(times, logs, 1)
    return float(slope)


def first_mode(coordinate: WassersteinCoordinate) -> ScalarFn:
    """cos(pi y(x)), the slowest non-constant mode."""
    return lambda x: np.cos(np.pi * np.asarray(coordinate(x), dtype=float))
