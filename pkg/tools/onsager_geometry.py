"""
Onsager geometry tool: mean functions, free energies, the Onsager matrix
K(x) and its eigen-decomposition, the gradient-flow ODE, the metric and
volume of the simplex, extrinsic differential operators, the generator,
the stationary Hamilton-Jacobi residual and the two-point Wasserstein
distance.

Batched helpers take states of shape (..., d); the single-point
operations wrap them.
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import xlogy

from tools.errors import (
    BoundarySingular,
    DomainError,
    NearSingularMetric,
    NonIntegrableTheta,
    QuadratureError,
    StepLeftSimplex,
)
from tools.linalg import jacobi_eigh
from tools.reaction_network import ReactionNetwork, Trajectory, as_state_vector, coerce_state
from tools.special_functions import DIAGONAL_SWITCH, log_mean_array, quad_singular

logger = logging.getLogger(__name__)

# ---------- Tool Schemas ----------
TOOL_SCHEMA = {
    "name": "onsager_geometry",
    "description": "Onsager matrix, metric, gradient flow and differential operators on the simplex.",
    "operations": {
        "theta_mean": {"mf": "MeanFunction", "s": "float > 0", "t": "float > 0"},
        "free_energy": {"network": "ReactionNetwork", "mf": "MeanFunction", "x": "SimplexState"},
        "build_onsager": {"network": "ReactionNetwork", "mf": "MeanFunction", "x": "SimplexState"},
        "build_onsager_general": {"reactions": "list[Reaction]", "x": "vector"},
        "solve_gradient_flow": {"network": "ReactionNetwork", "mf": "MeanFunction",
                                "x0": "SimplexState", "t_end": "float", "dt": "float"},
        "metric_tensor": {"decomp": "OnsagerDecomposition"},
        "differential_operators": {"network": "ReactionNetwork", "mf": "MeanFunction",
                                   "f": "ScalarField", "x": "SimplexState"},
        "apply_generator": {"network": "ReactionNetwork", "mf": "MeanFunction",
                            "f": "ScalarField", "x": "SimplexState", "h": "float"},
        "hje_residual": {"network": "ReactionNetwork", "psi_grad": "callable", "x": "vector"},
        "wasserstein2_twopoint": {"network": "ReactionNetwork", "mf": "MeanFunction", "x": "float"},
        "identity_residuals": {"network": "ReactionNetwork", "mf": "MeanFunction", "points": "array"},
    },
    "returns": "see operation",
}

FD_REL_STEP = 1e-6
CHART_STEP = 1e-4
SINGULAR_EIGENVALUE = 1e-12
MAX_HALVINGS = 40
POTENTIALS = ("free_energy", "none")

ArrayFn = Callable[[np.ndarray], np.ndarray]


# =====================================================================
# Mean functions
# =====================================================================
def _kl_phi(r):
    return xlogy(r, r) - r + 1.0


def _kl_dphi(r):
    return np.log(r)


def _kl_d2phi(r):
    return 1.0 / r


def _quad_phi(r):
    return (r - 1.0) ** 2


def _quad_dphi(r):
    return 2.0 * (r - 1.0)


def _quad_d2phi(r):
    return np.full_like(np.asarray(r, dtype=float), 2.0)


@dataclass(frozen=True)
class MeanFunction:
    """Two-point mean theta(s, t), optionally generated by a convex phi.

    ``phi`` is None only for the geometric mean, which has no free energy.
    """
    kind: str
    phi: Optional[ArrayFn] = None
    dphi: Optional[ArrayFn] = None
    d2phi: Optional[ArrayFn] = None

    @classmethod
    def logarithmic(cls) -> "MeanFunction":
        return cls("logarithmic", _kl_phi, _kl_dphi, _kl_d2phi)

    @classmethod
    def quadratic(cls) -> "MeanFunction":
        return cls("quadratic", _quad_phi, _quad_dphi, _quad_d2phi)

    @classmethod
    def geometric(cls) -> "MeanFunction":
        return cls("geometric")

    @classmethod
    def from_phi(cls, phi: ArrayFn, dphi: ArrayFn, d2phi: ArrayFn) -> "MeanFunction":
        return cls("generic", phi, dphi, d2phi)

    @classmethod
    def from_kind(cls, kind: str) -> "MeanFunction":
        builders = {"logarithmic": cls.logarithmic, "quadratic": cls.quadratic,
                    "geometric": cls.geometric}
        if kind not in builders:
            raise DomainError(f"unknown mean function kind {kind!r}; expected one of {sorted(builders)}")
        return builders[kind]()

    @property
    def has_free_energy(self) -> bool:
        return self.phi is not None

    @property
    def degenerate_at_zero(self) -> bool:
        return self.kind in ("logarithmic", "geometric")

    @property
    def certificate(self) -> str:
        return {"logarithmic": "log", "geometric": "sqrt"}.get(self.kind, "smooth")

    def theta(self, s: Any, t: Any) -> np.ndarray:
        """Vectorized theta on [0, inf)^2."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.kind == "logarithmic":
            return log_mean_array(s, t)
        if self.kind == "geometric":
            return np.sqrt(np.maximum(s * t, 0.0))
        big = np.maximum(s, t)
        near = np.abs(s - t) <= DIAGONAL_SWITCH * big
        with np.errstate(divide="ignore", invalid="ignore"):
            far = (s - t) / (self.dphi(s) - self.dphi(t))
            limit = 1.0 / self.d2phi(0.5 * (s + t))
        return np.where(near, limit, far)

    def theta_partial_s(self, s: Any, t: Any) -> np.ndarray:
        """d theta / d s; d theta / d t follows by symmetry."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.kind == "geometric":
            with np.errstate(divide="ignore", invalid="ignore"):
                return 0.5 * np.sqrt(t / s)
        if self.kind == "quadratic":
            return np.zeros(np.broadcast(s, t).shape)
        step = FD_REL_STEP * s
        fd = (self.theta(s + step, t) - self.theta(s - step, t)) / (2.0 * step)
        if self.kind != "logarithmic":
            return fd
        # closed form away from the diagonal
        value = self.theta(s, t)
        gap = s - t
        far = np.abs(gap) > 1e-3 * np.maximum(s, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            exact = value / gap * (1.0 - value / s)
        return np.where(far, exact, fd)


def theta_mean(mf: MeanFunction, s: float, t: float) -> float:
    """theta(s, t) for positive arguments."""
    if not (s > 0.0 and t > 0.0):
        raise DomainError(f"theta_mean needs positive arguments, got ({s}, {t})")
    return float(mf.theta(s, t))


def theta_partial_s(mf: MeanFunction, s: Any, t: Any) -> np.ndarray:
    return mf.theta_partial_s(s, t)


# =====================================================================
# Free energy and potentials
# =====================================================================
def _require_free_energy(mf: MeanFunction) -> None:
    if not mf.has_free_energy:
        raise DomainError(f"mean function {mf.kind!r} has no free energy; use potential='none'")


def free_energy_batch(network: ReactionNetwork, mf: MeanFunction,
                      x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """psi_ss(x) = sum_i phi(x_i / x^s_i) x^s_i and its gradient phi'(x_i / x^s_i)."""
    _require_free_energy(mf)
    ratio = np.asarray(x, dtype=float) / network.x_stat
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.sum(mf.phi(ratio) * network.x_stat, axis=-1)
        grad = mf.dphi(ratio)
    return value, grad


def free_energy(network: ReactionNetwork, mf: MeanFunction, x: Any) -> Tuple[float, np.ndarray]:
    """Free energy (phi-divergence to x^s) and its gradient.

    Raises:
        BoundarySingular: the gradient overflows on the boundary (KL energy).
    """
    state = coerce_state(x, network.d)
    value, grad = free_energy_batch(network, mf, state.x)
    if not np.all(np.isfinite(grad)):
        raise BoundarySingular(f"free-energy gradient is singular at boundary point {state.x}")
    return float(value), grad


def free_energy_gradient_fn(network: ReactionNetwork, mf: MeanFunction, scale: float = 1.0) -> ArrayFn:
    """Gradient evaluator of scale * psi_ss, for hje_residual and generators."""
    def grad(x: np.ndarray) -> np.ndarray:
        return scale * free_energy_batch(network, mf, x)[1]
    return grad


def potential_batch(network: ReactionNetwork, mf: MeanFunction, x: np.ndarray,
                    potential: str) -> Tuple[np.ndarray, np.ndarray]:
    """Energy driving the dynamics: the free energy, or zero for the canonical diffusion."""
    if potential not in POTENTIALS:
        raise DomainError(f"unknown potential {potential!r}; expected one of {POTENTIALS}")
    x = np.asarray(x, dtype=float)
    if potential == "none":
        return np.zeros(x.shape[:-1]), np.zeros_like(x)
    return free_energy_batch(network, mf, x)


# =====================================================================
# Onsager matrix
# =====================================================================
@dataclass
class OnsagerDecomposition:
    """K(x) with its positive eigenpairs and noise factor sigma (K = sigma sigma^T)."""
    x: np.ndarray
    K: np.ndarray
    lambdas: np.ndarray
    eigvecs: np.ndarray
    e: np.ndarray
    sigma: np.ndarray

    @property
    def d(self) -> int:
        return self.K.shape[0]


@dataclass
class MetricData:
    """Metric of the simplex in the chart (x_1, ..., x_{d-1})."""
    g: np.ndarray
    g_inv: np.ndarray
    det_g: float
    det_g_direct: float
    vol_density: float


def _offdiag_omega(network: ReactionNetwork) -> np.ndarray:
    return np.where(np.eye(network.d, dtype=bool), 0.0, network.omega)


def _with_zero_rowsum(off: np.ndarray) -> np.ndarray:
    d = off.shape[-1]
    return off - np.eye(d) * off.sum(axis=-1)[..., None]


def onsager_matrix(network: ReactionNetwork, mf: MeanFunction, x: np.ndarray) -> np.ndarray:
    """K_ij = -omega_ij theta(x_i/x^s_i, x_j/x^s_j) off the diagonal, zero row sums."""
    ratio = np.asarray(x, dtype=float) / network.x_stat
    theta = mf.theta(ratio[..., :, None], ratio[..., None, :])
    return _with_zero_rowsum(-_offdiag_omega(network) * theta)


def onsager_derivative(network: ReactionNetwork, mf: MeanFunction, x: np.ndarray) -> np.ndarray:
    """Tensor dK[..., k, i, j] = d K_ij / d x_k in ambient coordinates."""
    ratio = np.asarray(x, dtype=float) / network.x_stat
    d = network.d
    partial = mf.theta_partial_s(ratio[..., :, None], ratio[..., None, :])
    gs = _offdiag_omega(network) * partial / network.x_stat[:, None]
    eye = np.eye(d)
    # row k and column k of dK_k carry -gs[k, :]
    off = eye[:, :, None] * gs[..., :, None, :] + eye[:, None, :] * gs[..., :, :, None]
    return -off + eye * off.sum(axis=-1)[..., None]


def divergence_k(dk: np.ndarray) -> np.ndarray:
    """(div K)_i = sum_j d_j K_ij."""
    return np.einsum("...jij->...i", dk)


def log_volume_batch(network: ReactionNetwork, mf: MeanFunction, x: np.ndarray,
                     k: Optional[np.ndarray] = None,
                     dk: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """log|g| and its ambient gradient.

    |g| = 1 / det K_{d-1}, so grad log|g| = -tr(K_{d-1}^{-1} d_k K_{d-1}).
    """
    d = network.d
    if k is None:
        k = onsager_matrix(network, mf, x)
    if dk is None:
        dk = onsager_derivative(network, mf, x)
    block = k[..., : d - 1, : d - 1]
    sign, logdet = np.linalg.slogdet(block)
    if np.any(sign <= 0.0):
        raise NearSingularMetric("K_{d-1} block is not positive definite")
    g = np.linalg.inv(block)
    trace = np.einsum("...ij,...kji->...k", g, dk[..., :, : d - 1, : d - 1])
    return -logdet, -trace


def _check_interior(mf: MeanFunction, x: np.ndarray) -> None:
    if mf.degenerate_at_zero and np.min(x) <= 0.0:
        raise BoundarySingular(f"theta degenerates at boundary point {x}")


def decompose_batch(k: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Positive eigenpairs of zero-row-sum K: (lambdas (..., d-1), vectors (..., d, d-1))."""
    vals, vecs = jacobi_eigh(k)
    return vals[..., :-1], vecs[..., :, :-1]


def build_onsager(network: ReactionNetwork, mf: MeanFunction, x: Any) -> OnsagerDecomposition:
    """Onsager matrix at an interior point with eigenpairs sorted descending.

    Raises:
        BoundarySingular: x on the boundary while theta degenerates there.
    """
    state = coerce_state(x, network.d)
    _check_interior(mf, state.x)
    k = onsager_matrix(network, mf, state.x)
    lambdas, vecs = decompose_batch(k)
    sigma = vecs * np.sqrt(np.maximum(lambdas, 0.0))
    d = network.d
    return OnsagerDecomposition(x=state.x.copy(), K=k, lambdas=lambdas, eigvecs=vecs,
                                e=np.full(d, 1.0 / np.sqrt(d)), sigma=sigma)


@dataclass(frozen=True)
class Reaction:
    """Reversible reaction with stoichiometric change nu; rates are numbers or callables of x."""
    nu: np.ndarray
    forward: Union[float, Callable[[np.ndarray], float]]
    backward: Union[float, Callable[[np.ndarray], float]]


def linear_reactions(network: ReactionNetwork) -> List[Reaction]:
    """Encode a linear network as one reversible reaction X_i <-> X_j per edge."""
    d = network.d
    q = network.rates
    out = []
    for i in range(d):
        for j in range(i + 1, d):
            if network.omega[i, j] <= 0.0:
                continue
            nu = np.zeros(d, dtype=int)
            nu[i], nu[j] = -1, 1
            out.append(Reaction(nu=nu,
                                forward=lambda x, i=i, j=j: q[i, j] * x[i],
                                backward=lambda x, i=i, j=j: q[j, i] * x[j]))
    return out


def build_onsager_general(reactions: Sequence[Reaction], x: Any,
                          mf: Optional[MeanFunction] = None) -> np.ndarray:
    """K = sum_r Lambda(Phi_r^+, Phi_r^-) nu^r (nu^r)^T with Lambda the logarithmic mean.

    Raises:
        DomainError: a rate is not positive at x.
    """
    mean = mf or MeanFunction.logarithmic()
    x = as_state_vector(x)
    d = x.shape[0]
    k = np.zeros((d, d))
    for n, reaction in enumerate(reactions):
        plus = reaction.forward(x) if callable(reaction.forward) else reaction.forward
        minus = reaction.backward(x) if callable(reaction.backward) else reaction.backward
        if not (plus > 0.0 and minus > 0.0):
            raise DomainError(f"reaction {n} has nonpositive rate ({plus}, {minus})")
        nu = np.asarray(reaction.nu, dtype=float)
        k += float(mean.theta(plus, minus)) * np.outer(nu, nu)
    return k


# =====================================================================
# Gradient flow
# =====================================================================
def gradient_flow_velocity(network: ReactionNetwork, mf: MeanFunction, x: np.ndarray) -> np.ndarray:
    """-K(x) grad psi_ss(x)."""
    _, grad = free_energy_batch(network, mf, x)
    k = onsager_matrix(network, mf, x)
    return -np.einsum("...ij,...j->...i", k, grad)


def dissipation_rate(network: ReactionNetwork, mf: MeanFunction, x: Any) -> float:
    """d psi_ss / dt = -<grad psi_ss, K grad psi_ss> along the flow."""
    state = coerce_state(x, network.d)
    _, grad = free_energy(network, mf, state)
    k = onsager_matrix(network, mf, state.x)
    return float(-grad @ k @ grad)


def _rk4_step(network: ReactionNetwork, mf: MeanFunction, x: np.ndarray, dt: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        k1 = gradient_flow_velocity(network, mf, x)
        k2 = gradient_flow_velocity(network, mf, x + 0.5 * dt * k1)
        k3 = gradient_flow_velocity(network, mf, x + 0.5 * dt * k2)
        k4 = gradient_flow_velocity(network, mf, x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(network: ReactionNetwork, mf: MeanFunction, x: np.ndarray, span: float,
             stats: Dict[str, int]) -> np.ndarray:
    """Advance by ``span`` with RK4, halving the step while iterates leave the simplex."""
    remaining = span
    step = span
    halvings = 0
    while remaining > 1e-15 * span:
        step = min(step, remaining)
        candidate = _rk4_step(network, mf, x, step)
        if np.all(np.isfinite(candidate)) and np.min(candidate) > 0.0:
            x = candidate
            remaining -= step
            continue
        halvings += 1
        stats["halvings"] += 1
        if halvings > MAX_HALVINGS:
            raise StepLeftSimplex(f"RK4 iterate left the simplex after {MAX_HALVINGS} halvings")
        step *= 0.5
        logger.debug("gradient flow step halved to %.3e", step)
    return x


def solve_gradient_flow(network: ReactionNetwork, mf: MeanFunction, x0: Any,
                        t_end: float, dt: float) -> Trajectory:
    """Integrate dx/dt = -K(x) grad psi_ss(x) with explicit RK4.

    Args:
        network: Detailed-balanced network.
        mf: Mean function with a free energy.
        x0: Interior initial state.
        t_end: Horizon.
        dt: Nominal step; the output grid is k * dt (last point t_end).

    Returns:
        Trajectory with the free-energy sequence in ``meta["free_energy"]``.
    """
    _require_free_energy(mf)
    state = coerce_state(x0, network.d)
    if not state.is_interior:
        raise BoundarySingular("gradient flow needs an interior initial state")
    if dt <= 0.0 or t_end < 0.0:
        raise DomainError(f"need dt > 0 and t_end >= 0, got dt={dt}, t_end={t_end}")
    n_steps = int(np.ceil(t_end / dt - 1e-9)) if t_end > 0.0 else 0
    times = np.empty(n_steps + 1)
    states = np.empty((n_steps + 1, network.d))
    times[0] = 0.0
    states[0] = state.x
    stats = {"halvings": 0}
    x = state.x.copy()
    for n in range(1, n_steps + 1):
        target = min(n * dt, t_end)
        x = _advance(network, mf, x, target - times[n - 1], stats)
        times[n] = target
        states[n] = x
    energies, _ = free_energy_batch(network, mf, states)
    logger.info("gradient flow: %d steps, %d halvings, final psi_ss %.3e",
                n_steps, stats["halvings"], energies[-1])
    return Trajectory(times=times, states=states,
                      meta={"solver": "rk4", "free_energy": energies, "halvings": stats["halvings"]})


# =====================================================================
# Metric and volume
# =====================================================================
def metric_tensor(decomp: OnsagerDecomposition) -> MetricData:
    """g = Q_{d-1} Lambda^{-1} Q_{d-1}^T with Q_{d-1}[i, l] = u^l_i - u^l_d.

    Raises:
        NearSingularMetric: an eigenvalue falls below 1e-12.
    """
    lam = decomp.lambdas
    if np.min(lam) < SINGULAR_EIGENVALUE:
        raise NearSingularMetric(f"smallest Onsager eigenvalue {np.min(lam):.3e} is near zero")
    d = decomp.d
    u = decomp.eigvecs
    chart = u[: d - 1, :] - u[d - 1, :]
    g = chart @ np.diag(1.0 / lam) @ chart.T
    g_inv = decomp.K[: d - 1, : d - 1].copy()
    det_g = d / float(np.prod(lam))
    det_direct = float(np.linalg.det(g))
    if abs(det_direct - det_g) > 1e-8 * det_g:
        logger.warning("det g mismatch: eigen %.12e vs direct %.12e", det_g, det_direct)
    return MetricData(g=g, g_inv=g_inv, det_g=det_g, det_g_direct=det_direct,
                      vol_density=float(np.sqrt(det_g) / np.sqrt(d)))


def identity_residuals(network: ReactionNetwork, mf: MeanFunction, points: np.ndarray) -> Dict[str, float]:
    """Worst-case residuals of the eigen and metric identities over a batch of interior points."""
    points = np.asarray(points, dtype=float)
    d = network.d
    k = onsager_matrix(network, mf, points)
    lam, u = decompose_batch(k)
    sigma = u * np.sqrt(np.maximum(lam, 0.0))[..., None, :]
    e = np.full(d, 1.0 / np.sqrt(d))
    eye = np.eye(d - 1)
    ku = np.einsum("pij,pjl->pil", k, u)
    chart = u[:, : d - 1, :] - u[:, d - 1 : d, :]
    g = np.einsum("pil,pl,pjl->pij", chart, 1.0 / lam, chart)
    det_eig = d / np.prod(lam, axis=-1)
    det_direct = np.linalg.det(g)
    return {
        "eigen": float(np.max(np.abs(ku - u * lam[:, None, :]))),
        "null": float(np.max(np.abs(k @ e))),
        "orthonormal": float(np.max(np.abs(np.einsum("pil,pim->plm", u, u) - eye))),
        "sum_zero": float(np.max(np.abs(u.sum(axis=1)))),
        "sigma": float(np.max(np.abs(np.einsum("pil,pjl->pij", sigma, sigma) - k))),
        "row_sum": float(np.max(np.abs(k.sum(axis=-1)))),
        "det_relative": float(np.max(np.abs(det_direct - det_eig) / det_eig)),
        "metric_inverse": float(np.max(np.abs(np.einsum("pij,pjk->pik", g, k[:, : d - 1, : d - 1]) - eye))),
        "min_lambda": float(np.min(lam)),
    }


# =====================================================================
# Differential operators and generator
# =====================================================================
@dataclass(frozen=True)
class ScalarField:
    """Scalar field on R^d with vectorized value and gradient evaluators (leading batch axes)."""
    value: ArrayFn
    gradient: ArrayFn


@dataclass
class DifferentialResult:
    grad_g: np.ndarray
    laplace_beltrami: float
    dirichlet_density: float


def _sqrt_det_g(k: np.ndarray, d: int) -> np.ndarray:
    return 1.0 / np.sqrt(np.linalg.det(k[..., : d - 1, : d - 1]))


def laplace_beltrami_batch(network: ReactionNetwork, mf: MeanFunction, gradient: ArrayFn,
                           x: np.ndarray) -> np.ndarray:
    """|g|^{-1/2} div(|g|^{1/2} K grad f), with the divergence taken along the tangent
    directions e_a - e_d by central differences of relative step 1e-6."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = network.d

    def weighted(y: np.ndarray) -> np.ndarray:
        k = onsager_matrix(network, mf, y)
        flux = np.einsum("pij,pj->pi", k, gradient(y))
        return _sqrt_det_g(k, d)[:, None] * flux

    total = np.zeros(x.shape[0])
    for a in range(d - 1):
        step = FD_REL_STEP * np.minimum(x[:, a], x[:, d - 1])
        shift = np.zeros_like(x)
        shift[:, a] = step
        shift[:, d - 1] = -step
        total += (weighted(x + shift)[:, a] - weighted(x - shift)[:, a]) / (2.0 * step)
    return total / _sqrt_det_g(onsager_matrix(network, mf, x), d)


def differential_operators(network: ReactionNetwork, mf: MeanFunction, f: ScalarField,
                           x: Any) -> DifferentialResult:
    """Riemannian gradient K grad f, Laplace-Beltrami and Dirichlet energy density at x."""
    state = coerce_state(x, network.d)
    if not state.is_interior:
        raise BoundarySingular("differential operators need an interior point")
    k = onsager_matrix(network, mf, state.x)
    grad = np.asarray(f.gradient(state.x[None, :]))[0]
    grad_g = k @ grad
    lb = float(laplace_beltrami_batch(network, mf, f.gradient, state.x[None, :])[0])
    return DifferentialResult(grad_g=grad_g, laplace_beltrami=lb,
                              dirichlet_density=float(grad @ grad_g))


def laplace_beltrami_chart(network: ReactionNetwork, mf: MeanFunction,
                           value: Callable[[np.ndarray], float], x: Any,
                           step: float = CHART_STEP) -> float:
    """Intrinsic |g|^{-1/2} sum_ij d_i(|g|^{1/2} g^ij d_j F) in chart coordinates,
    with nested central differences on values of f only."""
    x = as_state_vector(x)
    d = x.shape[0]

    def lift(y: np.ndarray) -> np.ndarray:
        return np.append(y, 1.0 - y.sum())

    def chart_grad(y: np.ndarray) -> np.ndarray:
        out = np.empty(d - 1)
        for j in range(d - 1):
            e = np.zeros(d - 1)
            e[j] = step
            out[j] = (value(lift(y + e)) - value(lift(y - e))) / (2.0 * step)
        return out

    def flux(y: np.ndarray) -> np.ndarray:
        k = onsager_matrix(network, mf, lift(y))
        block = k[: d - 1, : d - 1]
        return block @ chart_grad(y) / np.sqrt(np.linalg.det(block))

    y = x[: d - 1]
    total = 0.0
    for i in range(d - 1):
        e = np.zeros(d - 1)
        e[i] = step
        total += (flux(y + e)[i] - flux(y - e)[i]) / (2.0 * step)
    block = onsager_matrix(network, mf, x)[: d - 1, : d - 1]
    return float(total * np.sqrt(np.linalg.det(block)))


def generator_batch(network: ReactionNetwork, mf: MeanFunction, f: ScalarField, x: np.ndarray,
                    h: float, potential: str = "free_energy") -> np.ndarray:
    """L f = -<K grad psi, grad f> + h Laplace-Beltrami f on a batch of interior points."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _, grad_psi = potential_batch(network, mf, x, potential)
    k = onsager_matrix(network, mf, x)
    drift = -np.einsum("pi,pij,pj->p", grad_psi, k, f.gradient(x))
    if h == 0.0:
        return drift
    return drift + h * laplace_beltrami_batch(network, mf, f.gradient, x)


def apply_generator(network: ReactionNetwork, mf: MeanFunction, f: ScalarField, x: Any,
                    h: float, potential: str = "free_energy") -> float:
    """Generator of the Langevin dynamics applied to f at x."""
    state = coerce_state(x, network.d)
    if not state.is_interior:
        raise BoundarySingular("generator needs an interior point")
    if h < 0.0:
        raise DomainError(f"h must be nonnegative, got {h}")
    return float(generator_batch(network, mf, f, state.x[None, :], h, potential)[0])


# =====================================================================
# Hamilton-Jacobi residual and two-point distance
# =====================================================================
def hje_residual(network: ReactionNetwork, psi_grad: ArrayFn, x: Any) -> float:
    """sum over edges (i, j) of Q_ji x_j exp(d_i psi - d_j psi) - Q_ij x_i."""
    x = as_state_vector(x)
    grad = np.asarray(psi_grad(x), dtype=float)
    q = network.rates
    total = 0.0
    for i, j in network.edges():
        total += q[j, i] * x[j] * np.exp(grad[i] - grad[j]) - q[i, j] * x[i]
    return float(total)


def two_point_profile(network: ReactionNetwork, mf: MeanFunction) -> Callable[[np.ndarray], np.ndarray]:
    """theta(r) = theta(r / x^s_1, (1 - r) / x^s_2) of a two-species network."""
    if network.d != 2:
        raise DomainError(f"two-point profile needs d = 2, got d = {network.d}")
    xs1, xs2 = network.x_stat

    def theta(r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return mf.theta(r / xs1, (1.0 - r) / xs2)
    return theta


def wasserstein2_twopoint(network: ReactionNetwork, mf: MeanFunction, x: float) -> float:
    """W_2((0, 1), (x, 1 - x)) = int_0^x theta(r)^{-1/2} dr on a two-point network.

    Raises:
        NonIntegrableTheta: the quadrature of theta^{-1/2} fails.
    """
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    theta = two_point_profile(network, mf)
    try:
        return quad_singular(lambda r: theta(r) ** -0.5, 0.0, x, certificate=mf.certificate)
    except QuadratureError as exc:
        raise NonIntegrableTheta(str(exc)) from exc
