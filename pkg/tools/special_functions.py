"""
Special functions tool: incomplete beta function, endpoint-singular
quadrature and the logarithmic mean with its safe diagonal limit.
Everything here is in-repo; scipy.special is used only by the tests.
"""

import heapq
import logging
import math
from typing import Callable, List, Tuple, Union

import numpy as np

from tools.errors import DomainError, QuadratureError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# ---------- Tool Schemas ----------
TOOL_SCHEMA = {
    "name": "special_functions",
    "description": "Incomplete beta, endpoint-singular quadrature and logarithmic mean.",
    "operations": {
        "incomplete_beta": {"x": "float in [0,1]", "a": "float > 0", "b": "float > 0"},
        "quad_singular": {"f": "vectorized callable", "lower": "float", "upper": "float",
                          "certificate": "sqrt | log | smooth"},
        "log_mean": {"s": "float > 0", "t": "float > 0"},
    },
    "returns": "nonnegative real",
}

CERTIFICATES = ("sqrt", "log", "smooth")

# Relative gap below which means switch to their diagonal limit.
DIAGONAL_SWITCH = 1e-9

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)
_ONE_MINUS_ULP = 1.0 - 2.0 ** -53
# Narrowest panel, relative to the integration range, that is still bisected.
MIN_PANEL = 1e-13


# =====================================================================
# Incomplete beta
# =====================================================================
def _beta_continued_fraction(a: float, b: float, x: float,
                             max_iter: int = 20000, eps: float = 1e-16) -> float:
    """Continued fraction of the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise QuadratureError(
        f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )


def _lower_tail(x: float, a: float, b: float) -> float:
    """Unregularized B(x, a, b) on the fast side of the continued fraction."""
    if x <= 0.0:
        return 0.0
    front = math.exp(a * math.log(x) + b * math.log1p(-x)) / a
    return front * _beta_continued_fraction(a, b, x)


def _check_shape(a: float, b: float) -> None:
    if not (a > 0.0 and b > 0.0):
        raise DomainError(f"beta parameters must be positive, got a={a}, b={b}")


def complete_beta(a: float, b: float) -> float:
    """Complete beta function B(a, b) without a Gamma evaluator.

    Splits at x0 = (a+1)/(a+b+2), where both continued fractions converge.
    """
    _check_shape(a, b)
    x0 = (a + 1.0) / (a + b + 2.0)
    return _lower_tail(x0, a, b) + _lower_tail(1.0 - x0, b, a)


def _incomplete_beta_scalar(x: float, a: float, b: float) -> float:
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"incomplete beta needs x in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return complete_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return _lower_tail(x, a, b)
    return complete_beta(a, b) - _lower_tail(1.0 - x, b, a)


def incomplete_beta(x: ArrayLike, a: float, b: float) -> ArrayLike:
    """Incomplete beta function B(x, a, b) = int_0^x t^(a-1) (1-t)^(b-1) dt.

    Args:
        x: Upper limit(s) in [0, 1]; scalar or array.
        a: First shape parameter, > 0.
        b: Second shape parameter, > 0.

    Returns:
        The (unregularized) integral, same shape as ``x``.
    """
    _check_shape(a, b)
    if np.ndim(x) == 0:
        return _incomplete_beta_scalar(float(x), a, b)
    flat = np.asarray(x, dtype=float).ravel()
    out = np.array([_incomplete_beta_scalar(float(v), a, b) for v in flat])
    return out.reshape(np.shape(x))


def inverse_incomplete_beta_half(value: float, tol: float = 1e-15) -> float:
    """Solve B(y, 1/2, 1/2) = value for y in [0, 1] by safeguarded Newton.

    The closed form is sin^2(value/2); this generic inversion exists to
    regress the closed form against.
    """
    total = math.pi
    if not (0.0 <= value <= total + 1e-12):
        raise DomainError(f"value must lie in [0, pi], got {value}")
    lo, hi = 0.0, 1.0
    y = 0.5
    for _ in range(200):
        g = _incomplete_beta_scalar(y, 0.5, 0.5) - value
        if g > 0.0:
            hi = y
        else:
            lo = y
        slope = 1.0 / math.sqrt(max(y * (1.0 - y), 1e-300))
        step = y - g / slope
        y = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < tol or abs(g) < tol:
            break
    return y


# =====================================================================
# Endpoint-singular quadrature
# =====================================================================
def _panel(g: Callable[[np.ndarray], np.ndarray], a: float, b: float) -> float:
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    return half * float(np.dot(_GL_WEIGHTS, g(mid + half * _GL_NODES)))


def _split(g: Callable[[np.ndarray], np.ndarray], lo: float, hi: float,
           whole: float) -> Tuple[float, float, float, float]:
    """Halves of [lo, hi] and the error estimate |left + right - whole|."""
    mid = 0.5 * (lo + hi)
    left = _panel(g, lo, mid)
    right = _panel(g, mid, hi)
    if not np.isfinite(left + right):
        raise QuadratureError(f"non-finite integrand on [{lo}, {hi}]")
    return left, right, left + right, abs(left + right - whole)


def _adaptive(g: Callable[[np.ndarray], np.ndarray], a: float, b: float,
              tol: float, max_evals: int) -> Tuple[float, int]:
    """Globally adaptive 10-point Gauss-Legendre: bisect the worst panel until the error sum meets tol.

    Panels narrower than MIN_PANEL * (b - a) are frozen with their current value;
    freezing one whose error estimate still exceeds tol raises QuadratureError.
    """
    if b <= a:
        return 0.0, 0
    min_width = max((b - a) * MIN_PANEL, 1e-300)
    whole = _panel(g, a, b)
    if not np.isfinite(whole):
        raise QuadratureError(f"non-finite integrand on [{a}, {b}]")
    left, right, value, err = _split(g, a, b, whole)
    evals = 3 * _GL_NODES.size
    # max-heap on the error estimate; entries are (-err, lo, hi, left, right, value)
    heap = [(-err, a, b, left, right, value)]
    total_err = err
    frozen = 0.0
    while heap and total_err > tol:
        neg_err, lo, hi, left, right, value = heapq.heappop(heap)
        total_err += neg_err
        if hi - lo <= min_width:
            if -neg_err > tol:
                raise QuadratureError(f"integrand not resolved on [{lo}, {hi}] (error estimate {-neg_err:.3g})")
            frozen += value
            continue
        mid = 0.5 * (lo + hi)
        for child_lo, child_hi, child_whole in ((lo, mid, left), (mid, hi, right)):
            c_left, c_right, c_value, c_err = _split(g, child_lo, child_hi, child_whole)
            heapq.heappush(heap, (-c_err, child_lo, child_hi, c_left, c_right, c_value))
            total_err += c_err
        evals += 4 * _GL_NODES.size
        if evals > max_evals:
            raise QuadratureError(
                f"quadrature did not converge within {max_evals} evaluations on [{a}, {b}]"
            )
    return frozen + math.fsum(entry[5] for entry in heap), evals


def _clip_unit(t: np.ndarray) -> np.ndarray:
    return np.clip(t, 0.0, _ONE_MINUS_ULP)


def quad_singular(f: Callable[[np.ndarray], np.ndarray], lower: float, upper: float,
                  certificate: str = "smooth", tol: float = 1e-10,
                  max_evals: int = 10 ** 6) -> float:
    """Integrate f over [lower, upper] within [0, 1], absorbing endpoint singularities.

    Args:
        f: Vectorized integrand on (0, 1).
        lower: Lower limit, 0 <= lower.
        upper: Upper limit, <= 1.
        certificate: ``"sqrt"`` substitutes t = sin^2(u) (square-root behavior at
            0 and 1); ``"log"`` substitutes t = u^2 near 0 and t = 1 - u^2 near 1
            (logarithmic-mean profiles); ``"smooth"`` integrates directly.
        tol: Absolute tolerance.
        max_evals: Evaluation budget per sub-integral.

    Returns:
        The integral value.
    """
    if certificate not in CERTIFICATES:
        raise DomainError(f"unknown certificate {certificate!r}; expected one of {CERTIFICATES}")
    if not (0.0 <= lower <= 1.0 and 0.0 <= upper <= 1.0):
        raise DomainError(f"limits must lie in [0, 1], got [{lower}, {upper}]")
    sign = 1.0
    if upper < lower:
        lower, upper = upper, lower
        sign = -1.0
    if upper == lower:
        return 0.0

    pieces: List[Tuple[Callable[[np.ndarray], np.ndarray], float, float]] = []
    if certificate == "smooth":
        pieces.append((f, lower, upper))
    elif certificate == "sqrt":
        def g_sqrt(u: np.ndarray) -> np.ndarray:
            return f(_clip_unit(np.sin(u) ** 2)) * np.sin(2.0 * u)
        pieces.append((g_sqrt, math.asin(math.sqrt(lower)), math.asin(math.sqrt(upper))))
    else:
        if lower < 0.5:
            def g_left(u: np.ndarray) -> np.ndarray:
                return f(_clip_unit(u * u)) * 2.0 * u
            pieces.append((g_left, math.sqrt(lower), math.sqrt(min(upper, 0.5))))
        if upper > 0.5:
            def g_right(u: np.ndarray) -> np.ndarray:
                return f(_clip_unit(1.0 - u * u)) * 2.0 * u
            pieces.append((g_right, math.sqrt(1.0 - upper), math.sqrt(1.0 - max(lower, 0.5))))

    total = 0.0
    evals = 0
    for g, a, b in pieces:
        value, used = _adaptive(g, a, b, tol / len(pieces), max_evals)
        total += value
        evals += used
    logger.debug("quad_singular[%s] on [%g, %g]: %d evaluations", certificate, lower, upper, evals)
    return sign * total


# =====================================================================
# Logarithmic mean
# =====================================================================
def log_mean_array(s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Vectorized logarithmic mean on [0, inf)^2; zero when either argument is zero."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    big = np.maximum(s, t)
    small = np.minimum(s, t)
    gap = big - small
    near = gap <= DIAGONAL_SWITCH * big
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(small > 0.0, gap / np.where(small > 0.0, small, 1.0), np.inf)
        far = gap / np.log1p(ratio)
    out = np.where(near, 0.5 * (s + t), far)
    return np.where(small > 0.0, out, 0.0)


def log_mean(s: ArrayLike, t: ArrayLike) -> ArrayLike:
    """Logarithmic mean (s - t)/(log s - log t) with limit value s at s = t.

    Raises:
        DomainError: if any argument is not positive.
    """
    if np.any(np.asarray(s) <= 0.0) or np.any(np.asarray(t) <= 0.0):
        raise DomainError("logarithmic mean needs positive arguments")
    out = log_mean_array(s, t)
    return float(out) if out.ndim == 0 else out
