"""
Batched cyclic Jacobi eigensolver for small symmetric matrices.
Works on stacks of shape (..., d, d) so Onsager matrices of a whole
ensemble block are decomposed in one call.
"""

import logging
from typing import Tuple

import numpy as np

from tools.errors import EigenNotConverged

logger = logging.getLogger(__name__)

OFF_DIAGONAL_TOL = 1e-13
MAX_SWEEPS = 60
SIGN_THRESHOLD = 1e-12


def _off_norm(a: np.ndarray) -> np.ndarray:
    off = a * (1.0 - np.eye(a.shape[-1]))
    return np.sqrt(np.sum(off * off, axis=(-2, -1)))


def jacobi_eigh(a: np.ndarray, tol: float = OFF_DIAGONAL_TOL,
                max_sweeps: int = MAX_SWEEPS) -> Tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of symmetric matrices by cyclic Jacobi rotations.

    Args:
        a: Symmetric matrix or stack of matrices, shape (..., d, d).
        tol: Sweeps stop once the off-diagonal Frobenius norm is below
            ``tol`` times the full Frobenius norm, for every matrix.
        max_sweeps: Sweep limit.

    Returns:
        Tuple ``(eigenvalues, eigenvectors)``: eigenvalues sorted descending,
        shape (..., d); eigenvectors as columns, shape (..., d, d), each with
        its first component of magnitude > 1e-12 positive.

    Raises:
        EigenNotConverged: tolerance not reached within ``max_sweeps``.
    """
    a = np.asarray(a, dtype=float)
    batch_shape = a.shape[:-2]
    d = a.shape[-1]
    work = a.reshape(-1, d, d).copy()
    n = work.shape[0]
    vecs = np.broadcast_to(np.eye(d), (n, d, d)).copy()
    scale = np.sqrt(np.sum(work * work, axis=(-2, -1)))
    target = tol * np.maximum(scale, 1e-300)

    sweeps = 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        while True:
            off = _off_norm(work)
            if np.all(off <= target):
                break
            if sweeps >= max_sweeps:
                worst = float(np.max(off / np.maximum(scale, 1e-300)))
                logger.warning("Jacobi stopped after %d sweeps, relative off-norm %.3e", sweeps, worst)
                raise EigenNotConverged(
                    f"Jacobi did not converge in {max_sweeps} sweeps (relative off-norm {worst:.3e})"
                )
            sweeps += 1
            for p in range(d - 1):
                for q in range(p + 1, d):
                    apq = work[:, p, q]
                    active = np.abs(apq) > 0.0
                    if not np.any(active):
                        continue
                    safe_apq = np.where(active, apq, 1.0)
                    theta = (work[:, q, q] - work[:, p, p]) / (2.0 * safe_apq)
                    sign = np.where(theta >= 0.0, 1.0, -1.0)
                    t = sign / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                    t = np.where(np.isfinite(t) & active, t, 0.0)
                    c = 1.0 / np.sqrt(1.0 + t * t)
                    s = t * c
                    c_ = c[:, None]
                    s_ = s[:, None]

                    col_p = work[:, :, p].copy()
                    col_q = work[:, :, q].copy()
                    work[:, :, p] = c_ * col_p - s_ * col_q
                    work[:, :, q] = s_ * col_p + c_ * col_q
                    row_p = work[:, p, :].copy()
                    row_q = work[:, q, :].copy()
                    work[:, p, :] = c_ * row_p - s_ * row_q
                    work[:, q, :] = s_ * row_p + c_ * row_q

                    v_p = vecs[:, :, p].copy()
                    v_q = vecs[:, :, q].copy()
                    vecs[:, :, p] = c_ * v_p - s_ * v_q
                    vecs[:, :, q] = s_ * v_p + c_ * v_q

    logger.debug("Jacobi converged in %d sweeps for %d matrices of size %d", sweeps, n, d)
    vals = np.einsum("...ii->...i", work).copy()
    order = np.argsort(-vals, axis=-1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=-1)

    significant = np.abs(vecs) > SIGN_THRESHOLD
    first = np.argmax(significant, axis=1)
    lead = np.take_along_axis(vecs, first[:, None, :], axis=1)[:, 0, :]
    vecs = vecs * np.where(lead < 0.0, -1.0, 1.0)[:, None, :]

    return vals.reshape(batch_shape + (d,)), vecs.reshape(batch_shape + (d, d))
