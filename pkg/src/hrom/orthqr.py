"""
Iterated shifted CholeskyQR and its block column update.

Both routines work on the Gram matrix of a tall block and only ever solve
small k x k triangular systems, so the tall data is touched by matrix
products alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .config import CHOLQR_MAX_ITERATIONS, CHOLQR_MAX_SHIFTS, CHOLQR_SPAN_FACTOR
from .errors import RankDeficiencyError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class QRPair:
    """Q (rows x k, orthonormal columns) and upper-triangular R with positive diagonal."""

    Q: np.ndarray
    R: np.ndarray
    iterations: int = 0
    shifts: int = 0

    @property
    def k(self) -> int:
        return self.R.shape[0]

    def orthogonality(self) -> float:
        """||Q^T Q - I||_F."""
        return float(np.linalg.norm(self.Q.T @ self.Q - np.eye(self.k)))


def _eps(dtype, eps: Optional[float]) -> float:
    return float(eps) if eps is not None else float(np.finfo(dtype).eps)


def shift_for(X: np.ndarray, rows: int, eps: float) -> float:
    """Diagonal shift 11 (rows k + k (k+1)) eps ||X||_F."""
    k = X.shape[0]
    return 11.0 * (rows * k + k * (k + 1)) * eps * float(np.linalg.norm(X))


def shifted_cholesky(X: np.ndarray, rows: int, eps: float) -> Tuple[np.ndarray, int]:
    """
    Upper Cholesky factor of X, recomputing a diagonal shift on breakdown.

    Returns the factor and the number of shifts applied. Breakdown is a
    non-positive pivot or a non-finite entry.
    """
    X = 0.5 * (X + X.T)
    eye = np.eye(X.shape[0], dtype=X.dtype)
    for attempt in range(CHOLQR_MAX_SHIFTS + 1):
        if not np.all(np.isfinite(X)):
            raise RankDeficiencyError("Gram matrix contains non-finite values")
        try:
            factor = linalg.cholesky(X, lower=False, check_finite=False)
            if np.all(np.isfinite(factor)) and np.all(np.diag(factor) > 0):
                return factor, attempt
        except np.linalg.LinAlgError:
            pass
        if attempt == CHOLQR_MAX_SHIFTS:
            break
        sigma = shift_for(X, rows, eps)
        if sigma == 0.0:
            raise RankDeficiencyError("Gram matrix is zero; block has no usable columns")
        logger.debug("Cholesky breakdown, shifting by %.3e (attempt %d)", sigma, attempt + 1)
        X = X + sigma * eye
    raise RankDeficiencyError(
        f"Cholesky factorization failed after {CHOLQR_MAX_SHIFTS} shifts"
    )


def _right_solve(Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Q R^{-1} for upper-triangular R."""
    return linalg.solve_triangular(R, Q.T, trans="T", lower=False, check_finite=False).T


def _stalled(deviation: float, previous: Optional[float], k: int, eps: float) -> bool:
    # Rounding keeps ||Q^T Q - I|| a small multiple of eps above eps*sqrt(k);
    # once a sweep no longer halves it the factor is as orthogonal as it gets.
    if previous is None:
        return False
    return deviation >= 0.5 * previous and deviation < np.sqrt(eps) * np.sqrt(k)


def shifted_cholqr(Y: np.ndarray, eps: Optional[float] = None) -> QRPair:
    """
    QR factorization of a tall block by repeated shifted CholeskyQR sweeps.

    Each sweep factors X = Q^T Q, then updates Q <- Q R~^{-1} and R <- R~ R.
    Stops once ||X - I||_F < eps sqrt(k).
    """
    Y = np.asarray(Y)
    if Y.ndim != 2:
        raise ShapeError(f"Expected a 2-D block, got shape {Y.shape}")
    rows, k = Y.shape
    if not rows >= k >= 1:
        raise ShapeError(f"Need rows >= k >= 1 (got {rows}x{k})")
    if not np.any(Y):
        raise RankDeficiencyError("Cannot orthogonalize a zero block")
    eps = _eps(Y.dtype, eps)

    Q = np.array(Y, copy=True)
    R = np.eye(k, dtype=Y.dtype)
    eye = np.eye(k, dtype=Y.dtype)
    target = eps * np.sqrt(k)
    previous = None
    shifts = 0
    for iteration in range(CHOLQR_MAX_ITERATIONS + 1):
        X = Q.T @ Q
        deviation = float(np.linalg.norm(X - eye))
        if deviation < target or _stalled(deviation, previous, k, eps):
            logger.debug("CholeskyQR %dx%d converged after %d sweeps (dev %.2e)", rows, k, iteration, deviation)
            return QRPair(Q, R, iterations=iteration, shifts=shifts)
        if iteration == CHOLQR_MAX_ITERATIONS:
            break
        factor, used = shifted_cholesky(X, rows, eps)
        shifts += used
        Q = _right_solve(Q, factor)
        R = factor @ R
        previous = deviation
    raise RankDeficiencyError(
        f"CholeskyQR did not converge in {CHOLQR_MAX_ITERATIONS} sweeps"
    )


def cholqr_update(qr: QRPair, Y_b: np.ndarray, eps: Optional[float] = None) -> QRPair:
    """
    Append the columns of Y_b to an existing factorization.

    The new block is orthogonalized against Q and itself by shifted Cholesky
    sweeps on X = P^T P, where P = Q_b - Q B and B = Q^T Q_b. The result
    satisfies Q~ R~ = [Q R, Y_b] with R~ = [[R, B], [0, R_b]].

    Raises RankDeficiencyError only when the projected remainder of Y_b is at
    rounding level relative to Y_b itself; a small but genuine new direction
    is kept and normalized.
    """
    Q, R = qr.Q, qr.R
    Y_b = np.asarray(Y_b)
    if Y_b.ndim != 2 or Y_b.shape[0] != Q.shape[0]:
        raise ShapeError(f"Update block must have {Q.shape[0]} rows, got shape {Y_b.shape}")
    rows, k = Q.shape
    b = Y_b.shape[1]
    if rows < k + b or b < 1:
        raise ShapeError(f"Cannot extend a {rows}x{k} basis by {b} columns")
    eps = _eps(Y_b.dtype, eps)

    Q_b = np.array(Y_b, copy=True)
    R_b = np.eye(b, dtype=Y_b.dtype)
    B_total = np.zeros((k, b), dtype=Y_b.dtype)
    eye = np.eye(b, dtype=Y_b.dtype)
    target = eps * np.sqrt(k + b)
    span_floor = CHOLQR_SPAN_FACTOR * np.sqrt(rows) * eps * float(np.linalg.norm(Y_b))
    previous = None
    shifts = 0
    for iteration in range(1, CHOLQR_MAX_ITERATIONS + 1):
        B = Q.T @ Q_b
        P = Q_b - Q @ B
        if iteration == 1 and float(np.linalg.norm(P)) <= span_floor:
            raise RankDeficiencyError("Update block lies in the span of the current basis")
        factor, used = shifted_cholesky(P.T @ P, rows, eps)
        shifts += used
        B_total += B @ R_b
        Q_b = _right_solve(P, factor)
        R_b = factor @ R_b

        cross = float(np.linalg.norm(Q.T @ Q_b))
        deviation = float(np.sqrt(np.linalg.norm(Q_b.T @ Q_b - eye) ** 2 + 2.0 * cross**2))
        if deviation < target or _stalled(deviation, previous, k + b, eps):
            R_new = np.block([[R, B_total], [np.zeros((b, k), dtype=R.dtype), R_b]])
            return QRPair(np.hstack([Q, Q_b]), R_new, iterations=iteration, shifts=shifts)
        previous = deviation
    raise RankDeficiencyError(
        f"CholeskyQR update did not converge in {CHOLQR_MAX_ITERATIONS} sweeps"
    )
