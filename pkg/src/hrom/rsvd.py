"""
Adaptive randomized SVD with a leave-one-out stopping rule.

The sketch grows by blocks of Gaussian samples until the leave-one-out
estimate of the Frobenius residual drops below the requested tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .errors import (
    EstimatorUnavailableError,
    RankDeficiencyError,
    ShapeError,
    ToleranceUnreachableError,
)
from .orthqr import QRPair, cholqr_update, shifted_cholqr

logger = logging.getLogger(__name__)


@dataclass
class SketchState:
    """Raw samples Z = X Omega, their QR factors and the sampling parameters."""

    Z: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    q: int
    b: int
    seed: Optional[int] = None

    @property
    def r(self) -> int:
        return self.Q.shape[1]


@dataclass
class RsvdResult:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    estimate: float
    history: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.sigma.size


def loo_estimate(state: SketchState) -> float:
    """
    Leave-one-out estimate of ||X - Q Q^T X||_F for the current sketch.

    Uses the columns e_j of R^{-T}. Without power iterations this reduces to
    sqrt(mean_j ||e_j||^-2).
    """
    R = state.R
    r = R.shape[0]
    diag = np.diag(R)
    if r == 0 or not np.all(np.isfinite(R)) or np.any(diag == 0):
        raise EstimatorUnavailableError("R factor of the sketch is singular")
    E = linalg.solve_triangular(R, np.eye(r, dtype=R.dtype), trans="T", lower=False)
    if not np.all(np.isfinite(E)):
        raise EstimatorUnavailableError("R factor of the sketch is numerically singular")
    norms = np.linalg.norm(E, axis=0)

    if state.q == 0:
        return float(np.sqrt(np.mean(1.0 / norms**2)))

    T = E / norms
    W = state.Q.T @ state.Z
    d = np.sum(T * W, axis=0)
    residual = state.Z - state.Q @ (W - T * d)
    return float(np.linalg.norm(residual) / np.sqrt(r))


def adaptive_rsvd(
    op,
    b: int,
    q: int,
    etol: float,
    seed: Optional[int] = 0,
    eps: Optional[float] = None,
) -> RsvdResult:
    """
    Truncated SVD U diag(sigma) V^T of ``op`` whose estimated residual is <= etol.

    ``op`` is anything scipy accepts as a linear operator (dense arrays,
    ``HankelOperator``). Samples come from ``np.random.default_rng(seed)`` so
    the adaptive path is reproducible.

    Power iterations resolve singular values down to about eps^(1/(2q+1)) of
    sigma_1. Once a powered block has nothing above rounding outside the
    basis, the loop continues with the raw samples of each block.
    """
    if b < 1:
        raise ShapeError(f"Block size must be >= 1 (got {b})")
    if q < 0:
        raise ShapeError(f"Power iteration count must be >= 0 (got {q})")
    if not etol > 0:
        raise ShapeError(f"Tolerance must be > 0 (got {etol})")

    A: LinearOperator = aslinearoperator(op)
    rows, cols = A.shape
    dtype = np.dtype(A.dtype) if A.dtype is not None else np.dtype(np.float64)
    max_width = min(rows, cols)
    rng = np.random.default_rng(seed)
    raw_only = False

    def sample(width: int) -> Tuple[np.ndarray, np.ndarray]:
        omega = rng.standard_normal((cols, width)).astype(dtype, copy=False)
        Z = np.asarray(A.matmat(omega))
        Y = Z
        for _ in range(0 if raw_only else q):
            Y = np.asarray(A.matmat(A.rmatmat(Y)))
        return Z, Y

    Z, Y = sample(min(b, max_width))
    qr: QRPair = shifted_cholqr(Y, eps)
    history: List[Tuple[int, float]] = []
    while True:
        state = SketchState(Z, qr.Q, qr.R, q=q, b=b, seed=seed)
        estimate = loo_estimate(state)
        history.append((state.r, estimate))
        logger.debug("Sketch width %d: LOO estimate %.4e (etol %.4e)", state.r, estimate, etol)
        if estimate <= etol:
            break
        if state.r >= max_width:
            raise ToleranceUnreachableError(
                f"Sketch width reached {state.r} = min(rows, cols) with estimate "
                f"{estimate:.4e} above tolerance {etol:.4e}",
                estimate=estimate,
                width=state.r,
            )
        Z_b, Y_b = sample(min(b, max_width - state.r))
        failure: Optional[RankDeficiencyError] = None
        for block in (Y_b, Z_b) if Y_b is not Z_b else (Z_b,):
            try:
                qr = cholqr_update(qr, block, eps)
                break
            except RankDeficiencyError as exc:
                failure = exc
        else:
            raise ToleranceUnreachableError(
                f"Range exhausted at width {state.r} ({failure}); estimate "
                f"{estimate:.4e} above tolerance {etol:.4e}",
                estimate=estimate,
                width=state.r,
            ) from failure
        if failure is not None:
            # powered samples fell below rounding outside the basis
            logger.info("Power iterations exhausted at width %d; continuing with raw samples", state.r)
            raw_only = True
        Z = np.hstack([Z, Z_b])

    W = np.asarray(A.rmatmat(qr.Q)).T
    U_small, sigma, Vt = linalg.svd(W, full_matrices=False)
    logger.info(
        "Randomized SVD: width %d after %d blocks, estimate %.4e <= %.4e",
        qr.k, len(history), estimate, etol,
    )
    return RsvdResult(qr.Q @ U_small, sigma, Vt.T, estimate, history)
