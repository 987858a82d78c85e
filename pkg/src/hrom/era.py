"""
Eigensystem realization from Hankel factors.

``adaptive_era`` is the full reduction of one dataset: Hankel operator,
adaptive randomized SVD with tolerance gamma * ||G||_{H2,eta}, realization.
``dense_era`` runs the same realization on an exact SVD for small problems.
Error bounds and the relative-error estimate are reported in dB.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from .config import DEFAULT_BLOCK, DEFAULT_GAMMA, DEFAULT_POWER, DEFAULT_SEED, TAIL_ENERGY_RATIO, TAIL_FRACTION
from .core import (
    MarkovSequence,
    StateSpaceModel,
    amplitude_db,
    markov_params,
    power_db,
    spectral_radius,
    weighted_h2_norm,
)
from .errors import DegenerateReferenceError, IllPosedShiftError, ShapeError
from .hankel import HankelOperator
from .rsvd import adaptive_rsvd

logger = logging.getLogger(__name__)


@dataclass
class EraResult:
    """Realized model together with the Hankel factors it came from."""

    model: StateSpaceModel
    sigma: np.ndarray
    sigma_next: Optional[float]
    eloo_final: Optional[float]
    etol_used: Optional[float]
    U: np.ndarray
    V: np.ndarray
    s: int
    weighted_norm: float
    h2_norm: float
    stable: bool = True
    decay_warning: bool = False
    history: List[Tuple[int, float]] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.model.n

    def kung_bounds(self) -> Tuple[Optional[float], Optional[float]]:
        """(corrected, erroneous) bounds in dB, or (None, None) without sigma_next."""
        if self.sigma_next is None:
            return None, None
        m, p = self.model.m, self.model.p
        return (
            kung_bound_corrected(self.order, m, p, self.sigma_next, self.h2_norm),
            kung_bound_erroneous(self.order, m, p, self.sigma_next, self.h2_norm),
        )

    def estimate_db(self) -> Optional[float]:
        if self.eloo_final is None:
            return None
        return error_estimate_db(self.eloo_final, self.weighted_norm)


def realize(
    U: np.ndarray,
    sigma: np.ndarray,
    V: np.ndarray,
    h0: np.ndarray,
    p: int,
    m: int,
    s: int,
) -> StateSpaceModel:
    """
    Balanced realization from H ~ U diag(sigma) V^T.

    A solves U_first A' = U_last in the least-squares sense, where U_first and
    U_last drop the last and the first block row of U.
    """
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64).reshape(-1)
    r = sigma.size
    if r < 1:
        raise ShapeError("Cannot realize an order-0 model from Hankel factors")
    if s < 2:
        raise ShapeError(f"Need s >= 2 block rows (got s={s})")
    if U.shape != (p * s, r) or V.shape != (m * s, r):
        raise ShapeError(
            f"Factor shapes U {U.shape}, V {V.shape} do not match p={p}, m={m}, s={s}, r={r}"
        )
    if not np.all(sigma > 0):
        raise ShapeError("Singular values must be strictly positive")

    root = np.sqrt(sigma)
    U_first = U[: p * (s - 1)]
    U_last = U[p:]
    shift, _, rank, _ = linalg.lstsq(U_first, U_last, lapack_driver="gelsy")
    if rank < r:
        raise IllPosedShiftError(
            f"Shifted observability factor has rank {rank} < order {r}"
        )
    A = shift / root[:, None] * root[None, :]
    B = root[:, None] * V[:m].T
    C = U[:p] * root[None, :]
    return StateSpaceModel(A, B, C, np.asarray(h0, dtype=np.float64))


def kung_bound_corrected(r: int, m: int, p: int, sigma_next: float, h2norm: float) -> float:
    """20 log10(sqrt(r+m+p) sigma_{r+1} / ||G||_H2)."""
    if not h2norm > 0:
        raise DegenerateReferenceError("H2 norm must be positive for a relative bound")
    return amplitude_db(np.sqrt(r + m + p) * sigma_next / h2norm)


def kung_bound_erroneous(r: int, m: int, p: int, sigma_next: float, h2norm: float) -> float:
    """10 log10(sqrt(r+m+p) sigma_{r+1} / ||G||_H2^2), kept for comparison only."""
    if not h2norm > 0:
        raise DegenerateReferenceError("H2 norm must be positive for a relative bound")
    return power_db(np.sqrt(r + m + p) * sigma_next / h2norm**2)


def error_estimate_db(eloo: float, weighted_norm: float) -> float:
    """20 log10(eloo / ||G||_{H2,eta})."""
    if not weighted_norm > 0:
        raise DegenerateReferenceError("Weighted H2 norm must be positive")
    return amplitude_db(eloo / weighted_norm)


def check_decay(h: MarkovSequence) -> bool:
    """True (with a warning) when the trailing samples still carry significant energy."""
    energy = np.sum(h.data**2, axis=(1, 2))
    total = float(energy.sum())
    if total == 0.0:
        return False
    tail = max(1, int(np.ceil(TAIL_FRACTION * h.N)))
    share = float(energy[-tail:].sum()) / total
    if share > TAIL_ENERGY_RATIO:
        logger.warning(
            "Last %d of %d samples hold %.1f%% of the energy; Markov parameters may not have decayed",
            tail, h.N, 100.0 * share,
        )
        return True
    return False


def _response_norm(h: MarkovSequence) -> float:
    # Relative errors skip h_0 (D is copied exactly) and stop at h_{2s-1}; bounds use the same reference.
    return float(np.sqrt(np.sum(h.data[1 : 2 * h.s] ** 2)))


def _retained(sigma: np.ndarray, shape: Tuple[int, int], dtype) -> int:
    if sigma.size == 0 or sigma[0] <= 0:
        raise DegenerateReferenceError("Hankel matrix is zero; nothing to realize")
    cutoff = max(shape) * np.finfo(dtype).eps * sigma[0]
    return int(np.count_nonzero(sigma > cutoff))


def _finish(
    U: np.ndarray,
    sigma: np.ndarray,
    V: np.ndarray,
    h: MarkovSequence,
    *,
    sigma_next: Optional[float],
    eloo: Optional[float],
    etol: Optional[float],
    weighted: float,
    decay_warning: bool,
    history: Optional[List[Tuple[int, float]]] = None,
) -> EraResult:
    keep = _retained(sigma, (U.shape[0], V.shape[0]), U.dtype)
    if keep < sigma.size:
        logger.info("Dropping %d numerically zero singular values", sigma.size - keep)
        sigma_next = float(sigma[keep])
    U, sigma, V = U[:, :keep], sigma[:keep], V[:, :keep]
    model = realize(U, sigma, V, h.data[0], h.p, h.m, h.s)
    radius = spectral_radius(model)
    stable = radius < 1.0
    if not stable:
        logger.warning("Realized model is not asymptotically stable (spectral radius %.6f)", radius)
    return EraResult(
        model=model,
        sigma=np.asarray(sigma, dtype=np.float64),
        sigma_next=sigma_next,
        eloo_final=eloo,
        etol_used=etol,
        U=U,
        V=V,
        s=h.s,
        weighted_norm=weighted,
        h2_norm=_response_norm(h),
        stable=stable,
        decay_warning=decay_warning,
        history=list(history or []),
    )


def adaptive_era(
    h: MarkovSequence,
    gamma: float = DEFAULT_GAMMA,
    b: int = DEFAULT_BLOCK,
    q: int = DEFAULT_POWER,
    seed: Optional[int] = DEFAULT_SEED,
    dtype=np.float64,
) -> EraResult:
    """
    Reduce measured Markov parameters to a state-space model.

    The randomized SVD stops once its leave-one-out estimate falls below
    gamma * ||G||_{H2,eta}; the realized order is the resulting sketch width.
    """
    if not gamma > 0:
        raise ShapeError(f"gamma must be > 0 (got {gamma})")
    timings: Dict[str, float] = {}
    decay_warning = check_decay(h)

    start = time.perf_counter()
    op = HankelOperator(h, dtype=dtype)
    weighted = weighted_h2_norm(h)
    if weighted == 0.0:
        raise DegenerateReferenceError("Impulse response is identically zero")
    etol = gamma * weighted
    timings["operator"] = time.perf_counter() - start

    start = time.perf_counter()
    svd = adaptive_rsvd(op, b=b, q=q, etol=etol, seed=seed)
    timings["rsvd"] = time.perf_counter() - start

    start = time.perf_counter()
    # the randomized path never sees sigma_{r+1}; the last block's smallest value stands in
    result = _finish(
        svd.U, svd.sigma, svd.V, h,
        sigma_next=float(svd.sigma[-1]),
        eloo=svd.estimate,
        etol=etol,
        weighted=weighted,
        decay_warning=decay_warning,
        history=svd.history,
    )
    timings["realize"] = time.perf_counter() - start
    result.timings = timings
    logger.info(
        "ERA: order %d from %dx%d Hankel operator (etol %.4e) in %.3fs",
        result.order, op.rows, op.cols, etol, sum(timings.values()),
    )
    return result


def dense_era(h: MarkovSequence, order: Optional[int] = None) -> EraResult:
    """Classical ERA on the materialized Hankel matrix; sigma_next is exact."""
    start = time.perf_counter()
    H = HankelOperator(h).to_dense()
    U, sigma, Vt = linalg.svd(H, full_matrices=False)
    weighted = weighted_h2_norm(h)
    keep = _retained(sigma, H.shape, H.dtype)
    order = keep if order is None else order
    if not 1 <= order <= keep:
        raise ShapeError(f"Order must be in [1, {keep}] for this Hankel matrix (got {order})")
    sigma_next = float(sigma[order]) if order < sigma.size else 0.0
    result = _finish(
        U[:, :order], sigma[:order], Vt[:order].T, h,
        sigma_next=sigma_next,
        eloo=None,
        etol=None,
        weighted=weighted,
        decay_warning=check_decay(h),
    )
    result.timings = {"dense": time.perf_counter() - start}
    return result


def realization_defect(model: StateSpaceModel, U: np.ndarray, sigma: np.ndarray, V: np.ndarray, s: int) -> float:
    """
    ||H_r - U diag(sigma) V^T||_F, with H_r the s x s block Hankel matrix of the model.

    Evaluated through one Hankel product with V, so the dense matrices are never formed.
    """
    op = HankelOperator(markov_params(model, 2 * s))
    U = np.asarray(U, dtype=np.float64)
    HV = np.asarray(op.matmat(np.asarray(V, dtype=np.float64)))
    cross = float(np.sum(sigma * np.sum(U * HV, axis=0)))
    square = op.frobenius_norm() ** 2 - 2.0 * cross + float(np.sum(sigma**2))
    return float(np.sqrt(max(square, 0.0)))


def truncate(result: EraResult, order: int) -> EraResult:
    """
    Re-realize at a lower order from the retained factors.

    The Frobenius residual estimate grows by the discarded singular values and
    by the realization defect of the lower-order model.
    """
    if not 1 <= order <= result.sigma.size:
        raise ShapeError(f"Order must be in [1, {result.sigma.size}] (got {order})")
    if order == result.sigma.size:
        return result
    model = result.model
    p, m = model.p, model.m
    U, sigma, V = result.U[:, :order], result.sigma[:order], result.V[:, :order]
    reduced = realize(U, sigma, V, model.D, p, m, result.s)
    dropped = result.sigma[order:]
    eloo = None
    if result.eloo_final is not None:
        tail = float(np.sqrt(result.eloo_final**2 + np.sum(dropped**2)))
        eloo = tail + realization_defect(reduced, U, sigma, V, result.s)
    stable = spectral_radius(reduced) < 1.0
    return replace(
        result,
        model=reduced,
        sigma=sigma,
        sigma_next=float(dropped[0]),
        eloo_final=eloo,
        U=U,
        V=V,
        stable=stable,
    )
