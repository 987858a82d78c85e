"""
Implicit block-Hankel operator over measured Markov parameters.

Block (a, b) of H (0-based) is h_{a+b+1}; rows are indexed a*p + i and columns
b*m + j. Products with H and H^T are evaluated as channelwise linear
convolutions through zero-padded real FFTs, so H is never formed.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from scipy import fft
from scipy.sparse.linalg import LinearOperator

from .config import thread_count
from .core import MarkovSequence, hankel_weights
from .errors import ShapeError

logger = logging.getLogger(__name__)


def transform_length(s: int) -> int:
    """Smallest power of two >= 2s."""
    return 1 << (2 * s - 1).bit_length()


class HankelOperator(LinearOperator):
    """
    H = [h_{a+b+1}] of shape (p*s, m*s), applied through precomputed channel spectra.

    The operator is immutable after construction and safe to share between threads.
    """

    def __init__(self, source: MarkovSequence, dtype=np.float64, workers: Optional[int] = None):
        s = source.s
        if s < 1:
            raise ShapeError(f"Need at least 2 samples for a Hankel operator (got N={source.N})")
        self.source = source
        self.s = s
        self.p = source.p
        self.m = source.m
        self.fft_len = transform_length(s)
        self.workers = workers if workers is not None else thread_count()
        super().__init__(dtype=np.dtype(dtype), shape=(self.p * s, self.m * s))

        # g[k] = h[k+1], k = 0 .. 2s-2
        g = source.data[1 : 2 * s].astype(self.dtype, copy=False)
        spectra = fft.rfft(g, n=self.fft_len, axis=0, workers=self.workers)
        self._spectra = spectra
        self._spectra_t = np.ascontiguousarray(spectra.transpose(0, 2, 1))
        logger.debug(
            "Hankel operator %dx%d (p=%d, m=%d, s=%d, fft length %d)",
            self.shape[0], self.shape[1], self.p, self.m, s, self.fft_len,
        )

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    def _convolve(self, spectra: np.ndarray, X: np.ndarray, n_in: int, n_out: int) -> np.ndarray:
        s, width = self.s, X.shape[1]
        blocks = X.reshape(s, n_in, width)[::-1]
        spectrum = fft.rfft(blocks, n=self.fft_len, axis=0, workers=self.workers)
        mixed = np.matmul(spectra, spectrum)
        full = fft.irfft(mixed, n=self.fft_len, axis=0, workers=self.workers)
        return full[s - 1 : 2 * s - 1].reshape(s * n_out, width).astype(self.dtype, copy=False)

    def _matmat(self, X):
        X = np.asarray(X, dtype=self.dtype)
        return self._convolve(self._spectra, X, self.m, self.p)

    def _rmatmat(self, Y):
        Y = np.asarray(Y, dtype=self.dtype)
        return self._convolve(self._spectra_t, Y, self.p, self.m)

    def _matvec(self, x):
        return self._matmat(np.asarray(x).reshape(-1, 1)).reshape(-1)

    def _rmatvec(self, y):
        return self._rmatmat(np.asarray(y).reshape(-1, 1)).reshape(-1)

    def _adjoint(self):
        return _HankelAdjoint(self)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """H @ X for X of shape (cols,) or (cols, k)."""
        X = np.asarray(X)
        if X.shape[0] != self.cols or X.ndim > 2:
            raise ShapeError(f"Expected {self.cols} rows, got block of shape {X.shape}")
        if X.ndim == 1:
            return self._matvec(X)
        return self._matmat(X)

    def apply_transpose(self, Y: np.ndarray) -> np.ndarray:
        """H^T @ Y for Y of shape (rows,) or (rows, k)."""
        Y = np.asarray(Y)
        if Y.shape[0] != self.rows or Y.ndim > 2:
            raise ShapeError(f"Expected {self.rows} rows, got block of shape {Y.shape}")
        if Y.ndim == 1:
            return self._rmatvec(Y)
        return self._rmatmat(Y)

    def frobenius_norm(self) -> float:
        """||H||_F from the data: (sum_k eta_k ||h_k||_F^2 - ||h_0||_F^2)^(1/2)."""
        energy = np.sum(self.source.data[: 2 * self.s] ** 2, axis=(1, 2))
        weighted = np.sum(hankel_weights(self.s)[1:] * energy[1:])
        return float(np.sqrt(weighted))

    def to_dense(self) -> np.ndarray:
        """Materialize H. Only meant for small instances and checks."""
        s = self.s
        index = np.add.outer(np.arange(s), np.arange(s)) + 1
        blocks = self.source.data[index]  # (s, s, p, m)
        return blocks.transpose(0, 2, 1, 3).reshape(s * self.p, s * self.m).astype(self.dtype)


class _HankelAdjoint(LinearOperator):
    def __init__(self, parent: HankelOperator):
        self.parent = parent
        super().__init__(dtype=parent.dtype, shape=(parent.shape[1], parent.shape[0]))

    def _matmat(self, X):
        return self.parent._rmatmat(X)

    def _rmatmat(self, Y):
        return self.parent._matmat(Y)

    def _matvec(self, x):
        return self.parent._rmatvec(x)

    def _rmatvec(self, y):
        return self.parent._matvec(y)
