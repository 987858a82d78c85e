"""
Domain types for impulse-response data and state-space systems.

Markov parameters, H2 norms, frequency responses and the relative error
metric used to grade reduced order models all live here. Structured models
(dead-time-free core plus input/output delays) are handled channelwise and
never densified.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Tuple, Union

import numpy as np
from scipy import signal

from .config import DB_FLOOR
from .errors import (
    DegenerateReferenceError,
    InvalidModelError,
    InvalidSpecError,
    ShapeError,
    SingularityError,
)

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class MarkovSequence:
    """Impulse response h[t, i, j] (time, output, input), stored in double precision."""

    data: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ShapeError(f"Markov data must be 3-D (t, i, j), got shape {data.shape}")
        n_samples, p, m = data.shape
        if n_samples < 2 or p < 1 or m < 1:
            raise ShapeError(f"Need N >= 2, p >= 1, m >= 1 (got N={n_samples}, p={p}, m={m})")
        if not np.all(np.isfinite(data)):
            raise ShapeError("Markov data contains non-finite values")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def N(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    @property
    def m(self) -> int:
        return self.data.shape[2]

    @property
    def s(self) -> int:
        """Hankel block count per side; an odd final sample is dropped."""
        return self.N // 2


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Dense discrete-time realization x+ = A x + B u, y = C x + D u."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self) -> None:
        mats = {name: np.array(getattr(self, name), dtype=np.float64) for name in "ABCD"}
        for name, mat in mats.items():
            if mat.ndim != 2:
                raise InvalidModelError(f"{name} must be 2-D, got shape {mat.shape}")
            if not np.all(np.isfinite(mat)):
                raise InvalidModelError(f"{name} contains non-finite values")
        A, B, C, D = mats["A"], mats["B"], mats["C"], mats["D"]
        n = A.shape[0]
        if A.shape != (n, n):
            raise InvalidModelError(f"A must be square, got {A.shape}")
        if B.shape[0] != n or C.shape[1] != n:
            raise InvalidModelError(
                f"State dimension mismatch: A {A.shape}, B {B.shape}, C {C.shape}"
            )
        if D.shape != (C.shape[0], B.shape[1]):
            raise InvalidModelError(
                f"D must be {C.shape[0]}x{B.shape[1]} to match C and B, got {D.shape}"
            )
        for name, mat in mats.items():
            object.__setattr__(self, name, _frozen(mat))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @classmethod
    def feedthrough(cls, D: np.ndarray) -> "StateSpaceModel":
        """Memoryless model with zero states."""
        D = np.atleast_2d(np.asarray(D, dtype=np.float64))
        p, m = D.shape
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), D)


@dataclass(frozen=True, eq=False)
class DelayMatrix:
    """
    Per-channel dead times delta[i, j] in samples.

    Silent channels carry the sentinel delta = n_samples when the record
    length is known.
    """

    delta: np.ndarray
    n_samples: Optional[int] = None

    def __post_init__(self) -> None:
        delta = np.array(self.delta, dtype=np.int64)
        if delta.ndim != 2:
            raise InvalidSpecError(f"Delay matrix must be 2-D, got shape {delta.shape}")
        if np.any(delta < 0):
            raise InvalidSpecError("Delay matrix entries must be >= 0")
        object.__setattr__(self, "delta", _frozen(delta))

    @property
    def silent(self) -> np.ndarray:
        if self.n_samples is None:
            return np.zeros(self.delta.shape, dtype=bool)
        return self.delta >= self.n_samples

    @property
    def p(self) -> int:
        return self.delta.shape[0]

    @property
    def m(self) -> int:
        return self.delta.shape[1]


@dataclass(frozen=True, eq=False)
class DeadTimeSpec:
    """Input delays tau (m), output delays theta (p) and the residual delay matrix."""

    tau: np.ndarray
    theta: np.ndarray
    residual: np.ndarray

    def __post_init__(self) -> None:
        tau = np.array(self.tau, dtype=np.int64).reshape(-1)
        theta = np.array(self.theta, dtype=np.int64).reshape(-1)
        residual = np.array(self.residual, dtype=np.int64)
        if residual.shape != (theta.size, tau.size):
            raise InvalidSpecError(
                f"residual must be {theta.size}x{tau.size}, got {residual.shape}"
            )
        if np.any(tau < 0) or np.any(theta < 0):
            raise InvalidSpecError("Dead times must be >= 0")
        if np.any(residual < 0):
            raise InvalidSpecError("Residual delays must be >= 0 (theta_i + tau_j exceeds delta_ij)")
        object.__setattr__(self, "tau", _frozen(tau))
        object.__setattr__(self, "theta", _frozen(theta))
        object.__setattr__(self, "residual", _frozen(residual))

    @classmethod
    def from_delays(cls, delays: DelayMatrix, tau: Iterable[int], theta: Iterable[int]) -> "DeadTimeSpec":
        tau = np.asarray(list(tau), dtype=np.int64)
        theta = np.asarray(list(theta), dtype=np.int64)
        residual = delays.delta - theta[:, None] - tau[None, :]
        return cls(tau, theta, residual)

    @classmethod
    def zeros(cls, p: int, m: int) -> "DeadTimeSpec":
        return cls(np.zeros(m, dtype=np.int64), np.zeros(p, dtype=np.int64), np.zeros((p, m), dtype=np.int64))

    @property
    def shifts(self) -> np.ndarray:
        """Total channel shift theta_i + tau_j as a p x m matrix."""
        return self.theta[:, None] + self.tau[None, :]


@dataclass(frozen=True, eq=False)
class StructuredModel:
    """Composition of output delays, dead-time-free core and input delays."""

    core: StateSpaceModel
    spec: DeadTimeSpec = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        spec = self.spec if self.spec is not None else DeadTimeSpec.zeros(self.core.p, self.core.m)
        if spec.tau.size != self.core.m or spec.theta.size != self.core.p:
            raise InvalidModelError(
                f"Dead-time spec ({spec.theta.size} outputs, {spec.tau.size} inputs) "
                f"does not match core ({self.core.p} outputs, {self.core.m} inputs)"
            )
        object.__setattr__(self, "spec", spec)

    @property
    def n(self) -> int:
        return self.core.n

    @property
    def m(self) -> int:
        return self.core.m

    @property
    def p(self) -> int:
        return self.core.p


Model = Union[StateSpaceModel, StructuredModel]


def _split(model: Model) -> Tuple[StateSpaceModel, DeadTimeSpec | None]:
    if isinstance(model, StructuredModel):
        return model.core, model.spec
    if isinstance(model, StateSpaceModel):
        return model, None
    raise InvalidModelError(f"Unsupported model type: {type(model).__name__}")


def power_db(ratio: float) -> float:
    """10*log10 of a power ratio, clamped at the reporting floor."""
    if ratio <= 0:
        return DB_FLOOR
    return max(DB_FLOOR, float(10.0 * np.log10(ratio)))


def amplitude_db(ratio: float) -> float:
    """20*log10 of an amplitude ratio, clamped at the reporting floor."""
    if ratio <= 0:
        return DB_FLOOR
    return max(DB_FLOOR, float(20.0 * np.log10(ratio)))


def _core_markov(model: StateSpaceModel, count: int) -> np.ndarray:
    out = np.zeros((count, model.p, model.m))
    out[0] = model.D
    if model.n == 0:
        return out
    state = model.B.copy()
    for k in range(1, count):
        out[k] = model.C @ state
        state = model.A @ state
    return out


def shift_channels(data: np.ndarray, shifts: np.ndarray) -> np.ndarray:
    """Delay channel (i, j) of a (t, i, j) array by shifts[i, j] samples, keeping the length."""
    count = data.shape[0]
    out = np.zeros_like(data)
    for (i, j), shift in np.ndenumerate(shifts):
        if shift < count:
            out[shift:, i, j] = data[: count - shift, i, j]
    return out


def markov_params(model: Model, count: int, sample_rate: float = 1.0) -> MarkovSequence:
    """
    Markov parameters h_0 = D, h_k = C A^(k-1) B for k < count.

    A is applied repeatedly to an n x m state block. For structured models
    the core's parameters are shifted per channel by theta_i + tau_j.

    A MarkovSequence holds at least two samples, so count=1 returns h_0
    followed by a zero h_1.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1 (got {count})")
    core, spec = _split(model)
    length = max(count, 2)
    data = _core_markov(core, length)
    if spec is not None:
        data = shift_channels(data, spec.shifts)
    if count == 1:
        data[1:] = 0.0
    return MarkovSequence(data, sample_rate=sample_rate)


def h2_norm(h: MarkovSequence) -> float:
    """(sum_k ||h_k||_F^2)^(1/2) over all stored samples."""
    return float(np.sqrt(np.sum(h.data**2)))


def hankel_weights(s: int) -> np.ndarray:
    """Multiplicity eta_k of h_k in the block-Hankel matrix, k = 0 .. 2s-1 (eta_0 = 1)."""
    k = np.arange(2 * s, dtype=np.float64)
    eta = np.where(k <= s, k, 2 * s - k)
    eta[0] = 1.0
    return eta


def weighted_h2_norm(h: MarkovSequence) -> float:
    """Time-weighted H2 norm; equals (||H||_F^2 + ||h_0||_F^2)^(1/2)."""
    s = h.s
    energy = np.sum(h.data[: 2 * s] ** 2, axis=(1, 2))
    return float(np.sqrt(np.sum(hankel_weights(s) * energy)))


def _error_window(h_ref: MarkovSequence, spec: DeadTimeSpec | None) -> np.ndarray:
    """
    Mask of the samples scored by the error metric, shape (N, p, m).

    Channel (i, j) is scored on t in (d_ij, d_ij + 2s') with d = theta_i + tau_j
    and s' = (N - max d) // 2, i.e. k = 1 .. 2s'-1 of the rectified record.
    """
    shifts = np.zeros((h_ref.p, h_ref.m), dtype=np.int64) if spec is None else spec.shifts
    length = h_ref.N - int(shifts.max())
    if length < 2:
        raise ShapeError(f"Dead times of up to {int(shifts.max())} samples leave no data in N={h_ref.N}")
    span = 2 * (length // 2)
    t = np.arange(h_ref.N)[:, None, None]
    return (t > shifts[None]) & (t < shifts[None] + span)


def h2_error(h_ref: MarkovSequence, model: Model) -> float:
    """Absolute error (sum_{k=1}^{2s-1} ||h_k - h_hat_k||_F^2)^(1/2), per channel in the rectified frame."""
    core, spec = _split(model)
    if (core.p, core.m) != (h_ref.p, h_ref.m):
        raise ShapeError(
            f"Model is {core.p}x{core.m} but reference data is {h_ref.p}x{h_ref.m}"
        )
    window = _error_window(h_ref, spec)
    approx = markov_params(model, h_ref.N).data
    return float(np.sqrt(np.sum(np.where(window, h_ref.data - approx, 0.0) ** 2)))


def relative_error_db(h_ref: MarkovSequence, model: Model) -> float:
    """
    Relative H2 error of a model against measured data in dB.

    Feedthrough samples are excluded. Structured models are scored on each
    channel's rectified window, so the result equals scoring the core
    against the rectified data when residuals are zero.
    """
    core, spec = _split(model)
    if (core.p, core.m) != (h_ref.p, h_ref.m):
        raise ShapeError(
            f"Model is {core.p}x{core.m} but reference data is {h_ref.p}x{h_ref.m}"
        )
    reference = float(np.sum(np.where(_error_window(h_ref, spec), h_ref.data, 0.0) ** 2))
    if reference == 0.0:
        raise DegenerateReferenceError("Reference impulse response has zero energy for k >= 1")
    error = h2_error(h_ref, model)
    return power_db(error**2 / reference)


def frequency_response(model: Model, omegas: Iterable[float]) -> np.ndarray:
    """
    Transfer function G(e^{iw}) for each w (radians/sample), shape (len(omegas), p, m).

    Structured models are multiplied by diag(e^{-iw theta}) and diag(e^{-iw tau}).
    """
    core, spec = _split(model)
    omegas = np.atleast_1d(np.asarray(list(omegas), dtype=np.float64))
    out = np.empty((omegas.size, core.p, core.m), dtype=np.complex128)
    eye = np.eye(core.n)
    for idx, omega in enumerate(omegas):
        z = np.exp(1j * omega)
        response = core.D.astype(np.complex128)
        if core.n:
            try:
                resolvent = np.linalg.solve(z * eye - core.A, core.B)
            except np.linalg.LinAlgError as exc:
                raise SingularityError(f"zI - A is singular at omega={omega}", omega) from exc
            if not np.all(np.isfinite(resolvent)):
                raise SingularityError(f"zI - A is singular at omega={omega}", omega)
            response = response + core.C @ resolvent
        if spec is not None:
            response = (
                np.exp(-1j * omega * spec.theta)[:, None]
                * response
                * np.exp(-1j * omega * spec.tau)[None, :]
            )
        out[idx] = response
    return out


def spectral_radius(model: Model) -> float:
    core, _ = _split(model)
    if core.n == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(core.A))))


def finite_gramians(model: StateSpaceModel, horizon: int) -> Tuple[np.ndarray, np.ndarray]:
    """Controllability and observability Gramians truncated after ``horizon`` steps."""
    P = np.zeros((model.n, model.n))
    Q = np.zeros((model.n, model.n))
    ctrb = model.B.copy()
    obsv = model.C.copy()
    for _ in range(horizon):
        P += ctrb @ ctrb.T
        Q += obsv.T @ obsv
        ctrb = model.A @ ctrb
        obsv = obsv @ model.A
    return P, Q


def _delay_columns(signals: np.ndarray, delays: np.ndarray) -> np.ndarray:
    out = np.zeros_like(signals)
    length = signals.shape[0]
    for col, delay in enumerate(delays):
        if delay < length:
            out[delay:, col] = signals[: length - delay, col]
    return out


def simulate(model: Model, u: np.ndarray) -> np.ndarray:
    """
    Output y (T x p) for input u (T x m) from zero initial state.

    Structured models run the core between two banks of delay lines.
    """
    core, spec = _split(model)
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[1] != core.m:
        raise ShapeError(f"Input must be T x {core.m}, got shape {u.shape}")
    if spec is not None:
        u = _delay_columns(u, spec.tau)
    if core.n == 0:
        y = u @ core.D.T
    else:
        _, y, _ = signal.dlsim((core.A, core.B, core.C, core.D, 1.0), u)
        y = np.asarray(y).reshape(u.shape[0], core.p)
    if spec is not None:
        y = _delay_columns(y, spec.theta)
    return y
