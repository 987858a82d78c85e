"""
Dead-time extraction for multichannel impulse responses.

Delays are estimated per channel from the response onset, split into
per-input (tau) and per-output (theta) dead times, removed from the data
before reduction and re-attached to the reduced core afterwards.

Variables of the splitting problem are ordered x = [theta_1..theta_p,
tau_1..tau_m]; constraint rows follow vec(delta), input channel major.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .config import DEFAULT_THRESHOLD
from .core import (
    DeadTimeSpec,
    DelayMatrix,
    MarkovSequence,
    StateSpaceModel,
    StructuredModel,
)
from .errors import InvalidModelError, InvalidSpecError
from .simplex import LinearProgram, solve

logger = logging.getLogger(__name__)


@dataclass
class DtsLp:
    """Constraint data F x <= rhs of the splitting problem."""

    F: np.ndarray
    rhs: np.ndarray
    p: int
    m: int


def estimate_delays(h: MarkovSequence, rel_threshold: float = DEFAULT_THRESHOLD) -> DelayMatrix:
    """
    First sample where |h_ij(t)| exceeds rel_threshold times the channel peak.

    Silent channels get delta_ij = N.
    """
    if not 0 < rel_threshold < 1:
        raise InvalidSpecError(f"rel_threshold must be in (0, 1) (got {rel_threshold})")
    magnitude = np.abs(h.data)
    peak = magnitude.max(axis=0)
    onset = np.argmax(magnitude > rel_threshold * peak, axis=0)
    delta = np.where(peak > 0, onset, h.N)
    silent = int(np.count_nonzero(peak == 0))
    if silent:
        logger.warning("%d of %d channels are silent; marking them with delay %d", silent, peak.size, h.N)
    logger.info("Estimated delays for %dx%d channels (min %d, max %d)", h.p, h.m, delta.min(), delta.max())
    return DelayMatrix(delta, n_samples=h.N)


def capped_delays(delays: DelayMatrix) -> np.ndarray:
    """Delay matrix with silent-channel sentinels lowered to the largest real delay."""
    delta = np.array(delays.delta)
    silent = delays.silent
    if silent.any():
        audible = delta[~silent]
        delta[silent] = audible.max() if audible.size else 0
    return delta


def dts_lp(delta: np.ndarray) -> DtsLp:
    """Incidence-matrix constraints theta_i + tau_j <= delta_ij."""
    delta = np.asarray(delta)
    p, m = delta.shape
    F = np.zeros((p * m, p + m))
    for j in range(m):
        for i in range(p):
            row = j * p + i
            F[row, i] = 1.0
            F[row, p + j] = 1.0
    return DtsLp(F, delta.reshape(-1, order="F").astype(np.float64), p, m)


def _tie_break_order(p: int, m: int) -> List[int]:
    # tau first (inputs), then theta, lower channel index first
    return list(range(p, p + m)) + list(range(p))


def solve_dts(delays: DelayMatrix) -> DeadTimeSpec:
    """
    Maximize sum(theta) + sum(tau) subject to theta_i + tau_j <= delta_ij.

    Alternative optima are resolved by maximizing tau_1..tau_m, then
    theta_1..theta_p, one at a time with the total held at its optimum.
    """
    delta = capped_delays(delays)
    lp = dts_lp(delta)
    n = lp.p + lp.m
    ones = np.ones(n)
    result = solve(LinearProgram(ones, lp.F, lp.rhs))
    x = result.x
    if not result.unique:
        logger.info("Splitting problem has alternative optima (objective %.0f); breaking ties", result.objective)
        total = round(result.objective)
        fixed: List[int] = []
        values: List[float] = []
        for var in _tie_break_order(lp.p, lp.m):
            A_eq = np.vstack([ones] + [np.eye(n)[k] for k in fixed])
            b_eq = np.array([total] + values, dtype=np.float64)
            c = np.zeros(n)
            c[var] = 1.0
            step = solve(LinearProgram(c, lp.F, lp.rhs, A_eq, b_eq))
            fixed.append(var)
            values.append(float(round(step.objective)))
            x = step.x

    rounded = np.rint(x)
    if np.max(np.abs(rounded - x), initial=0.0) > 1e-6:
        logger.warning("Splitting solution is not integral (max deviation %.3g)", np.max(np.abs(rounded - x)))
    theta, tau = rounded[: lp.p].astype(np.int64), rounded[lp.p :].astype(np.int64)
    spec = DeadTimeSpec.from_delays(delays, tau, theta)
    logger.info(
        "Dead-time split: extracted %d samples (sum tau %d, sum theta %d), residual %d",
        int(tau.sum() + theta.sum()), int(tau.sum()), int(theta.sum()), total_residual(spec),
    )
    return spec


def solve_least_common(delays: DelayMatrix, p: Optional[int] = None, m: Optional[int] = None) -> DeadTimeSpec:
    """Assign the smallest delay to all outputs if p <= m, otherwise to all inputs."""
    p = delays.p if p is None else p
    m = delays.m if m is None else m
    if (p, m) != (delays.p, delays.m):
        raise InvalidSpecError(f"Delay matrix is {delays.p}x{delays.m}, expected {p}x{m}")
    audible = delays.delta[~delays.silent]
    common = int(audible.min()) if audible.size else 0
    if p <= m:
        tau, theta = np.zeros(m, dtype=np.int64), np.full(p, common, dtype=np.int64)
    else:
        tau, theta = np.full(m, common, dtype=np.int64), np.zeros(p, dtype=np.int64)
    logger.info("Least common dead time: %d samples", common)
    return DeadTimeSpec.from_delays(delays, tau, theta)


def rectify(h: MarkovSequence, spec: DeadTimeSpec) -> MarkovSequence:
    """Remove channel shifts: h0_ij(t) = h_ij(t + tau_j + theta_i), length N - max shift."""
    if (spec.theta.size, spec.tau.size) != (h.p, h.m):
        raise InvalidSpecError(
            f"Dead-time spec is {spec.theta.size}x{spec.tau.size}, data is {h.p}x{h.m}"
        )
    shifts = spec.shifts
    longest = int(shifts.max())
    length = h.N - longest
    if length < 2:
        raise InvalidSpecError(
            f"Shift of {longest} samples leaves {max(length, 0)} of {h.N} samples"
        )
    out = np.zeros((length, h.p, h.m))
    for (i, j), shift in np.ndenumerate(shifts):
        out[:, i, j] = h.data[shift : shift + length, i, j]
    return MarkovSequence(out, sample_rate=h.sample_rate)


def assemble(core: StateSpaceModel, spec: DeadTimeSpec) -> StructuredModel:
    if (core.p, core.m) != (spec.theta.size, spec.tau.size):
        raise InvalidModelError(
            f"Core is {core.p}x{core.m} but dead-time spec is {spec.theta.size}x{spec.tau.size}"
        )
    return StructuredModel(core, spec)


def count_dofs(mode: str, r: int, p: int, m: int, spec: Optional[DeadTimeSpec] = None) -> int:
    """Nonzero parameters of a structured ROM of order r."""
    base = (r + p) * (r + m)
    mode = mode.replace("_", "-")
    if mode == "none":
        return base
    if spec is None:
        raise InvalidSpecError(f"mode {mode!r} needs a dead-time spec")
    if mode == "dts":
        return base + int(spec.theta.sum() + spec.tau.sum())
    if mode == "least-common":
        common = int(max(spec.theta.max(initial=0), spec.tau.max(initial=0)))
        return base + min(m, p) * common
    raise InvalidSpecError(f"Unknown dead-time mode {mode!r}")


def split(delays: DelayMatrix, mode: str) -> DeadTimeSpec:
    """Dispatch on dead-time mode."""
    mode = mode.replace("_", "-")
    if mode == "none":
        return DeadTimeSpec.from_delays(delays, np.zeros(delays.m), np.zeros(delays.p))
    if mode == "least-common":
        return solve_least_common(delays)
    if mode == "dts":
        return solve_dts(delays)
    raise InvalidSpecError(f"Unknown dead-time mode {mode!r}")


def total_residual(spec: DeadTimeSpec) -> int:
    return int(spec.residual.sum())


def dead_time_realization(delays) -> StateSpaceModel:
    """Parallel delay chains diag(z^-d_k) in controllable canonical form."""
    delays = [int(d) for d in np.asarray(delays).reshape(-1)]
    if any(d < 0 for d in delays):
        raise InvalidSpecError("Delays must be >= 0")
    width, n = len(delays), sum(delays)
    A = np.zeros((n, n))
    B = np.zeros((n, width))
    C = np.zeros((width, n))
    D = np.zeros((width, width))
    offset = 0
    for k, d in enumerate(delays):
        if d == 0:
            D[k, k] = 1.0
            continue
        idx = np.arange(offset, offset + d - 1)
        A[idx, idx + 1] = 1.0
        B[offset + d - 1, k] = 1.0
        C[k, offset] = 1.0
        offset += d
    return StateSpaceModel(A, B, C, D)


def materialize(model: StructuredModel) -> StateSpaceModel:
    """
    Dense series connection delta_theta * core * delta_tau.

    State order is [x_tau, x_core, x_theta]. Only meant for small checks.
    """
    d_tau = dead_time_realization(model.spec.tau)
    d_theta = dead_time_realization(model.spec.theta)
    core = model.core
    n_tau, n0, n_theta = d_tau.n, core.n, d_theta.n

    A = np.zeros((n_tau + n0 + n_theta,) * 2)
    A[:n_tau, :n_tau] = d_tau.A
    A[n_tau : n_tau + n0, :n_tau] = core.B @ d_tau.C
    A[n_tau : n_tau + n0, n_tau : n_tau + n0] = core.A
    A[n_tau + n0 :, :n_tau] = d_theta.B @ core.D @ d_tau.C
    A[n_tau + n0 :, n_tau : n_tau + n0] = d_theta.B @ core.C
    A[n_tau + n0 :, n_tau + n0 :] = d_theta.A

    B = np.vstack([d_tau.B, core.B @ d_tau.D, d_theta.B @ core.D @ d_tau.D])
    C = np.hstack([d_theta.D @ core.D @ d_tau.C, d_theta.D @ core.C, d_theta.C])
    D = d_theta.D @ core.D @ d_tau.D
    return StateSpaceModel(A, B, C, D)
