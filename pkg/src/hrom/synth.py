"""
Synthetic free-field impulse responses with known dead times.

Every channel is a delayed, distance-attenuated copy of a shared reverberant
core: h_ij(t) = g_ij * core_ij(t - delta_ij) with delta_ij = floor(fs d_ij / c)
and g_ij = 1 / d_ij. The core has a unit direct path (D = 1) plus a stable
random tail of damped sinusoids.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .config import SOUND_SPEED
from .core import DelayMatrix, MarkovSequence, StateSpaceModel, markov_params, shift_channels
from .deadtime import solve_dts, total_residual

logger = logging.getLogger(__name__)

GEOMETRIES = ("planar", "semicircle")

# Plane separation and common grid extent of the planar setup (metres)
PLANE_DISTANCE = 1.0
GRID_EXTENT = 0.5

# Two source arcs around a linear microphone array (metres)
INNER_RADIUS = 1.0
OUTER_RADIUS = 2.0
MIC_SPACING = 0.08

POLE_RADIUS = (0.9, 0.99)
TAIL_PEAK = 0.3


@dataclass
class SynthResult:
    h: MarkovSequence
    delays: DelayMatrix
    core: StateSpaceModel
    distances: np.ndarray
    truth: Dict[str, Any] = field(default_factory=dict)


def _square_grid(count: int, extent: float, z: float) -> np.ndarray:
    side = int(np.ceil(np.sqrt(count)))
    ticks = np.linspace(-extent / 2, extent / 2, side) if side > 1 else np.zeros(1)
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    points = np.column_stack([xx.ravel(), yy.ravel(), np.full(side * side, z)])
    return points[:count]


def planar_geometry(m: int, p: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sources and receivers on square grids of equal extent in two parallel planes."""
    return _square_grid(m, GRID_EXTENT, PLANE_DISTANCE), _square_grid(p, GRID_EXTENT, 0.0)


def semicircle_geometry(m: int, p: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sources split over two concentric half circles, receivers on a centred line array."""
    inner = (m + 1) // 2
    outer = m - inner
    sources = []
    for radius, count in ((INNER_RADIUS, inner), (OUTER_RADIUS, outer)):
        if count == 0:
            continue
        angles = np.linspace(0.0, np.pi, count) if count > 1 else np.array([np.pi / 2])
        sources.append(np.column_stack([radius * np.cos(angles), radius * np.sin(angles), np.zeros(count)]))
    offsets = (np.arange(p) - (p - 1) / 2) * MIC_SPACING
    receivers = np.column_stack([offsets, np.zeros(p), np.zeros(p)])
    return np.vstack(sources), receivers


def random_core(n_modes: int, m: int, p: int, rng: np.random.Generator, horizon: int) -> StateSpaceModel:
    """
    Stable n_modes-state system with unit feedthrough.

    Poles come in damped complex pairs (plus one real pole for odd orders);
    C is scaled so the tail peaks at TAIL_PEAK.
    """
    blocks = []
    remaining = n_modes
    while remaining >= 2:
        radius = rng.uniform(*POLE_RADIUS)
        angle = rng.uniform(0.05 * np.pi, 0.95 * np.pi)
        c, s = radius * np.cos(angle), radius * np.sin(angle)
        blocks.append(np.array([[c, -s], [s, c]]))
        remaining -= 2
    if remaining:
        blocks.append(np.array([[rng.uniform(*POLE_RADIUS)]]))

    A = np.zeros((n_modes, n_modes))
    offset = 0
    for block in blocks:
        size = block.shape[0]
        A[offset : offset + size, offset : offset + size] = block
        offset += size
    B = rng.standard_normal((n_modes, m))
    C = rng.standard_normal((p, n_modes))
    if n_modes:
        tail = markov_params(StateSpaceModel(A, B, C, np.zeros((p, m))), horizon).data
        peak = np.abs(tail).max()
        if peak > 0:
            C *= TAIL_PEAK / peak
    return StateSpaceModel(A, B, C, np.ones((p, m)))


def random_system(
    n: int,
    m: int,
    p: int,
    seed: Optional[int] = 0,
    radius: float = 0.8,
    feedthrough: bool = True,
) -> StateSpaceModel:
    """Gaussian state-space model with A rescaled to the given spectral radius."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    if n:
        A *= radius / np.max(np.abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = rng.standard_normal((p, m)) if feedthrough else np.zeros((p, m))
    return StateSpaceModel(A, B, C, D)


def synthesize(
    geometry: str,
    m: int,
    p: int,
    n_modes: int,
    fs: float,
    duration: float,
    seed: Optional[int] = 0,
    sound_speed: float = SOUND_SPEED,
) -> SynthResult:
    if geometry not in GEOMETRIES:
        raise ValueError(f"geometry must be one of {GEOMETRIES} (got {geometry!r})")
    if m < 1 or p < 1 or n_modes < 0:
        raise ValueError(f"Need m >= 1, p >= 1, n_modes >= 0 (got m={m}, p={p}, n_modes={n_modes})")
    if not fs > 0 or not duration > 0:
        raise ValueError("fs and duration must be positive")
    n_samples = int(round(fs * duration))
    if n_samples < 2:
        raise ValueError(f"fs * duration gives {n_samples} samples; need at least 2")

    rng = np.random.default_rng(seed)
    sources, receivers = planar_geometry(m, p) if geometry == "planar" else semicircle_geometry(m, p)
    distances = np.linalg.norm(receivers[:, None, :] - sources[None, :, :], axis=2)
    delta = np.floor(fs * distances / sound_speed).astype(np.int64)
    if delta.max() >= n_samples:
        raise ValueError(
            f"Largest propagation delay ({delta.max()} samples) exceeds the record length ({n_samples})"
        )

    core = random_core(n_modes, m, p, rng, n_samples)
    response = markov_params(core, n_samples).data
    data = shift_channels(response / distances[None, :, :], delta)
    h = MarkovSequence(data, sample_rate=fs)
    delays = DelayMatrix(delta, n_samples=n_samples)

    truth: Dict[str, Any] = {
        "geometry": geometry,
        "sample_rate": float(fs),
        "sound_speed": float(sound_speed),
        "n_modes": int(n_modes),
        "seed": seed,
        "delta": delta.tolist(),
        "distances": distances.tolist(),
    }
    spec = solve_dts(delays)
    if total_residual(spec) == 0:
        truth["tau"] = spec.tau.tolist()
        truth["theta"] = spec.theta.tolist()
    logger.info(
        "Synthesized %s scene: m=%d, p=%d, N=%d, delays %d..%d samples",
        geometry, m, p, n_samples, delta.min(), delta.max(),
    )
    return SynthResult(h=h, delays=delays, core=core, distances=distances, truth=truth)
