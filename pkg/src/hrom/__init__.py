"""Adaptive randomized ERA for multichannel impulse responses with dead-time splitting."""

from .core import (
    DeadTimeSpec,
    DelayMatrix,
    MarkovSequence,
    StateSpaceModel,
    StructuredModel,
    frequency_response,
    h2_norm,
    markov_params,
    relative_error_db,
    weighted_h2_norm,
)
from .deadtime import assemble, count_dofs, estimate_delays, rectify, solve_dts, solve_least_common
from .era import EraResult, adaptive_era, dense_era, realize
from .errors import HromError
from .hankel import HankelOperator
from .rsvd import adaptive_rsvd, loo_estimate

__all__ = [
    "DeadTimeSpec",
    "DelayMatrix",
    "EraResult",
    "HankelOperator",
    "HromError",
    "MarkovSequence",
    "StateSpaceModel",
    "StructuredModel",
    "adaptive_era",
    "adaptive_rsvd",
    "assemble",
    "count_dofs",
    "dense_era",
    "estimate_delays",
    "frequency_response",
    "h2_norm",
    "loo_estimate",
    "markov_params",
    "realize",
    "rectify",
    "relative_error_db",
    "solve_dts",
    "solve_least_common",
    "weighted_h2_norm",
]
