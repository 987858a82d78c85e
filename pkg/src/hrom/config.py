"""Pipeline configuration and numerical defaults."""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Literal, Optional

import numpy as np

from .errors import InvalidSpecError

logger = logging.getLogger(__name__)

DeadTimeMode = Literal["none", "least-common", "dts"]
Precision = Literal["double", "single"]

DEAD_TIME_MODES = ("none", "least-common", "dts")
PRECISIONS = ("double", "single")

ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG_FILE = ROOT / "config" / "pipeline.json"

# Pipeline defaults
DEFAULT_GAMMA = 0.05
DEFAULT_BLOCK = 32
DEFAULT_POWER = 2
DEFAULT_SEED = 0
DEFAULT_THRESHOLD = 0.05

# Reporting
DB_FLOOR = -300.0
FORMAT_VERSION = 1

# Shifted CholeskyQR guards
CHOLQR_MAX_ITERATIONS = 100
CHOLQR_MAX_SHIFTS = 5
# An update block whose projected remainder is below this many sqrt(rows) eps
# of its own norm is treated as lying in the span of the basis.
CHOLQR_SPAN_FACTOR = 10.0

# Decay assumption check: share of trailing samples and tolerated energy share
TAIL_FRACTION = 0.05
TAIL_ENERGY_RATIO = 0.01

# Synthetic acoustics
SOUND_SPEED = 343.0

THREADS_ENV = "HROM_THREADS"


def thread_count() -> int:
    """Worker threads for FFTs, capped by ``HROM_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
        return 1
    return max(1, value)


def dtype_for(precision: str) -> np.dtype:
    if precision not in PRECISIONS:
        raise InvalidSpecError(f"precision must be one of {PRECISIONS} (got {precision!r})")
    return np.dtype(np.float64 if precision == "double" else np.float32)


@dataclass
class PipelineConfig:
    """Parameters of one reduce run."""

    gamma: float = DEFAULT_GAMMA
    block: int = DEFAULT_BLOCK
    power: int = DEFAULT_POWER
    seed: int = DEFAULT_SEED
    dead_time_mode: str = "dts"
    tde_threshold: float = DEFAULT_THRESHOLD
    precision: str = "double"
    paths: Dict[str, str] = field(default_factory=dict)

    def validate(self) -> "PipelineConfig":
        if not self.gamma > 0:
            raise InvalidSpecError(f"gamma must be > 0 (got {self.gamma})")
        if self.block < 1:
            raise InvalidSpecError(f"block must be >= 1 (got {self.block})")
        if self.power < 0:
            raise InvalidSpecError(f"power must be >= 0 (got {self.power})")
        if self.dead_time_mode not in DEAD_TIME_MODES:
            raise InvalidSpecError(
                f"dead_time_mode must be one of {DEAD_TIME_MODES} (got {self.dead_time_mode!r})"
            )
        if not 0 < self.tde_threshold < 1:
            raise InvalidSpecError(f"tde_threshold must be in (0, 1) (got {self.tde_threshold})")
        dtype_for(self.precision)
        return self

    @property
    def dtype(self) -> np.dtype:
        return dtype_for(self.precision)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def load_pipeline_config(
    path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None
) -> PipelineConfig:
    """
    Build a PipelineConfig from defaults, an optional JSON file and overrides.

    Keys in the file or in ``overrides`` that are ``None`` are ignored so that
    unset CLI flags fall through to the file value.
    """
    values: Dict[str, Any] = {}
    config_path = Path(path) if path is not None else DEFAULT_CONFIG_FILE
    if config_path.exists():
        with config_path.open("r", encoding="utf-8") as f:
            data = json.load(f)
        values.update(data.get("pipeline", data))
        logger.debug("Loaded pipeline defaults from %s", config_path)
    elif path is not None:
        raise FileNotFoundError(f"Config file not found: {config_path}")

    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise InvalidSpecError(f"Unknown pipeline config keys: {', '.join(unknown)}")
    return PipelineConfig(**values).validate()
