"""Error types raised by the realization pipeline.

All errors derive from ``ValueError`` so callers that guard numerical code
with ``except ValueError`` keep working. ``kind`` is the machine-readable
label reported by the CLI.
"""

from typing import Any, Dict, Optional


class HromError(ValueError):
    """Base class for all pipeline errors."""

    kind = "error"

    def to_dict(self) -> Dict[str, Any]:
        return {"error": str(self), "kind": self.kind}


class InvalidModelError(HromError):
    kind = "invalid-model"


class DegenerateReferenceError(HromError):
    kind = "degenerate-reference"


class SingularityError(HromError):
    kind = "singularity"

    def __init__(self, message: str, omega: float):
        super().__init__(message)
        self.omega = omega

    def to_dict(self) -> Dict[str, Any]:
        out = super().to_dict()
        out["omega"] = self.omega
        return out


class ShapeError(HromError):
    kind = "shape"


class RankDeficiencyError(HromError):
    kind = "rank-deficiency"


class EstimatorUnavailableError(HromError):
    kind = "estimator-unavailable"


class ToleranceUnreachableError(HromError):
    kind = "tolerance-unreachable"

    def __init__(self, message: str, estimate: float, width: int):
        super().__init__(message)
        self.estimate = estimate
        self.width = width

    def to_dict(self) -> Dict[str, Any]:
        out = super().to_dict()
        out.update({"estimate": self.estimate, "width": self.width})
        return out


class IllPosedShiftError(HromError):
    kind = "ill-posed-shift"


class InvalidSpecError(HromError):
    kind = "invalid-spec"


class FormatError(HromError):
    kind = "format"

    def __init__(
        self,
        message: str,
        offset: Optional[int] = None,
        expected: Optional[int] = None,
        actual: Optional[int] = None,
    ):
        super().__init__(message)
        self.offset = offset
        self.expected = expected
        self.actual = actual

    def to_dict(self) -> Dict[str, Any]:
        out = super().to_dict()
        for key in ("offset", "expected", "actual"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out
