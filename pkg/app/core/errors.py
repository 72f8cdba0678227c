# app/core/errors.py
from __future__ import annotations

from typing import Any, Dict, List, Optional


class ZeroLabError(RuntimeError):
    """Base error. `detail` is the structured payload echoed into error JSON."""

    def __init__(self, message: str, **detail: Any):
        super().__init__(message)
        self.message = message
        self.detail: Dict[str, Any] = detail

    def to_dict(self) -> Dict[str, Any]:
        return {"error": type(self).__name__, "message": self.message, "detail": self.detail}


# ---- geometry / input ----
class InvalidDimension(ZeroLabError):
    pass


class ResolutionTooSmall(ZeroLabError):
    pass


class DimensionMismatch(ZeroLabError):
    pass


class ZeroPolynomial(ZeroLabError):
    pass


# ---- zero solvers ----
class SolverError(ZeroLabError):
    """Sample-level failure of a zero solver; experiment loops tally these."""


class SharedFactor(SolverError):
    pass


class NewtonDivergence(SolverError):
    def __init__(self, message: str, partial: Optional[List[Any]] = None, **detail: Any):
        super().__init__(message, **detail)
        self.partial = partial or []


class IncompleteZeroSet(SolverError):
    pass


# ---- metrics / quadrature ----
class QuadratureDivergence(ZeroLabError):
    pass


class NonPositive(ZeroLabError):
    pass


class UnsupportedSingularWedge(ZeroLabError):
    pass


# ---- bergman ----
class IllConditionedGram(ZeroLabError):
    pass


class EmptySpace(ZeroLabError):
    pass


class BaseLocusPoint(ZeroLabError):
    pass


# ---- measures / currents ----
class NonPositiveDensity(ZeroLabError):
    pass


class MassMismatch(ZeroLabError):
    pass


# ---- configuration ----
class ConfigParseError(ZeroLabError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message, line=line, column=column)
        self.line = line
        self.column = column


class ConfigValidationError(ZeroLabError):
    def __init__(self, violations: List[Dict[str, Any]]):
        msgs = "; ".join(f"{'.'.join(map(str, v.get('loc', ())))}: {v.get('msg')}" for v in violations)
        super().__init__(f"{len(violations)} config violation(s): {msgs}", violations=violations)
        self.violations = violations
