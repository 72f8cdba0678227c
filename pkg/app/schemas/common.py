from __future__ import annotations

from typing import List, Literal, Tuple

from pydantic import BaseModel, ConfigDict, Field

Dimension = Literal[1, 2]
ComplexPair = Tuple[float, float]  # (re, im)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")  # unknown keys are violations


class PolynomialDoc(_Strict):
    n: Dimension
    degree: int = Field(..., ge=1)
    coeffs: List[ComplexPair] = Field(..., description="graded-lex order, z_0^p first")


class PointDoc(_Strict):
    coords: List[ComplexPair]
    multiplicity: int = Field(1, ge=1)
