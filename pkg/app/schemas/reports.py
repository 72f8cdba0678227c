from __future__ import annotations

import math
from typing import Any, Dict, List, Optional

from pydantic import Field, field_serializer

from app.core.config import REPORT_SCHEMA_VERSION, Command
from app.schemas.common import _Strict

CSV_FIELDS = ["command", "p", "statistic", "value", "stderr", "nsamples", "seed", "config_hash"]


class ReportRow(_Strict):
    command: Command
    p: Optional[int] = None
    statistic: str
    value: float
    stderr: Optional[float] = None
    nsamples: Optional[int] = None
    seed: int
    config_hash: str

    def to_csv(self) -> Dict[str, str]:
        def fmt(v: Any) -> str:
            if v is None:
                return ""
            if isinstance(v, float):
                return "nan" if math.isnan(v) else repr(v)
            return str(v)

        return {k: fmt(getattr(self, k)) for k in CSV_FIELDS}


class Verdict(_Strict):
    name: str
    passed: bool
    detail: Dict[str, Any] = Field(default_factory=dict)


class Summary(_Strict):
    schema_version: str = REPORT_SCHEMA_VERSION
    command: Command
    seed: int
    config_hash: str
    content_hash: str
    config: Dict[str, Any]
    results: Dict[str, Any] = Field(default_factory=dict)
    acceptance: List[Verdict] = Field(default_factory=list)
    passed: bool = True
    wall_time: Optional[float] = None

    @field_serializer("results")
    def _finite(self, v: Dict[str, Any]) -> Dict[str, Any]:
        return _json_safe(v)


def _json_safe(v: Any) -> Any:
    if isinstance(v, float):
        return v if math.isfinite(v) else str(v)
    if isinstance(v, dict):
        return {str(k): _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v
