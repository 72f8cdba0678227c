from __future__ import annotations

import hashlib
import json
import math
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import ConfigDict, Field, ValidationError, field_validator

from app.core.config import MIN_RESOLUTION, SUPPORTED, Command
from app.core.errors import ConfigParseError, ConfigValidationError
from app.schemas.common import ComplexPair, Dimension, _Strict
from app.spec.dictionary import DICTIONARY, DICTIONARY_VERSION, PROBE_VERSION, PROBES

Scalar = Union[float, ComplexPair]  # a real number or an [re, im] pair

DEFAULT_RESOLUTION = {1: 64, 2: 8}


def as_complex(v: Scalar) -> complex:
    if isinstance(v, (int, float)):
        return complex(v)
    return complex(v[0], v[1])


# ---- [run] ----
class RunSection(_Strict):
    command: Command
    n: Dimension = 1
    m: int = Field(1, ge=1)
    p_list: List[int] = Field(default_factory=lambda: [5, 10, 20, 40])
    nsamples: int = Field(100, ge=1)
    seed: int = Field(0, ge=0)
    deterministic: bool = False
    resolution: Optional[int] = Field(default=None, ge=MIN_RESOLUTION, description="defaults: 64 on P^1, 8 on P^2")
    dictionary_version: str = DICTIONARY_VERSION
    probe_version: str = PROBE_VERSION
    strict: bool = False

    # lambda_p = coeff * log p  |  p ** coeff
    lambda_rule: Literal["log", "power"] = "log"
    lambda_coeff: float = 4.0
    threshold_C: Optional[float] = Field(default=None, gt=0, description="None: fit at fit_p")
    fit_p: int = Field(10, ge=1)
    fit_quantile: float = Field(0.9, gt=0, lt=1)

    # universal-constant slots, used only as thresholds
    C: float = Field(2.0, gt=1)
    c0: float = Field(0.5, gt=0, le=1)
    alpha0: float = Field(0.5, gt=0)
    epsilon: float = Field(0.5, gt=0)

    # experiment knobs
    t_list: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    alpha_list: List[float] = Field(default_factory=lambda: [1.0, 2.0])
    N_list: List[int] = Field(default_factory=lambda: [5, 10, 20, 30])
    deltas: List[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025])
    near_radius: float = Field(0.1, gt=0, le=1)
    rate_band: float = Field(3.0, gt=1)

    @field_validator("p_list")
    @classmethod
    def _p_list(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("p_list must not be empty")
        if any(p < 1 for p in v):
            raise ValueError("every p must be >= 1")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("p_list must be sorted ascending without repeats")
        return v


# ---- [metric.k] ----
class SingularSection(_Strict):
    form: List[Scalar]
    weight: float = Field(..., gt=0, lt=1, alias="lambda")

    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class HoelderSection(_Strict):
    c: float = Field(1.0, gt=0)
    nu: float = Field(1.0, gt=0, le=1)
    delta: float = Field(1.0, ge=0)


class MetricSection(_Strict):
    smooth: Literal["zero", "quadratic"] = "zero"
    matrix: Optional[List[List[Scalar]]] = None
    singular: List[SingularSection] = Field(default_factory=list)
    positivity_margin: float = Field(1e-3, gt=0)
    hoelder: HoelderSection = Field(default_factory=HoelderSection)


# ---- [measure] ----
class MeasureSection(_Strict):
    mode: Literal["fs", "perturbed"] = "fs"
    c_p: Optional[float] = Field(default=None, gt=0, le=1, description="None: 0.1 / d")
    rho: float = Field(0.5, gt=0, lt=1)
    bump_coords: List[int] = Field(default_factory=lambda: [0], min_length=1, max_length=3)


# ---- [output] ----
class OutputSection(_Strict):
    dir: str = "out"
    csv: str = "results.csv"
    json_name: str = Field("summary.json", alias="json")

    model_config = ConfigDict(extra="forbid", populate_by_name=True)


# ---- [target] ----
class AtomSection(_Strict):
    point: List[Scalar]
    weight: float = Field(..., gt=0)


class ComponentSection(_Strict):
    kind: Literal["fs", "atoms", "circle", "smooth"]
    weight: float = Field(..., gt=0)
    atoms: List[AtomSection] = Field(default_factory=list)
    radius: float = Field(1.0, gt=0)
    a: float = Field(0.0, gt=-1, lt=1)


class TargetSection(_Strict):
    kind: Literal["fs", "atoms", "circle", "smooth", "mixture"] = "circle"
    atoms: List[AtomSection] = Field(default_factory=list)
    radius: float = Field(1.0, gt=0)
    a: float = Field(0.0, gt=-1, lt=1)
    components: List[ComponentSection] = Field(default_factory=list)
    strategy: Literal["iid", "stratified"] = "stratified"
    trials: int = Field(50, ge=1)


class ExperimentConfig(_Strict):
    run: RunSection
    metric: Dict[str, MetricSection] = Field(default_factory=dict)
    measure: MeasureSection = Field(default_factory=MeasureSection)
    output: OutputSection = Field(default_factory=OutputSection)
    target: Optional[TargetSection] = None

    @property
    def resolution(self) -> int:
        return self.run.resolution or DEFAULT_RESOLUTION[self.run.n]

    def metric_for(self, k: int) -> MetricSection:
        return self.metric.get(str(k), MetricSection())


# ------------ cross-field checks ------------
def _violation(loc: Tuple[Any, ...], msg: str) -> Dict[str, Any]:
    return {"loc": loc, "msg": msg, "type": "value_error"}


def cross_checks(cfg: ExperimentConfig) -> List[Dict[str, Any]]:
    from app.deps import build_metric  # deferred: deps imports services
    from app.services.metrics import in_general_position

    out: List[Dict[str, Any]] = []
    r = cfg.run
    if r.m > r.n:
        out.append(_violation(("run", "m"), f"m <= n is required (m={r.m}, n={r.n})"))
    elif (r.n, r.m) not in SUPPORTED[r.command]:
        out.append(_violation(("run",), f"command {r.command!r} does not support (n, m) = ({r.n}, {r.m})"))
    if r.dictionary_version not in DICTIONARY:
        out.append(_violation(("run", "dictionary_version"), f"unknown dictionary version {r.dictionary_version!r}"))
    if r.probe_version not in PROBES:
        out.append(_violation(("run", "probe_version"), f"unknown probe version {r.probe_version!r}"))
    if r.lambda_rule == "power" and not 0 < r.lambda_coeff < r.n:
        out.append(_violation(("run", "lambda_coeff"), "power rule needs 0 < b < n"))

    for key, sec in cfg.metric.items():
        if not key.isdigit() or not 1 <= int(key) <= r.m:
            out.append(_violation(("metric", key), f"metric slot must be one of 1..{r.m}"))
            continue
        for i, s in enumerate(sec.singular):
            if len(s.form) != r.n + 1:
                out.append(_violation(("metric", key, "singular", i, "form"), f"linear form needs {r.n + 1} coefficients"))
            elif not any(as_complex(v) != 0 for v in s.form):
                out.append(_violation(("metric", key, "singular", i, "form"), "linear form is zero"))
        if sum(s.weight for s in sec.singular) >= 1:
            out.append(_violation(("metric", key, "singular"), "sum of lambda must stay below 1"))
        if sec.smooth == "quadratic":
            mat = sec.matrix or []
            if len(mat) != r.n + 1 or any(len(row) != r.n + 1 for row in mat):
                out.append(_violation(("metric", key, "matrix"), f"quadratic form needs an {r.n + 1}x{r.n + 1} matrix"))
        elif sec.matrix is not None:
            out.append(_violation(("metric", key, "matrix"), "matrix given but smooth = 'zero'"))

    if r.m == 2 and r.command in ("equidist", "sample") and any(cfg.metric_for(k).singular for k in (1, 2)):
        out.append(_violation(("metric",), "m = 2 wedge targets need smooth weights"))
    if r.command == "approx" and cfg.target is None:
        out.append(_violation(("target",), "approx needs a [target] section"))
    if cfg.target is not None and cfg.target.kind == "mixture" and not cfg.target.components:
        out.append(_violation(("target", "components"), "mixture needs components"))
    if cfg.target is not None and cfg.target.kind == "atoms" and not cfg.target.atoms:
        out.append(_violation(("target", "atoms"), "atomic target needs atoms"))

    if not out:
        metrics = [build_metric(cfg.metric_for(k), r.n) for k in range(1, r.m + 1)]
        for msg in in_general_position(metrics):
            out.append(_violation(("metric",), f"general position violated: {msg}"))
    return out


# ------------ parse / dump ------------
_POS = re.compile(r"line (\d+), column (\d+)")


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        m = _POS.search(str(e))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ConfigParseError(f"config is not valid TOML: {e}", line=line, column=col) from e
    try:
        cfg = ExperimentConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigValidationError(
            [{"loc": tuple(err["loc"]), "msg": err["msg"], "type": err["type"]} for err in e.errors()]
        ) from e
    problems = cross_checks(cfg)
    if problems:
        raise ConfigValidationError(problems)
    return cfg


def _toml_scalar(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        s = repr(v)
        return s if any(ch in s for ch in ".en") else s + ".0"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to TOML")


def _is_table_list(v: Any) -> bool:
    return isinstance(v, list) and bool(v) and all(isinstance(x, dict) for x in v)


def _emit(path: List[str], table: Dict[str, Any], lines: List[str], header: Optional[str]) -> None:
    if header is not None:
        lines.append(header)
    for k, v in table.items():
        if not isinstance(v, dict) and not _is_table_list(v):
            lines.append(f"{k} = {_toml_scalar(v)}")
    for k, v in table.items():
        if isinstance(v, dict):
            sub = path + [k]
            lines.append("")
            _emit(sub, v, lines, f"[{'.'.join(sub)}]")
        elif _is_table_list(v):
            sub = path + [k]
            for item in v:
                lines.append("")
                _emit(sub, item, lines, f"[[{'.'.join(sub)}]]")


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical TOML text; parse_config(dump_config(cfg)) == cfg."""
    doc = cfg.model_dump(mode="json", by_alias=True, exclude_none=True)
    lines: List[str] = []
    for section in ("run", "metric", "measure", "output", "target"):
        if section not in doc:
            continue
        if section == "metric":
            for key in sorted(doc["metric"], key=lambda s: (len(s), s)):
                lines.append("")
                _emit(["metric", key], doc["metric"][key], lines, f"[metric.{key}]")
            continue
        lines.append("")
        _emit([section], doc[section], lines, f"[{section}]")
    return "\n".join(lines).lstrip("\n") + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()
