"""One handler per CLI command: `run(ctx) -> CommandResult`."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from app.schemas.config import ExperimentConfig
from app.schemas.reports import ReportRow, Verdict


@dataclass
class CommandContext:
    cfg: ExperimentConfig
    config_hash: str

    @property
    def seed(self) -> int:
        return self.cfg.run.seed

    def rng(self, *key: int) -> np.random.Generator:
        """Command-level stream; spawn keys start with 0 so they never meet the (p, i) sample streams."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(0,) + tuple(key)))


@dataclass
class CommandResult:
    ctx: CommandContext
    rows: List[ReportRow] = field(default_factory=list)
    results: Dict[str, Any] = field(default_factory=dict)
    verdicts: List[Verdict] = field(default_factory=list)

    def add(self, statistic: str, value: float, p: Optional[int] = None, stderr: Optional[float] = None,
            nsamples: Optional[int] = None) -> None:
        self.rows.append(ReportRow(
            command=self.ctx.cfg.run.command, p=p, statistic=statistic, value=float(value),
            stderr=None if stderr is None else float(stderr), nsamples=nsamples,
            seed=self.ctx.seed, config_hash=self.ctx.config_hash,
        ))

    def check(self, name: str, passed: bool, **detail: Any) -> None:
        self.verdicts.append(Verdict(name=name, passed=bool(passed), detail=plain(detail)))

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


def plain(value: Any) -> Any:
    """numpy scalars and arrays inside result dicts become JSON-native values."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def nonincreasing(values: List[float], slack: float = 0.0) -> bool:
    vals = [v for v in values if not math.isnan(v)]
    return all(b <= a + slack for a, b in zip(vals, vals[1:]))


Handler = Callable[[CommandContext], CommandResult]


def get_handler(command: str) -> Handler:
    from app.commands import approx, bergman, constants, equidist, moderate, sample

    return {
        "bergman": bergman.run,
        "sample": sample.run,
        "equidist": equidist.run,
        "moderate": moderate.run,
        "constants": constants.run,
        "approx": approx.run,
    }[command]
