# app/core/config.py
from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Literal, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

# ---- Public types (app-wide) ----
Command = Literal["bergman", "sample", "equidist", "moderate", "constants", "approx"]


# ---- Process settings (env-driven) ----
class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="ZEROLAB_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    seed: Optional[int] = None  # overrides [run].seed when set
    cache_dir: Path = Path(".zerolab-cache")
    disk_cache: bool = True
    log_level: str = "INFO"
    n_jobs: int = 1

    # numerics
    fd_step: float = 1e-4
    guard_radius: float = 1e-6
    root_cluster_rtol: float = 1e-8
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    gram_max_condition: float = 1e10
    gram_eig_floor: float = 1e-12
    gram_block_size: int = 4096


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()


# ---- Static metadata ----
SUPPORTED_DIMENSIONS = (1, 2)
MIN_RESOLUTION = 8
CACHE_FORMAT_VERSION = 3
REPORT_SCHEMA_VERSION = "1.2"

# command -> (n, m) combinations it accepts
SUPPORTED: dict[Command, set[tuple[int, int]]] = {
    "bergman":   {(1, 1), (2, 1), (2, 2)},
    "sample":    {(1, 1), (2, 2)},
    "equidist":  {(1, 1), (2, 2)},
    "moderate":  {(1, 1), (2, 1), (2, 2)},
    "constants": {(1, 1), (2, 1), (2, 2)},
    "approx":    {(1, 1)},
}
