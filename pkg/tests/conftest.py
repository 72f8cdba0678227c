from __future__ import annotations

import numpy as np
import pytest

import app.core.cache as cache_mod
from app.core.config import get_settings
from app.services.projective import build_quadrature


@pytest.fixture(autouse=True)
def _isolated_settings(monkeypatch, tmp_path):
    monkeypatch.setenv("ZEROLAB_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("ZEROLAB_DISK_CACHE", "false")
    monkeypatch.delenv("ZEROLAB_SEED", raising=False)
    get_settings.cache_clear()
    cache_mod._cache = None
    yield
    get_settings.cache_clear()
    cache_mod._cache = None


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid1():
    return build_quadrature(1, 64)


@pytest.fixture(scope="session")
def grid2():
    return build_quadrature(2, 8)
