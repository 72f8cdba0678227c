from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional

import numpy as np

from .config import CACHE_FORMAT_VERSION, get_settings

logger = logging.getLogger(__name__)

Arrays = Dict[str, np.ndarray]


def cache_key(kind: str, params: Mapping[str, Any]) -> str:
    """Stable key: kind plus a short digest of the sorted params."""
    blob = json.dumps(params, sort_keys=True, separators=(",", ":"), default=str)
    return f"{kind}-{hashlib.sha256(blob.encode()).hexdigest()[:16]}"


class ArtifactCache:
    """Process-local memo in front of a versioned .npz store. Safe for single-writer use."""

    def __init__(self, root: Optional[Path] = None, max_items: int = 64, disk: bool = True):
        self._root = Path(root) if root is not None else None
        self._max = max_items
        self._disk = disk and self._root is not None
        self._store: Dict[str, Any] = {}
        self._order: list[str] = []

    # ------------ memory ------------
    def get(self, key: str) -> Optional[Any]:
        return self._store.get(key)

    def set(self, key: str, value: Any) -> None:
        if key not in self._store and len(self._store) >= self._max:
            # drop oldest one
            oldest = self._order.pop(0)
            self._store.pop(oldest, None)
        if key not in self._store:
            self._order.append(key)
        self._store[key] = value

    def clear(self) -> None:
        self._store.clear()
        self._order.clear()

    # ------------ disk ------------
    def _path(self, key: str) -> Path:
        assert self._root is not None
        return self._root / f"{key}.npz"

    def load_arrays(self, key: str) -> Optional[Arrays]:
        if not self._disk:
            return None
        path = self._path(key)
        if not path.exists():
            return None
        try:
            with np.load(path, allow_pickle=False) as data:
                if int(data["format_version"]) != CACHE_FORMAT_VERSION:
                    logger.debug("cache version mismatch for %s", key)
                    return None
                return {k: data[k] for k in data.files if k != "format_version"}
        except (OSError, ValueError, KeyError) as e:
            logger.warning("unreadable cache file %s: %s", path, e)
            return None

    def save_arrays(self, key: str, arrays: Arrays) -> None:
        if not self._disk:
            return
        assert self._root is not None
        self._root.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self._root, suffix=".npz.tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                np.savez(fh, format_version=np.int64(CACHE_FORMAT_VERSION), **arrays)
            os.replace(tmp, self._path(key))
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    # ------------ combined ------------
    def fetch(self, key: str, build: Callable[[], Any],
              encode: Optional[Callable[[Any], Arrays]] = None,
              decode: Optional[Callable[[Arrays], Any]] = None) -> Any:
        """Memory, then disk (when codecs are given), then build and store in both."""
        hit = self.get(key)
        if hit is not None:
            return hit
        if decode is not None:
            arrays = self.load_arrays(key)
            if arrays is not None:
                logger.debug("disk cache hit %s", key)
                value = decode(arrays)
                self.set(key, value)
                return value
        value = build()
        self.set(key, value)
        if encode is not None:
            self.save_arrays(key, encode(value))
        return value


_cache: Optional[ArtifactCache] = None


def get_cache() -> ArtifactCache:
    global _cache
    if _cache is None:
        s = get_settings()
        _cache = ArtifactCache(root=s.cache_dir, disk=s.disk_cache)
    return _cache
