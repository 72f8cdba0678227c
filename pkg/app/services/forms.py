# app/services/forms.py
"""Smooth test functions with per-grid cached dd^c and C^2 data."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from app.core.config import get_settings
from app.services.projective import ProjectivePoint, QuadratureGrid
from app.services.utils import PointFunction, adapted_frames, ddc_trace, normalize_rows, real_hessian


@dataclass(eq=False)
class TestForm:
    __test__ = False  # not a pytest class

    name: str
    func: PointFunction
    _ddc: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _c2: Dict[str, float] = field(default_factory=dict, repr=False)

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.complex128)
        return np.broadcast_to(np.asarray(self.func(normalize_rows(Z)), dtype=float), (Z.shape[0],))

    def at(self, x: ProjectivePoint) -> float:
        return float(self(x.coords[None, :])[0])

    def values(self, grid: QuadratureGrid) -> np.ndarray:
        return self(grid.points)

    def ddc(self, grid: QuadratureGrid) -> np.ndarray:
        """Density of dd^c u ^ omega^(n-1) against omega^n at the grid points."""
        hit = self._ddc.get(grid.key)
        if hit is None:
            hit = ddc_trace(self, grid.points, get_settings().fd_step)
            self._ddc[grid.key] = hit
        return hit

    def c2_norm(self, grid: QuadratureGrid) -> float:
        """max over the grid of |u|, |grad u| and |Hess u| in adapted chart coordinates."""
        hit = self._c2.get(grid.key)
        if hit is not None:
            return hit
        step = get_settings().fd_step
        Z = grid.points
        vals = np.abs(self(Z))
        hess = np.abs(np.linalg.eigvalsh(real_hessian(self, Z, step, diagonal_only=False))).max(axis=1)
        grad = _chart_gradient(self, Z, step)
        hit = float(max(vals.max(), grad.max(), hess.max()))
        self._c2[grid.key] = hit
        return hit


def _chart_gradient(func: PointFunction, Z: np.ndarray, step: float) -> np.ndarray:
    T = adapted_frames(Z)[:, :, 1:]
    dirs = np.concatenate([T, 1j * T], axis=2) * step
    sq = np.zeros(Z.shape[0])
    for a in range(dirs.shape[2]):
        d = dirs[:, :, a]
        g = (func(normalize_rows(Z + d)) - func(normalize_rows(Z - d))) / (2.0 * step)
        sq += g**2
    return np.sqrt(sq)


def constant_form(value: float = 1.0, name: Optional[str] = None) -> TestForm:
    return TestForm(name or f"const_{value:g}", lambda Z: np.full(Z.shape[0], value))
