from __future__ import annotations

from typing import TYPE_CHECKING, List, Optional

import numpy as np

from .core.cache import cache_key, get_cache
from .services.bergman import BergmanBasis, build_basis, decode_basis, encode_basis
from .services.current_approx import TargetCurrent
from .services.measures import MeasureSpec
from .services.metrics import HoelderConstants, MetricWeight, QuadraticForm, SingularTerm
from .services.projective import ProjectivePoint, QuadratureGrid, build_quadrature, decode_grid, encode_grid

if TYPE_CHECKING:
    from .schemas.config import ExperimentConfig, MeasureSection, MetricSection, TargetSection


def build_metric(section: "MetricSection", n: int) -> MetricWeight:
    from .schemas.config import as_complex

    smooth = None
    if section.smooth == "quadratic" and section.matrix is not None:
        smooth = QuadraticForm(np.array([[as_complex(v) for v in row] for row in section.matrix]))
    terms = tuple(SingularTerm.make([as_complex(v) for v in s.form], s.weight) for s in section.singular)
    hc = section.hoelder
    return MetricWeight(
        n=n, smooth_part=smooth, singular_terms=terms, positivity_margin=section.positivity_margin,
        hoelder=HoelderConstants(c=hc.c, nu=hc.nu, delta=hc.delta),
    )


def build_metrics(cfg: "ExperimentConfig") -> List[MetricWeight]:
    return [build_metric(cfg.metric_for(k), cfg.run.n) for k in range(1, cfg.run.m + 1)]


def build_measure(section: "MeasureSection") -> MeasureSpec:
    return MeasureSpec(mode=section.mode, c_p=section.c_p, rho=section.rho, bump_coords=tuple(section.bump_coords))


def get_grid(n: int, resolution: int, metric: Optional[MetricWeight] = None) -> QuadratureGrid:
    adapt = metric.key if metric is not None and metric.singular_terms else "none"
    key = cache_key("grid", {"n": n, "resolution": resolution, "adapt": adapt})
    return get_cache().fetch(key, lambda: build_quadrature(n, resolution, metric), encode_grid, decode_grid)


def get_basis(p: int, metric: MetricWeight, grid: QuadratureGrid) -> BergmanBasis:
    key = cache_key("basis", {"p": p, "metric": metric.key, "grid": grid.key})
    return get_cache().fetch(
        key, lambda: build_basis(p, metric, grid), encode_basis, lambda arrays: decode_basis(arrays, metric),
    )


def get_bases(p: int, metrics: List[MetricWeight], resolution: int) -> List[BergmanBasis]:
    """One basis per slot, each on a grid adapted to its own weight."""
    return [get_basis(p, h, get_grid(h.n, resolution, h)) for h in metrics]


def build_target(section: "TargetSection") -> TargetCurrent:
    from .schemas.config import as_complex

    def atoms(items) -> list:
        return [(ProjectivePoint(np.array([as_complex(v) for v in a.point])), a.weight) for a in items]

    if section.kind == "mixture":
        comps = [(TargetCurrent(c.kind, atoms=atoms(c.atoms), radius=c.radius, a=c.a), c.weight)
                 for c in section.components]
        return TargetCurrent("mixture", components=comps)
    return TargetCurrent(section.kind, atoms=atoms(section.atoms), radius=section.radius, a=section.a)
