from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import BaseLocusPoint
from app.services.bergman import (
    bergman_kernel,
    bergman_kernel_at,
    build_basis,
    dimension_bounds_hold,
    fs_current_pair,
    kodaira_map,
    min_vanishing_orders,
    orthonormality_residual,
    rotate_basis,
    section_polynomial,
)
from app.services.forms import TestForm
from app.services.metrics import MetricWeight, SingularTerm
from app.services.polynomials import evaluate, roots_p1
from app.services.projective import ProjectivePoint, build_quadrature
from app.services.utils import random_unitary


def _atom(weight: float) -> MetricWeight:
    return MetricWeight(n=1, singular_terms=(SingularTerm.make([1, 0], weight),))


def test_fs_kernel_is_flat(grid1):
    B = build_basis(5, MetricWeight.fubini_study(1), grid1)
    assert B.dim == 6
    P = bergman_kernel(B, grid1.points)
    np.testing.assert_allclose(P, 6.0, rtol=1e-8)
    assert orthonormality_residual(B, grid1) < 1e-9


def test_fs_kernel_on_p2(grid2):
    B = build_basis(3, MetricWeight.fubini_study(2), grid2)
    assert B.dim == 10
    np.testing.assert_allclose(bergman_kernel(B, grid2.points), 10.0, rtol=1e-8)
    assert dimension_bounds_hold(B, 2.0)


@pytest.mark.parametrize("weight,dim", [(0.25, 9), (0.3, 8)])
def test_dimension_drops_with_vanishing_order(weight, dim):
    h = _atom(weight)
    B = build_basis(10, h, build_quadrature(1, 64, h))
    assert B.dim == dim
    assert [k for _, k in min_vanishing_orders(10, h)] == [11 - dim]


def test_base_locus():
    h = _atom(0.3)
    B = build_basis(10, h, build_quadrature(1, 64, h))
    a = ProjectivePoint.of(0, 1)
    assert len(B.base_locus) == 1
    assert bergman_kernel_at(B, a) == 0.0
    with pytest.raises(BaseLocusPoint):
        kodaira_map(B, a)
    g = section_polynomial(B, np.ones(B.dim))
    assert evaluate(g, a) == pytest.approx(0.0, abs=1e-12)
    Z = roots_p1(g)
    assert sum(m for pt, m in Z.points if pt == a) >= 3


def test_kernel_is_basis_independent(grid1):
    B = build_basis(4, MetricWeight.fubini_study(1), grid1)
    R = rotate_basis(B, random_unitary(B.dim, np.random.default_rng(7)))
    np.testing.assert_allclose(bergman_kernel(R, grid1.points), bergman_kernel(B, grid1.points), rtol=1e-10)


def test_fs_current_of_flat_kernel(grid1):
    # log P is constant, so gamma_p = p omega
    B = build_basis(6, MetricWeight.fubini_study(1), grid1)
    u1 = TestForm("u1", lambda Z: np.abs(Z[:, 1]) ** 2)
    assert fs_current_pair(B, u1, grid1) == pytest.approx(3.0, abs=1e-6)


def test_kodaira_map_norm(grid1):
    B = build_basis(3, MetricWeight.fubini_study(1), grid1)
    x = ProjectivePoint.of(1, 0.3 + 0.2j)
    img = kodaira_map(B, x)
    assert img.n == 3
