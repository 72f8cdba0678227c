from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import NonPositive
from app.services.equidistribution import build_dictionary
from app.services.forms import TestForm, constant_form
from app.services.metrics import (
    HoelderConstants,
    MetricWeight,
    QuadraticForm,
    SingularTerm,
    check_hoelder,
    check_positivity,
    curvature_pair,
    curvature_pair_closed_form,
    ddc_pair,
    in_general_position,
    weight_at,
)
from app.services.projective import ProjectivePoint, build_quadrature

U1 = TestForm("u1", lambda Z: np.abs(Z[:, 1]) ** 2)


def test_fs_curvature_pairs(grid1):
    h = MetricWeight.fubini_study(1)
    assert curvature_pair(h, constant_form(1.0), grid1) == pytest.approx(1.0, abs=1e-12)
    assert curvature_pair(h, U1, grid1) == pytest.approx(0.5, abs=1e-8)


def test_atom_weight_shifts_mass_to_its_zero():
    # log|z_0| vanishes at [0:1], where u1 = 1: 0.7 * 1/2 + 0.3 * 1
    h = MetricWeight(n=1, singular_terms=(SingularTerm.make([1, 0], 0.3),))
    grid = build_quadrature(1, 64, h)
    assert curvature_pair_closed_form(h, U1, grid) == pytest.approx(0.65, abs=1e-8)
    assert curvature_pair(h, U1, grid) == pytest.approx(0.65, abs=1e-3)


def test_weight_at_locus_is_minus_infinity():
    h = MetricWeight(n=1, singular_terms=(SingularTerm.make([1, 0], 0.3),))
    assert weight_at(h, ProjectivePoint.of(0, 1)) == -np.inf
    assert weight_at(h, ProjectivePoint.of(1, 0)) == pytest.approx(0.0)


def test_quadratic_smooth_part_matches_integration_by_parts(grid1):
    Q = QuadraticForm(np.diag([0.2, 0.0]))
    h = MetricWeight(n=1, smooth_part=Q)
    s = TestForm("s", Q)
    for u in build_dictionary(1):
        direct = grid1.integrate(u.values(grid1)) + ddc_pair(u, s, grid1)
        assert curvature_pair(h, u, grid1) == pytest.approx(direct, abs=1e-6)


def test_positivity(grid1):
    rep = check_positivity(MetricWeight.fubini_study(1), grid1)
    assert rep.passed and rep.margin == pytest.approx(1.0, abs=1e-9)
    # dd^c u_0 = -2 (2 u_0 - 1) omega, so 1 - 2 dd^c u_0 density is -3 at u_0 = 0
    bad = MetricWeight(n=1, smooth_part=QuadraticForm(np.diag([-2.0, 0.0])))
    with pytest.raises(NonPositive):
        check_positivity(bad, grid1)


def test_hoelder_check():
    assert check_hoelder(MetricWeight.fubini_study(2), samples=600).passed
    h = MetricWeight(n=1, singular_terms=(SingularTerm.make([1, 1], 0.4),))
    assert check_hoelder(h, samples=3000).passed


def test_invalid_weights():
    with pytest.raises(ValueError):
        MetricWeight(n=1, singular_terms=(SingularTerm.make([1, 0], 1.2),))
    with pytest.raises(ValueError):
        check_hoelder(MetricWeight.fubini_study(1), samples=10)


def test_general_position():
    a = MetricWeight(n=2, singular_terms=(SingularTerm.make([1, 0, 0], 0.2),))
    b = MetricWeight(n=2, singular_terms=(SingularTerm.make([2j, 0, 0], 0.3),))
    c = MetricWeight(n=2, singular_terms=(SingularTerm.make([0, 1, 0], 0.3),))
    assert len(in_general_position([a, b])) == 1
    assert in_general_position([a, c]) == []


def test_hoelder_without_singular_allowance_fails_near_the_pole():
    h = MetricWeight(n=1, singular_terms=(SingularTerm.make([1, 1], 0.4),),
                     hoelder=HoelderConstants(c=0.8, nu=1.0, delta=0.0))
    rep = check_hoelder(h, samples=3000)
    assert not rep.passed and rep.worst_ratio > 1.0
    a, b = rep.worst_pair
    near = h.distance_to_locus(np.stack([a.coords, b.coords]))
    assert near.min() < 0.1
