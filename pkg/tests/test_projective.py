from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import DimensionMismatch, InvalidDimension, QuadratureDivergence, ResolutionTooSmall
from app.services.metrics import MetricWeight, SingularTerm
from app.services.projective import ProjectivePoint, build_quadrature, chordal_distances, fs_distance
from app.services.utils import random_unitary


def test_point_is_normalized_and_equal_up_to_phase():
    a = ProjectivePoint.of(3, 4j)
    assert np.linalg.norm(a.coords) == pytest.approx(1.0)
    assert a == ProjectivePoint.of(3j, -4)
    assert a != ProjectivePoint.of(4, 3)


def test_zero_vector_is_rejected():
    with pytest.raises(ValueError):
        ProjectivePoint.of(0, 0)


def test_points_are_unhashable():
    with pytest.raises(TypeError):
        hash(ProjectivePoint.of(1, 0))


def test_fs_distance():
    e0, e1 = ProjectivePoint.of(1, 0), ProjectivePoint.of(0, 1)
    assert fs_distance(e0, e1) == pytest.approx(1.0)
    assert fs_distance(e0, e0) == pytest.approx(0.0, abs=1e-12)
    assert fs_distance(e0, ProjectivePoint.of(1, 1)) == pytest.approx(2 ** -0.5)
    with pytest.raises(DimensionMismatch):
        fs_distance(e0, ProjectivePoint.of(1, 0, 0))


def test_chordal_distances_match_pointwise():
    rng = np.random.default_rng(3)
    Z = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    a = ProjectivePoint.of(1, 2j)
    want = [fs_distance(ProjectivePoint(z), a) for z in Z]
    np.testing.assert_allclose(chordal_distances(Z, a.coords), want, atol=1e-12)


def test_p1_grid_moments(grid1):
    u1 = np.abs(grid1.points[:, 1]) ** 2
    assert grid1.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert grid1.integrate(u1) == pytest.approx(0.5, abs=1e-12)
    assert grid1.integrate(u1**2) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_p2_grid_moments(grid2):
    u = np.abs(grid2.points) ** 2
    assert grid2.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert grid2.integrate(u[:, 0]) == pytest.approx(1.0 / 3.0, abs=1e-10)
    assert grid2.integrate(u[:, 0] ** 2) == pytest.approx(1.0 / 6.0, abs=1e-10)
    assert grid2.integrate(u[:, 1] * u[:, 2]) == pytest.approx(1.0 / 12.0, abs=1e-10)


def test_p2_grid_covers_the_plane_once(grid2, rng):
    # |<z, a>|^2 ~ Beta(1, 2) for any unit a: mean 1/3, second moment 1/6
    for _ in range(3):
        a = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        a /= np.linalg.norm(a)
        s = np.abs(grid2.points @ np.conj(a)) ** 2
        assert grid2.integrate(s) == pytest.approx(1.0 / 3.0, abs=1e-10)
        assert grid2.integrate(s**2) == pytest.approx(1.0 / 6.0, abs=1e-10)


def test_rotated_grid_integrates_invariant_functions_alike(grid1):
    U = random_unitary(2, np.random.default_rng(1))
    rot = grid1.rotated(U)
    f = lambda Z: np.abs(Z[:, 0]) ** 4
    assert rot.integrate(f(rot.points)) == pytest.approx(grid1.integrate(f(grid1.points)), abs=1e-10)
    assert rot.key != grid1.key


def test_invalid_grids():
    with pytest.raises(InvalidDimension):
        build_quadrature(3, 16)
    with pytest.raises(ResolutionTooSmall):
        build_quadrature(1, 4)


def test_adapted_grid_keeps_off_the_singular_point(monkeypatch):
    h = MetricWeight(n=1, singular_terms=(SingularTerm.make([1, 1j], 0.3),))
    g = build_quadrature(1, 32, h)
    assert g.key != build_quadrature(1, 32).key
    assert h.distance_to_locus(g.points).min() > 1e-6

    from app.core.config import get_settings

    get_settings.cache_clear()
    monkeypatch.setenv("ZEROLAB_GUARD_RADIUS", "0.5")
    with pytest.raises(QuadratureDivergence):
        build_quadrature(1, 32, h)
