from __future__ import annotations

import math

import numpy as np
import pytest

from app.core.errors import IncompleteZeroSet, SolverError, UnsupportedSingularWedge
from app.services.bergman import build_basis
from app.services.equidistribution import (
    build_dictionary,
    curvature_target,
    dinh_sibony_constants,
    discrepancy,
    discrepancy_context,
    expected_pairs,
    fit_threshold,
    fs_current_gap,
    lambda_p,
    log_c0,
    rate_ratios,
    run_level,
    weighted_quantiles,
    zero_current_pair,
    zero_set,
)
from app.services.forms import TestForm, constant_form
from app.services.measures import MeasureSpec, fs_capacity_bound, sample_sigma_p
from app.services.metrics import MetricWeight, SingularTerm
from app.services.polynomials import ZeroSet
from app.services.projective import ProjectivePoint, build_quadrature

U0 = TestForm("u0", lambda Z: np.abs(Z[:, 0]) ** 2)
FS1 = MetricWeight.fubini_study(1)
FS2 = MetricWeight.fubini_study(2)


def test_dictionary_versions():
    names = [u.name for u in build_dictionary(1)]
    assert names[:3] == ["one", "u0", "u1"]
    assert len(build_dictionary(2)) == 10


def test_c2_norm_dominates_sup_norm(grid1):
    for u in build_dictionary(1):
        assert u.c2_norm(grid1) >= np.abs(u.values(grid1)).max() - 1e-12


def test_zero_current_pair():
    Z = ZeroSet(points=[(ProjectivePoint.of(1, 0), 1), (ProjectivePoint.of(0, 1), 1)], expected_total=2)
    assert zero_current_pair(Z, U0, p=2, m=1) == pytest.approx(0.5)
    short = ZeroSet(points=[(ProjectivePoint.of(1, 0), 1)], expected_total=2)
    assert zero_current_pair(short, U0, p=2, m=1) == pytest.approx(0.5)
    with pytest.raises(IncompleteZeroSet):
        zero_current_pair(short, U0, p=2, m=1, strict=True)


def test_wedge_target_on_p2(grid2):
    assert curvature_target([FS2, FS2], constant_form(1.0), grid2) == pytest.approx(1.0, abs=1e-6)
    assert curvature_target([FS2, FS2], U0, grid2) == pytest.approx(1.0 / 3.0, abs=1e-6)


def test_singular_wedge_is_unsupported(grid2):
    h = MetricWeight(n=2, singular_terms=(SingularTerm.make([1, 0, 0], 0.2),))
    with pytest.raises(UnsupportedSingularWedge):
        curvature_target([h, FS2], U0, grid2)


def test_discrepancy_of_mass_alone_is_zero(grid1, rng):
    B = build_basis(4, FS1, grid1)
    sample = sample_sigma_p([B], MeasureSpec(), rng)
    d = discrepancy(sample, [B], [FS1], [constant_form(1.0)], grid1)
    assert d == pytest.approx(0.0, abs=1e-10)


def test_fs_current_gap_is_tiny(grid1):
    B = build_basis(8, FS1, grid1)
    assert fs_current_gap(B, build_dictionary(1), grid1) < 1e-5


def test_c0_for_two_lines():
    assert math.exp(log_c0([1, 1])) == pytest.approx(2 ** -0.5, abs=1e-12)
    assert log_c0([7]) == pytest.approx(0.0, abs=1e-12)


def test_constants_on_p1(grid1):
    p = 5
    B = build_basis(p, FS1, grid1)
    rep = dinh_sibony_constants(p, [B], [FS1], 0.5, grid1)
    assert rep.c_0p == pytest.approx(1.0)
    assert rep.d_p == p and rep.delta_p == pytest.approx(1.0)
    assert rep.r_bound == pytest.approx(1.0)
    assert rep.R_hat == pytest.approx(fs_capacity_bound(p))
    assert rep.eta == pytest.approx(0.5 * p - 3.0 * fs_capacity_bound(p))
    assert rep.c0_residual() < 1e-9
    assert rep.delta_ratio_holds(2.0)


def test_constants_on_p2_wedge(grid2):
    p = 2
    bases = [build_basis(p, FS2, grid2)] * 2
    rep = dinh_sibony_constants(p, bases, [FS2, FS2], 0.5, grid2)
    assert rep.d_kp == [5, 5]
    assert rep.c_0p == pytest.approx(math.exp(-math.log(252.0) / 10.0))
    assert rep.d_p == 4.0
    assert rep.c0_residual() < 1e-9
    assert rep.delta_p * p / rep.d_p <= 2.0


def test_monte_carlo_capacity_in_constants(grid1):
    p = 3
    B = build_basis(p, FS1, grid1)
    rep = dinh_sibony_constants(p, [B], [FS1], 0.5, grid1, nsamples=2000, rng=np.random.default_rng(0))
    assert rep.R_source == "monte_carlo"
    assert 0.0 < rep.R_hat <= fs_capacity_bound(p) + 0.1


def test_lambda_rules():
    assert lambda_p("log", 4.0, 10) == pytest.approx(4.0 * math.log(10))
    assert lambda_p("power", 0.5, 16) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        lambda_p("cubic", 1.0, 2)


def test_weighted_quantiles():
    x = np.arange(10, dtype=float)
    q = weighted_quantiles(x, np.ones(10), [0.1, 0.5, 0.9])
    assert list(q) == sorted(q)
    assert q[1] == 4.0
    assert np.isnan(weighted_quantiles(np.zeros(0), np.zeros(0), [0.5])).all()


def test_run_level_is_reproducible(grid1):
    B = build_basis(4, FS1, grid1)
    ctx = discrepancy_context([FS1], build_dictionary(1), grid1)
    a = run_level(4, [B], ctx, MeasureSpec(), 8, seed=11, lam=1.0, threshold=0.5)
    b = run_level(4, [B], ctx, MeasureSpec(), 8, seed=11, lam=1.0, threshold=0.5)
    np.testing.assert_array_equal(a.discrepancies, b.discrepancies)
    assert a.nsamples == 8 and a.n_failed + a.discrepancies.size == 8
    assert a.pairs.shape == (a.discrepancies.size, len(ctx.dictionary))
    assert 0.0 <= a.exceptional_fraction <= 1.0
    assert fit_threshold(a, 0.9) == pytest.approx(weighted_quantiles(a.discrepancies, a.weights, [0.9])[0] * 4)
    assert rate_ratios([a])[0] == pytest.approx(a.median / (math.log(4) / 4))


def test_atom_proximity_is_tracked():
    h = MetricWeight(n=1, singular_terms=(SingularTerm.make([1, 0], 0.3),))
    grid = build_quadrature(1, 64, h)
    B = build_basis(10, h, grid)
    ctx = discrepancy_context([h], build_dictionary(1), grid)
    atoms = np.array([[0, 1]], dtype=np.complex128)
    rec = run_level(10, [B], ctx, MeasureSpec(), 5, seed=2, atoms=atoms, radius=0.1)
    # three forced zeros at the base point out of ten
    assert rec.mean_near_fraction() >= 0.3 - 1e-12


@pytest.mark.slow
def test_mean_zero_current_matches_expectation(grid1):
    p = 10
    B = build_basis(p, FS1, grid1)
    dictionary = build_dictionary(1)
    ctx = discrepancy_context([FS1], dictionary, grid1)
    rec = run_level(p, [B], ctx, MeasureSpec(), 2000, seed=5)
    mu, se = rec.pair_means()
    exp = expected_pairs(B, dictionary, grid1)
    assert np.all(np.abs(mu - exp) <= 4.0 * se + 1e-8)


@pytest.mark.slow
def test_discrepancy_decays_at_log_rate(grid1):
    dictionary = build_dictionary(1)
    ctx = discrepancy_context([FS1], dictionary, grid1)
    recs = [run_level(p, [build_basis(p, FS1, grid1)], ctx, MeasureSpec(), 200, seed=3) for p in (5, 10, 20, 40)]
    ratios = rate_ratios(recs)
    assert ratios.max() / ratios.min() <= 3.0


@pytest.mark.slow
def test_atom_carries_its_lelong_mass():
    p = 40
    h = MetricWeight(n=1, singular_terms=(SingularTerm.make([1, 0], 0.3),))
    grid = build_quadrature(1, 64, h)
    B = build_basis(p, h, grid)
    ctx = discrepancy_context([h], build_dictionary(1), grid)
    atoms = np.array([[0, 1]], dtype=np.complex128)
    rec = run_level(p, [B], ctx, MeasureSpec(), 500, seed=4, atoms=atoms, radius=0.1)
    assert rec.n_failed <= 5
    # lambda = 0.3 at the point plus about 0.007 of smooth mass in the ball
    assert rec.mean_near_fraction() == pytest.approx(0.3, abs=0.05)


@pytest.mark.slow
def test_two_sections_on_p2_meet_in_sixteen_points(grid2):
    p = 4
    B = build_basis(p, FS2, grid2)
    failures = 0
    for i in range(1000):
        rng = np.random.default_rng(np.random.SeedSequence(9, spawn_key=(p, i)))
        sample = sample_sigma_p([B, B], MeasureSpec(), rng)
        try:
            Z = zero_set(sample, [B, B], rng)
        except SolverError:
            failures += 1
            continue
        assert Z.complete and Z.total == 16
    assert failures <= 1
