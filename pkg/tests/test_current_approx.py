from __future__ import annotations

import numpy as np
import pytest

from app.core.errors import MassMismatch
from app.services.current_approx import (
    ConcentratedSampler,
    TargetCurrent,
    _largest_remainder,
    borel_cantelli_count,
    concentrated_sampler,
    exceptional_frequency,
    kac_roots,
    potential_consistency,
    potential_from_current,
    potential_values,
    root_continuity,
    roots_from_measure,
    sample_roots,
    section_from_vector,
    section_vector,
    support_distance,
    support_halving,
    target_pairing,
)
from app.services.equidistribution import build_dictionary
from app.services.polynomials import from_roots, roots_p1
from app.services.projective import ProjectivePoint, chordal_distances

CONSISTENCY = ("u0", "u1", "re01", "im01", "bump_n")


@pytest.fixture(scope="module")
def dictionary():
    return build_dictionary(1)


def _forms(dictionary):
    return [u for u in dictionary if u.name in CONSISTENCY]


def test_fs_potential_vanishes(grid1):
    np.testing.assert_allclose(potential_from_current(TargetCurrent.fs(), grid1), 0.0, atol=1e-12)


def test_mass_must_be_one(grid1):
    T = TargetCurrent("atoms", atoms=[(ProjectivePoint.of(1, 0), 0.5)])
    with pytest.raises(MassMismatch):
        potential_from_current(T, grid1)


@pytest.mark.parametrize("target", [
    TargetCurrent.dirac(ProjectivePoint.of(1, 0)),
    TargetCurrent("circle", radius=1.0),
    TargetCurrent("circle", radius=0.5),
    TargetCurrent("smooth", a=0.4),
    TargetCurrent("mixture", components=[(TargetCurrent.fs(), 0.5), (TargetCurrent("smooth", a=-0.5), 0.5)]),
])
def test_potential_solves_ddc_equation(target, grid1, dictionary):
    assert potential_consistency(target, grid1, _forms(dictionary)) <= 1e-2


def test_circle_potential_closed_form():
    T = TargetCurrent("circle", radius=0.7)
    Y = T.circle_points(8192)
    Z = np.array([[1, 0.2], [1, 3j], [0.3, 1], [1, 0]], dtype=complex)
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    numeric = np.array([np.mean(np.log(chordal_distances(Y, z))) for z in Z]) + 0.5
    np.testing.assert_allclose(potential_values(T, Z), numeric, atol=1e-6)


def test_largest_remainder_counts():
    assert _largest_remainder([0.5, 0.3, 0.2], 10) == [5, 3, 2]
    assert sum(_largest_remainder([1, 1, 1], 7)) == 7


def test_dirac_target_puts_every_root_on_the_atom(grid1, dictionary):
    a = ProjectivePoint.of(1, 2j)
    rec = roots_from_measure(TargetCurrent.dirac(a), 6, "stratified", grid1, dictionary)
    assert rec.support_distance == pytest.approx(0.0, abs=1e-12)
    assert rec.max_weak_distance < 1e-12
    Z = roots_p1(rec.polynomial)
    assert Z.total == 6


def test_stratified_circle_roots_are_roots_of_unity(grid1, dictionary):
    p = 6
    rec = roots_from_measure(TargetCurrent("circle"), p, "stratified", grid1, dictionary)
    Z = roots_p1(rec.polynomial)
    assert Z.total == p
    for pt, _ in Z.points:
        assert abs(pt.coords[1] / pt.coords[0]) == pytest.approx(1.0, abs=1e-8)
        assert abs((pt.coords[1] / pt.coords[0]) ** p - 1.0) < 1e-7


def test_mixture_sampling_respects_weights(rng):
    T = TargetCurrent("mixture", components=[
        (TargetCurrent.dirac(ProjectivePoint.of(1, 0)), 0.25),
        (TargetCurrent("circle", radius=2.0), 0.75),
    ])
    R = sample_roots(T, 8, "stratified", rng)
    assert R.shape == (8, 2)
    assert int(np.sum(chordal_distances(R, np.array([1, 0])) < 1e-12)) == 2


def test_weak_distance_shrinks_with_degree(grid1, dictionary):
    T = TargetCurrent("smooth", a=0.3)
    small = roots_from_measure(T, 5, "stratified", grid1, dictionary).max_weak_distance
    large = roots_from_measure(T, 80, "stratified", grid1, dictionary).max_weak_distance
    assert large < small


def test_iid_potential_error_shrinks(grid1, dictionary):
    T = TargetCurrent.fs()
    err = {}
    for p in (10, 80):
        rngs = [np.random.default_rng(np.random.SeedSequence(9, spawn_key=(p, i))) for i in range(20)]
        err[p] = np.median([roots_from_measure(T, p, "iid", grid1, dictionary, r).potential_error for r in rngs])
    assert err[80] < err[10]


def test_pairing_of_circle(grid1, dictionary):
    u1 = next(u for u in dictionary if u.name == "u1")
    R = 0.5
    assert target_pairing(TargetCurrent("circle", radius=R), u1, grid1) == pytest.approx(R * R / (1 + R * R))


def test_section_vector_keeps_roots():
    pts = [(ProjectivePoint.of(1, 0.5), 1), (ProjectivePoint.of(1, -1j), 1), (ProjectivePoint.of(0.2, 1), 1)]
    g = from_roots(pts)
    v = section_vector(g)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    Z = roots_p1(section_from_vector(v, 3))
    for pt, _ in pts:
        assert any(q == pt for q, _ in Z.points)


def test_concentrated_sampler(grid1, dictionary, rng):
    rec = roots_from_measure(TargetCurrent.fs(), 10, "stratified", grid1, dictionary)
    sampler = concentrated_sampler(rec)
    assert isinstance(sampler, ConcentratedSampler)
    V, near = sampler.draw(500, rng)
    assert np.all(sampler.in_ball(V[near]))
    freq = exceptional_frequency(sampler, 20_000, rng)
    assert freq.bound == pytest.approx(0.01)
    assert freq.holds()


def test_nearby_sections_have_nearby_zeros(grid1, dictionary, rng):
    rec = roots_from_measure(TargetCurrent.fs(), 8, "stratified", grid1, dictionary)
    cont = root_continuity(rec, concentrated_sampler(rec), dictionary, 30, rng)
    assert cont.size > 0
    assert np.median(cont) < 0.1


def test_exceptional_draws_stay_within_budget(grid1, dictionary, rng):
    res = borel_cantelli_count(TargetCurrent("circle"), [5, 10, 20], 2000, grid1, dictionary, rng)
    assert res.budget == pytest.approx(2000 * (1 / 25 + 1 / 100 + 1 / 400))
    assert res.total <= res.budget + 3.0 * np.sqrt(res.budget) + 3.0


def test_random_sections_approach_the_circle(rng):
    T = TargetCurrent("circle", radius=1.0)
    d = {}
    for p in (10, 40):
        d[p] = np.median([support_distance(T, kac_roots(p, 1.0, rng)) for _ in range(40)])
        assert kac_roots(p, 1.0, rng).shape == (p, 2)
    assert d[40] < d[10]


def test_circle_support_distance_is_exact():
    T = TargetCurrent("circle", radius=2.0)
    on = sample_roots(T, 16, "iid", np.random.default_rng(3))
    assert support_distance(T, on) == pytest.approx(0.0, abs=1e-12)
    # [1:1] against |t| = 2: |2 - 1| / sqrt(2) / sqrt(5)
    off = np.array([[1.0, 1.0]], dtype=np.complex128) / np.sqrt(2.0)
    assert support_distance(T, off) == pytest.approx(1.0 / np.sqrt(10.0), abs=1e-12)
    assert support_distance(T, np.array([[0.0, 1.0]], dtype=np.complex128)) == pytest.approx(1 / np.sqrt(5.0))


def test_halving_uses_placed_roots(grid1, dictionary):
    T = TargetCurrent("circle")
    placed = [(p, roots_from_measure(T, p, "stratified", grid1, dictionary).support_distance) for p in (10, 20, 40)]
    res = support_halving(placed)
    assert [h.p for h in res] == [20, 40]
    assert all(h.exact and h.holds((0.35, 0.65)) for h in res)


def test_halving_band():
    band = (0.35, 0.65)
    assert [h.holds(band) for h in support_halving([(10, 0.2), (20, 0.1), (40, 0.1)])] == [True, False]
    assert support_halving([(10, 0.2), (30, 0.1)]) == []
    assert support_halving([(10, float("nan")), (20, 0.1)]) == []
    h = support_halving([(10, 0.0), (20, 0.1)])[0]
    assert not h.exact and not h.holds(band)
