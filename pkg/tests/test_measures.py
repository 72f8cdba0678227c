from __future__ import annotations

import math

import numpy as np
import pytest

from app.services.measures import (
    FSSampler,
    GrowthFit,
    MeasureSpec,
    ModerateEstimate,
    PerturbedSampler,
    QpshProbe,
    _mixed_density,
    build_probes,
    check_perturbation_hoelder,
    effective_sample_size,
    estimate_capacity_constants,
    fs_capacity_bound,
    fs_log_probe_integral,
    hill_tail_index,
    hyperplane_neighborhood_mass,
    hypothesis_ratios,
    log_probe,
    moderate_integral,
    perturbation_weights,
    sample_fs_many,
)


def test_fs_draws_are_unit_vectors(rng):
    V = sample_fs_many(4, 100, rng)
    assert V.shape == (100, 5)
    np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0)


def test_fs_mode_has_unit_weights(rng):
    V = sample_fs_many(3, 10, rng)
    np.testing.assert_array_equal(perturbation_weights(MeasureSpec(), V), np.ones(10))


def test_perturbed_density_is_a_probability_density(rng):
    spec = MeasureSpec(mode="perturbed")
    V = sample_fs_many(2, 20000, rng)
    w = perturbation_weights(spec, V)
    assert np.all(w > 0)
    assert w.mean() == pytest.approx(1.0, abs=0.02)


def test_mixed_density_of_equal_matrices_is_det(rng):
    A = rng.standard_normal((4, 3, 3))
    A = A @ np.transpose(A, (0, 2, 1)) + np.eye(3)
    np.testing.assert_allclose(_mixed_density([A, A], [2, 1]), np.linalg.det(A), rtol=1e-9)
    np.testing.assert_allclose(_mixed_density([A, A, A], [1, 1, 1]), np.linalg.det(A), rtol=1e-9)


def test_perturbation_is_hoelder(rng):
    assert check_perturbation_hoelder(MeasureSpec(mode="perturbed", rho=0.5), 3, 2000, rng)


def test_effective_sample_size():
    assert effective_sample_size(np.ones(50)) == pytest.approx(50.0)
    assert effective_sample_size(np.array([1.0, 0.0, 0.0])) == pytest.approx(1.0)


def test_hill_estimator_on_pareto(rng):
    x = (1.0 - rng.uniform(size=100_000)) ** -1.0  # tail index 1
    assert hill_tail_index(x) == pytest.approx(1.0, abs=0.2)


def test_fs_log_probe_closed_form():
    assert fs_log_probe_integral(1, 1.0) == pytest.approx(2.0)
    assert fs_log_probe_integral(3, 0.0) == pytest.approx(1.0)
    assert fs_log_probe_integral(2, 2.0) == math.inf


def test_moderate_integral_converges_below_two(rng):
    est = moderate_integral(FSSampler(1), log_probe(np.array([1, 0])), 1.0, 200_000, rng)
    assert not est.diverging
    assert est.value == pytest.approx(2.0, abs=0.05)


def test_moderate_integral_flags_divergence(rng):
    est = moderate_integral(FSSampler(1), log_probe(np.array([1, 0])), 2.0, 50_000, rng)
    assert est.diverging


def test_capacity_constant_on_p1(rng):
    est = estimate_capacity_constants(FSSampler(1), build_probes(1), [0.0, 1.0], 40_000, rng)
    # -int log|v_0| d omega = 1/2 on P^1
    assert est.R == pytest.approx(0.5, abs=0.02)
    assert est.R <= fs_capacity_bound(1) + 0.02
    vals = est.delta_values()
    assert vals[1] <= vals[0]


def test_probe_family_is_nonpositive(rng):
    V = sample_fs_many(3, 500, rng)
    for probe in build_probes(3):
        assert np.all(probe(V) <= 1e-12), probe.name


def test_hyperplane_neighborhood_mass_on_p1(rng):
    # |v_0|^2 is uniform on P^1, so mass(dist < delta) = delta^2
    res = hyperplane_neighborhood_mass(FSSampler(1), np.array([1, 0]), [0.2, 0.1], 50_000, rng)
    assert res.masses[0] == pytest.approx(0.04, abs=0.005)
    assert res.slope == pytest.approx(2.0, abs=0.2)


def test_perturbed_sampler_weights(rng):
    V, w = PerturbedSampler(2, MeasureSpec(mode="perturbed")).draw(100, rng)
    assert V.shape == (100, 3) and np.all(w > 0)


def test_hypothesis_ratios():
    a, b = hypothesis_ratios([1, 1], 0.5)
    assert a == pytest.approx(2.0 * math.log(2.0))
    assert b == pytest.approx(0.25)


@pytest.mark.parametrize("bumps", [(0,), (0, 1, 2)])
def test_perturbed_density_bounds(rng, bumps):
    N, c = 3, 0.3
    w = perturbation_weights(MeasureSpec(mode="perturbed", c_p=c, bump_coords=bumps), sample_fs_many(N, 2000, rng))
    assert w.min() >= (1 - c) ** N - 1e-6
    assert w.max() <= (1 + c) ** N + 1e-6


def test_perturbed_sampler_keeps_half_its_draws(rng):
    _, w = PerturbedSampler(3, MeasureSpec(mode="perturbed")).draw(5000, rng)
    assert effective_sample_size(w) >= 0.5 * w.size


def _estimates(values, diverging=False):
    return [ModerateEstimate(value=v, stderr=0.01, nsamples=1000, diverging=diverging) for v in values]


def test_growth_fit_holds_out_large_n():
    Ns = [5, 10, 20, 30]
    fit = GrowthFit(Ns, [0.0] * 4, _estimates([1.10, 1.05, 1.02, 1.01]))
    assert fit.fit_count == 2
    assert fit.beta0 == pytest.approx((5 * 1.10 + 10 * 1.05) / 125.0)
    assert [N for N, _ in fit.held_out] == [20, 30]
    assert fit.holds


def test_growth_fit_rejects_superlinear_growth():
    Ns = [5, 10, 20, 30]
    assert not GrowthFit(Ns, [0.0] * 4, _estimates([1.10, 1.05, 1.02, 1.0e6])).holds
    assert not GrowthFit(Ns, [0.0] * 4, _estimates([1.10, 1.05, 1.02, 1.01], diverging=True)).holds
    with pytest.raises(ValueError):
        GrowthFit(Ns, [0.0] * 4, _estimates([1.0] * 4), fit_count=5)


def test_s_stderr_includes_the_fs_side(rng):
    probes = QpshProbe([log_probe(np.array([1, 0]))])
    est = estimate_capacity_constants(FSSampler(1), probes, [0.0], 20_000, rng)
    # both sides sample the same law, so the errors add to sqrt(2) times one side
    assert est.S_stderr == pytest.approx(np.sqrt(2.0) * est.R_stderr, rel=0.1)
