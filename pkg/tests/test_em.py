import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from penvmf.em import (
    DegenerateComponentError,
    EmConfig,
    FitFailureError,
    e_step,
    fit,
    initialize,
    m_step,
)
from penvmf.model import (
    PenaltyConfig,
    VmfComponent,
    VmfMixture,
    penalized_log_likelihood,
    sample_mixture,
    sample_vmf,
    sample_uniform_sphere,
)
from penvmf.special import bessel_ratio
from penvmf.sphere import geodesic_distance, unit_vector


def two_caps(d=2, n=600, kappas=(10.0, 1.0), seed=0):
    means = np.eye(d)[:2]
    mix = VmfMixture([0.5, 0.5], means, list(kappas))
    x, labels = sample_mixture(mix, n, seed)
    return mix, x, labels


def test_e_step_single_component():
    x = sample_vmf(VmfComponent([0, 0, 1], 3.0), 50, 1)
    resp = e_step(VmfMixture([1.0], [[0, 0, 1]], [3.0]), x)
    assert np.array_equal(resp, np.ones((50, 1)))


def test_e_step_identical_components():
    mix = VmfMixture([0.5, 0.5], [[0, 1], [0, 1]], [4.0, 4.0])
    resp = e_step(mix, sample_vmf(VmfComponent([1, 0], 1.0), 20, 2))
    np.testing.assert_allclose(resp, 0.5, atol=1e-15)


def test_e_step_softmax_example():
    mix = VmfMixture([0.5, 0.5], [[1, 0], [-1, 0]], [5.0, 5.0])
    r = e_step(mix, [[1.0, 0.0]])
    expected = math.exp(5) / (math.exp(5) + math.exp(-5))
    assert r[0, 0] == pytest.approx(expected, rel=1e-14)
    assert r[0, 0] == pytest.approx(0.9999546, abs=1e-7)


def test_e_step_survives_huge_kappa():
    mix = VmfMixture([0.5, 0.5], [[1, 0], [-1, 0]], [1e6, 1e6])
    x = np.array([[0.0, 1.0], [1.0, 0.0], [math.cos(3.0), math.sin(3.0)]])
    r = e_step(mix, x)
    assert np.all(np.isfinite(r))
    np.testing.assert_allclose(r.sum(axis=1), 1.0, atol=1e-12)
    assert r[1, 0] == 1.0 and r[2, 1] == 1.0


@pytest.mark.parametrize("d", [2, 3, 4])
def test_m_step_single_component_matches_exact_inverse(d):
    x = sample_vmf(VmfComponent(np.eye(d)[0], 4.0), 400, d)
    mix = m_step(np.ones((400, 1)), x, PenaltyConfig.fixed(0.0), "exact")
    rbar = np.linalg.norm(x.mean(axis=0))
    assert abs(bessel_ratio(d, mix.kappas[0]) - rbar) <= 1e-10
    np.testing.assert_allclose(mix.means[0], x.mean(axis=0) / rbar, atol=1e-14)


def test_m_step_kappa_guard():
    x = sample_vmf(VmfComponent([1, 0, 0], 2.0), 30, 3)
    resp = np.column_stack([np.full(30, 0.99), np.full(30, 0.01)])
    small_resultant = np.linalg.norm(0.01 * x.sum(axis=0))
    mix = m_step(resp, x, PenaltyConfig.fixed(small_resultant + 0.1), "approx")
    assert mix.kappas[1] == 0.0
    assert np.all(mix.kappas >= 0)


def test_m_step_zero_resultant_gives_uniform_component():
    x = np.array([[1.0, 0.0], [-1.0, 0.0]])
    mix = m_step(np.ones((2, 1)), x, 0.0)
    assert mix.kappas[0] == 0.0


def test_m_step_equal_responsibilities_are_symmetric():
    x = sample_vmf(VmfComponent([0, 1, 0], 3.0), 100, 4)
    mix = m_step(np.full((100, 2), 0.5), x, 0.01)
    np.testing.assert_allclose(mix.weights, [0.5, 0.5], atol=1e-15)
    xbar = x.mean(axis=0)
    for mu in mix.means:
        np.testing.assert_allclose(mu, xbar / np.linalg.norm(xbar), atol=1e-14)
    assert mix.kappas[0] == mix.kappas[1]


def test_m_step_degenerate_component_is_named():
    x = sample_vmf(VmfComponent([1, 0], 1.0), 10, 5)
    resp = np.column_stack([np.ones(10), np.zeros(10)])
    with pytest.raises(DegenerateComponentError, match="component 1"):
        m_step(resp, x, 0.0)


def test_m_step_clamps_rho_for_a_single_point_cluster():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    resp = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    mix = m_step(resp, x, 0.0, "exact")
    assert np.all(np.isfinite(mix.kappas)) and mix.kappas.min() > 1e8


def test_fit_single_component_recovers_truth():
    mu = unit_vector([1, -1, 2])
    x = sample_vmf(VmfComponent(mu, 10.0), 2000, 11)
    rep = fit(x, EmConfig(p=1))
    assert abs(rep.mixture.kappas[0] - 10) / 10 < 0.1
    assert geodesic_distance(rep.mixture.means[0], mu) <= 0.05


def test_fit_two_components_table_scale():
    truth, x, _ = two_caps(n=1000, seed=3)
    rep = fit(x, EmConfig(p=2))
    order = np.argsort(-rep.mixture.kappas)
    assert abs(rep.mixture.weights[order[0]] - 0.5) < 0.1
    assert geodesic_distance(rep.mixture.means[order[0]], truth.means[0]) < 0.1
    assert abs(rep.mixture.kappas[order[0]] - 10) < 4


def test_stopping_rule_trace_length():
    _, x, _ = two_caps(seed=4)
    cfg = EmConfig(p=2, tol=1e-6)
    rep = fit(x, cfg)
    assert rep.converged
    assert len(rep.pll_trace) == rep.iterations + 1
    assert abs(rep.pll_trace[-1] - rep.pll_trace[-2]) < cfg.tol * abs(rep.pll_trace[-1])
    assert np.all(np.abs(np.diff(rep.pll_trace[:-1])) >= cfg.tol * np.abs(rep.pll_trace[1:-1]))


def test_max_iters_caps_the_run():
    _, x, _ = two_caps(seed=5)
    rep = fit(x, EmConfig(p=2, max_iters=3, tol=1e-15))
    assert rep.iterations == 3 and not rep.converged and len(rep.pll_trace) == 4


def test_report_objective_and_responsibilities_match_mixture():
    _, x, _ = two_caps(d=3, seed=6)
    cfg = EmConfig(p=2, penalty=PenaltyConfig.from_zeta(1.0))
    rep = fit(x, cfg)
    pen = cfg.penalty.resolve(x)
    assert rep.pll == pytest.approx(penalized_log_likelihood(rep.mixture, x, pen), rel=1e-12)
    np.testing.assert_allclose(rep.responsibilities, e_step(rep.mixture, x), atol=1e-15)
    assert rep.psi_n == pytest.approx(1 / len(x))


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("d", [2, 3, 4])
def test_exact_updates_ascend(d, seed):
    _, x, _ = two_caps(d=d, n=300, kappas=(8.0, 2.0), seed=100 * d + seed)
    rep = fit(x, EmConfig(p=2, kappa_update="exact", init="random", seed=seed, tol=1e-10))
    steps = np.diff(rep.pll_trace)
    assert np.all(steps >= -1e-6 * np.abs(rep.pll_trace[1:]))


@pytest.mark.parametrize("seed", range(4))
def test_approx_updates_nearly_ascend(seed):
    _, x, _ = two_caps(d=3, n=300, seed=seed)
    rep = fit(x, EmConfig(p=2, kappa_update="approx", init="random", seed=seed))
    steps = np.diff(rep.pll_trace)
    assert np.all(steps >= -1e-3 * np.abs(rep.pll_trace[1:]))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), d=st.integers(2, 4), p=st.integers(1, 3))
def test_fit_invariants(seed, d, p):
    rng = np.random.default_rng(seed)
    truth = VmfMixture(np.full(p, 1.0 / p), rng.standard_normal((p, d)), rng.uniform(0, 20, p))
    x, _ = sample_mixture(truth, 60, rng)
    rep = fit(x, EmConfig(p=p, seed=seed, max_iters=200))
    mix = rep.mixture
    assert np.all(mix.weights >= 0) and abs(mix.weights.sum() - 1) <= 1e-12
    np.testing.assert_allclose(np.linalg.norm(mix.means, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(rep.responsibilities.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(mix.kappas >= 0)


def test_penalty_shrinks_total_concentration():
    hits = 0
    for rep_idx in range(100):
        _, x, _ = two_caps(d=2, n=100, seed=1000 + rep_idx)
        base = dict(p=2, seed=rep_idx, kappa_update="exact")
        k0 = fit(x, EmConfig(penalty=PenaltyConfig.fixed(0.0), **base)).mixture.kappas.sum()
        k1 = fit(x, EmConfig(penalty=PenaltyConfig.from_zeta(1.0), **base)).mixture.kappas.sum()
        hits += k1 <= k0
    assert hits >= 95


def test_random_init_is_deterministic():
    _, x, _ = two_caps(seed=7)
    cfg = EmConfig(p=2, init="random", seed=42)
    a, b = initialize(x, cfg), initialize(x, cfg)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.kappas, [1.0, 1.0])
    np.testing.assert_array_equal(a.weights, [0.5, 0.5])
    assert not np.array_equal(a.means[0], a.means[1])


def test_kmeans_init_single_cluster_is_mean_direction():
    x = sample_vmf(VmfComponent([0, 0, 1], 3.0), 200, 8)
    mix = initialize(x, EmConfig(p=1))
    xbar = x.mean(axis=0)
    np.testing.assert_allclose(mix.means[0], xbar / np.linalg.norm(xbar), atol=1e-12)


def test_kmeans_init_separates_tight_caps():
    mu1, mu2 = unit_vector([1, 0, 0]), unit_vector([0, 1, 1])
    mix = VmfMixture([0.5, 0.5], [mu1, mu2], [50.0, 50.0])
    x, _ = sample_mixture(mix, 400, 9)
    for seed in range(5):
        init = initialize(x, EmConfig(p=2, seed=seed))
        d = geodesic_distance(init.means[:, None, :], np.array([mu1, mu2])[None, :, :])
        assert max(d[0].min(), d[1].min()) < 0.2
        assert set(np.argmin(d, axis=1)) == {0, 1}


def test_fit_is_deterministic_and_picks_best_restart():
    _, x, _ = two_caps(seed=10)
    cfg = EmConfig(p=2, init="random", restarts=4, seed=3)
    a, b = fit(x, cfg), fit(x, cfg)
    np.testing.assert_array_equal(a.pll_trace, b.pll_trace)
    singles = [fit(x, EmConfig(p=2, init="random", restarts=1, seed=3)).pll]
    assert a.pll >= max(singles) - 1e-12


def test_fit_failure_when_every_restart_degenerates(monkeypatch):
    import penvmf.em as em

    def starved(*args, **kwargs):
        raise DegenerateComponentError(1, 0.0)

    monkeypatch.setattr(em, "m_step", starved)
    _, x, _ = two_caps(seed=12)
    with pytest.raises(FitFailureError):
        fit(x, EmConfig(p=2, init="random", restarts=3))


def test_degenerate_restart_is_skipped(monkeypatch):
    import penvmf.em as em

    real = em.m_step
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 1:
            raise DegenerateComponentError(0, 0.0)
        return real(*args, **kwargs)

    monkeypatch.setattr(em, "m_step", flaky)
    _, x, _ = two_caps(seed=12)
    rep = fit(x, EmConfig(p=2, init="random", restarts=2))
    assert rep.failed_restarts == 1 and rep.restart == 1


def test_fit_rejects_too_few_points():
    with pytest.raises(ValueError):
        fit([[1.0, 0.0]], EmConfig(p=2))


def test_config_validation():
    with pytest.raises(ValueError):
        EmConfig(restarts=0)
    with pytest.raises(ValueError):
        EmConfig(tol=0)
    with pytest.raises(ValueError):
        EmConfig(kappa_update="newton")


def test_scatter_init_is_valid_and_seeded():
    x = sample_uniform_sphere(3, 40, 0)
    cfg = EmConfig(p=3, init="scatter")
    a = initialize(x, cfg, np.random.default_rng(5))
    b = initialize(x, cfg, np.random.default_rng(5))
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_allclose(np.linalg.norm(a.means, axis=1), 1.0)
    assert np.all((a.kappas >= 0.1) & (a.kappas <= 100.0))
    assert a.weights.sum() == pytest.approx(1.0)
