import math

import numpy as np
import pytest

from tools.errors import DomainError, InvalidState, StepLeftSimplex
from tools.langevin import (
    SdeConfig,
    deterministic,
    effective_potential,
    reflect,
    sde_drift,
    sde_noise,
    simulate_ensemble,
    simulate_sde,
)
from tools.onsager_geometry import free_energy, onsager_matrix, solve_gradient_flow
from tools.reaction_network import linear_rate_equation
from tools.special_functions import complete_beta, incomplete_beta
from utils.rng import StreamId, tag_of
from utils.stats import histogram_l1, two_sample_ks


def canonical_cfg(**overrides):
    params = dict(h=2.0, dt=2e-3, t_end=1.5, potential="none")
    params.update(overrides)
    return SdeConfig(**params)


def stationary_bin_masses(bins: int) -> np.ndarray:
    edges = np.linspace(0.0, 1.0, bins + 1)
    cdf = incomplete_beta(edges, 0.75, 0.75) / complete_beta(0.75, 0.75)
    return np.diff(cdf)


@pytest.mark.parametrize("overrides", [
    dict(h=0.0),
    dict(h=-1.0, noise=False),
    dict(dt=2.0),
    dict(noise_form="diagonal"),
    dict(potential="entropy"),
])
def test_config_validation(overrides):
    with pytest.raises(DomainError):
        canonical_cfg(**overrides).validate()


def test_deterministic_allows_zero_h():
    cfg = deterministic(canonical_cfg())
    assert cfg.h == 0.0 and not cfg.noise
    assert cfg.validate() is cfg


def test_reflect_mirrors_and_renormalizes():
    out, hit = reflect(np.array([[-0.1, 1.1], [0.4, 0.6]]))
    np.testing.assert_allclose(out[0], [0.1, 0.9])
    np.testing.assert_array_equal(out[1], [0.4, 0.6])
    np.testing.assert_array_equal(hit, [True, False])
    three, _ = reflect(np.array([[-0.05, 0.5, 0.55]]))
    assert three[0, 0] == pytest.approx(0.05)
    assert three.sum() == pytest.approx(1.0)
    assert np.all(three >= 0.0)


def test_effective_potential(ring3, kl):
    x = np.array([0.5, 0.3, 0.2])
    value, grad = effective_potential(ring3, kl, x, h=0.0)
    expected_value, expected_grad = free_energy(ring3, kl, x)
    assert value == pytest.approx(expected_value)
    np.testing.assert_allclose(grad, expected_grad)

    _, grad = effective_potential(ring3, kl, x, h=0.5)
    for k in range(2):
        e = np.zeros(3)
        e[k], e[2] = 1e-6, -1e-6
        upper = effective_potential(ring3, kl, x + e, h=0.5)[0]
        lower = effective_potential(ring3, kl, x - e, h=0.5)[0]
        fd = (upper - lower) / 2e-6
        assert grad[k] - grad[2] == pytest.approx(fd, rel=1e-5, abs=1e-7)
    with pytest.raises(InvalidState):
        effective_potential(ring3, kl, [0.0, 0.5, 0.5], h=0.5)


def test_canonical_drift_closed_form(canonical_network, geometric):
    cfg = canonical_cfg()
    r = 0.3
    drift = sde_drift(canonical_network, geometric, np.array([[r, 1.0 - r], [0.5, 0.5]]), cfg)
    expected = (1.0 - 2.0 * r) / (2.0 * math.sqrt(r * (1.0 - r)))
    np.testing.assert_allclose(drift[0], [expected, -expected], rtol=1e-9)
    np.testing.assert_allclose(drift[1], [0.0, 0.0], atol=1e-12)
    without = sde_drift(canonical_network, geometric, np.array([[r, 1.0 - r]]),
                        canonical_cfg(ito_correction=False))
    assert without[0, 0] == pytest.approx(-expected, rel=1e-9)


@pytest.mark.parametrize("noise_form", ["eigen", "edge"])
def test_noise_covariance_is_onsager_matrix(ring3, kl, noise_form):
    x = np.array([[0.5, 0.3, 0.2]])
    k = onsager_matrix(ring3, kl, x)
    width = 2 if noise_form == "eigen" else 3
    columns = [sde_noise(k, np.eye(width)[None, n], noise_form)[0] for n in range(width)]
    factor = np.column_stack(columns)
    np.testing.assert_allclose(factor @ factor.T, k[0], atol=1e-12)
    np.testing.assert_allclose(factor.sum(axis=0), 0.0, atol=1e-14)


def test_noise_free_run_follows_rate_equation(ring3, kl):
    cfg = SdeConfig(h=0.0, dt=1e-3, t_end=1.0, noise=False)
    path = simulate_sde(ring3, kl, [0.6, 0.3, 0.1], cfg)
    exact = linear_rate_equation(ring3, [0.6, 0.3, 0.1], [1.0])
    np.testing.assert_allclose(path.states[-1], exact.states[0], atol=5e-3)
    assert path.reflection_count == 0
    assert path.times[-1] == pytest.approx(1.0)


def test_single_path_matches_ensemble_of_one(canonical_network, geometric):
    cfg = canonical_cfg(t_end=0.1, stream=StreamId(11, tag_of("langevin"), 0))
    path = simulate_sde(canonical_network, geometric, [0.3, 0.7], cfg)
    ensemble = simulate_ensemble(canonical_network, geometric, [0.3, 0.7], cfg, n_paths=1, seed=11)
    np.testing.assert_array_equal(ensemble.final()[0], path.states[-1])


def test_ensemble_independent_of_thread_count(canonical_network, geometric):
    cfg = canonical_cfg(dt=0.01, t_end=0.02)
    one = simulate_ensemble(canonical_network, geometric, [0.3, 0.7], cfg, n_paths=2100, seed=4, threads=1)
    three = simulate_ensemble(canonical_network, geometric, [0.3, 0.7], cfg, n_paths=2100, seed=4, threads=3)
    np.testing.assert_array_equal(one.samples, three.samples)
    assert one.meta["blocks"] == 3
    assert one.samples.shape == (2, 2100, 2)
    summary = one.summary()
    assert summary["n_paths"] == 2100 and len(summary["mean"]) == 2


def test_leaving_the_simplex_without_reflection(canonical_network, geometric):
    cfg = canonical_cfg(dt=0.05, t_end=0.5, reflection=False)
    with pytest.raises(StepLeftSimplex):
        simulate_ensemble(canonical_network, geometric, [0.02, 0.98], cfg, n_paths=1024)
    reflected = simulate_ensemble(canonical_network, geometric, [0.02, 0.98],
                                  canonical_cfg(dt=0.05, t_end=0.5), n_paths=1024)
    assert reflected.reflection_count > 0
    assert np.all(reflected.final() >= 0.0)
    np.testing.assert_allclose(reflected.final().sum(axis=1), 1.0, atol=1e-12)


def test_sample_times_validation(canonical_network, geometric):
    with pytest.raises(DomainError):
        simulate_ensemble(canonical_network, geometric, [0.3, 0.7], canonical_cfg(t_end=0.1), n_paths=1,
                          sample_times=[0.0, 0.5])
    with pytest.raises(InvalidState):
        simulate_ensemble(canonical_network, geometric, [0.0, 1.0], canonical_cfg(), n_paths=1)


def test_canonical_ensemble_reaches_stationary_law(canonical_network, geometric):
    ensemble = simulate_ensemble(canonical_network, geometric, [0.3, 0.7], canonical_cfg(),
                                 n_paths=8192, seed=2)
    _, counts = ensemble.histogram(bins=20)
    assert histogram_l1(counts, stationary_bin_masses(20)) <= 0.08


@pytest.mark.slow
def test_canonical_ensemble_acceptance(canonical_network, geometric):
    ensemble = simulate_ensemble(canonical_network, geometric, [0.3, 0.7], canonical_cfg(t_end=2.0),
                                 n_paths=100_000, seed=0, threads=4)
    _, counts = ensemble.histogram(bins=50)
    assert histogram_l1(counts, stationary_bin_masses(50)) <= 0.05


def test_zero_noise_limit_is_first_order_in_dt(ring3, kl):
    x0 = [0.6, 0.3, 0.1]
    reference = solve_gradient_flow(ring3, kl, x0, t_end=1.0, dt=1e-3).states[-1]
    errors = []
    for dt in (1e-2, 1e-3):
        path = simulate_sde(ring3, kl, x0, SdeConfig(h=0.0, dt=dt, t_end=1.0, noise=False))
        errors.append(float(np.max(np.abs(path.states[-1] - reference))))
    assert 5.0 < errors[0] / errors[1] < 20.0


@pytest.mark.slow
def test_dropping_the_ito_correction_biases_the_stationary_law(canonical_network, geometric):
    masses = stationary_bin_masses(50)
    distances = []
    for correction in (True, False):
        cfg = canonical_cfg(h=0.5, t_end=6.0, ito_correction=correction)
        ensemble = simulate_ensemble(canonical_network, geometric, [0.3, 0.7], cfg, n_paths=20_000,
                                     seed=5, threads=4)
        distances.append(histogram_l1(ensemble.histogram(bins=50)[1], masses))
    assert distances[1] >= 0.05
    assert distances[1] > distances[0]


def _noise_forms_agree(network, mf, x0, n_paths, dt, t_end, h):
    samples = []
    for seed, form in ((1, "eigen"), (2, "edge")):
        cfg = SdeConfig(h=h, dt=dt, t_end=t_end, noise_form=form)
        samples.append(simulate_ensemble(network, mf, x0, cfg, n_paths=n_paths, seed=seed).final()[:, 0])
    return two_sample_ks(samples[0], samples[1])


def test_eigen_and_edge_noise_agree_in_law(ring3, kl):
    result = _noise_forms_agree(ring3, kl, [0.5, 0.3, 0.2], n_paths=2000, dt=2e-3, t_end=1.0, h=0.05)
    assert result["passed"]


@pytest.mark.slow
@pytest.mark.parametrize("d", [2, 3])
def test_noise_form_equivalence_acceptance(asymmetric_network, ring3, kl, d):
    network, x0 = (asymmetric_network, [0.6, 0.4]) if d == 2 else (ring3, [0.5, 0.3, 0.2])
    result = _noise_forms_agree(network, kl, x0, n_paths=20_000, dt=1e-4, t_end=1.0, h=0.05)
    assert result["passed"]
