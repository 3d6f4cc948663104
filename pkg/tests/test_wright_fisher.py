import math

import numpy as np
import pytest

from tools.errors import DomainError, InvalidState
from tools.fokker_planck_1d import ThetaProfile, fit_decay_rate
from tools.langevin import SdeConfig, simulate_sde
from tools.wright_fisher import (
    arcsine_cdf,
    arcsine_density,
    build_transform,
    psi_via_incomplete_beta,
    pushforward_check,
    simulate_wf,
    simulate_wf_ensemble,
    stationary_pushforward_l1,
)
from utils.stats import histogram_l1

CANONICAL_Z = math.gamma(0.75) ** 2 / math.gamma(1.5) / math.sqrt(2.0)


@pytest.fixture(scope="module")
def transform():
    return build_transform(ThetaProfile.canonical())


def arcsine_bin_masses(bins: int) -> np.ndarray:
    return np.diff(arcsine_cdf(np.linspace(0.0, 1.0, bins + 1)))


def test_transform_constants(transform):
    assert transform.Z == pytest.approx(CANONICAL_Z, rel=1e-10)
    assert transform.gamma == pytest.approx((math.pi / CANONICAL_Z) ** 2, rel=1e-9)
    assert transform.gamma == pytest.approx(6.875, abs=1e-3)
    np.testing.assert_allclose(transform.psi(np.array([0.0, 0.5, 1.0])), [0.0, 0.5, 1.0], atol=1e-10)


def test_psi_matches_incomplete_beta_inversion(transform):
    x = np.array([0.01, 0.2, 0.45, 0.7, 0.99])
    np.testing.assert_allclose(psi_via_incomplete_beta(transform, x), transform.psi(x), atol=1e-10)


def test_psi_defining_relation(transform):
    # psi'(x) sqrt(theta(x)) = sqrt(gamma psi (1 - psi))
    delta = 1e-5
    theta = transform.theta
    for x in np.linspace(0.05, 0.95, 19):
        pair = transform.psi(np.array([x - delta, x + delta]))
        slope = (pair[1] - pair[0]) / (2.0 * delta)
        psi = transform.psi(x)
        residual = slope * math.sqrt(theta.theta(x)) - math.sqrt(transform.gamma * psi * (1.0 - psi))
        assert abs(residual) <= 1e-8
        assert float(transform.psi_prime(x)) == pytest.approx(slope, rel=1e-8)


def test_psi_inverse_round_trip(transform):
    x = np.array([0.05, 0.3, 0.8])
    np.testing.assert_allclose(transform.psi_inverse(transform.psi(x)), x, atol=1e-12)
    with pytest.raises(DomainError):
        transform.psi_inverse(1.2)


def test_transform_table(transform):
    table = transform.table(11)
    assert list(table.columns) == ["x", "psi"]
    assert np.all(np.diff(table["psi"].to_numpy()) > 0.0)


def test_stationary_pushforward_is_the_arcsine_law(transform):
    assert stationary_pushforward_l1(transform) <= 1e-6


def test_arcsine_law():
    assert arcsine_cdf(0.5) == pytest.approx(0.5)
    assert arcsine_cdf(1.0) == pytest.approx(1.0)
    assert arcsine_density(0.5) == pytest.approx(2.0 / math.pi)
    assert math.isinf(arcsine_density(0.0))


@pytest.mark.parametrize("kwargs, error", [
    (dict(gamma=0.0, y0=0.5, t_end=1.0, dt=0.1), DomainError),
    (dict(gamma=1.0, y0=1.5, t_end=1.0, dt=0.1), InvalidState),
    (dict(gamma=1.0, y0=0.5, t_end=1.0, dt=2.0), DomainError),
])
def test_simulate_wf_validation(kwargs, error):
    with pytest.raises(error):
        simulate_wf(**kwargs)


def test_noise_free_wf_relaxes_exponentially():
    gamma = 6.875
    path = simulate_wf(gamma, 0.9, t_end=0.5, dt=1e-4, noise=False)
    expected = 0.5 + 0.4 * np.exp(-gamma * path.times)
    np.testing.assert_allclose(path.values, expected, atol=1e-3)
    assert path.reflection_count == 0


def test_fixed_point_is_shared(transform, canonical_network, geometric):
    path = simulate_sde(canonical_network, geometric, [0.5, 0.5],
                        SdeConfig(h=2.0, dt=1e-3, t_end=0.5, potential="none", noise=False))
    np.testing.assert_allclose(path.states[-1], [0.5, 0.5], atol=1e-12)
    y = simulate_wf(transform.gamma, 0.5, 0.5, 1e-3, noise=False).values[-1]
    assert transform.psi(path.states[-1, 0]) == pytest.approx(y, abs=1e-10)


def test_wf_ensemble_stays_in_unit_interval_and_is_reproducible():
    first = simulate_wf_ensemble(6.875, 0.95, 0.2, 1e-3, n_paths=1500, seed=3)
    second = simulate_wf_ensemble(6.875, 0.95, 0.2, 1e-3, n_paths=1500, seed=3, threads=2)
    np.testing.assert_array_equal(first.samples, second.samples)
    assert first.samples.min() >= 0.0 and first.samples.max() <= 1.0
    assert first.reflection_count > 0
    assert first.n_paths == 1500 and first.meta["blocks"] == 2


def test_wf_mean_reverts_at_rate_gamma():
    gamma = 6.875
    times = [0.05, 0.1, 0.15, 0.2]
    ensemble = simulate_wf_ensemble(gamma, 0.9, 0.2, 1e-3, n_paths=20_000, seed=1, sample_times=times)
    rate = -fit_decay_rate(times, ensemble.means() - 0.5)
    assert rate == pytest.approx(gamma, rel=0.1)


def test_wf_reaches_the_arcsine_law(transform):
    ensemble = simulate_wf_ensemble(transform.gamma, 0.3, 3.0, 1e-3, n_paths=20_000, seed=2)
    _, counts = ensemble.histogram(bins=20)
    assert histogram_l1(counts, arcsine_bin_masses(20)) <= 0.06


def test_pushforward_check_reduced(transform, canonical_network, geometric):
    report = pushforward_check(canonical_network, geometric, transform, n_paths=2000, t=0.5, dt=1e-3, seed=7)
    assert report.passed
    assert report.y0 == pytest.approx(float(transform.psi(0.3)))
    assert set(report.summary()) >= {"ks", "critical_1pct", "passed"}


def test_pushforward_needs_two_species(transform, ring3, geometric):
    with pytest.raises(DomainError):
        pushforward_check(ring3, geometric, transform, n_paths=10, t=0.1, dt=0.01)


@pytest.mark.slow
def test_wf_stationary_acceptance(transform):
    ensemble = simulate_wf_ensemble(transform.gamma, 0.3, 10.0, 1e-3, n_paths=100_000, seed=0, threads=4)
    _, counts = ensemble.histogram(bins=50)
    assert histogram_l1(counts, arcsine_bin_masses(50)) <= 0.05


@pytest.mark.slow
def test_pushforward_acceptance(transform, canonical_network, geometric):
    report = pushforward_check(canonical_network, geometric, transform, n_paths=20_000, t=0.5, dt=1e-4,
                               seed=0, threads=4)
    assert report.passed


def test_transform_from_geometric_two_point_network(canonical_network, geometric):
    transform = build_transform(ThetaProfile.from_network(canonical_network, geometric))
    assert transform.Z == pytest.approx(CANONICAL_Z, rel=1e-9)
    assert transform.gamma == pytest.approx(6.875, abs=1e-3)
    np.testing.assert_allclose(transform.psi(np.array([0.0, 0.5, 1.0])), [0.0, 0.5, 1.0], atol=1e-9)
