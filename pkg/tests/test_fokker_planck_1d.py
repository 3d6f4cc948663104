import math

import numpy as np
import pytest

from tools.errors import DomainError, NonIntegrableTheta, TruncationWarning, UnstableTimestep
from tools.fokker_planck_1d import (
    STABILITY_CONSTANT,
    DensityGrid1D,
    GreenFunctionSpec,
    Potential1D,
    ThetaProfile,
    cell_centers,
    evolve_via_green,
    first_mode,
    fit_decay_rate,
    green_function,
    heat_coordinate_residual,
    series_terms,
    solve_fp,
    stationary_density,
    wasserstein_coordinate,
)
from tools.special_functions import incomplete_beta

CANONICAL_Z = math.gamma(0.75) ** 2 / math.gamma(1.5) / math.sqrt(2.0)
GAP = (math.pi / CANONICAL_Z) ** 2


def stable_dt(theta: ThetaProfile, M: int, h: float = 1.0, omega: float = 1.0) -> float:
    return 0.9 * STABILITY_CONSTANT / (M * M * h * omega * float(np.max(theta.theta(cell_centers(M)))))


def test_density_grid_basics():
    grid = DensityGrid1D.one_hot(10, 3)
    assert grid.mass() == pytest.approx(1.0)
    assert grid.dx == 0.1 and grid.M == 10
    np.testing.assert_allclose(grid.centers[:2], [0.05, 0.15])
    assert DensityGrid1D.uniform(10).l1_distance(grid) == pytest.approx(1.8)
    assert DensityGrid1D.uniform(4).inner_product(lambda x: x) == pytest.approx(0.5)
    linear = DensityGrid1D.from_function(lambda x: x, 50)
    assert linear.mass() == pytest.approx(1.0)
    with pytest.raises(DomainError):
        grid.l1_distance(DensityGrid1D.uniform(11))
    with pytest.raises(DomainError):
        cell_centers(1)


def test_theta_from_network_matches_canonical(canonical_network, geometric):
    profile = ThetaProfile.from_network(canonical_network, geometric)
    canonical = ThetaProfile.canonical()
    x = np.linspace(0.05, 0.95, 19)
    np.testing.assert_allclose(profile.theta(x), canonical.theta(x), rtol=1e-14)
    np.testing.assert_allclose(profile.theta_prime(x), canonical.theta_prime(x), rtol=1e-12, atol=1e-14)
    assert profile.symmetric and profile.certificate == "sqrt"


def test_theta_from_asymmetric_network_derivative(asymmetric_network, kl):
    profile = ThetaProfile.from_network(asymmetric_network, kl)
    x = np.array([0.1, 0.3, 0.6, 0.9])
    fd = (profile.theta(x + 1e-6) - profile.theta(x - 1e-6)) / 2e-6
    np.testing.assert_allclose(profile.theta_prime(x), fd, rtol=1e-6, atol=1e-8)
    assert not profile.symmetric
    with pytest.raises(DomainError):
        ThetaProfile.constant(0.0)


def test_stationary_density_is_a_fixed_point(asymmetric_network, kl):
    theta = ThetaProfile.from_network(asymmetric_network, kl)
    V = Potential1D.from_network(asymmetric_network, kl)
    M, h, omega = 100, 0.5, 2.0 / 3.0
    pi = stationary_density(theta, V, h, M)
    assert pi.mass() == pytest.approx(1.0, abs=1e-14)
    result = solve_fp(theta, V, h, omega, pi, t_end=1.0, dt=stable_dt(theta, M, h, omega))
    assert result.density.l1_distance(pi) < 1e-6
    assert result.clipped == 0


def test_stationary_density_shape_and_exact_normalization():
    theta = ThetaProfile.canonical()
    exact = stationary_density(theta, None, 1.0, 200, normalization="exact")
    assert exact.meta["Z"] == pytest.approx(CANONICAL_Z, rel=1e-9)
    x = exact.centers
    np.testing.assert_allclose(exact.values, (x * (1.0 - x)) ** -0.25 / (math.sqrt(2.0) * exact.meta["Z"]),
                               rtol=1e-12)
    with pytest.raises(DomainError):
        stationary_density(theta, None, 1.0, 200, normalization="bogus")
    with pytest.raises(DomainError):
        stationary_density(theta, None, 0.0, 200)


def test_solve_fp_conserves_mass_and_relaxes():
    theta = ThetaProfile.canonical()
    M = 100
    p0 = DensityGrid1D.from_function(lambda x: 2.0 * x, M)
    pi = stationary_density(theta, None, 1.0, M)
    for scheme in ("euler", "rk2"):
        result = solve_fp(theta, None, 1.0, 1.0, p0, t_end=1.0, dt=stable_dt(theta, M), scheme=scheme)
        assert result.density.mass() == pytest.approx(1.0, abs=1e-12)
        assert result.density.l1_distance(pi) < 2e-3
        assert np.all(result.density.values >= 0.0)


def test_solve_fp_validation():
    theta = ThetaProfile.canonical()
    p0 = DensityGrid1D.uniform(100)
    with pytest.raises(UnstableTimestep):
        solve_fp(theta, None, 1.0, 1.0, p0, t_end=0.1, dt=1e-3)
    with pytest.raises(DomainError):
        solve_fp(theta, None, 1.0, 1.0, p0, t_end=0.1, dt=1e-6, scheme="rk4")
    with pytest.raises(DomainError):
        solve_fp(theta, None, 0.0, 1.0, p0, t_end=0.1, dt=1e-6)
    with pytest.raises(DomainError):
        solve_fp(theta, None, 1.0, 1.0, p0, t_end=0.01, dt=1e-6, snapshot_times=[0.02])


def test_snapshots_are_recorded_in_order():
    theta = ThetaProfile.constant(1.0)
    result = solve_fp(theta, None, 1.0, 1.0, DensityGrid1D.one_hot(20, 4), t_end=0.02,
                      dt=stable_dt(theta, 20), snapshot_times=[0.01, 0.005])
    np.testing.assert_allclose(result.snapshot_times, [0.005, 0.01])
    assert [s.meta["t"] for s in result.snapshots] == [0.005, 0.01]
    assert result.steps >= int(0.02 / stable_dt(theta, 20))


def test_canonical_coordinate():
    coordinate = wasserstein_coordinate(ThetaProfile.canonical())
    assert coordinate.Z == pytest.approx(CANONICAL_Z, rel=1e-10)
    assert coordinate.Z == pytest.approx(1.198140, abs=1e-6)
    x = np.array([0.0, 0.1, 0.5, 0.8, 1.0])
    y = coordinate(x)
    np.testing.assert_allclose(y[[0, 2, 4]], [0.0, 0.5, 1.0], atol=1e-10)
    assert np.all(np.diff(y) > 0.0)
    np.testing.assert_allclose(coordinate.length(x), incomplete_beta(x, 0.75, 0.75) / math.sqrt(2.0), rtol=1e-8)
    assert isinstance(coordinate(0.25), float)
    with pytest.raises(DomainError):
        coordinate(1.5)


def test_constant_theta_coordinate_is_linear():
    coordinate = wasserstein_coordinate(ThetaProfile.constant(4.0))
    assert coordinate.Z == pytest.approx(0.5)
    np.testing.assert_allclose(coordinate(np.array([0.2, 0.7])), [0.2, 0.7], atol=1e-12)


def test_non_positive_theta_is_rejected():
    broken = ThetaProfile(lambda x: np.asarray(x) - 0.5, lambda x: np.ones(np.shape(x)), name="broken")
    with pytest.raises(NonIntegrableTheta):
        stationary_density(broken, None, 1.0, 10)


def test_green_function_matches_method_of_images():
    spec = GreenFunctionSpec.build(ThetaProfile.constant(1.0))
    t = 0.01
    x = np.array([0.1, 0.4, 0.9])
    z = 0.3
    images = sum(np.exp(-(x - z + 2 * n) ** 2 / (4 * t)) + np.exp(-(x + z + 2 * n) ** 2 / (4 * t))
                 for n in range(-3, 4)) / math.sqrt(4 * math.pi * t)
    np.testing.assert_allclose(green_function(spec, t, x, z), images, rtol=1e-10)


def test_green_function_detailed_balance_symmetry():
    theta = ThetaProfile.canonical()
    spec = GreenFunctionSpec.build(theta)
    x, z, t = 0.2, 0.7, 0.05
    forward = green_function(spec, t, x, z) * math.sqrt(theta.theta(x))
    backward = green_function(spec, t, z, x) * math.sqrt(theta.theta(z))
    assert forward == pytest.approx(backward, rel=1e-12)
    assert spec.gap == pytest.approx(GAP)
    with pytest.raises(DomainError):
        green_function(spec, 0.0, x, z)
    with pytest.raises(DomainError):
        green_function(spec, t, 0.0, z)


def test_series_terms_and_truncation():
    spec = GreenFunctionSpec.build(ThetaProfile.canonical(), k_max=10)
    assert series_terms(spec, 0.3) == 4
    with pytest.warns(TruncationWarning):
        assert series_terms(spec, 1e-4) == 10


def test_fp_matches_green_function():
    theta = ThetaProfile.canonical()
    M = 200
    p0 = DensityGrid1D.uniform(M)
    fp = solve_fp(theta, None, 1.0, 1.0, p0, t_end=0.3, dt=stable_dt(theta, M))
    green = evolve_via_green(GreenFunctionSpec.build(theta), p0, 0.3)
    assert green.meta["terms"] == 4
    assert green.mass() == pytest.approx(1.0, abs=1e-12)
    assert fp.density.l1_distance(green) <= 2e-3


def test_slowest_mode_decays_at_the_gap():
    theta = ThetaProfile.canonical()
    M = 200
    times = [0.1, 0.2, 0.3, 0.4, 0.5]
    p0 = DensityGrid1D.from_function(lambda x: 2.0 * x, M)
    result = solve_fp(theta, None, 1.0, 1.0, p0, t_end=0.5, dt=stable_dt(theta, M), snapshot_times=times)
    mode = first_mode(wasserstein_coordinate(theta))
    projections = [s.inner_product(mode) for s in result.snapshots]
    assert -fit_decay_rate(times, projections) == pytest.approx(GAP, rel=0.02)


def test_fit_decay_rate_on_exact_exponential():
    t = np.linspace(0.0, 1.0, 6)
    assert fit_decay_rate(t, -3.0 * np.exp(-2.5 * t)) == pytest.approx(-2.5)


def test_heat_coordinate_residual_is_small():
    theta = ThetaProfile.canonical()
    M = 200
    times = [0.099, 0.1, 0.101]
    p0 = DensityGrid1D.from_function(lambda x: 2.0 * x, M)
    result = solve_fp(theta, None, 1.0, 1.0, p0, t_end=0.101, dt=stable_dt(theta, M), snapshot_times=times)
    assert heat_coordinate_residual(theta, result.snapshots, times) <= 1e-2
    with pytest.raises(DomainError):
        heat_coordinate_residual(theta, result.snapshots[:2], times[:2])
    with pytest.raises(DomainError):
        heat_coordinate_residual(theta, result.snapshots, [0.09, 0.1, 0.101])


@pytest.mark.slow
@pytest.mark.parametrize("M, tolerance", [(400, 2e-3), (1600, 5e-4)])
def test_fp_matches_green_function_acceptance(M, tolerance):
    theta = ThetaProfile.canonical()
    p0 = DensityGrid1D.uniform(M)
    fp = solve_fp(theta, None, 1.0, 1.0, p0, t_end=0.3, dt=stable_dt(theta, M))
    green = evolve_via_green(GreenFunctionSpec.build(theta), p0, 0.3)
    assert fp.density.l1_distance(green) <= tolerance
