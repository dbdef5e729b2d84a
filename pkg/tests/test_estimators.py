"""Tests for path integrals, batch means, ESS and the radial diagnostics."""
import math

import numpy as np
import pytest

from src.data.sampler_types import CoordinateEventList, LocalTrajectory, PhaseState
from src.services.bps_core import RefreshmentScheme, initial_state, simulate
from src.services.energy_models import ConstantEnergy, IsotropicGaussian
from src.services.estimators import (
    batch_means_standard_error,
    bounce_inner_products,
    cumulative_integral,
    discretize,
    ess,
    ess_per_event,
    lump_radial,
    path_integral_moment,
    path_integral_variance,
    path_min_norm,
    random_walk_metropolis,
    segment_min_norm,
)
from src.services.radial import reducibility_run


def _straight_path(position, velocity, horizon, rng):
    initial = PhaseState(position, velocity)
    return simulate(ConstantEnergy(len(position)), RefreshmentScheme(rate=0.0), initial, horizon, rng)


@pytest.fixture
def unit_ramp(rng):
    # x(t) = t on [0, 2]
    return _straight_path([0.0], [1.0], 2.0, rng)


def test_single_segment_moments(unit_ramp):
    first = path_integral_moment(unit_ramp, 0, 1, batches=2)
    assert first.value == pytest.approx(1.0)
    assert first.horizon == pytest.approx(2.0)
    assert first.standard_error == pytest.approx(0.5)
    assert path_integral_moment(unit_ramp, 0, 2, batches=2).value == pytest.approx(4.0 / 3.0)


def test_variance_of_ramp(unit_ramp):
    estimate = path_integral_variance(unit_ramp, 0, batches=2)
    assert estimate.value == pytest.approx(1.0 / 3.0)
    assert estimate.standard_error >= 0.0


def test_unsupported_order_is_rejected(unit_ramp):
    with pytest.raises(ValueError):
        path_integral_moment(unit_ramp, 0, 3)


def test_batch_count_must_allow_a_spread(unit_ramp):
    with pytest.raises(ValueError):
        batch_means_standard_error(unit_ramp, 0, batches=1)


def test_cumulative_integral_at_intermediate_times(unit_ramp):
    values = cumulative_integral(unit_ramp, 0, 1, np.array([0.0, 1.0, 2.0]))
    assert np.allclose(values, [0.0, 0.5, 2.0])


def test_discretize_on_mesh(unit_ramp):
    samples = discretize(unit_ramp, 0.5)
    assert samples.shape == (5, 1)
    assert np.allclose(samples[:, 0], [0.0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(ValueError):
        discretize(unit_ramp, 0.0)


def test_estimators_accept_local_trajectories():
    events = CoordinateEventList(0.0, 1.0)
    events.record(1.0, -1.0, 1.0)
    path = LocalTrajectory(event_lists=[events], horizon=2.0)
    # tent: up to 1 then back to 0
    assert path_integral_moment(path, 0, 1, batches=2).value == pytest.approx(0.5)
    assert path_integral_moment(path, 0, 2, batches=2).value == pytest.approx(1.0 / 3.0)
    assert np.allclose(discretize(path, 0.5)[:, 0], [0.0, 0.5, 1.0, 0.5, 0.0])


def test_ess_of_independent_draws(rng):
    result = ess(rng.standard_normal(10_000))
    assert not result.degenerate
    assert 5_000 < result.value < 16_000


def test_ess_of_ar1_chain_matches_its_autocorrelation_time(rng):
    n, phi = 100_000, 0.9
    noise = rng.standard_normal(n)
    chain = np.empty(n)
    chain[0] = noise[0] / math.sqrt(1.0 - phi * phi)
    for i in range(1, n):
        chain[i] = phi * chain[i - 1] + noise[i]
    ratio = ess(chain).value / n
    exact = (1.0 - phi) / (1.0 + phi)
    assert 0.3 * exact <= ratio <= 1.7 * exact


def test_ess_of_constant_input_is_degenerate():
    result = ess(np.ones(400))
    assert result.degenerate
    assert result.value == 400.0


def test_ess_needs_enough_samples(rng):
    with pytest.raises(ValueError):
        ess(rng.standard_normal(10))


def test_ess_per_event(rng):
    path = _straight_path([0.0], [1.0], 200.0, rng)
    assert ess_per_event(path, 0, 1.0, 0) is None
    assert ess_per_event(path, 0, 1.0, 10) > 0.0


def test_segment_min_norm():
    assert segment_min_norm([1.0, 1.0], [-1.0, 0.0], 5.0) == pytest.approx(1.0)
    assert segment_min_norm([1.0, 1.0], [-1.0, 0.0], 0.5) == pytest.approx(math.hypot(0.5, 1.0))
    assert segment_min_norm([1.0, 1.0], [1.0, 0.0], 5.0) == pytest.approx(math.sqrt(2.0))
    assert segment_min_norm([3.0, 4.0], [0.0, 0.0], 1.0) == pytest.approx(5.0)


def test_path_min_norm_finds_interior_minimum(rng):
    path = _straight_path([-1.0, 1.0], [1.0, 0.0], 3.0, rng)
    assert path_min_norm(path) == pytest.approx(1.0)


def test_lump_radial_on_straight_line(rng):
    path = _straight_path([-1.0, 1.0], [1.0, 0.0], 3.0, rng)
    radii, cosines = lump_radial(path, 1.0)
    assert np.allclose(radii, [math.sqrt(2.0), 1.0, math.sqrt(2.0), math.sqrt(5.0)])
    assert np.allclose(cosines, [-1.0 / math.sqrt(2.0), 0.0, 1.0 / math.sqrt(2.0), 2.0 / math.sqrt(5.0)])


def test_bounce_inner_products_without_refreshment(rng):
    trajectory = reducibility_run(50, 0.0, rng)
    inner = bounce_inner_products(trajectory)
    assert inner.size == len(trajectory) - 1
    assert np.all(inner <= 1e-12)


def test_random_walk_metropolis_on_standard_normal(rng):
    samples, acceptance = random_walk_metropolis(
        lambda x: -0.5 * float(x @ x), np.zeros(1), 1.0, 20_000, rng, burn_in=500
    )
    assert samples.shape == (20_000, 1)
    assert 0.5 < acceptance < 0.9
    assert abs(samples.mean()) < 0.1
    assert samples.var() == pytest.approx(1.0, abs=0.15)


def test_random_walk_metropolis_rejects_bad_step(rng):
    with pytest.raises(ValueError):
        random_walk_metropolis(lambda x: 0.0, np.zeros(1), 0.0, 10, rng)


def test_discretized_mean_stays_within_riemann_bound(rng):
    scheme = RefreshmentScheme(rate=1.0)
    path = simulate(IsotropicGaussian(3), scheme, initial_state(3, scheme, rng), 100.0, rng)
    mesh = 1e-3
    # left Riemann sum over the intervals [l mesh, (l + 1) mesh)
    samples = discretize(path, mesh)[:-1]
    for k in range(3):
        speed = float(np.max(np.abs(path.coordinate_segments(k)[3])))
        difference = abs(samples[:, k].mean() - path_integral_moment(path, k, 1).value)
        assert difference <= speed * mesh
