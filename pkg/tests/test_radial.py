"""Tests for the lumped radial process and the reducibility witness."""
import math

import numpy as np
import pytest
from scipy import stats

from src.core.exceptions import RadialCollapseError
from src.data.sampler_types import PhaseState
from src.services.bps_core import RefreshmentScheme, simulate
from src.services.energy_models import IsotropicGaussian
from src.services.estimators import lump_radial
from src.services.radial import (
    InvariantFamily,
    RadialState,
    invariant_family_density,
    radial_flow,
    radial_simulate,
    reducibility_witness,
)


def test_radial_state_validation():
    with pytest.raises(ValueError):
        RadialState(-1.0, 0.0)
    with pytest.raises(ValueError):
        RadialState(1.0, 1.5)
    assert RadialState(1.0, 1.0 + 1e-13).m == 1.0


def test_radial_flow_matches_straight_line():
    state = radial_flow(1.0, 0.0, 1.0)
    assert state.r == pytest.approx(math.sqrt(2.0))
    assert state.m == pytest.approx(1.0 / math.sqrt(2.0))


def test_radial_flow_through_origin_collapses():
    with pytest.raises(RadialCollapseError):
        radial_flow(1.0, -1.0, 1.0)


@pytest.mark.parametrize("method", ["thinning", "inversion"])
def test_jumps_point_inward(method, rng):
    trajectory = radial_simulate(RadialState(1.0, 0.3), 20.0, rng, method=method)
    assert trajectory.jump_count > 0
    assert all(state.m <= 0.0 for state in trajectory.states[1:])
    assert trajectory.times == sorted(trajectory.times)


def test_angular_momentum_is_conserved(rng):
    trajectory = radial_simulate(RadialState(1.5, -0.2), 30.0, rng)
    momentum = 1.5 * math.sqrt(1.0 - 0.04)
    for state in trajectory.states:
        assert state.r * math.sqrt(1.0 - state.m ** 2) == pytest.approx(momentum, rel=1e-9)
    final = trajectory.final_state()
    assert final.r * math.sqrt(1.0 - final.m ** 2) == pytest.approx(momentum, rel=1e-9)


def test_state_query_outside_horizon_raises(rng):
    trajectory = radial_simulate(RadialState(1.0, 0.0), 2.0, rng)
    with pytest.raises(ValueError):
        trajectory.state_at(2.5)


def test_simulation_argument_checks(rng):
    with pytest.raises(ValueError):
        radial_simulate(RadialState(0.0, 0.0), 1.0, rng)
    with pytest.raises(ValueError):
        radial_simulate(RadialState(1.0, 0.0), 1.0, rng, method="euler")


def test_family_requires_k_at_least_two():
    with pytest.raises(ValueError):
        InvariantFamily(1)
    with pytest.raises(ValueError):
        invariant_family_density(1, 1.0, 0.0)


@pytest.mark.parametrize("k", [2, 3, 4, 5, 8])
def test_family_density_is_normalized(k):
    assert InvariantFamily(k).grid_integral() == pytest.approx(1.0, abs=1e-6)


def test_family_k3_has_flat_angular_part():
    family = InvariantFamily(3)
    assert family.normalizer() == pytest.approx(math.sqrt(2.0))
    assert family.density(1.0, 0.5) == pytest.approx(family.density(1.0, -0.9))


def test_family_samples_follow_marginals(rng):
    family = InvariantFamily(3)
    r, m = family.sample(5_000, rng)
    assert np.all(r >= 0.0) and np.all(r <= family.r_max)
    assert np.all(np.abs(m) <= 1.0)
    assert stats.kstest(math.sqrt(2.0) * r, stats.chi(3).cdf).pvalue > 0.01
    assert stats.kstest(m, stats.uniform(-1.0, 2.0).cdf).pvalue > 0.01


def test_no_refreshment_never_approaches_origin(rng):
    assert reducibility_witness(200, 0.0, rng) >= 1.0 - 1e-9


def test_refreshment_breaks_the_witness(rng):
    assert reducibility_witness(refresh_rate=2.0, rng=rng, horizon=100.0) < 1.0


@pytest.mark.slow
@pytest.mark.parametrize("k", [2, 3, 5])
def test_family_is_invariant(k, rng):
    family = InvariantFamily(k)
    r0, m0 = family.sample(10_000, rng)
    finals = [radial_simulate(RadialState(r, m), 5.0, rng).final_state() for r, m in zip(r0, m0)]
    fresh_r, fresh_m = family.sample(10_000, rng)
    assert stats.ks_2samp([s.r for s in finals], fresh_r).pvalue > 0.01
    assert stats.ks_2samp([s.m for s in finals], fresh_m).pvalue > 0.01


@pytest.mark.slow
def test_lumped_bps_matches_radial_process(rng):
    model = IsotropicGaussian(3)
    scheme = RefreshmentScheme(rate=0.0)
    initial = PhaseState(np.array([1.0, 0.0, 0.0]), np.array([0.6, 0.8, 0.0]))
    lumped_r, lumped_m = [], []
    for _ in range(2_000):
        radii, cosines = lump_radial(simulate(model, scheme, initial, 2.0, rng), 2.0)
        lumped_r.append(radii[-1])
        lumped_m.append(cosines[-1])
    finals = [radial_simulate(RadialState(1.0, 0.6), 2.0, rng).final_state() for _ in range(2_000)]
    assert stats.ks_2samp(lumped_r, [s.r for s in finals]).pvalue > 0.01
    assert stats.ks_2samp(lumped_m, [s.m for s in finals]).pvalue > 0.01
