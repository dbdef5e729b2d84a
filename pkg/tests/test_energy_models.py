"""Tests for the concrete energies, factors and model builders."""
import math

import numpy as np
import pytest

from src.services.energy_models import (
    BERNOULLI_FAMILY,
    POISSON_FAMILY,
    DenseGaussian,
    ExponentialFamilyPosterior,
    IsotropicGaussian,
    LinearFactor,
    PoissonLikelihoodFactor,
    QuadraticFactor,
    build_grid_poisson_gmrf,
    chain_precision,
    check_positive_definite,
    expfam_bounce_times,
    factors_from_precision,
    gaussian_marginal_variances,
    grid_precision,
    iso_gaussian_bounce_time,
    simulate_poisson_grid,
)
from src.services.factor_graph import FactorGraph
from src.services.ppsim import first_arrival_convex


def test_chain_precision_is_tridiagonal():
    precision = chain_precision(4, 0.3)
    assert np.allclose(np.diag(precision), 1.0)
    assert precision[0, 1] == precision[1, 0] == -0.3
    assert precision[0, 2] == 0.0


@pytest.mark.parametrize("rho", [0.0, 1.0, -0.2])
def test_chain_precision_rejects_rho_outside_unit_interval(rho):
    with pytest.raises(ValueError):
        chain_precision(4, rho)


def test_grid_precision_is_identity_plus_laplacian():
    precision = grid_precision(3, 0.5)
    assert precision.shape == (9, 9)
    assert np.allclose(precision.sum(axis=1), 1.0)
    # centre cell has four neighbours
    assert precision[4, 4] == pytest.approx(1.0 + 0.5 * 4)
    check_positive_definite(precision)


def test_indefinite_precision_is_rejected():
    with pytest.raises(ValueError):
        check_positive_definite(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        DenseGaussian(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_marginal_variances_invert_precision(chain_matrix):
    assert np.allclose(gaussian_marginal_variances(chain_matrix), np.diag(np.linalg.inv(chain_matrix)))


def test_factors_reassemble_the_precision(chain_matrix, rng):
    graph = FactorGraph(chain_matrix.shape[0], factors_from_precision(chain_matrix))
    x = rng.standard_normal(chain_matrix.shape[0])
    assert np.allclose(graph.gradient(x), chain_matrix @ x)


def test_iso_gaussian_bounce_time_closed_form():
    # <x, v> = 0: tau = sqrt(-|v|^2 log V) / |v|^2
    assert iso_gaussian_bounce_time([1.0, 0.0], [0.0, 1.0], math.exp(-1.0)) == pytest.approx(1.0)
    # <x, v> = 1: (1 + t)^2 - 1 = 3 at t = 1
    assert iso_gaussian_bounce_time([1.0, 0.0], [1.0, 0.0], math.exp(-3.0)) == pytest.approx(1.0)


def test_iso_gaussian_bounce_time_rejects_bad_draws():
    with pytest.raises(ValueError):
        iso_gaussian_bounce_time([1.0], [1.0], 0.0)
    with pytest.raises(ValueError):
        iso_gaussian_bounce_time([1.0], [0.0], 0.5)


def test_isotropic_gaussian_matches_dense_form(rng):
    iso = IsotropicGaussian(3, precision=1.5)
    dense = DenseGaussian(1.5 * np.eye(3))
    x, v = rng.standard_normal(3), rng.standard_normal(3)
    assert iso.energy(x) == pytest.approx(dense.energy(x))
    assert iso.ray_coefficients(x, v) == pytest.approx(dense.ray_coefficients(x, v))
    assert np.allclose(iso.marginal_variances(), 1.0 / 1.5)


def test_unknown_strategy_is_rejected():
    with pytest.raises(ValueError):
        DenseGaussian(np.eye(2), strategy="magic")


def test_quadratic_factor_sorts_its_neighborhood():
    factor = QuadraticFactor([2, 0], [[3.0, 0.5], [0.5, 1.0]])
    assert factor.neighborhood.tolist() == [0, 2]
    assert np.allclose(factor.matrix, [[1.0, 0.5], [0.5, 3.0]])


def test_quadratic_factor_bound_dominates_rate(rng):
    factor = QuadraticFactor([0, 1], [[0.0, -0.4], [-0.4, 0.0]])
    for _ in range(50):
        x_f, v_f = rng.standard_normal(2), rng.standard_normal(2)
        bound = factor.bound(x_f, v_f, 0.7)
        assert all(factor.rate(x_f, v_f, t) <= bound + 1e-12 for t in np.linspace(0.0, 0.7, 30))


def test_linear_factor_has_constant_rate(rng):
    factor = LinearFactor([1, 0], [2.0, -1.0])
    assert factor.coefficients.tolist() == [-1.0, 2.0]
    assert factor.bound([0.0, 0.0], [1.0, 1.0], 5.0) == pytest.approx(1.0)


def test_poisson_factor_bound_dominates_rate(rng):
    factor = PoissonLikelihoodFactor(0, 3)
    for _ in range(50):
        x_f, v_f = rng.standard_normal(1), rng.standard_normal(1)
        bound = factor.bound(x_f, v_f, 0.5)
        assert all(factor.rate(x_f, v_f, t) <= bound * (1 + 1e-12) for t in np.linspace(0.0, 0.5, 30))


def test_poisson_factor_without_counts_never_bounces_moving_down(rng):
    factor = PoissonLikelihoodFactor(0, 0)
    assert factor.first_arrival(np.array([0.3]), np.array([-1.0]), rng) == math.inf


def test_poisson_factor_rejects_negative_counts():
    with pytest.raises(ValueError):
        PoissonLikelihoodFactor(0, -1)


def test_grid_poisson_graph_shape(rng):
    _, counts = simulate_poisson_grid(3, 0.5, rng)
    graph = build_grid_poisson_gmrf(3, counts, 0.5)
    assert graph.dimension == 9
    # nine node factors, twelve edges, nine likelihood factors
    assert len(graph) == 30


def test_grid_poisson_checks_count_shape():
    with pytest.raises(ValueError):
        build_grid_poisson_gmrf(3, np.zeros((2, 2), dtype=int))


def test_expfam_component_times():
    budgets = (math.exp(-1.0), 0.5, math.exp(-1.0))
    prior, linear, normalizer = expfam_bounce_times(0.0, 1.0, 0.0, POISSON_FAMILY, budgets)
    assert prior == pytest.approx(math.sqrt(2.0))
    assert linear == math.inf
    assert normalizer == pytest.approx(math.log(2.0))


def test_expfam_linear_component_fires_against_observation():
    _, linear, _ = expfam_bounce_times(0.0, -2.0, 1.5, BERNOULLI_FAMILY, (0.5, math.exp(-3.0), 0.5))
    assert linear == pytest.approx(1.0)


@pytest.mark.parametrize("family", [POISSON_FAMILY, BERNOULLI_FAMILY])
def test_expfam_gradient_matches_energy(family):
    model = ExponentialFamilyPosterior(family, phi_y=1.0, prior_precision=0.5)
    x, h = np.array([0.3]), 1e-6
    numeric = (model.energy(x + h) - model.energy(x - h)) / (2 * h)
    assert model.gradient(x)[0] == pytest.approx(numeric, rel=1e-6)


def test_closed_form_bounce_times_match_line_search(rng):
    for _ in range(1_000):
        x, v = rng.standard_normal(3), rng.standard_normal(3)
        uniform = 1.0 - rng.random()
        tau = first_arrival_convex(
            lambda t: float(np.dot(x + v * t, x + v * t)),
            -math.log(uniform),
            derivative_on_ray=lambda t: 2.0 * float(np.dot(x + v * t, v)),
        )
        assert iso_gaussian_bounce_time(x, v, uniform) == pytest.approx(tau, rel=1e-8, abs=1e-8)


def test_resting_particle_never_bounces(rng):
    assert expfam_bounce_times(0.5, 0.0, 1.0, POISSON_FAMILY, (0.5, 0.5, 0.5)) == (math.inf, math.inf, math.inf)
    model = ExponentialFamilyPosterior(POISSON_FAMILY, phi_y=1.0)
    assert not model.bounce_time(np.array([0.5]), np.array([0.0]), rng).arrived
