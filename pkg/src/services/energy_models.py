"""
Concrete energy models and factors.

Gaussian energies have a linear directional derivative along any ray,
<grad U(x + vt), v> = a + b t, so their bounce times are exact inversions of
``linear_rate_quantile`` and their thinning bounds are max(0, a, a + b Delta).
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy import linalg
from scipy.special import expit

from src.data.sampler_types import IntensityEnvelope
from src.interfaces.energy_model import BounceTimeStrategy, EnergyModel
from src.interfaces.factor import Factor
from src.services.bounce_strategies import (
    ConvexStrategy,
    InversionStrategy,
    SuperpositionStrategy,
    ThinningStrategy,
)
from src.services.factor_graph import FactorGraph
from src.services.ppsim import (
    exponential_arrival,
    exponential_budget,
    first_arrival_convex,
    first_arrival_inversion,
    linear_rate_quantile,
)


logger = logging.getLogger(__name__)

GAUSSIAN_STRATEGIES = ("inversion", "convex", "thinning")


def _linear_envelopes(a: float, b: float, window: float):
    """Envelopes of max(0, a + b t) over consecutive windows of length ``window``."""

    def provider(s: float) -> IntensityEnvelope:
        return IntensityEnvelope(max(0.0, a + b * s, a + b * (s + window)), window)

    return provider


def _gaussian_strategy(model: "DenseGaussian", strategy: str, window: float) -> BounceTimeStrategy:
    if strategy == "inversion":
        return InversionStrategy(lambda x, v: linear_rate_quantile(*model.ray_coefficients(x, v)))
    if strategy == "convex":
        return ConvexStrategy()
    if strategy == "thinning":
        if not (window > 0.0 and math.isfinite(window)):
            raise ValueError(f"thinning needs a positive finite window, got {window}")
        return ThinningStrategy(lambda x, v: _linear_envelopes(*model.ray_coefficients(x, v), window))
    raise ValueError(f"unknown Gaussian bounce strategy {strategy!r}; expected one of {GAUSSIAN_STRATEGIES}")


def check_positive_definite(precision: np.ndarray) -> None:
    """Raise ValueError unless ``precision`` is symmetric positive definite."""
    if precision.ndim != 2 or precision.shape[0] != precision.shape[1]:
        raise ValueError(f"precision must be square, got shape {precision.shape}")
    if not np.allclose(precision, precision.T):
        raise ValueError("precision matrix is not symmetric")
    try:
        linalg.cho_factor(precision)
    except linalg.LinAlgError as e:
        raise ValueError(f"precision matrix is not positive definite: {e}") from e


def gaussian_marginal_variances(precision: np.ndarray) -> np.ndarray:
    """diag(P^{-1}) through a Cholesky solve."""
    factor = linalg.cho_factor(precision)
    return np.diag(linalg.cho_solve(factor, np.eye(precision.shape[0])))


class DenseGaussian(EnergyModel):
    """U(x) = 1/2 (x - mu)^T P (x - mu) for a dense precision P."""

    def __init__(self, precision: np.ndarray, mean: Optional[np.ndarray] = None,
                 strategy: str = "inversion", window: float = 1.0):
        precision = np.asarray(precision, dtype=float)
        check_positive_definite(precision)
        super().__init__(precision.shape[0])
        self.precision = precision
        self.mean = np.zeros(self.dimension) if mean is None else np.asarray(mean, dtype=float)
        self.set_strategy(_gaussian_strategy(self, strategy, window))

    def energy(self, x: np.ndarray) -> float:
        centered = x - self.mean
        return 0.5 * float(centered @ self.precision @ centered)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.precision @ (x - self.mean)

    def ray_coefficients(self, x: np.ndarray, v: np.ndarray) -> Tuple[float, float]:
        """(a, b) with <grad U(x + vt), v> = a + b t."""
        return float(np.dot(self.gradient(x), v)), float(v @ self.precision @ v)

    def marginal_variances(self) -> np.ndarray:
        return gaussian_marginal_variances(self.precision)


def iso_gaussian_quantile(x: np.ndarray, v: np.ndarray, precision: float):
    """Quantile of the integrated rate for U = (precision / 2) |x|^2; a resting particle never bounces."""
    speed2 = float(np.dot(v, v))
    inner = float(np.dot(x, v))

    def quantile(exp_draw: float) -> float:
        if speed2 == 0.0:
            return math.inf
        positive = max(inner, 0.0)
        return (-inner + math.sqrt(positive * positive + 2.0 * speed2 * exp_draw / precision)) / speed2

    return quantile


def iso_gaussian_bounce_time(x: np.ndarray, v: np.ndarray, uniform_draw: float,
                             precision: float = 2.0) -> float:
    """
    Closed-form bounce time for U(x) = (precision / 2) |x|^2.

    With the default precision 2 (U = |x|^2) this is
        (-<x,v> + sqrt(-|v|^2 log V)) / |v|^2                 if <x,v> <= 0
        (-<x,v> + sqrt(<x,v>^2 - |v|^2 log V)) / |v|^2        otherwise.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ValueError("velocity must be non-zero")
    if not 0.0 < uniform_draw <= 1.0:
        raise ValueError(f"uniform draw must lie in (0, 1], got {uniform_draw}")
    return iso_gaussian_quantile(x, v, precision)(-math.log(uniform_draw))


class IsotropicGaussian(DenseGaussian):
    """
    U(x) = (precision / 2) |x|^2; precision 2 gives U = |x|^2 with
    per-coordinate variance 1/2, precision 1 the standard normal.
    """

    def __init__(self, dimension: int, precision: float = 2.0, strategy: str = "inversion",
                 window: float = 1.0):
        if precision <= 0.0:
            raise ValueError(f"precision must be positive, got {precision}")
        EnergyModel.__init__(self, dimension)
        self.scalar_precision = float(precision)
        self.mean = np.zeros(dimension)
        if strategy == "inversion":
            self.set_strategy(InversionStrategy(lambda x, v: iso_gaussian_quantile(x, v, self.scalar_precision)))
        else:
            self.set_strategy(_gaussian_strategy(self, strategy, window))

    @property
    def precision(self) -> np.ndarray:
        return self.scalar_precision * np.eye(self.dimension)

    def energy(self, x: np.ndarray) -> float:
        return 0.5 * self.scalar_precision * float(np.dot(x, x))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.scalar_precision * np.asarray(x, dtype=float)

    def ray_coefficients(self, x: np.ndarray, v: np.ndarray) -> Tuple[float, float]:
        return self.scalar_precision * float(np.dot(x, v)), self.scalar_precision * float(np.dot(v, v))

    def marginal_variances(self) -> np.ndarray:
        return np.full(self.dimension, 1.0 / self.scalar_precision)


class ConstantEnergy(EnergyModel):
    """U = 0: no bounce ever happens."""

    def __init__(self, dimension: int):
        super().__init__(dimension, InversionStrategy(lambda x, v: linear_rate_quantile(0.0, 0.0)))

    def energy(self, x: np.ndarray) -> float:
        return 0.0

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(self.dimension)


class QuadraticFactor(Factor):
    """U_f(x_f) = 1/2 x_f^T A x_f - b^T x_f; A symmetric, possibly indefinite."""

    def __init__(self, neighborhood: Sequence[int], matrix: np.ndarray, linear: Optional[np.ndarray] = None):
        order = np.argsort(np.asarray(neighborhood))
        super().__init__(neighborhood)
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.shape != (self.size, self.size):
            raise ValueError(f"matrix shape {matrix.shape} does not match neighborhood size {self.size}")
        self.matrix = matrix[np.ix_(order, order)]
        self.linear = np.zeros(self.size) if linear is None else np.asarray(linear, dtype=float)[order]

    def energy(self, x_f: np.ndarray) -> float:
        return 0.5 * float(x_f @ self.matrix @ x_f) - float(np.dot(self.linear, x_f))

    def gradient(self, x_f: np.ndarray) -> np.ndarray:
        return self.matrix @ x_f - self.linear

    def _coefficients(self, x_f: np.ndarray, v_f: np.ndarray) -> Tuple[float, float]:
        return float(np.dot(self.gradient(x_f), v_f)), float(v_f @ self.matrix @ v_f)

    def first_arrival(self, x_f, v_f, rng, horizon=math.inf) -> float:
        tau = first_arrival_inversion(linear_rate_quantile(*self._coefficients(x_f, v_f)), exponential_budget(rng))
        return tau if tau < horizon else math.inf

    def bound(self, x_f, v_f, window) -> float:
        a, b = self._coefficients(x_f, v_f)
        return max(0.0, a, a + b * window)


class LinearFactor(Factor):
    """U_f(x_f) = c^T x_f; constant rate max(0, <c, v_f>)."""

    def __init__(self, neighborhood: Sequence[int], coefficients: Sequence[float]):
        order = np.argsort(np.asarray(neighborhood))
        super().__init__(neighborhood)
        self.coefficients = np.asarray(coefficients, dtype=float)[order]

    def energy(self, x_f):
        return float(np.dot(self.coefficients, x_f))

    def gradient(self, x_f):
        return self.coefficients.copy()

    def first_arrival(self, x_f, v_f, rng, horizon=math.inf) -> float:
        tau = exponential_arrival(max(0.0, float(np.dot(self.coefficients, v_f))), rng)
        return tau if tau < horizon else math.inf

    def bound(self, x_f, v_f, window) -> float:
        return max(0.0, float(np.dot(self.coefficients, v_f)))


class PoissonLikelihoodFactor(Factor):
    """Poisson count y with log-rate x_k: U = exp(x_k) - y x_k."""

    def __init__(self, coordinate: int, count: int):
        if count < 0:
            raise ValueError(f"Poisson counts must be non-negative, got {count}")
        super().__init__([coordinate])
        self.count = int(count)

    def energy(self, x_f):
        return float(math.exp(x_f[0]) - self.count * x_f[0])

    def gradient(self, x_f):
        return np.array([math.exp(x_f[0]) - self.count])

    def first_arrival(self, x_f, v_f, rng, horizon=math.inf) -> float:
        x0, v0 = float(x_f[0]), float(v_f[0])
        y = self.count
        if v0 == 0.0 or (y == 0 and v0 < 0.0):
            return math.inf
        return first_arrival_convex(
            lambda t: math.exp(x0 + v0 * t) - y * (x0 + v0 * t),
            exponential_budget(rng),
            derivative_on_ray=lambda t: v0 * (math.exp(x0 + v0 * t) - y),
            horizon=horizon,
        )

    def bound(self, x_f, v_f, window) -> float:
        # The rate v (exp(x + vt) - y) increases in t.
        return max(self.rate(x_f, v_f, 0.0), self.rate(x_f, v_f, window))


def factors_from_precision(precision: np.ndarray) -> list:
    """One node factor per diagonal entry, one pair factor per non-zero off-diagonal entry."""
    dimension = precision.shape[0]
    factors = [QuadraticFactor([k], [[precision[k, k]]]) for k in range(dimension)]
    rows, cols = np.nonzero(np.triu(precision, k=1))
    for i, j in zip(rows, cols):
        p = precision[i, j]
        factors.append(QuadraticFactor([i, j], [[0.0, p], [p, 0.0]]))
    return factors


def chain_precision(dimension: int, rho: float) -> np.ndarray:
    """Tridiagonal precision: unit diagonal, -rho on the first off-diagonals."""
    if dimension < 2:
        raise ValueError(f"a chain needs at least two coordinates, got {dimension}")
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    precision = np.eye(dimension)
    index = np.arange(dimension - 1)
    precision[index, index + 1] = -rho
    precision[index + 1, index] = -rho
    return precision


def build_chain_gmrf(dimension: int, rho: float) -> FactorGraph:
    """Chain Gaussian Markov random field with ``chain_precision(dimension, rho)``."""
    precision = chain_precision(dimension, rho)
    check_positive_definite(precision)
    return FactorGraph(dimension, factors_from_precision(precision))


def grid_precision(side: int, rho: float = 0.5) -> np.ndarray:
    """
    Grid precision I + rho L, L the graph Laplacian of the side x side grid;
    each edge contributes the penalty (rho / 2)(x_i - x_j)^2.
    """
    if side < 2:
        raise ValueError(f"grid side must be at least 2, got {side}")
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    laplacian = nx.laplacian_matrix(nx.grid_2d_graph(side, side), nodelist=[
        (i, j) for i in range(side) for j in range(side)
    ]).toarray().astype(float)
    return np.eye(side * side) + rho * laplacian


def build_grid_poisson_gmrf(side: int, counts: np.ndarray, rho: float = 0.5) -> FactorGraph:
    """
    Latent grid GMRF with Poisson observations y_{ij} ~ Poisson(exp(x_{ij}));
    coordinates are cells in row-major order.
    """
    counts = np.asarray(counts)
    if counts.shape != (side, side):
        raise ValueError(f"counts must have shape ({side}, {side}), got {counts.shape}")
    if np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0)):
        raise ValueError("counts must be non-negative integers")
    precision = grid_precision(side, rho)
    check_positive_definite(precision)
    factors = factors_from_precision(precision)
    factors.extend(PoissonLikelihoodFactor(k, int(y)) for k, y in enumerate(counts.ravel()))
    return FactorGraph(side * side, factors)


def simulate_poisson_grid(side: int, rho: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Draw a latent field from the grid prior and Poisson counts given it."""
    precision = grid_precision(side, rho)
    cholesky = linalg.cholesky(precision, lower=False)
    latent = linalg.solve_triangular(cholesky, rng.standard_normal(side * side))
    return latent.reshape(side, side), rng.poisson(np.exp(latent)).reshape(side, side)


@dataclass(frozen=True)
class ExponentialFamily:
    """Univariate natural exponential family with log-normalizer A."""
    name: str
    log_normalizer: Callable[[float], float]
    inverse: Callable[[float], float]
    mean: Callable[[float], float]


def _softplus(a: float) -> float:
    return math.log1p(math.exp(-abs(a))) + max(a, 0.0)


def _softplus_inverse(y: float) -> float:
    if y <= 0.0:
        return math.nan
    return math.log(math.expm1(y)) if y < 30.0 else y + math.log1p(-math.exp(-y))


def _log_or_nan(y: float) -> float:
    return math.log(y) if y > 0.0 else math.nan


POISSON_FAMILY = ExponentialFamily("poisson", math.exp, _log_or_nan, math.exp)
BERNOULLI_FAMILY = ExponentialFamily("bernoulli", _softplus, _softplus_inverse, lambda a: float(expit(a)))
FAMILIES = {family.name: family for family in (POISSON_FAMILY, BERNOULLI_FAMILY)}


def _prior_time(x: float, v: float, exp_draw: float, prior_precision: float) -> float:
    return iso_gaussian_quantile(np.array([x]), np.array([v]), prior_precision)(exp_draw)


def _linear_time(v: float, phi: float, exp_draw: float) -> float:
    slope = v * phi
    return exp_draw / -slope if slope < 0.0 else math.inf


def _normalizer_time(x: float, v: float, exp_draw: float, family: ExponentialFamily) -> float:
    if v == 0.0:
        return math.inf
    try:
        target = family.inverse(exp_draw + family.log_normalizer(x))
    except (OverflowError, ValueError):
        return math.inf
    if not math.isfinite(target):
        return math.inf
    tau = (target - x) / v
    return tau if tau > 0.0 else math.inf


def expfam_bounce_times(x: float, v: float, phi_y: float, family: ExponentialFamily,
                        draws: Tuple[float, float, float], prior_precision: float = 1.0
                        ) -> Tuple[float, float, float]:
    """
    Component bounce times of U(x) = (prior_precision / 2) x^2 - x phi(y) + A(x).

    Args:
        draws: uniforms (V1, V2, V3) in (0, 1], one per component

    Returns:
        Tuple of the prior, linear and log-normalizer times (``math.inf`` for none)
    """
    budgets = [-math.log(draw) for draw in draws]
    return (
        _prior_time(x, v, budgets[0], prior_precision),
        _linear_time(v, phi_y, budgets[1]),
        _normalizer_time(x, v, budgets[2], family),
    )


class ExponentialFamilyPosterior(EnergyModel):
    """
    One-dimensional posterior: Gaussian prior and one observation of a natural
    exponential family, U(x) = (p / 2) x^2 - x phi(y) + A(x).

    Bounce times superpose the three components, then thin by chi / sum of rates.
    """

    def __init__(self, family: ExponentialFamily, phi_y: float, prior_precision: float = 1.0):
        super().__init__(1, SuperpositionStrategy(self._components))
        self.family = family
        self.phi_y = float(phi_y)
        self.prior_precision = float(prior_precision)

    def energy(self, x: np.ndarray) -> float:
        x0 = float(x[0])
        return 0.5 * self.prior_precision * x0 * x0 - x0 * self.phi_y + self.family.log_normalizer(x0)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x0 = float(x[0])
        return np.array([self.prior_precision * x0 - self.phi_y + self.family.mean(x0)])

    def _components(self, x: np.ndarray, v: np.ndarray, rng: np.random.Generator):
        x0, v0 = float(x[0]), float(v[0])
        p, phi, family = self.prior_precision, self.phi_y, self.family
        return [
            (lambda: _prior_time(x0, v0, exponential_budget(rng), p),
             lambda t: max(0.0, p * (x0 + v0 * t) * v0)),
            (lambda: _linear_time(v0, phi, exponential_budget(rng)),
             lambda t: max(0.0, -v0 * phi)),
            (lambda: _normalizer_time(x0, v0, exponential_budget(rng), family),
             lambda t: max(0.0, family.mean(x0 + v0 * t) * v0)),
        ]
