"""
Bayesian logistic regression with non-negative covariates.

The posterior factorizes into a Gaussian prior and one factor per datum. For
a fixed velocity, every datum's bounce rate is bounded uniformly in time by

    bound_r(v) = sum_k 1[v_k (-1)^{y_r} >= 0] iota_{r,k} |v_k|,

and the sum of these bounds over the data only needs the class-conditional
covariate sums. Drawing a datum with probability bound_r / sum_r bound_r is
done in O(1) by first drawing a coordinate k, then a datum from the alias
table of (k, class 1[v_k < 0]).
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import expit

from src.core.config import app_config
from src.core.exceptions import EmptyDistributionError, EnvelopeViolationError
from src.data.sampler_types import CoordinateEventList, LocalTrajectory, PhaseState
from src.interfaces.energy_model import EnergyModel
from src.services.bounce_strategies import SuperpositionStrategy
from src.services.bps_core import reflect
from src.services.energy_models import iso_gaussian_quantile
from src.services.ppsim import RATIO_SLACK, exponential_arrival, exponential_budget
from src.utils.discrete_sampling import AliasTable


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LogisticData:
    """
    Labelled data for logistic regression.

    Attributes:
        covariates: (R, d) array of non-negative covariates iota_{r,k}
        labels: (R,) array of 0/1 labels
        prior_variance: variance sigma^2 of the isotropic Gaussian prior
            (``math.inf`` for a flat prior)
    """
    covariates: np.ndarray
    labels: np.ndarray
    prior_variance: float = 1.0

    def __post_init__(self):
        covariates = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        raw_labels = np.asarray(self.labels).ravel()
        if covariates.shape[0] != raw_labels.size:
            raise ValueError(f"{covariates.shape[0]} covariate rows but {raw_labels.size} labels")
        if raw_labels.size == 0:
            raise ValueError("logistic data needs at least one datum")
        if np.any(covariates < 0.0) or not np.all(np.isfinite(covariates)):
            raise ValueError("covariates must be finite and non-negative")
        if not np.all(np.isin(raw_labels, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        labels = raw_labels.astype(int)
        if not self.prior_variance > 0.0:
            raise ValueError(f"prior variance must be positive, got {self.prior_variance}")
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "labels", labels)

    @property
    def num_data(self) -> int:
        return self.labels.size

    @property
    def dimension(self) -> int:
        return self.covariates.shape[1]

    @property
    def prior_precision(self) -> float:
        return 0.0 if math.isinf(self.prior_variance) else 1.0 / self.prior_variance


def _softplus(a: np.ndarray) -> np.ndarray:
    """log(1 + e^a) without overflow."""
    return np.log1p(np.exp(-np.abs(a))) + np.maximum(a, 0.0)


def logistic_energy_grad(data: LogisticData, x: np.ndarray) -> Tuple[float, np.ndarray]:
    """Posterior energy and gradient at x."""
    x = np.asarray(x, dtype=float)
    if x.size != data.dimension:
        raise ValueError(f"x has length {x.size}, data has dimension {data.dimension}")
    activations = data.covariates @ x
    energy = 0.5 * data.prior_precision * float(np.dot(x, x))
    energy += float(np.sum(_softplus(activations) - data.labels * activations))
    residuals = expit(activations) - data.labels
    gradient = data.prior_precision * x + data.covariates.T @ residuals
    return energy, gradient


def datum_gradient(data: LogisticData, r: int, x: np.ndarray) -> np.ndarray:
    """Gradient of the r-th likelihood factor: iota_r (logistic(<iota_r, x>) - y_r)."""
    row = data.covariates[r]
    return row * (float(expit(np.dot(row, x))) - data.labels[r])


def per_datum_bound(data: LogisticData, r: int, v: np.ndarray) -> float:
    """Time-uniform bound on the r-th datum's bounce rate for velocity v."""
    v = np.asarray(v, dtype=float)
    sign = -1.0 if data.labels[r] == 1 else 1.0
    active = sign * v >= 0.0
    return float(np.sum(data.covariates[r, active] * np.abs(v[active])))


class AliasTables:
    """
    Class-conditional covariate sums iota_k^(c) and, for every (k, c), an
    alias table over the data with weights iota_{r,k} 1[y_r = c].
    """

    def __init__(self, data: LogisticData):
        self.dimension = data.dimension
        self.class_sums = np.zeros((data.dimension, 2))
        self._tables: List[List[AliasTable]] = []
        for k in range(data.dimension):
            column = data.covariates[:, k]
            row = []
            for c in (0, 1):
                weights = np.where(data.labels == c, column, 0.0)
                self.class_sums[k, c] = weights.sum()
                row.append(AliasTable(weights))
            self._tables.append(row)

    def table(self, k: int, c: int) -> AliasTable:
        return self._tables[k][c]

    def coordinate_weights(self, v: np.ndarray) -> np.ndarray:
        """|v_k| iota_k^(1[v_k < 0]) for every k."""
        v = np.asarray(v, dtype=float)
        classes = (v < 0.0).astype(int)
        return np.abs(v) * self.class_sums[np.arange(self.dimension), classes]

    def aggregate_bound(self, v: np.ndarray) -> float:
        """Sum of ``per_datum_bound`` over all data, in O(d)."""
        return float(self.coordinate_weights(v).sum())


def precompute_alias(data: LogisticData) -> AliasTables:
    tables = AliasTables(data)
    logger.debug(f"alias tables built for {data.num_data} data in dimension {data.dimension}")
    return tables


def sample_thinned_factor(tables: AliasTables, v: np.ndarray, rng: np.random.Generator) -> int:
    """
    Draw a datum index r with probability per_datum_bound(r, v) / aggregate bound.

    Raises:
        EmptyDistributionError: If the aggregate bound is zero
    """
    weights = tables.coordinate_weights(v)
    total = float(weights.sum())
    if total <= 0.0:
        raise EmptyDistributionError("no datum can fire: aggregate bound is zero")
    k = int(np.searchsorted(np.cumsum(weights), rng.random() * total, side="right"))
    k = min(k, weights.size - 1)
    while weights[k] <= 0.0:
        k -= 1
    return tables.table(k, int(v[k] < 0.0)).sample(rng)


@dataclass
class LogisticTrajectory(LocalTrajectory):
    """Local trajectory with the datum-level tallies of the subsampling sampler."""
    data_candidates: int = 0
    data_bounces: int = 0
    prior_bounces: int = 0


def logistic_local_bps(data: LogisticData, refresh_rate: float, window: float, horizon: float,
                       rng: np.random.Generator, tables: Optional[AliasTables] = None,
                       initial: Optional[PhaseState] = None, max_events: Optional[int] = None,
                       max_wall_seconds: Optional[float] = None) -> LogisticTrajectory:
    """
    Local BPS for logistic regression with subsampled datum candidates.

    One clock of rate prior_bound + data_bound + refresh_rate drives three
    outcomes: a datum candidate (drawn through the alias tables and accepted
    with probability chi_r / bound_r), a refreshment, or a prior candidate.
    The prior bound sigma^-2 max(0, <x + v Delta, v>) holds up to the window
    end because the prior rate increases along the ray. Each datum candidate
    costs exactly one datum-gradient evaluation, whatever the number of data.

    Raises:
        EnvelopeViolationError: An acceptance ratio exceeded one
    """
    if refresh_rate < 0.0:
        raise ValueError(f"refresh rate must be non-negative, got {refresh_rate}")
    if not (window > 0.0 and math.isfinite(window)):
        raise ValueError(f"window must be positive and finite, got {window}")
    if not (horizon > 0.0 and math.isfinite(horizon)):
        raise ValueError(f"horizon must be positive and finite, got {horizon}")
    if tables is None:
        tables = precompute_alias(data)
    if initial is None:
        initial = PhaseState(np.zeros(data.dimension), rng.standard_normal(data.dimension))
    event_cap = max_events if max_events is not None else app_config.max_events
    wall_cap = max_wall_seconds if max_wall_seconds is not None else app_config.max_wall_seconds

    x = initial.position.copy()
    v = initial.velocity.copy()
    precision = data.prior_precision
    result = LogisticTrajectory(
        event_lists=[CoordinateEventList(x_k, v_k) for x_k, v_k in zip(x, v)],
        horizon=horizon,
    )
    clock = 0.0
    window_end = min(window, horizon)

    def prior_bound() -> float:
        return precision * max(0.0, float(np.dot(x + v * (window_end - clock), v)))

    def record() -> None:
        for events, x_k, v_k in zip(result.event_lists, x, v):
            events.record(x_k, v_k, clock)

    prior = prior_bound()
    started = time.perf_counter()
    events = 0
    while True:
        data_bound = tables.aggregate_bound(v)
        total = prior + data_bound + refresh_rate
        tau = exponential_arrival(total, rng)
        if clock + tau >= window_end:
            if window_end >= horizon:
                break
            x = x + v * (window_end - clock)
            clock = window_end
            window_end = min(clock + window, horizon)
            prior = prior_bound()
            result.window_count += 1
            continue
        clock += tau
        x = x + v * tau

        pick = rng.random() * total
        if pick < data_bound:
            r = sample_thinned_factor(tables, v, rng)
            gradient = datum_gradient(data, r, x)
            result.data_candidates += 1
            result.gradient_evaluations += 1
            rate = max(0.0, float(np.dot(gradient, v)))
            bound = per_datum_bound(data, r, v)
            if rate > bound * (1.0 + RATIO_SLACK) + RATIO_SLACK:
                raise EnvelopeViolationError(rate, bound, clock)
            if rng.random() * bound < rate:
                v = reflect(gradient, v)
                result.bounce_count += 1
                result.data_bounces += 1
                result.bounce_factors.append(r)
                record()
                prior = prior_bound()
            else:
                result.rejection_count += 1
        elif pick < data_bound + refresh_rate:
            v = rng.standard_normal(data.dimension)
            result.refresh_count += 1
            result.refresh_times.append(clock)
            record()
            prior = prior_bound()
        else:
            rate = precision * max(0.0, float(np.dot(x, v)))
            if rate > prior * (1.0 + RATIO_SLACK) + RATIO_SLACK:
                raise EnvelopeViolationError(rate, prior, clock)
            if rng.random() * prior < rate:
                v = reflect(precision * x, v)
                result.bounce_count += 1
                result.prior_bounces += 1
                result.bounce_factors.append(-1)
                record()
                prior = prior_bound()
            else:
                result.rejection_count += 1

        events += 1
        if events >= event_cap or (events % 1024 == 0 and time.perf_counter() - started > wall_cap):
            logger.warning(f"logistic BPS stopped at t={clock:.6g} after {events} candidates (cap reached)")
            result.horizon = clock
            result.truncated = True
            break

    logger.debug(
        f"logistic BPS: {result.data_bounces} data bounces, {result.prior_bounces} prior bounces, "
        f"{result.data_candidates} datum candidates"
    )
    return result


class LogisticPosterior(EnergyModel):
    """
    The logistic posterior as a global energy. Bounce times superpose the
    exact prior time with a constant-rate process of rate sum_r bound_r, then
    thin by the exact intensity.
    """

    def __init__(self, data: LogisticData):
        super().__init__(data.dimension, SuperpositionStrategy(self._components))
        self.data = data
        self.tables = precompute_alias(data)

    def energy(self, x: np.ndarray) -> float:
        return logistic_energy_grad(self.data, x)[0]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return logistic_energy_grad(self.data, x)[1]

    def _components(self, x: np.ndarray, v: np.ndarray, rng: np.random.Generator):
        precision = self.data.prior_precision
        data_bound = self.tables.aggregate_bound(v)
        inner = float(np.dot(x, v))
        speed2 = float(np.dot(v, v))

        def prior_time() -> float:
            if precision == 0.0:
                return math.inf
            return iso_gaussian_quantile(x, v, precision)(exponential_budget(rng))

        return [
            (prior_time, lambda t: precision * max(0.0, inner + speed2 * t)),
            (lambda: exponential_arrival(data_bound, rng), lambda t: data_bound),
        ]


def synthetic_logistic_data(num_data: int, dimension: int, rng: np.random.Generator,
                            prior_variance: float = 1.0,
                            true_parameter: Optional[np.ndarray] = None) -> Tuple[LogisticData, np.ndarray]:
    """
    Covariates iid U(0.1, 1.1), labels drawn from the model at a parameter
    drawn from the prior (or given).
    """
    if num_data < 1 or dimension < 1:
        raise ValueError("need at least one datum and one dimension")
    if true_parameter is None:
        true_parameter = rng.normal(0.0, math.sqrt(prior_variance), size=dimension)
    true_parameter = np.asarray(true_parameter, dtype=float)
    covariates = rng.uniform(0.1, 1.1, size=(num_data, dimension))
    labels = (rng.random(num_data) < expit(covariates @ true_parameter)).astype(int)
    return LogisticData(covariates, labels, prior_variance), true_parameter


def load_logistic_csv(path: str, prior_variance: float = 1.0, delimiter: str = ",",
                      skip_header: bool = False) -> LogisticData:
    """
    Load one datum per row: the label, then d covariates.

    Raises:
        ValueError: On malformed rows, labels outside {0, 1} or negative covariates
    """
    table = np.loadtxt(path, delimiter=delimiter, skiprows=1 if skip_header else 0, ndmin=2)
    if table.shape[1] < 2:
        raise ValueError(f"{path}: expected a label column and at least one covariate")
    logger.info(f"Loaded {table.shape[0]} data with {table.shape[1] - 1} covariates from {path}")
    return LogisticData(table[:, 1:], table[:, 0], prior_variance)
