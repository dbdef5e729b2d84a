"""
Bounce-time strategies: adapters binding an energy model's ray to one of the
first-arrival engines of ``ppsim``.
"""
import logging
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from src.core.config import app_settings
from src.core.exceptions import EnvelopeViolationError
from src.data.sampler_types import ArrivalResult
from src.interfaces.energy_model import BounceTimeStrategy, EnergyModel
from src.services.ppsim import (
    EnvelopeProvider,
    FirstArrivalSampler,
    Quantile,
    RateFunction,
    RATIO_SLACK,
    exponential_budget,
    first_arrival_convex,
    first_arrival_inversion,
    first_arrival_superposition,
    first_arrival_thinning,
)


logger = logging.getLogger(__name__)

QuantileFactory = Callable[[np.ndarray, np.ndarray], Quantile]
EnvelopeFactory = Callable[[np.ndarray, np.ndarray], EnvelopeProvider]
Component = Tuple[FirstArrivalSampler, RateFunction]
ComponentFactory = Callable[[np.ndarray, np.ndarray, np.random.Generator], Sequence[Component]]


class InversionStrategy(BounceTimeStrategy):
    """Time-scale transformation with a model-supplied quantile function."""

    kind = "inversion"

    def __init__(self, quantile_factory: QuantileFactory):
        self.quantile_factory = quantile_factory

    def first_arrival(self, model: EnergyModel, x: np.ndarray, v: np.ndarray,
                      rng: np.random.Generator, horizon: float = math.inf) -> ArrivalResult:
        exp_draw = exponential_budget(rng)
        tau = first_arrival_inversion(self.quantile_factory(x, v), exp_draw)
        if tau >= horizon:
            tau = math.inf
        return ArrivalResult(time=tau, exp_draw=exp_draw)


class ConvexStrategy(BounceTimeStrategy):
    """Line search on U(x + vt) for energies that are strictly convex along rays."""

    kind = "convex"

    def __init__(self, tol: float = app_settings.LINE_SEARCH_TOL,
                 max_iter: int = app_settings.LINE_SEARCH_MAX_ITER):
        self.tol = tol
        self.max_iter = max_iter

    def first_arrival(self, model: EnergyModel, x: np.ndarray, v: np.ndarray,
                      rng: np.random.Generator, horizon: float = math.inf) -> ArrivalResult:
        exp_draw = exponential_budget(rng)
        tau = first_arrival_convex(
            lambda t: model.energy(x + v * t),
            exp_draw,
            tol=self.tol,
            derivative_on_ray=lambda t: model.directional_derivative(x, v, t),
            horizon=horizon,
            max_iter=self.max_iter,
        )
        return ArrivalResult(time=tau, exp_draw=exp_draw)


class ThinningStrategy(BounceTimeStrategy):
    """Adaptive thinning with envelopes built from the current ray."""

    kind = "thinning"

    def __init__(self, envelope_factory: EnvelopeFactory, max_candidates: Optional[int] = None):
        self.envelope_factory = envelope_factory
        self.max_candidates = max_candidates

    def first_arrival(self, model: EnergyModel, x: np.ndarray, v: np.ndarray,
                      rng: np.random.Generator, horizon: float = math.inf) -> ArrivalResult:
        tau = first_arrival_thinning(
            lambda t: model.rate_on_ray(x, v, t),
            self.envelope_factory(x, v),
            rng,
            horizon=horizon,
            max_candidates=self.max_candidates,
        )
        return ArrivalResult(time=tau)


class SuperpositionStrategy(BounceTimeStrategy):
    """
    Superposition of component processes followed by thinning.

    ``component_factory(x, v, rng)`` returns pairs (sampler, rate) whose
    rates sum to a bound on the model's intensity along the ray. The minimum
    component arrival is accepted with probability chi(tau) / sum_j rate_j(tau);
    on rejection the components are rebuilt from the candidate point.
    """

    kind = "superposition"

    def __init__(self, component_factory: ComponentFactory):
        self.component_factory = component_factory

    def first_arrival(self, model: EnergyModel, x: np.ndarray, v: np.ndarray,
                      rng: np.random.Generator, horizon: float = math.inf) -> ArrivalResult:
        elapsed = 0.0
        while True:
            start = x + v * elapsed
            components = self.component_factory(start, v, rng)
            candidate = first_arrival_superposition([sampler for sampler, _ in components])
            if not candidate.arrived:
                return ArrivalResult(time=math.inf, source_index=-1)
            tau = elapsed + candidate.time
            if tau >= horizon:
                return ArrivalResult(time=math.inf, source_index=-1)
            bound = sum(rate(candidate.time) for _, rate in components)
            rate = model.rate_on_ray(x, v, tau)
            if rate > bound * (1.0 + RATIO_SLACK) + RATIO_SLACK:
                raise EnvelopeViolationError(rate, bound, tau)
            if rng.random() * bound < rate:
                return ArrivalResult(time=tau, source_index=candidate.source_index)
            elapsed = tau
