"""
First-arrival engines for one-dimensional inhomogeneous Poisson processes.

Every engine answers the same question: given the intensity chi(t) along the
current ray, when does the first event happen? "No arrival before the
horizon" is reported as ``math.inf``, never as an exception.

Engines:
    * inversion   -- tau = Xi^{-1}(-log V) for a known quantile function Xi^{-1}
    * convex      -- line search on U(x + vt) - U(x + v tau*) = -log V
    * thinning    -- adaptive thinning with local-in-time constant envelopes
    * superposition -- minimum over independent component first arrivals
"""
import logging
import math
from typing import Callable, Optional, Sequence, Union

import numpy as np

from src.core.config import app_settings
from src.core.exceptions import EnvelopeViolationError, LineSearchError
from src.data.sampler_types import ArrivalResult, IntensityEnvelope


logger = logging.getLogger(__name__)

Quantile = Callable[[float], float]
RateFunction = Callable[[float], float]
EnvelopeProvider = Callable[[float], IntensityEnvelope]
FirstArrivalSampler = Callable[[], Union[float, ArrivalResult]]

# Relative slack tolerated on acceptance ratios before calling it a violation;
# covers rounding in bounds that are tight by construction.
RATIO_SLACK = 1e-12


def exponential_budget(rng: np.random.Generator) -> float:
    """Draw -log V with V ~ U(0, 1)."""
    return float(rng.standard_exponential())


def exponential_arrival(rate: float, rng: np.random.Generator) -> float:
    """First arrival of a homogeneous process of the given rate."""
    if rate < 0.0:
        raise ValueError(f"rate must be non-negative, got {rate}")
    if rate == 0.0:
        return math.inf
    return exponential_budget(rng) / rate


def linear_rate_quantile(a: float, b: float) -> Quantile:
    """
    Quantile function of Xi(t) = integral_0^t max(0, a + b s) ds.

    Covers every sign combination: the rate may switch on later (a < 0 < b),
    be constant (b = 0) or switch off (b < 0), in which case the total mass is
    finite and large budgets return ``math.inf``.
    """
    if b > 0.0:
        t0 = max(0.0, -a / b)
        a0 = max(a, 0.0)
        mass = math.inf
    elif b == 0.0:
        t0 = 0.0
        a0 = a
        mass = math.inf if a > 0.0 else 0.0
    else:
        t0 = 0.0
        a0 = a
        mass = a * a / (2.0 * -b) if a > 0.0 else 0.0

    def quantile(exp_draw: float) -> float:
        if exp_draw <= 0.0:
            return t0
        if exp_draw > mass:
            return math.inf
        disc = a0 * a0 + 2.0 * b * exp_draw
        # Stable form of (-a0 + sqrt(disc)) / b, valid for b = 0 as well.
        return t0 + 2.0 * exp_draw / (a0 + math.sqrt(max(disc, 0.0)))

    return quantile


def first_arrival_inversion(cumulative_intensity_inverse: Quantile, exp_draw: float) -> float:
    """
    Time-scale transformation: tau = Xi^{-1}(exp_draw).

    Args:
        cumulative_intensity_inverse: quantile function of the integrated rate,
            returning ``math.inf`` when the integrated rate never reaches its
            argument
        exp_draw: exponential budget -log V

    Returns:
        float: arrival time, ``math.inf`` for "no arrival"
    """
    if exp_draw < 0.0:
        raise ValueError(f"exp_draw must be non-negative, got {exp_draw}")
    tau = float(cumulative_intensity_inverse(exp_draw))
    if math.isnan(tau):
        return math.inf
    return tau


def _minimize_on_ray(energy_on_ray: RateFunction,
                     derivative_on_ray: Optional[RateFunction],
                     tol: float, max_iter: int) -> float:
    """
    tau* = argmin_{t >= 0} of a convex function of t; ``math.inf`` when the
    function is still decreasing after the bracketing cap.
    """
    if derivative_on_ray is not None:
        if derivative_on_ray(0.0) >= 0.0:
            return 0.0
        hi = 1.0
        for _ in range(max_iter):
            if derivative_on_ray(hi) >= 0.0:
                break
            hi *= 2.0
        else:
            return math.inf
        lo = 0.0
        for _ in range(max_iter):
            if hi - lo <= tol * max(1.0, hi):
                return hi
            mid = 0.5 * (lo + hi)
            if derivative_on_ray(mid) >= 0.0:
                hi = mid
            else:
                lo = mid
        raise LineSearchError("bisection on the directional derivative did not converge")

    # Golden-section search on the energy itself.
    hi = 1.0
    for _ in range(max_iter):
        if energy_on_ray(hi) >= energy_on_ray(0.5 * hi):
            break
        hi *= 2.0
    else:
        return math.inf
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo = 0.0
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc, fd = energy_on_ray(c), energy_on_ray(d)
    for _ in range(max_iter):
        if hi - lo <= tol * max(1.0, hi):
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - inv_phi * (hi - lo)
            fc = energy_on_ray(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv_phi * (hi - lo)
            fd = energy_on_ray(d)
    else:
        raise LineSearchError("golden-section search did not converge")
    tau_star = 0.5 * (lo + hi)
    return 0.0 if tau_star <= tol else tau_star


def first_arrival_convex(energy_on_ray: RateFunction, exp_draw: float,
                         tol: float = app_settings.LINE_SEARCH_TOL,
                         derivative_on_ray: Optional[RateFunction] = None,
                         horizon: float = math.inf,
                         max_iter: int = app_settings.LINE_SEARCH_MAX_ITER) -> float:
    """
    Bounce time for a strictly convex energy along the ray.

    Solves U(x + v tau) - U(x + v tau*) = exp_draw for tau >= tau*, first
    bracketing [tau*, tau* + 2^k] by doubling, then bisecting.

    Args:
        energy_on_ray: t -> U(x + v t)
        exp_draw: exponential budget (>= 0)
        tol: tolerance on the energy increment and on the bracket width
        derivative_on_ray: optional t -> <grad U(x + v t), v> used to locate tau*
        horizon: arrivals at or beyond the horizon are reported as ``math.inf``
        max_iter: iteration cap of each search phase

    Returns:
        float: arrival time or ``math.inf``; an energy that decreases along
        the whole ray has rate zero and never arrives

    Raises:
        LineSearchError: bracketing failed although the energy keeps increasing,
            which means the energy is not convex along the ray
    """
    if exp_draw < 0.0:
        raise ValueError(f"exp_draw must be non-negative, got {exp_draw}")
    tau_star = _minimize_on_ray(energy_on_ray, derivative_on_ray, tol, max_iter)
    if tau_star >= horizon:
        return math.inf
    base = energy_on_ray(tau_star)
    if exp_draw == 0.0:
        return tau_star

    def increment(t: float) -> float:
        return energy_on_ray(t) - base

    if math.isfinite(horizon) and increment(horizon) < exp_draw:
        return math.inf

    step = 1.0
    hi = tau_star + step
    for _ in range(max_iter):
        rise = increment(hi)
        if rise >= exp_draw:
            break
        step *= 2.0
        hi = tau_star + step
    else:
        if abs(increment(hi)) <= tol:
            # Flat energy: the budget is never spent.
            return math.inf
        raise LineSearchError(
            f"energy increase {increment(hi)!r} never reached {exp_draw!r}; energy is likely not convex"
        )

    lo = tau_star if step == 1.0 else tau_star + step / 2.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gap = increment(mid) - exp_draw
        if (abs(gap) <= tol and hi - lo <= tol * max(1.0, mid)) or mid in (lo, hi):
            return mid
        if gap >= 0.0:
            hi = mid
        else:
            lo = mid
    raise LineSearchError("bisection on the energy increment did not converge")


def first_arrival_thinning(intensity: RateFunction, envelope_provider: EnvelopeProvider,
                           rng: np.random.Generator, horizon: float = math.inf,
                           max_candidates: Optional[int] = None) -> float:
    """
    Adaptive thinning with local-in-time constant envelopes.

    ``envelope_provider(s)`` returns a bound valid on [s, s + validity). A
    candidate landing at or past s + validity advances the window without an
    acceptance test; otherwise it is accepted with probability
    chi(tau) / bound.

    Args:
        intensity: t -> chi(t) along the current ray
        envelope_provider: s -> IntensityEnvelope dominating chi on its window
        rng: random stream
        horizon: candidates at or beyond it end the search with ``math.inf``
        max_candidates: optional cap on the number of envelope draws

    Raises:
        EnvelopeViolationError: chi(tau) exceeded the envelope at a test point
    """
    tau = 0.0
    candidates = 0
    while True:
        s = tau
        if s >= horizon:
            return math.inf
        envelope = envelope_provider(s)
        candidate = s + exponential_arrival(envelope.bound, rng)
        window_end = s + envelope.validity
        if candidate >= window_end:
            tau = window_end
            if math.isinf(tau):
                return math.inf
            continue
        if candidate >= horizon:
            return math.inf
        tau = candidate
        candidates += 1
        rate = intensity(tau)
        if rate > envelope.bound * (1.0 + RATIO_SLACK) + RATIO_SLACK:
            raise EnvelopeViolationError(rate, envelope.bound, tau)
        if rng.random() * envelope.bound < rate:
            return tau
        if max_candidates is not None and candidates >= max_candidates:
            logger.warning(f"thinning gave up after {candidates} rejected candidates")
            return math.inf


def first_arrival_superposition(components: Sequence[FirstArrivalSampler]) -> ArrivalResult:
    """
    Minimum of independent component first arrivals.

    Returns:
        ArrivalResult: (min time, index of the component that fired); the
        index is -1 when no component arrives.
    """
    if not components:
        raise ValueError("superposition needs at least one component")
    best_time = math.inf
    best_index = -1
    for index, sampler in enumerate(components):
        outcome = sampler()
        time = outcome.time if isinstance(outcome, ArrivalResult) else float(outcome)
        if time < best_time:
            best_time = time
            best_index = index
    return ArrivalResult(time=best_time, source_index=best_index)
