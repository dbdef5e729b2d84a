"""
Global bouncy particle sampler: intensity, reflection, refreshment and the
event loop producing a piecewise-linear trajectory.
"""
import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from src.core.config import app_config, app_settings
from src.core.exceptions import DegenerateBounceError, NormDriftError
from src.data.sampler_types import EventKind, PhaseState, Trajectory
from src.interfaces.energy_model import EnergyModel
from src.services.ppsim import exponential_arrival


logger = logging.getLogger(__name__)

# Wall-clock cap is checked every this many events.
_WALL_CHECK_EVERY = 1024


class RefreshKind(str, Enum):
    GLOBAL_GAUSSIAN = "global_gaussian"
    RESTRICTED_SPHERE = "restricted_sphere"
    RESTRICTED_PARTIAL = "restricted_partial"
    LOCAL = "local"


@dataclass(frozen=True)
class RefreshmentScheme:
    """
    Velocity refreshment law and its rate.

    ``alpha`` and ``beta`` parameterize the Beta law of the partial-refresh
    angle (theta = 2 pi Beta(alpha, beta)); they are ignored by other kinds.
    """
    kind: RefreshKind = RefreshKind.GLOBAL_GAUSSIAN
    rate: float = 1.0
    alpha: float = 1.0
    beta: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "kind", RefreshKind(self.kind))
        if not (self.rate >= 0.0 and math.isfinite(self.rate)):
            raise ValueError(f"refresh rate must be finite and non-negative, got {self.rate}")
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise ValueError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")

    @property
    def is_restricted(self) -> bool:
        return self.kind in (RefreshKind.RESTRICTED_SPHERE, RefreshKind.RESTRICTED_PARTIAL)


def intensity(model: EnergyModel, z: PhaseState) -> float:
    """Bounce rate max(0, <grad U(x), v>) at the phase state z."""
    return max(0.0, float(np.dot(model.gradient(z.position), z.velocity)))


def reflect(gradient: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Elastic reflection of v against the hyperplane orthogonal to ``gradient``.

    Raises:
        DegenerateBounceError: If the gradient is zero
    """
    gradient = np.asarray(gradient, dtype=float)
    v = np.asarray(v, dtype=float)
    squared_norm = float(np.dot(gradient, gradient))
    if squared_norm == 0.0:
        raise DegenerateBounceError("cannot reflect against a zero gradient")
    return v - (2.0 * float(np.dot(gradient, v)) / squared_norm) * gradient


def _uniform_sphere(dimension: int, rng: np.random.Generator) -> np.ndarray:
    while True:
        draw = rng.standard_normal(dimension)
        norm = np.linalg.norm(draw)
        if norm > 0.0:
            return draw / norm


def partial_refresh_direction(v: np.ndarray, beta_draw: float, rng: np.random.Generator) -> np.ndarray:
    """
    Unit vector at angle 2 pi * beta_draw from v / |v|, uniform over that cone
    section. In one dimension the only directions are +-v/|v|.
    """
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("partial refreshment needs a non-zero velocity")
    direction = v / norm
    theta = 2.0 * math.pi * beta_draw
    if theta == 0.0:
        return direction
    if v.size == 1:
        return direction if math.cos(theta) >= 0.0 else -direction
    while True:
        draw = rng.standard_normal(v.size)
        orthogonal = draw - np.dot(draw, direction) * direction
        orthogonal_norm = np.linalg.norm(orthogonal)
        if orthogonal_norm > 0.0:
            break
    return math.cos(theta) * direction + math.sin(theta) * (orthogonal / orthogonal_norm)


def refresh(scheme: RefreshmentScheme, v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw a new velocity according to the scheme."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("velocity must be finite")
    if scheme.kind is RefreshKind.GLOBAL_GAUSSIAN:
        return rng.standard_normal(v.size)
    if scheme.kind is RefreshKind.RESTRICTED_SPHERE:
        return _uniform_sphere(v.size, rng)
    if scheme.kind is RefreshKind.RESTRICTED_PARTIAL:
        return partial_refresh_direction(v, float(rng.beta(scheme.alpha, scheme.beta)), rng)
    raise ValueError("local refreshment acts on a factor graph; use factor_graph.local_refresh")


def initial_velocity(scheme: RefreshmentScheme, dimension: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary velocity law of the scheme: unit sphere if restricted, else standard normal."""
    if scheme.is_restricted:
        return _uniform_sphere(dimension, rng)
    return rng.standard_normal(dimension)


def initial_state(dimension: int, scheme: RefreshmentScheme, rng: np.random.Generator,
                  position: Optional[np.ndarray] = None) -> PhaseState:
    if position is None:
        position = np.zeros(dimension)
    return PhaseState(position, initial_velocity(scheme, dimension, rng))


def simulate(model: EnergyModel, scheme: RefreshmentScheme, initial: PhaseState, horizon: float,
             rng: np.random.Generator, max_events: Optional[int] = None,
             max_wall_seconds: Optional[float] = None) -> Trajectory:
    """
    Run the global BPS on [0, horizon].

    Each step races the model's bounce time against an Exp(rate) refreshment
    clock; a tie counts as a refreshment. The velocity is never renormalized:
    its norm between refreshments must stay within the drift tolerance.

    Args:
        model: Target energy with its bounce-time strategy
        scheme: Refreshment law (not ``local``)
        initial: Starting phase state
        horizon: Final time T; may be infinite when ``max_events`` is given
        rng: Random stream shared by the bounce engine and the refresh clock
        max_events: Event cap (bounces + refreshments); defaults to the configured cap
        max_wall_seconds: Wall-clock cap; defaults to the configured cap

    Returns:
        Trajectory: connected segments, the last one closed by ``horizon``
        unless a cap stopped the run (``trajectory.truncated`` is then set)

    Raises:
        DegenerateBounceError: A bounce landed on a zero gradient
        NormDriftError: Reflections changed the speed beyond tolerance
    """
    if scheme.kind is RefreshKind.LOCAL:
        raise ValueError("the global sampler does not support local refreshment")
    if initial.dimension != model.dimension:
        raise ValueError(f"initial state has dimension {initial.dimension}, model has {model.dimension}")
    if not horizon > 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if math.isinf(horizon) and max_events is None:
        raise ValueError("an infinite horizon needs an event cap")
    event_cap = max_events if max_events is not None else app_config.max_events
    wall_cap = max_wall_seconds if max_wall_seconds is not None else app_config.max_wall_seconds

    trajectory = Trajectory(model.dimension)
    x = initial.position.copy()
    v = initial.velocity.copy()
    reference_norm = float(np.linalg.norm(v))
    clock = 0.0
    events = 0
    started = time.perf_counter()

    while True:
        remaining = horizon - clock
        arrival = model.bounce_time(x, v, rng, horizon=remaining)
        refresh_time = exponential_arrival(scheme.rate, rng)
        tau = min(arrival.time, refresh_time)
        if tau >= remaining:
            if math.isinf(remaining):
                logger.debug("no further events on an unbounded horizon")
                trajectory.truncated = True
            else:
                trajectory.append(clock, x, v, remaining, EventKind.HORIZON)
            break

        if refresh_time <= arrival.time:
            kind = EventKind.REFRESH
            new_v = refresh(scheme, v, rng)
            reference_norm = float(np.linalg.norm(new_v))
            exp_draw = None
        else:
            kind = EventKind.BOUNCE
            new_v = reflect(model.gradient(x + v * tau), v)
            drift = abs(float(np.linalg.norm(new_v)) - reference_norm)
            if drift > app_settings.NORM_DRIFT_TOL * max(1.0, reference_norm):
                raise NormDriftError(f"velocity norm drifted by {drift:.3e} at t={clock + tau!r}")
            exp_draw = arrival.exp_draw

        trajectory.append(clock, x, v, tau, kind, exp_draw)
        x = x + v * tau
        v = new_v
        clock += tau
        events += 1

        if events >= event_cap:
            trajectory.truncated = True
            if math.isfinite(horizon):
                logger.warning(f"event cap {event_cap} reached at t={clock:.6g} before horizon {horizon}")
            break
        if events % _WALL_CHECK_EVERY == 0 and time.perf_counter() - started > wall_cap:
            trajectory.truncated = True
            logger.warning(f"wall-clock cap {wall_cap}s reached at t={clock:.6g} after {events} events")
            break

    logger.debug(
        f"global BPS: {trajectory.count(EventKind.BOUNCE)} bounces, "
        f"{trajectory.count(EventKind.REFRESH)} refreshments up to t={trajectory.horizon:.6g}"
    )
    return trajectory


def position_at(trajectory: Trajectory, t: float) -> np.ndarray:
    """x(t) on a recorded trajectory; raises TrajectoryQueryError outside [0, T]."""
    return trajectory.position_at(t)
