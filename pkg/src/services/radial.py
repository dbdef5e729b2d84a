"""
Radial lumping of the isotropic Gaussian BPS and the reducibility witness.

For unit speed, r = |x| and m = <x, v> / |x| evolve between jumps as the
distance and cosine of straight-line motion,
    r(t) = sqrt(r0^2 + 2 m0 r0 t + t^2),  m(t) = (m0 r0 + t) / r(t),
and a jump m -> -m happens at rate c max(0, r m) where c is the gradient
scale of U (U = |x|^2 gives c = 2). Without refreshment, every
    f_k(r, m) proportional to chi_k(sqrt(c) r) (1 - m^2)^((k - 3) / 2),  k >= 2,
is invariant for the lumped process.
"""
import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import integrate, stats
from scipy.special import beta as beta_function
from scipy.special import betainc

from src.core.config import app_settings
from src.core.exceptions import RadialCollapseError
from src.data.sampler_types import IntensityEnvelope, PhaseState, Trajectory
from src.services.bps_core import RefreshKind, RefreshmentScheme, simulate
from src.services.energy_models import IsotropicGaussian
from src.services.estimators import path_min_norm
from src.services.ppsim import (
    exponential_budget,
    first_arrival_inversion,
    first_arrival_thinning,
    linear_rate_quantile,
)


logger = logging.getLogger(__name__)

_M_TOL = 1e-12


@dataclass(frozen=True)
class RadialState:
    """Norm r >= 0 and radial cosine m in [-1, 1]."""
    r: float
    m: float

    def __post_init__(self):
        if not self.r >= 0.0:
            raise ValueError(f"r must be non-negative, got {self.r}")
        if abs(self.m) > 1.0 + _M_TOL:
            raise ValueError(f"|m| must not exceed 1, got {self.m}")
        object.__setattr__(self, "m", float(min(1.0, max(-1.0, self.m))))


def radial_flow(r0: float, m0: float, t: float) -> RadialState:
    """Deterministic motion of (r, m) for time t without jumps."""
    r = math.sqrt(max(0.0, r0 * r0 + 2.0 * m0 * r0 * t + t * t))
    if r == 0.0:
        raise RadialCollapseError(f"radial process reached the origin at t={t!r}")
    return RadialState(r, (m0 * r0 + t) / r)


@dataclass
class RadialTrajectory:
    """Post-jump states at jump times; the flow in between is deterministic."""
    times: List[float] = field(default_factory=list)
    states: List[RadialState] = field(default_factory=list)
    horizon: float = 0.0

    @property
    def jump_count(self) -> int:
        return len(self.times) - 1

    def state_at(self, t: float) -> RadialState:
        if t < 0.0 or t > self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        index = bisect.bisect_right(self.times, t) - 1
        start = self.states[index]
        return radial_flow(start.r, start.m, t - self.times[index])

    def final_state(self) -> RadialState:
        return self.state_at(self.horizon)


def _check_no_collapse(state: RadialState, duration: float) -> None:
    """The flow reaches r = 0 only for m = -1, at time r."""
    closest_time = -state.m * state.r
    if 0.0 <= closest_time <= duration and state.r * math.sqrt(max(0.0, 1.0 - state.m ** 2)) == 0.0:
        raise RadialCollapseError(f"radial process reaches the origin from r={state.r!r}, m={state.m!r}")


def radial_simulate(initial: RadialState, horizon: float, rng: np.random.Generator,
                    gradient_scale: float = 2.0, window: float = app_settings.RADIAL_WINDOW,
                    method: str = "thinning") -> RadialTrajectory:
    """
    Simulate the lumped radial process on [0, horizon].

    ``method="thinning"`` bounds the jump rate on windows [s, s + w) by
    c (r(s) + w), since r m <= r and r grows at unit speed at most;
    ``method="inversion"`` uses the exact linear rate c max(0, m0 r0 + t).

    Raises:
        RadialCollapseError: If the path reaches r = 0
    """
    if not initial.r > 0.0:
        raise ValueError("the radial process needs r > 0")
    if not horizon > 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if method not in ("thinning", "inversion"):
        raise ValueError(f"unknown method {method!r}")

    result = RadialTrajectory(times=[0.0], states=[initial], horizon=horizon)
    clock = 0.0
    state = initial
    while True:
        remaining = horizon - clock
        r0, m0 = state.r, state.m
        if method == "inversion":
            tau = first_arrival_inversion(
                linear_rate_quantile(gradient_scale * m0 * r0, gradient_scale), exponential_budget(rng)
            )
            if tau >= remaining:
                tau = math.inf
        else:
            tau = first_arrival_thinning(
                lambda t: gradient_scale * max(0.0, m0 * r0 + t),
                lambda s: IntensityEnvelope(gradient_scale * (radial_flow(r0, m0, s).r + window), window),
                rng,
                horizon=remaining,
            )
        _check_no_collapse(state, min(tau, remaining))
        if math.isinf(tau):
            break
        clock += tau
        landing = radial_flow(r0, m0, tau)
        state = RadialState(landing.r, -landing.m)
        result.times.append(clock)
        result.states.append(state)
    return result


def invariant_family_density(k: int, r, m, gradient_scale: float = 2.0):
    """
    Unnormalized f_k(r, m) = chi_k(sqrt(c) r) (1 - m^2)^((k - 3) / 2).

    Returns ``inf`` at |m| = 1 when k = 2.
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    r = np.asarray(r, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(r < 0.0) or np.any(np.abs(m) > 1.0 + _M_TOL):
        raise ValueError("need r >= 0 and |m| <= 1")
    with np.errstate(divide="ignore"):
        angular = np.power(np.clip(1.0 - m * m, 0.0, None), (k - 3) / 2.0)
    value = stats.chi.pdf(math.sqrt(gradient_scale) * r, k) * angular
    return float(value) if value.ndim == 0 else value


class InvariantFamily:
    """
    Member f_k of the invariant family, with grid inverse-CDF sampling of
    its independent r and m marginals.
    """

    def __init__(self, k: int, gradient_scale: float = 2.0,
                 grid_points: int = app_settings.DENSITY_GRID_POINTS):
        if k < 2:
            raise ValueError(f"k must be at least 2, got {k}")
        self.k = k
        self.gradient_scale = gradient_scale
        self.grid_points = grid_points
        scale = math.sqrt(gradient_scale)
        self.r_max = stats.chi.ppf(1.0 - 1e-12, k) / scale
        self.r_grid = np.linspace(0.0, self.r_max, grid_points)
        r_cdf = stats.chi.cdf(scale * self.r_grid, k)
        self.r_cdf = r_cdf / r_cdf[-1]
        self.m_grid = np.linspace(-1.0, 1.0, grid_points)
        half = (k - 1) / 2.0
        self.m_cdf = betainc(half, half, (1.0 + self.m_grid) / 2.0)

    def normalizer(self) -> float:
        """Exact integral of the unnormalized density over r >= 0, |m| <= 1."""
        half = (self.k - 1) / 2.0
        return (1.0 / math.sqrt(self.gradient_scale)) * 2.0 ** (2.0 * half - 1.0) * beta_function(half, half)

    def density(self, r, m):
        return invariant_family_density(self.k, r, m, self.gradient_scale) / self.normalizer()

    def grid_integral(self) -> float:
        """
        Simpson-rule integral of the normalized density on grid_points nodes
        per axis. The angular factor is integrated in theta with m = cos(theta),
        where it becomes sin(theta)^(k - 2) and has no endpoint singularity.
        """
        radial = integrate.simpson(
            stats.chi.pdf(math.sqrt(self.gradient_scale) * self.r_grid, self.k), x=self.r_grid)
        theta = np.linspace(0.0, math.pi, self.grid_points)
        angular = integrate.simpson(np.sin(theta) ** (self.k - 2), x=theta)
        return float(radial * angular / self.normalizer())

    def sample(self, count: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Independent (r, m) draws by inverse CDF interpolated on the grid."""
        r = np.interp(rng.random(count), self.r_cdf, self.r_grid)
        m = np.interp(rng.random(count), self.m_cdf, self.m_grid)
        return r, m


def reducibility_run(events: int = 200, refresh_rate: float = 0.0, rng: Optional[np.random.Generator] = None,
                     horizon: Optional[float] = None) -> Trajectory:
    """
    Global BPS on U = |x|^2 in two dimensions from x = e1, v = e2 with
    closed-form bounce times, for ``events`` events or up to ``horizon``.
    """
    if rng is None:
        rng = np.random.default_rng()
    model = IsotropicGaussian(2, precision=2.0, strategy="inversion")
    scheme = RefreshmentScheme(RefreshKind.GLOBAL_GAUSSIAN, refresh_rate)
    initial = PhaseState(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    if horizon is None:
        return simulate(model, scheme, initial, math.inf, rng, max_events=events)
    return simulate(model, scheme, initial, horizon, rng)


def reducibility_witness(events: int = 200, refresh_rate: float = 0.0,
                         rng: Optional[np.random.Generator] = None,
                         horizon: Optional[float] = None) -> float:
    """Minimum of |x(t)| over the continuous path of ``reducibility_run``."""
    min_norm = path_min_norm(reducibility_run(events, refresh_rate, rng, horizon))
    logger.debug(f"reducibility witness: min norm {min_norm!r} (refresh rate {refresh_rate})")
    return min_norm
