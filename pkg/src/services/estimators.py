"""
Estimators over piecewise-linear paths and chains.

Path integrals are exact: on a segment starting at x with velocity v,
    int_0^tau x(s) ds   = x tau + v tau^2 / 2
    int_0^tau x(s)^2 ds = x^2 tau + x v tau^2 + v^2 tau^3 / 3.
Standard errors come from batch means over equal time batches, each batch
integrated exactly.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from src.core.config import app_settings
from src.data.experiment_models import PathEstimate
from src.data.sampler_types import PiecewiseLinearPath, Trajectory


logger = logging.getLogger(__name__)


def _segment_integral(x: np.ndarray, v: np.ndarray, tau: np.ndarray, order: int) -> np.ndarray:
    if order == 1:
        return x * tau + 0.5 * v * tau ** 2
    if order == 2:
        return x * x * tau + x * v * tau ** 2 + v * v * tau ** 3 / 3.0
    raise ValueError(f"order must be 1 or 2, got {order}")


def cumulative_integral(path: PiecewiseLinearPath, k: int, order: int, times: np.ndarray) -> np.ndarray:
    """int_0^t x_k(s)^order ds evaluated at each of ``times`` (within [0, T])."""
    starts, durations, x, v = path.coordinate_segments(k)
    if starts.size == 0:
        raise ValueError("empty trajectory")
    full = _segment_integral(x, v, durations, order)
    before = np.concatenate(([0.0], np.cumsum(full)[:-1]))
    times = np.asarray(times, dtype=float)
    index = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, starts.size - 1)
    elapsed = np.clip(times - starts[index], 0.0, durations[index])
    return before[index] + _segment_integral(x[index], v[index], elapsed, order)


def _batch_means(path: PiecewiseLinearPath, k: int, order: int, batches: int) -> np.ndarray:
    edges = np.linspace(0.0, path.horizon, batches + 1)
    return np.diff(cumulative_integral(path, k, order, edges)) / (path.horizon / batches)


def batch_means_standard_error(path: PiecewiseLinearPath, k: int, order: int = 1,
                               batches: int = app_settings.DEFAULT_BATCH_COUNT) -> float:
    """Standard error of the time average of x_k^order from equal time batches."""
    if batches < 2:
        raise ValueError(f"need at least two batches, got {batches}")
    means = _batch_means(path, k, order, batches)
    return float(np.std(means, ddof=1) / math.sqrt(batches))


def path_integral_moment(path: PiecewiseLinearPath, k: int, order: int = 1,
                         batches: int = app_settings.DEFAULT_BATCH_COUNT) -> PathEstimate:
    """(1/T) int_0^T x_k(t)^order dt with its batch-means standard error."""
    horizon = path.horizon
    if not horizon > 0.0:
        raise ValueError("trajectory has zero length")
    total = float(cumulative_integral(path, k, order, np.array([horizon]))[0])
    return PathEstimate(
        value=total / horizon,
        horizon=horizon,
        standard_error=batch_means_standard_error(path, k, order, batches),
    )


def path_integral_variance(path: PiecewiseLinearPath, k: int,
                           batches: int = app_settings.DEFAULT_BATCH_COUNT) -> PathEstimate:
    """
    Time-average variance E[x_k^2] - E[x_k]^2, standard error by the delta
    method on the joint batch means of the two moments.
    """
    first = path_integral_moment(path, k, 1, batches).value
    second = path_integral_moment(path, k, 2, batches).value
    means = np.vstack([_batch_means(path, k, 1, batches), _batch_means(path, k, 2, batches)])
    covariance = np.cov(means) / batches
    direction = np.array([-2.0 * first, 1.0])
    standard_error = math.sqrt(max(0.0, float(direction @ covariance @ direction)))
    return PathEstimate(value=second - first * first, horizon=path.horizon, standard_error=standard_error)


def _mesh_times(horizon: float, mesh: float) -> np.ndarray:
    if not mesh > 0.0:
        raise ValueError(f"mesh must be positive, got {mesh}")
    count = 1 + int(math.floor(horizon / mesh + 1e-9))
    return np.minimum(np.arange(count) * mesh, horizon)


def discretize(path: PiecewiseLinearPath, mesh: float) -> np.ndarray:
    """Rows x(l * mesh) for l = 0 .. floor(T / mesh)."""
    times = _mesh_times(path.horizon, mesh)
    samples = np.empty((times.size, path.dimension))
    for k in range(path.dimension):
        starts, _, x, v = path.coordinate_segments(k)
        index = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, starts.size - 1)
        samples[:, k] = x[index] + v[index] * (times - starts[index])
    return samples


@dataclass(frozen=True)
class EssResult:
    """Effective sample size; ``degenerate`` flags constant input (value = N)."""
    value: float
    degenerate: bool = False


def ess(samples: np.ndarray) -> EssResult:
    """
    Batch-means effective sample size with batches of floor(sqrt(N)) samples;
    leading samples that do not fill a batch are dropped from the batch means.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    n = samples.size
    if n < app_settings.MIN_ESS_LENGTH:
        raise ValueError(f"ESS needs at least {app_settings.MIN_ESS_LENGTH} samples, got {n}")
    variance = float(np.var(samples, ddof=1))
    batch_size = int(math.floor(math.sqrt(n)))
    num_batches = n // batch_size
    tail = samples[n - num_batches * batch_size:]
    batch_variance = float(np.var(tail.reshape(num_batches, batch_size).mean(axis=1), ddof=1))
    if variance <= 0.0 or batch_variance <= 0.0:
        logger.warning(f"degenerate ESS input of length {n}")
        return EssResult(value=float(n), degenerate=True)
    return EssResult(value=n * variance / (batch_variance * batch_size))


def segment_min_norm(x: np.ndarray, v: np.ndarray, duration: float) -> float:
    """min over s in [0, duration] of |x + v s|, in closed form."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    speed2 = float(np.dot(v, v))
    s = 0.0 if speed2 == 0.0 else min(max(-float(np.dot(x, v)) / speed2, 0.0), duration)
    return float(np.linalg.norm(x + v * s))


def path_min_norm(trajectory: Trajectory) -> float:
    """Minimum of |x(t)| over the continuous path."""
    positions, velocities, durations = trajectory.positions, trajectory.velocities, trajectory.durations
    speed2 = np.einsum("ij,ij->i", velocities, velocities)
    inner = np.einsum("ij,ij->i", positions, velocities)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(speed2 > 0.0, -inner / speed2, 0.0)
    s = np.clip(s, 0.0, durations)
    closest = positions + velocities * s[:, None]
    return float(np.min(np.linalg.norm(closest, axis=1)))


def bounce_inner_products(trajectory: Trajectory) -> np.ndarray:
    """<x^(i), v^(i)> at the start of every segment after the first."""
    return np.einsum("ij,ij->i", trajectory.positions[1:], trajectory.velocities[1:])


def lump_radial(trajectory: Trajectory, mesh: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    (r, m) = (|x|, <x, v> / (|x| |v|)) along a path, sampled on a mesh.
    """
    times = _mesh_times(trajectory.horizon, mesh)
    starts = trajectory.start_times
    index = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, starts.size - 1)
    velocities = trajectory.velocities[index]
    positions = trajectory.positions[index] + velocities * (times - starts[index])[:, None]
    radii = np.linalg.norm(positions, axis=1)
    speeds = np.linalg.norm(velocities, axis=1)
    cosines = np.einsum("ij,ij->i", positions, velocities) / (radii * speeds)
    return radii, np.clip(cosines, -1.0, 1.0)


def random_walk_metropolis(log_density: Callable[[np.ndarray], float], x0: np.ndarray, step: float,
                           n: int, rng: np.random.Generator, burn_in: int = 0
                           ) -> Tuple[np.ndarray, float]:
    """
    Gaussian random-walk Metropolis-Hastings chain.

    Returns:
        Tuple of the (n, d) sample matrix after burn-in and the acceptance rate
    """
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")
    x = np.array(x0, dtype=float)
    current = log_density(x)
    samples = np.empty((n, x.size))
    accepted = 0
    for i in range(burn_in + n):
        proposal = x + step * rng.standard_normal(x.size)
        candidate = log_density(proposal)
        if math.log(rng.random()) < candidate - current:
            x, current = proposal, candidate
            accepted += 1
        if i >= burn_in:
            samples[i - burn_in] = x
    return samples, accepted / (burn_in + n)


def ess_per_event(path: PiecewiseLinearPath, k: int, mesh: float, events: int) -> Optional[float]:
    """ESS of the discretized coordinate k divided by the number of events."""
    if events <= 0:
        return None
    return ess(discretize(path, mesh)[:, k]).value / events
