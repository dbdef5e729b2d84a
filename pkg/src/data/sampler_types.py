"""
Value types shared by the samplers: phase-space states, trajectory records,
per-coordinate event lists and first-arrival results.

These live on the hot path, so they are plain dataclasses / lists rather than
pydantic models; the pydantic models in ``experiment_models`` wrap them at the
persistence boundary.
"""
import bisect
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Protocol, Tuple

import numpy as np

from src.core.exceptions import TrajectoryQueryError


class EventKind(str, Enum):
    """Event closing a trajectory segment."""
    BOUNCE = "bounce"
    REFRESH = "refresh"
    HORIZON = "horizon"
    # Thinning bookkeeping: bound window advance or rejected candidate.
    WINDOW = "window"
    REJECTION = "rejection"


@dataclass(frozen=True)
class PhaseState:
    """Position-velocity pair z = (x, v)."""
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.position, dtype=float)
        v = np.asarray(self.velocity, dtype=float)
        if x.ndim != 1 or x.shape != v.shape:
            raise ValueError(f"position and velocity must be 1-D of equal length, got {x.shape} and {v.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("phase state entries must be finite")
        object.__setattr__(self, "position", x)
        object.__setattr__(self, "velocity", v)

    @property
    def dimension(self) -> int:
        return self.position.size

    def advance(self, duration: float) -> "PhaseState":
        return PhaseState(self.position + self.velocity * duration, self.velocity)


@dataclass(frozen=True)
class IntensityEnvelope:
    """Constant upper rate valid on [s, s + validity)."""
    bound: float
    validity: float = math.inf

    def __post_init__(self):
        if not self.bound >= 0.0:
            raise ValueError(f"envelope bound must be non-negative, got {self.bound}")
        if not self.validity > 0.0:
            raise ValueError(f"envelope validity must be positive, got {self.validity}")


@dataclass(frozen=True)
class ArrivalResult:
    """
    First arrival time (``math.inf`` when none before the horizon).

    ``source_index`` identifies the superposition component that fired;
    ``exp_draw`` is the exponential budget consumed when the engine was an
    inversion (recorded for the norm-recursion diagnostics).
    """
    time: float
    source_index: int = 0
    exp_draw: Optional[float] = None

    @property
    def arrived(self) -> bool:
        return math.isfinite(self.time)


@dataclass(frozen=True)
class TrajectorySegment:
    """One linear piece of a path; ``event_kind`` is the event closing it."""
    start_time: float
    duration: float
    start: PhaseState
    event_kind: EventKind
    exp_draw: Optional[float] = None

    @property
    def end_position(self) -> np.ndarray:
        return self.start.position + self.start.velocity * self.duration


class PiecewiseLinearPath(Protocol):
    """Anything the estimators can integrate coordinate by coordinate."""

    @property
    def horizon(self) -> float: ...

    @property
    def dimension(self) -> int: ...

    def coordinate_segments(self, k: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]: ...

    def position_at(self, t: float) -> np.ndarray: ...


class Trajectory:
    """
    Global BPS path: a list of connected segments covering [0, horizon].
    """

    def __init__(self, dimension: int):
        self._dimension = dimension
        self._start_times: List[float] = []
        self._durations: List[float] = []
        self._positions: List[np.ndarray] = []
        self._velocities: List[np.ndarray] = []
        self._kinds: List[EventKind] = []
        self._exp_draws: List[Optional[float]] = []
        self._arrays: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = None
        # Set when an event or wall-clock cap stopped the run before its horizon.
        self.truncated = False

    def append(self, start_time: float, position: np.ndarray, velocity: np.ndarray,
               duration: float, kind: EventKind, exp_draw: Optional[float] = None) -> None:
        if duration < 0.0:
            raise ValueError(f"segment duration must be non-negative, got {duration}")
        self._start_times.append(float(start_time))
        self._durations.append(float(duration))
        self._positions.append(np.array(position, dtype=float))
        self._velocities.append(np.array(velocity, dtype=float))
        self._kinds.append(kind)
        self._exp_draws.append(exp_draw)
        self._arrays = None

    def __len__(self) -> int:
        return len(self._durations)

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def horizon(self) -> float:
        if not self._durations:
            return 0.0
        return self._start_times[-1] + self._durations[-1]

    @property
    def kinds(self) -> List[EventKind]:
        return list(self._kinds)

    @property
    def exp_draws(self) -> List[Optional[float]]:
        return list(self._exp_draws)

    def count(self, kind: EventKind) -> int:
        return sum(1 for k in self._kinds if k is kind)

    def _as_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        if self._arrays is None:
            self._arrays = (
                np.asarray(self._start_times),
                np.asarray(self._durations),
                np.vstack(self._positions) if self._positions else np.empty((0, self._dimension)),
                np.vstack(self._velocities) if self._velocities else np.empty((0, self._dimension)),
            )
        return self._arrays

    @property
    def start_times(self) -> np.ndarray:
        return self._as_arrays()[0]

    @property
    def durations(self) -> np.ndarray:
        return self._as_arrays()[1]

    @property
    def positions(self) -> np.ndarray:
        """Segment start positions, one row per segment."""
        return self._as_arrays()[2]

    @property
    def velocities(self) -> np.ndarray:
        return self._as_arrays()[3]

    def segment(self, index: int) -> TrajectorySegment:
        return TrajectorySegment(
            start_time=self._start_times[index],
            duration=self._durations[index],
            start=PhaseState(self._positions[index], self._velocities[index]),
            event_kind=self._kinds[index],
            exp_draw=self._exp_draws[index],
        )

    def segments(self) -> Iterator[TrajectorySegment]:
        for index in range(len(self)):
            yield self.segment(index)

    def coordinate_segments(self, k: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        starts, durations, positions, velocities = self._as_arrays()
        return starts, durations, positions[:, k], velocities[:, k]

    def final_state(self) -> PhaseState:
        if not self._durations:
            raise TrajectoryQueryError("empty trajectory has no final state")
        last = len(self) - 1
        return PhaseState(
            self._positions[last] + self._velocities[last] * self._durations[last],
            self._velocities[last],
        )

    def position_at(self, t: float) -> np.ndarray:
        """Linear interpolation of the path at time t (0 <= t <= horizon)."""
        if not self._durations:
            raise TrajectoryQueryError("empty trajectory")
        if t < 0.0 or t > self.horizon:
            raise TrajectoryQueryError(f"time {t} outside [0, {self.horizon}]")
        index = bisect.bisect_right(self._start_times, t) - 1
        index = max(index, 0)
        return self._positions[index] + self._velocities[index] * (t - self._start_times[index])


class CoordinateEventList:
    """
    Sparse record L_k of one coordinate: triplets (x_k, v_k, t_k) with
    t_k^(0) = 0, one per event that touched coordinate k.
    """

    def __init__(self, position: float, velocity: float, time: float = 0.0):
        self.positions: List[float] = [float(position)]
        self.velocities: List[float] = [float(velocity)]
        self.times: List[float] = [float(time)]

    def __len__(self) -> int:
        return len(self.times)

    def record(self, position: float, velocity: float, time: float) -> None:
        if time < self.times[-1]:
            raise ValueError(f"event time {time} precedes last record {self.times[-1]}")
        if time == self.times[-1]:
            # Several updates at one instant collapse to the latest velocity.
            self.positions[-1] = float(position)
            self.velocities[-1] = float(velocity)
            return
        self.positions.append(float(position))
        self.velocities.append(float(velocity))
        self.times.append(float(time))

    @property
    def last_time(self) -> float:
        return self.times[-1]

    @property
    def current_velocity(self) -> float:
        return self.velocities[-1]

    def position_at(self, t: float) -> float:
        """Latest record at or before t, then move linearly."""
        if t < self.times[0]:
            raise TrajectoryQueryError(f"time {t} precedes first record {self.times[0]}")
        index = bisect.bisect_right(self.times, t) - 1
        return self.positions[index] + (t - self.times[index]) * self.velocities[index]

    def advance_to(self, t: float) -> float:
        """Position at t >= last record, using the current velocity."""
        return self.positions[-1] + (t - self.times[-1]) * self.velocities[-1]

    def is_consistent(self, tol: float = 1e-10) -> bool:
        """Times strictly increase and consecutive triplets connect."""
        for i in range(1, len(self.times)):
            if not self.times[i] > self.times[i - 1]:
                return False
            predicted = self.positions[i - 1] + self.velocities[i - 1] * (self.times[i] - self.times[i - 1])
            if abs(predicted - self.positions[i]) > tol * max(1.0, abs(self.positions[i])):
                return False
        return True


@dataclass
class LocalTrajectory:
    """Output of the local samplers: one event list per coordinate."""
    event_lists: List[CoordinateEventList]
    horizon: float
    bounce_count: int = 0
    refresh_count: int = 0
    rejection_count: int = 0
    window_count: int = 0
    refresh_times: List[float] = field(default_factory=list)
    gradient_evaluations: int = 0
    bounce_factors: List[int] = field(default_factory=list)
    truncated: bool = False

    @property
    def dimension(self) -> int:
        return len(self.event_lists)

    @property
    def total_events(self) -> int:
        return self.bounce_count + self.refresh_count + self.rejection_count + self.window_count

    def coordinate_segments(self, k: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        events = self.event_lists[k]
        starts = np.asarray(events.times)
        ends = np.append(starts[1:], self.horizon)
        return starts, ends - starts, np.asarray(events.positions), np.asarray(events.velocities)

    def position_at(self, t: float) -> np.ndarray:
        if t < 0.0 or t > self.horizon:
            raise TrajectoryQueryError(f"time {t} outside [0, {self.horizon}]")
        return np.array([events.position_at(t) for events in self.event_lists])
