"""
Factor-graph targets and the local bouncy particle sampler.

Two implementations of the local sampler are provided:

* ``local_bps_queue`` keeps one candidate bounce time per factor in an
  addressable priority queue and, after a bounce at factor f, resimulates only
  the factors sharing a coordinate with f;
* ``local_bps_thinning`` draws candidates from a global clock whose rate is
  the sum of per-factor constant bounds, valid on windows of fixed length.

Both return one ``CoordinateEventList`` per coordinate.
"""
import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from networkx.algorithms import bipartite

from src.core.config import app_config, app_settings
from src.core.exceptions import EnvelopeViolationError
from src.data.sampler_types import CoordinateEventList, EventKind, LocalTrajectory, PhaseState
from src.interfaces.energy_model import EnergyModel
from src.interfaces.factor import Factor
from src.services.bounce_strategies import SuperpositionStrategy
from src.services.bps_core import RefreshKind, RefreshmentScheme, initial_velocity, reflect, refresh
from src.services.ppsim import RATIO_SLACK, exponential_arrival
from src.utils.discrete_sampling import AliasTable, SumTree


logger = logging.getLogger(__name__)

# Called after every event with (clock, kind, factor index or -1, queue).
EventHook = Callable[[float, EventKind, int, "CandidateQueue"], None]


class FactorGraph:
    """
    Immutable factor graph over ``dimension`` coordinates.

    Attributes:
        factors: the factors, indexed 0..|F|-1
        adjacency: for each factor f, the sorted factor indices sharing a
            coordinate with f (f included)
        graph: bipartite networkx graph with nodes ("x", k) and ("f", i)
    """

    def __init__(self, dimension: int, factors: Sequence[Factor]):
        if dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        if not factors:
            raise ValueError("a factor graph needs at least one factor")
        self.dimension = dimension
        self.factors: List[Factor] = list(factors)

        graph = nx.Graph()
        graph.add_nodes_from((("x", k) for k in range(dimension)), bipartite=0)
        graph.add_nodes_from((("f", i) for i in range(len(self.factors))), bipartite=1)
        for index, factor in enumerate(self.factors):
            if factor.neighborhood[-1] >= dimension:
                raise ValueError(f"factor {index} touches coordinate {factor.neighborhood[-1]} >= {dimension}")
            graph.add_edges_from((("f", index), ("x", int(k))) for k in factor.neighborhood)

        uncovered = [k for k in range(dimension) if graph.degree(("x", k)) == 0]
        if uncovered:
            raise ValueError(f"coordinates {uncovered[:10]} belong to no factor")

        factor_nodes = [("f", i) for i in range(len(self.factors))]
        overlap = bipartite.projected_graph(graph, factor_nodes)
        self.adjacency: List[np.ndarray] = [
            np.asarray(sorted([i] + [j for _, j in overlap.neighbors(("f", i))]), dtype=int)
            for i in range(len(self.factors))
        ]
        self.coordinate_factors: List[List[int]] = [
            sorted(j for _, j in graph.neighbors(("x", k))) for k in range(dimension)
        ]
        self.graph = graph

    def __len__(self) -> int:
        return len(self.factors)

    def energy(self, x: np.ndarray) -> float:
        return float(sum(f.energy(x[f.neighborhood]) for f in self.factors))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dimension)
        for factor in self.factors:
            out[factor.neighborhood] += factor.gradient(x[factor.neighborhood])
        return out

    def has_bounds(self) -> bool:
        probe = np.zeros(self.dimension)
        return all(f.bound(probe[f.neighborhood], probe[f.neighborhood], 1.0) is not None for f in self.factors)


class FactorGraphEnergy(EnergyModel):
    """
    A factor graph seen as one global energy. Bounce times superpose the
    factors' own first arrivals and thin by chi / sum_f chi_f.
    """

    def __init__(self, graph: FactorGraph):
        super().__init__(graph.dimension, SuperpositionStrategy(self._components))
        self.factor_graph = graph

    def energy(self, x: np.ndarray) -> float:
        return self.factor_graph.energy(x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.factor_graph.gradient(x)

    def _components(self, x: np.ndarray, v: np.ndarray, rng: np.random.Generator):
        components = []
        for factor in self.factor_graph.factors:
            x_f, v_f = x[factor.neighborhood], v[factor.neighborhood]
            components.append((
                lambda factor=factor, x_f=x_f, v_f=v_f: factor.first_arrival(x_f, v_f, rng),
                lambda t, factor=factor, x_f=x_f, v_f=v_f: factor.rate(x_f, v_f, t),
            ))
        return components


@dataclass(eq=False)
class Candidate:
    """Handle of one factor's candidate bounce time."""
    time: float
    factor: int
    serial: int


class CandidateQueue:
    """
    Addressable min-queue of candidate times, one live candidate per factor.

    Updates push a new handle and retire the old one lazily; stale heap
    entries are skipped on access and purged when they dominate the heap.
    """

    def __init__(self):
        self._heap: List[Tuple[float, int, Candidate]] = []
        self._live: Dict[int, Candidate] = {}
        self._serials = itertools.count()

    def __len__(self) -> int:
        return len(self._live)

    def set(self, factor: int, candidate_time: float) -> Candidate:
        candidate = Candidate(candidate_time, factor, next(self._serials))
        self._live[factor] = candidate
        heapq.heappush(self._heap, (candidate_time, candidate.serial, candidate))
        if len(self._heap) > 4 * len(self._live) + 64:
            self._compact()
        return candidate

    def candidate(self, factor: int) -> Optional[Candidate]:
        return self._live.get(factor)

    def remove(self, factor: int) -> None:
        self._live.pop(factor, None)

    def clear(self) -> None:
        self._heap.clear()
        self._live.clear()

    def peek(self) -> Optional[Candidate]:
        while self._heap:
            candidate = self._heap[0][2]
            if self._live.get(candidate.factor) is candidate:
                return candidate
            heapq.heappop(self._heap)
        return None

    def pop(self) -> Optional[Candidate]:
        candidate = self.peek()
        if candidate is not None:
            heapq.heappop(self._heap)
            del self._live[candidate.factor]
        return candidate

    def live_candidates(self) -> List[Candidate]:
        return list(self._live.values())

    def snapshot(self) -> Dict[int, Candidate]:
        """Current handle of every factor."""
        return dict(self._live)

    def _compact(self) -> None:
        self._heap = [(c.time, c.serial, c) for c in self._live.values()]
        heapq.heapify(self._heap)


def local_intensity(factor: Factor, x_f: np.ndarray, v_f: np.ndarray) -> float:
    """max(0, <grad U_f(x_f), v_f>)."""
    return factor.rate(np.asarray(x_f, dtype=float), np.asarray(v_f, dtype=float))


def local_reflect(factor: Factor, x_f: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Reflect the block of ``v`` on N_f against grad U_f; the rest is copied as is.

    Raises:
        DegenerateBounceError: If the local gradient is zero
    """
    out = np.array(v, dtype=float)
    block = factor.neighborhood
    out[block] = reflect(factor.gradient(np.asarray(x_f, dtype=float)), out[block])
    return out


def reconstruct_coordinate(events: CoordinateEventList, t: float) -> float:
    return events.position_at(t)


def local_refresh(graph: FactorGraph, v: np.ndarray, rng: np.random.Generator,
                  factor: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Resample the velocity block of one factor (uniform unless given).

    Returns:
        Tuple of the new velocity and the factors whose candidates are stale
    """
    if factor is None:
        factor = int(rng.integers(len(graph)))
    out = np.array(v, dtype=float)
    block = graph.factors[factor].neighborhood
    out[block] = rng.standard_normal(block.size)
    return out, graph.adjacency[factor]


def _assert_queue_coherent(queue: CandidateQueue, before: Dict[int, Candidate], touched: np.ndarray,
                           n_factors: int, clock: float) -> None:
    """Touched factors hold candidates after the clock; every other factor keeps its handle."""
    touched_set = set(int(i) for i in touched)
    for index in range(n_factors):
        candidate = queue.candidate(index)
        if index in touched_set:
            if candidate is None or not candidate.time > clock:
                raise AssertionError(f"factor {index} has no candidate after t={clock!r}")
        elif candidate is not before.get(index):
            raise AssertionError(f"factor {index} was resimulated by an event it does not share a coordinate with")


def _assert_sparse(before: np.ndarray, after: np.ndarray, block: np.ndarray) -> None:
    outside = np.ones(before.size, dtype=bool)
    outside[block] = False
    if not np.array_equal(before[outside].view(np.uint64), after[outside].view(np.uint64)):
        raise AssertionError("a local bounce changed velocities outside its factor")


class _LocalState:
    """
    Shared bookkeeping of the local samplers: current velocity and, per
    coordinate, the last recorded (position, time) so x_f at the clock is
    O(|N_f|) to compute.
    """

    def __init__(self, initial: PhaseState):
        self.velocity = initial.velocity.copy()
        self.anchor_position = initial.position.copy()
        self.anchor_time = np.zeros(initial.dimension)
        self.event_lists = [
            CoordinateEventList(x_k, v_k) for x_k, v_k in zip(initial.position, initial.velocity)
        ]

    def position(self, block: np.ndarray, clock: float) -> np.ndarray:
        return self.anchor_position[block] + self.velocity[block] * (clock - self.anchor_time[block])

    def full_position(self, clock: float) -> np.ndarray:
        return self.anchor_position + self.velocity * (clock - self.anchor_time)

    def record(self, block: np.ndarray, positions: np.ndarray, velocities: np.ndarray, clock: float) -> None:
        self.velocity[block] = velocities
        self.anchor_position[block] = positions
        self.anchor_time[block] = clock
        for k, x_k, v_k in zip(block, positions, velocities):
            self.event_lists[k].record(x_k, v_k, clock)


def _default_initial(graph: FactorGraph, scheme: Optional[RefreshmentScheme],
                     rng: np.random.Generator) -> PhaseState:
    if scheme is not None and scheme.kind is not RefreshKind.LOCAL:
        v = initial_velocity(scheme, graph.dimension, rng)
    else:
        v = rng.standard_normal(graph.dimension)
    return PhaseState(np.zeros(graph.dimension), v)


def _check_run_arguments(graph: FactorGraph, initial: PhaseState, horizon: float) -> None:
    if initial.dimension != graph.dimension:
        raise ValueError(f"initial state has dimension {initial.dimension}, graph has {graph.dimension}")
    if not (horizon > 0.0 and math.isfinite(horizon)):
        raise ValueError(f"horizon must be positive and finite, got {horizon}")


def local_bps_queue(graph: FactorGraph, scheme: RefreshmentScheme, initial: Optional[PhaseState],
                    horizon: float, rng: np.random.Generator, max_events: Optional[int] = None,
                    max_wall_seconds: Optional[float] = None, check_invariants: bool = False,
                    on_event: Optional[EventHook] = None) -> LocalTrajectory:
    """
    Local BPS, priority-queue implementation.

    The smallest candidate is popped; if it precedes the refreshment clock the
    popped factor bounces and every factor adjacent to it (itself included)
    gets a fresh candidate from the post-bounce state. Global refreshments
    rebuild the whole queue; local refreshments resimulate only the factors
    overlapping the refreshed block.

    Args:
        graph: Factor graph whose factors simulate their own first arrivals
        scheme: Refreshment law (``local`` for per-factor refreshment)
        initial: Starting state; zeros and a stationary velocity when None
        horizon: Final time T
        rng: Random stream
        max_events: Bounce + refreshment cap
        max_wall_seconds: Wall-clock cap
        check_invariants: Assert block sparsity and queue coherence at every event
        on_event: Optional hook called after every event

    Returns:
        LocalTrajectory: per-coordinate event lists and tallies
    """
    if initial is None:
        initial = _default_initial(graph, scheme, rng)
    _check_run_arguments(graph, initial, horizon)
    event_cap = max_events if max_events is not None else app_config.max_events
    wall_cap = max_wall_seconds if max_wall_seconds is not None else app_config.max_wall_seconds

    state = _LocalState(initial)
    queue = CandidateQueue()
    result = LocalTrajectory(event_lists=state.event_lists, horizon=horizon)
    clock = 0.0

    def resimulate(factor_index: int) -> None:
        factor = graph.factors[factor_index]
        block = factor.neighborhood
        tau = factor.first_arrival(state.position(block, clock), state.velocity[block], rng, horizon - clock)
        queue.set(factor_index, clock + tau)

    def rebuild() -> None:
        queue.clear()
        for factor_index in range(len(graph)):
            resimulate(factor_index)

    rebuild()
    refresh_clock = exponential_arrival(scheme.rate, rng)
    started = time.perf_counter()
    events = 0

    while True:
        head = queue.peek()
        bounce_time = head.time if head is not None else math.inf
        if min(bounce_time, refresh_clock) >= horizon:
            break
        handles = queue.snapshot() if check_invariants else None

        if bounce_time < refresh_clock:
            queue.pop()
            clock = bounce_time
            factor_index = head.factor
            factor = graph.factors[factor_index]
            block = factor.neighborhood
            x_f = state.position(block, clock)
            before = state.velocity.copy() if check_invariants else None
            v_f = reflect(factor.gradient(x_f), state.velocity[block])
            state.record(block, x_f, v_f, clock)
            if check_invariants:
                _assert_sparse(before, state.velocity, block)
            result.bounce_count += 1
            result.gradient_evaluations += 1
            result.bounce_factors.append(factor_index)
            stale = graph.adjacency[factor_index]
            for neighbor in stale:
                resimulate(int(neighbor))
            kind = EventKind.BOUNCE
        else:
            clock = refresh_clock
            factor_index = -1
            if scheme.kind is RefreshKind.LOCAL:
                factor_index = int(rng.integers(len(graph)))
                new_v, stale = local_refresh(graph, state.velocity, rng, factor_index)
                block = graph.factors[factor_index].neighborhood
                state.record(block, state.position(block, clock), new_v[block], clock)
                for neighbor in stale:
                    resimulate(int(neighbor))
            else:
                everything = np.arange(graph.dimension)
                positions = state.full_position(clock)
                state.record(everything, positions, refresh(scheme, state.velocity, rng), clock)
                stale = np.arange(len(graph))
                rebuild()
            result.refresh_count += 1
            result.refresh_times.append(clock)
            refresh_clock = clock + exponential_arrival(scheme.rate, rng)
            kind = EventKind.REFRESH

        if check_invariants:
            _assert_queue_coherent(queue, handles, stale, len(graph), clock)
        if on_event is not None:
            on_event(clock, kind, factor_index, queue)

        events += 1
        if events >= event_cap or (events % 1024 == 0 and time.perf_counter() - started > wall_cap):
            logger.warning(f"local BPS stopped at t={clock:.6g} after {events} events (cap reached)")
            result.horizon = clock
            result.truncated = True
            break

    logger.debug(f"local BPS (queue): {result.bounce_count} bounces, {result.refresh_count} refreshments")
    return result


class _BoundSelector:
    """
    Draws a factor with probability bound_f / sum(bounds). Small graphs use an
    alias table rebuilt after changes, large ones a sum tree.
    """

    def __init__(self, bounds: np.ndarray):
        self.bounds = np.array(bounds, dtype=float)
        self._use_tree = self.bounds.size > app_settings.ALIAS_MAX_FACTORS
        self._tree = SumTree(self.bounds) if self._use_tree else None
        self._table: Optional[AliasTable] = None

    @property
    def total(self) -> float:
        if self._use_tree:
            return self._tree.total
        return float(self.bounds.sum())

    def update(self, indices: Sequence[int], values: Sequence[float]) -> None:
        for index, value in zip(indices, values):
            self.bounds[index] = value
            if self._use_tree:
                self._tree.update(int(index), float(value))
        self._table = None

    def sample(self, rng: np.random.Generator) -> int:
        if self._use_tree:
            return self._tree.sample(rng)
        if self._table is None:
            self._table = AliasTable(self.bounds)
        return self._table.sample(rng)


def local_bps_thinning(graph: FactorGraph, window: float, horizon: float, rng: np.random.Generator,
                       minibatch: int = 1, scheme: Optional[RefreshmentScheme] = None,
                       initial: Optional[PhaseState] = None, uniform_bound: bool = False,
                       max_events: Optional[int] = None, max_wall_seconds: Optional[float] = None,
                       check_invariants: bool = False) -> LocalTrajectory:
    """
    Local BPS, thinning implementation.

    Candidates come from one clock of rate sum_f bound_f (+ refresh rate). A
    candidate selects factor F with probability bound_F / sum and bounces it
    with probability chi_F / bound_F. Bounds are recomputed for every factor
    at each window boundary and for the overlapping factors after each event.

    With ``uniform_bound`` every factor uses the common bound
    Lambda = max_f bound_f; then ``minibatch`` factors may be drawn uniformly
    without replacement and the bounce uses their summed gradient, accepted
    with probability max(0, sum_j <grad U_Fj, v>) / (s Lambda).

    Raises:
        EnvelopeViolationError: An acceptance ratio exceeded one
        ValueError: ``minibatch > 1`` without ``uniform_bound``, or a factor
            without a bound
    """
    if not (window > 0.0 and math.isfinite(window)):
        raise ValueError(f"window must be positive and finite, got {window}")
    if minibatch < 1 or minibatch > len(graph):
        raise ValueError(f"minibatch must lie in [1, {len(graph)}], got {minibatch}")
    if minibatch > 1 and not uniform_bound:
        raise ValueError("minibatches need a common bound for all factors (set uniform_bound)")
    if initial is None:
        initial = _default_initial(graph, scheme, rng)
    _check_run_arguments(graph, initial, horizon)
    event_cap = max_events if max_events is not None else app_config.max_events
    wall_cap = max_wall_seconds if max_wall_seconds is not None else app_config.max_wall_seconds
    refresh_rate = scheme.rate if scheme is not None else 0.0

    state = _LocalState(initial)
    result = LocalTrajectory(event_lists=state.event_lists, horizon=horizon)
    n_factors = len(graph)
    clock = 0.0
    window_end = min(window, horizon)

    def bound_of(factor_index: int) -> float:
        factor = graph.factors[factor_index]
        block = factor.neighborhood
        value = factor.bound(state.position(block, clock), state.velocity[block], window_end - clock)
        if value is None:
            raise ValueError(f"factor {factor_index} provides no rate bound")
        return float(value)

    selector = _BoundSelector([bound_of(i) for i in range(n_factors)])

    def refresh_bounds(indices: Sequence[int]) -> None:
        selector.update(indices, [bound_of(int(i)) for i in indices])

    def candidate_rate() -> float:
        if uniform_bound:
            return n_factors * float(selector.bounds.max())
        return selector.total

    started = time.perf_counter()
    events = 0
    while True:
        total = candidate_rate() + refresh_rate
        tau = exponential_arrival(total, rng)
        if clock + tau >= window_end:
            if window_end >= horizon:
                break
            clock = window_end
            window_end = min(clock + window, horizon)
            result.window_count += 1
            refresh_bounds(range(n_factors))
            continue
        clock += tau

        if rng.random() * total < refresh_rate:
            if scheme.kind is RefreshKind.LOCAL:
                chosen = int(rng.integers(n_factors))
                new_v, stale = local_refresh(graph, state.velocity, rng, chosen)
                block = graph.factors[chosen].neighborhood
                state.record(block, state.position(block, clock), new_v[block], clock)
            else:
                everything = np.arange(graph.dimension)
                state.record(everything, state.full_position(clock), refresh(scheme, state.velocity, rng), clock)
                stale = np.arange(n_factors)
            refresh_bounds(stale)
            result.refresh_count += 1
            result.refresh_times.append(clock)
        else:
            if uniform_bound:
                chosen = rng.choice(n_factors, size=minibatch, replace=False)
                bound = minibatch * float(selector.bounds.max())
            else:
                chosen = np.asarray([selector.sample(rng)])
                bound = float(selector.bounds[chosen[0]])
            block = np.unique(np.concatenate([graph.factors[i].neighborhood for i in chosen]))
            x_block = state.position(block, clock)
            v_block = state.velocity[block]
            grad = np.zeros(block.size)
            for i in chosen:
                factor = graph.factors[i]
                where = np.searchsorted(block, factor.neighborhood)
                grad[where] += factor.gradient(x_block[where])
            result.gradient_evaluations += len(chosen)
            rate = max(0.0, float(np.dot(grad, v_block)))
            if rate > bound * (1.0 + RATIO_SLACK) + RATIO_SLACK:
                raise EnvelopeViolationError(rate, bound, clock)
            if rng.random() * bound < rate:
                before = state.velocity.copy() if check_invariants else None
                state.record(block, x_block, reflect(grad, v_block), clock)
                if check_invariants:
                    _assert_sparse(before, state.velocity, block)
                result.bounce_count += 1
                result.bounce_factors.append(int(chosen[0]))
                stale = np.unique(np.concatenate([graph.adjacency[i] for i in chosen]))
                refresh_bounds(stale)
            else:
                result.rejection_count += 1

        events += 1
        if events >= event_cap or (events % 1024 == 0 and time.perf_counter() - started > wall_cap):
            logger.warning(f"local BPS stopped at t={clock:.6g} after {events} candidates (cap reached)")
            result.horizon = clock
            result.truncated = True
            break

    logger.debug(
        f"local BPS (thinning): {result.bounce_count} bounces, {result.rejection_count} rejections, "
        f"{result.window_count} window advances"
    )
    return result
