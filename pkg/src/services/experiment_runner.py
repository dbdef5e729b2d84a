"""
Configuration-driven experiment runner.

Each experiment kind runs its replicates on independent random streams
derived from (seed, replicate), collects estimates into a ``RunSummary`` and
writes the summary plus comma-separated plot data under
``<output_dir>/<name>/``. Wall-clock times go to a separate ``timings.csv``
so that the summary bytes depend only on the configuration and the seed.
"""
import itertools
import logging
import math
import os
import time
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import stats

from src.core.config import app_settings
from src.core.exceptions import BPSError
from src.data.experiment_models import (
    ExperimentConfig,
    ExperimentKind,
    Implementation,
    ModelName,
    ReplicateResult,
    RunSummary,
    SchemeName,
)
from src.data.sampler_types import EventKind, Trajectory
from src.interfaces.result_repository import ResultRepository
from src.services.bps_core import RefreshKind, RefreshmentScheme, initial_state, simulate
from src.services.energy_models import (
    DenseGaussian,
    IsotropicGaussian,
    build_chain_gmrf,
    build_grid_poisson_gmrf,
    chain_precision,
    gaussian_marginal_variances,
    simulate_poisson_grid,
)
from src.services.estimators import (
    bounce_inner_products,
    discretize,
    ess,
    path_integral_moment,
    path_integral_variance,
    path_min_norm,
)
from src.services.factor_graph import FactorGraph, FactorGraphEnergy, local_bps_queue, local_bps_thinning
from src.services.logistic import load_logistic_csv, logistic_local_bps, precompute_alias, synthetic_logistic_data
from src.services.radial import InvariantFamily, RadialState, radial_simulate, reducibility_run
from src.utils.logging_config import log_duration
from src.utils.random_streams import make_rng, replicate_stream, spawn_streams


logger = logging.getLogger(__name__)

# Engines per replicate: sampler, initial state, data.
_STREAMS_PER_REPLICATE = 3
# Discretized samples drawn per path for ESS when no mesh is configured.
_DEFAULT_MESH_SAMPLES = 1000
# Samplers compared on factor graphs, in output order.
_GRAPH_SAMPLERS = (Implementation.GLOBAL.value, Implementation.QUEUE.value, Implementation.THINNING.value)


def _scheme(config: ExperimentConfig, name: Optional[SchemeName] = None, rate: Optional[float] = None
            ) -> RefreshmentScheme:
    sampler = config.sampler
    return RefreshmentScheme(
        kind=RefreshKind((name or sampler.scheme).value),
        rate=sampler.refresh_rate if rate is None else rate,
        alpha=sampler.alpha if sampler.alpha is not None else 1.0,
        beta=sampler.beta if sampler.beta is not None else 4.0,
    )


def _global_scheme(scheme: RefreshmentScheme) -> RefreshmentScheme:
    """Local refreshment has no global counterpart; fall back to Gaussian refreshment."""
    if scheme.kind is RefreshKind.LOCAL:
        return RefreshmentScheme(RefreshKind.GLOBAL_GAUSSIAN, scheme.rate)
    return scheme


def _tallies(path) -> Dict[str, int]:
    if isinstance(path, Trajectory):
        bounces, refreshes = path.count(EventKind.BOUNCE), path.count(EventKind.REFRESH)
        return {"bounces": bounces, "refreshes": refreshes, "rejections": 0, "windows": 0,
                "total_events": bounces + refreshes}
    return {"bounces": path.bounce_count, "refreshes": path.refresh_count,
            "rejections": path.rejection_count, "windows": path.window_count,
            "total_events": path.total_events}


def _vector(values) -> str:
    return ";".join(repr(float(value)) for value in values)


def _event_rows(path) -> List[Tuple]:
    """
    One row per state change. Global paths give the full state after each
    event; local paths give one row per touched coordinate.
    """
    if isinstance(path, Trajectory):
        rows = []
        previous = "start"
        for segment in path.segments():
            rows.append((segment.start_time, previous, -1, "all",
                         _vector(segment.start.position), _vector(segment.start.velocity)))
            previous = segment.event_kind.value
        return rows
    rows = [
        (t, "start" if j == 0 else "update", -1, str(k), repr(float(x)), repr(float(v)))
        for k, events in enumerate(path.event_lists)
        for j, (t, x, v) in enumerate(zip(events.times, events.positions, events.velocities))
    ]
    rows.sort(key=lambda row: (row[0], int(row[3])))
    return rows


def _mesh(config: ExperimentConfig, horizon: float) -> float:
    return config.mesh if config.mesh is not None else horizon / _DEFAULT_MESH_SAMPLES


def _probe_coordinates(dimension: int, probes: int) -> List[int]:
    return sorted(set(int(k) for k in np.linspace(0, dimension - 1, min(probes, dimension))))


def _pairwise_agreement(rows: List[Tuple]) -> Dict[str, Optional[float]]:
    """
    Largest |estimate_a - estimate_b| / sqrt(se_a^2 + se_b^2) over matching
    (replicate, coordinate) rows of every pair of samplers, and whether all
    pairs stay within three combined standard errors.
    """
    table = {(sampler, replicate, k): (value, se) for sampler, replicate, k, value, se, _ in rows}
    z_scores = []
    for first, second in itertools.combinations(_GRAPH_SAMPLERS, 2):
        for (sampler, replicate, k), (value, se) in table.items():
            other = table.get((second, replicate, k))
            if sampler != first or other is None:
                continue
            combined = math.hypot(se, other[1])
            if combined > 0.0:
                z_scores.append(abs(value - other[0]) / combined)
    worst = max(z_scores) if z_scores else None
    return {
        "max_pairwise_z_score": worst,
        "pairwise_within_3se": None if worst is None else float(worst <= 3.0),
    }


class ExperimentRunner:
    """Runs validated experiment configurations and persists their outputs."""

    def __init__(self, repository: ResultRepository):
        self.repository = repository
        self._handlers: Dict[ExperimentKind, Callable[[ExperimentConfig, RunSummary, str], None]] = {
            ExperimentKind.GAUSSIAN_MOMENTS: self._gaussian_moments,
            ExperimentKind.DIMENSION_SWEEP: self._dimension_sweep,
            ExperimentKind.GLOBAL_VS_LOCAL: self._global_vs_local,
            ExperimentKind.REFRESH_COMPARISON: self._refresh_comparison,
            ExperimentKind.POISSON_GMRF: self._poisson_gmrf,
            ExperimentKind.LOGISTIC_BENCH: self._logistic_bench,
            ExperimentKind.REDUCIBILITY: self._reducibility,
            ExperimentKind.RADIAL_INVARIANCE: self._radial_invariance,
        }
        self._timings: List[Tuple[int, str, float]] = []

    def run(self, config: ExperimentConfig, name: str) -> RunSummary:
        """
        Run one experiment.

        Args:
            config: Validated configuration
            name: Run name; outputs go to ``<config.output_dir>/<name>/``

        Returns:
            RunSummary: The summary written to ``summary.json``
        """
        out_dir = os.path.join(config.output_dir, name)
        summary = RunSummary(kind=config.kind, seed=config.seed)
        self._timings = []
        logger.info(f"Running {config.kind.value} '{name}' with {config.replicates} replicate(s), seed {config.seed}")
        with log_duration(logger, f"experiment {name}", kind=config.kind.value, seed=config.seed) as timing:
            self._handlers[config.kind](config, summary, out_dir)
        self.repository.save_summary(summary, os.path.join(out_dir, "summary.json"))
        self.repository.write_table(
            os.path.join(out_dir, "timings.csv"), ("replicate", "sampler", "wall_seconds"), self._timings
        )
        logger.info(
            f"Finished {name} in {timing['seconds']:.2f}s; "
            f"{summary.failed_replicates} of {len(summary.replicates)} replicate runs failed"
        )
        return summary

    def _streams(self, config: ExperimentConfig, replicate: int) -> List[np.random.Generator]:
        return spawn_streams(replicate_stream(config.seed, replicate), _STREAMS_PER_REPLICATE)

    def _guarded(self, summary: RunSummary, replicate: int, sampler: str,
                 body: Callable[[ReplicateResult], None]) -> ReplicateResult:
        """Run one replicate; sampler errors are logged and recorded, not raised."""
        result = ReplicateResult(replicate=replicate, sampler=sampler)
        started = time.perf_counter()
        try:
            body(result)
        except BPSError as e:
            logger.error(f"replicate {replicate} ({sampler}) failed: {type(e).__name__}: {e}")
            result = ReplicateResult(replicate=replicate, sampler=sampler, error=f"{type(e).__name__}: {e}")
        result.wall_seconds = time.perf_counter() - started
        self._timings.append((replicate, sampler, result.wall_seconds))
        summary.record(result)
        return result

    @staticmethod
    def _fill(result: ReplicateResult, path, truncated: bool = False) -> None:
        for key, value in _tallies(path).items():
            setattr(result, key, value)
        result.truncated = truncated

    def _dump(self, config: ExperimentConfig, out_dir: str, path) -> None:
        """Event rows of replicate 0 and, when a mesh is set, the meshed path."""
        if config.dump_events:
            self.repository.write_table(
                os.path.join(out_dir, "events.csv"),
                ("t", "event_kind", "factor_id", "coordinates", "x", "v"),
                _event_rows(path),
            )
        if config.mesh is not None:
            samples = discretize(path, config.mesh)
            times = np.minimum(np.arange(samples.shape[0]) * config.mesh, path.horizon)
            self.repository.write_table(
                os.path.join(out_dir, "trajectory_mesh.csv"),
                ["t"] + [f"x_{k}" for k in range(path.dimension)],
                ([t] + list(row) for t, row in zip(times, samples)),
            )

    def _gaussian_moments(self, config: ExperimentConfig, summary: RunSummary, out_dir: str) -> None:
        model_config = config.model
        if model_config.name is ModelName.CHAIN_GMRF:
            model = DenseGaussian(chain_precision(model_config.dimension, model_config.rho),
                                  strategy=config.sampler.strategy, window=config.sampler.window or 1.0)
        else:
            model = IsotropicGaussian(model_config.dimension, model_config.precision,
                                      strategy=config.sampler.strategy, window=config.sampler.window or 1.0)
        variances = model.marginal_variances()
        scheme = _global_scheme(_scheme(config))
        probes = _probe_coordinates(model.dimension, config.probes)
        summary.oracle = {f"second_moment_{k}": float(variances[k]) for k in probes}
        summary.oracle.update({f"mean_{k}": 0.0 for k in probes})
        horizon = config.horizon if config.horizon is not None else math.inf

        for replicate in range(config.replicates):
            sampler_rng, init_rng, _ = self._streams(config, replicate)

            def body(result: ReplicateResult) -> None:
                trajectory = simulate(model, scheme, initial_state(model.dimension, scheme, init_rng),
                                      horizon, sampler_rng, max_events=config.events)
                self._fill(result, trajectory, trajectory.truncated)
                for k in probes:
                    for order, label in ((1, "mean"), (2, "second_moment")):
                        estimate = path_integral_moment(trajectory, k, order, config.batches)
                        result.estimates[f"{label}_{k}"] = estimate.value
                        result.standard_errors[f"{label}_{k}"] = estimate.standard_error
                result.ess[f"x_{probes[0]}"] = ess(
                    discretize(trajectory, _mesh(config, trajectory.horizon))[:, probes[0]]).value
                if replicate == 0:
                    self._dump(config, out_dir, trajectory)

            self._guarded(summary, replicate, "global", body)

        z_scores = [
            abs(r.estimates[key] - summary.oracle[key]) / r.standard_errors[key]
            for r in summary.replicates if r.error is None
            for key in r.estimates if r.standard_errors[key] > 0
        ]
        summary.metrics["max_abs_z_score"] = max(z_scores) if z_scores else None

    def _dimension_sweep(self, config: ExperimentConfig, summary: RunSummary, out_dir: str) -> None:
        scheme = _global_scheme(_scheme(config))
        horizon = config.horizon if config.horizon is not None else math.inf
        rows = []
        for index, dimension in enumerate(config.dimensions):
            model = IsotropicGaussian(dimension, config.model.precision, strategy=config.sampler.strategy,
                                      window=config.sampler.window or 1.0)
            for replicate in range(config.replicates):
                sampler_rng, init_rng, _ = self._streams(config, replicate * len(config.dimensions) + index)

                def body(result: ReplicateResult) -> None:
                    trajectory = simulate(model, scheme, initial_state(dimension, scheme, init_rng),
                                          horizon, sampler_rng, max_events=config.events)
                    self._fill(result, trajectory, trajectory.truncated)
                    value = ess(discretize(trajectory, _mesh(config, trajectory.horizon))[:, 0]).value
                    result.ess["x_0"] = value
                    result.estimates["ess_per_event"] = value / max(result.total_events, 1)
                    rows.append((dimension, replicate, value, result.total_events, result.estimates["ess_per_event"]))

                self._guarded(summary, replicate, f"d={dimension}", body)

        self.repository.write_table(
            os.path.join(out_dir, "dimension_sweep.csv"),
            ("dimension", "replicate", "ess", "events", "ess_per_event"), rows,
        )
        per_dimension = {}
        for dimension, _, _, _, value in rows:
            per_dimension.setdefault(dimension, []).append(value)
        if len(per_dimension) >= 2:
            dims = sorted(per_dimension)
            slope = np.polyfit(np.log(dims), np.log([np.mean(per_dimension[d]) for d in dims]), 1)[0]
            summary.metrics["log_log_slope"] = float(slope)

    def _run_graph_sampler(self, label: str, config: ExperimentConfig, graph: FactorGraph,
                           precision: Optional[np.ndarray], scheme: RefreshmentScheme,
                           sampler_rng: np.random.Generator, init_rng: np.random.Generator):
        """
        One path of the global, queue or thinning sampler on ``graph``. The
        global sampler uses the dense Gaussian when ``precision`` is given and
        the superposed factors otherwise.
        """
        horizon = config.horizon
        window = config.sampler.window or 1.0
        if label == Implementation.GLOBAL.value:
            global_scheme = _global_scheme(scheme)
            if precision is not None:
                model = DenseGaussian(precision, strategy=config.sampler.strategy, window=window)
            else:
                model = FactorGraphEnergy(graph)
            path = simulate(model, global_scheme, initial_state(graph.dimension, global_scheme, init_rng),
                            horizon, sampler_rng, max_events=config.events)
            return path, path.truncated
        initial = initial_state(graph.dimension, _global_scheme(scheme), init_rng)
        if label == Implementation.QUEUE.value:
            path = local_bps_queue(graph, scheme, initial, horizon, sampler_rng, max_events=config.events)
        else:
            path = local_bps_thinning(graph, window, horizon, sampler_rng, minibatch=config.sampler.minibatch,
                                      scheme=scheme, initial=initial, uniform_bound=config.sampler.uniform_bound,
                                      max_events=config.events)
        return path, path.truncated

    def _global_vs_local(self, config: ExperimentConfig, summary: RunSummary, out_dir: str) -> None:
        dimension, rho = config.model.dimension, config.model.rho
        graph = build_chain_gmrf(dimension, rho)
        precision = chain_precision(dimension, rho)
        variances = gaussian_marginal_variances(precision)
        probes = _probe_coordinates(dimension, config.probes)
        summary.oracle = {f"variance_{k}": float(variances[k]) for k in probes}
        scheme = _scheme(config)
        rows = []

        for label in _GRAPH_SAMPLERS:
            for replicate in range(config.replicates):
                sampler_rng, init_rng, _ = self._streams(config, replicate)

                def body(result: ReplicateResult) -> None:
                    path, truncated = self._run_graph_sampler(label, config, graph, precision, scheme,
                                                              sampler_rng, init_rng)
                    self._fill(result, path, truncated)
                    for k in probes:
                        estimate = path_integral_variance(path, k, config.batches)
                        result.estimates[f"variance_{k}"] = estimate.value
                        result.standard_errors[f"variance_{k}"] = estimate.standard_error
                        rows.append((label, replicate, k, estimate.value, estimate.standard_error,
                                     float(variances[k])))

                self._guarded(summary, replicate, label, body)

        self.repository.write_table(
            os.path.join(out_dir, "variances.csv"),
            ("sampler", "replicate", "coordinate", "estimate", "standard_error", "oracle"), rows,
        )
        for label in _GRAPH_SAMPLERS:
            errors = [abs(value - oracle) / oracle for sampler, _, _, value, _, oracle in rows if sampler == label]
            summary.metrics[f"max_relative_error_{label}"] = max(errors) if errors else None
        summary.metrics.update(_pairwise_agreement(rows))

    def _refresh_comparison(self, config: ExperimentConfig, summary: RunSummary, out_dir: str) -> None:
        dimension, rho = config.model.dimension, config.model.rho
        graph = build_chain_gmrf(dimension, rho)
        precision = chain_precision(dimension, rho)
        variances = gaussian_marginal_variances(precision)
        probes = _probe_coordinates(dimension, config.probes)
        summary.oracle = {f"variance_{k}": float(variances[k]) for k in probes}
        implementation = config.sampler.implementation.value
        rows = []
        for scheme_index, scheme_name in enumerate(config.schemes):
            for rate_index, rate in enumerate(config.refresh_rates):
                scheme = _scheme(config, scheme_name, rate)
                label = f"{scheme_name.value}@{rate!r}"
                for replicate in range(config.replicates):
                    stream = (replicate * len(config.schemes) + scheme_index) * len(config.refresh_rates) + rate_index
                    sampler_rng, init_rng, _ = self._streams(config, stream)

                    def body(result: ReplicateResult) -> None:
                        path, truncated = self._run_graph_sampler(implementation, config, graph, precision,
                                                                  scheme, sampler_rng, init_rng)
                        self._fill(result, path, truncated)
                        for k in probes:
                            estimate = path_integral_variance(path, k, config.batches)
                            result.estimates[f"variance_{k}"] = estimate.value
                            result.standard_errors[f"variance_{k}"] = estimate.standard_error
                            rows.append((scheme_name.value, rate, replicate, k,
                                         (estimate.value - variances[k]) / variances[k]))

                    self._guarded(summary, replicate, label, body)

        self.repository.write_table(
            os.path.join(out_dir, "refresh_comparison.csv"),
            ("scheme", "refresh_rate", "replicate", "coordinate", "relative_error"), rows,
        )
        for scheme_name in config.schemes:
            for rate in config.refresh_rates:
                errors = [abs(e) for s, r, _, _, e in rows if s == scheme_name.value and r == rate]
                if errors:
                    summary.metrics[f"median_abs_relative_error_{scheme_name.value}@{rate!r}"] = float(np.median(errors))

    def _poisson_gmrf(self, config: ExperimentConfig, summary: RunSummary, out_dir: str) -> None:
        side = config.model.side
        rho = config.model.rho if config.model.rho is not None else 0.5
        latent, counts = simulate_poisson_grid(side, rho, make_rng(config.seed))
        graph = build_grid_poisson_gmrf(side, counts, rho)
        scheme = _scheme(config)
        label = config.sampler.implementation.value
        rows = []
        for replicate in range(config.replicates):
            sampler_rng, init_rng, _ = self._streams(config, replicate)

            def body(result: ReplicateResult) -> None:
                path, truncated = self._run_graph_sampler(label, config, graph, None, scheme,
                                                          sampler_rng, init_rng)
                self._fill(result, path, truncated)
                for cell in range(side * side):
                    estimate = path_integral_moment(path, cell, 1, config.batches)
                    result.estimates[f"mean_{cell}"] = estimate.value
                    result.standard_errors[f"mean_{cell}"] = estimate.standard_error
                    rows.append((replicate, cell, cell // side, cell % side, int(counts.flat[cell]),
                                 float(latent.flat[cell]), estimate.value, estimate.standard_error))

            self._guarded(summary, replicate, label, body)

        self.repository.write_table(
            os.path.join(out_dir, "poisson_gmrf.csv"),
            ("replicate", "cell", "row", "column", "count", "latent", "posterior_mean", "standard_error"), rows,
        )
        if rows:
            summary.metrics["mean_abs_error_vs_latent"] = float(np.mean([abs(r[6] - r[5]) for r in rows]))

    def _logistic_bench(self, config: ExperimentConfig, summary: RunSummary, out_dir: str) -> None:
        model_config = config.model
        dimension = model_config.dimension or 2
        if model_config.data_path is not None:
            datasets = [load_logistic_csv(model_config.data_path, model_config.prior_variance)]
        else:
            sizes = [model_config.num_data] if model_config.num_data is not None else config.data_sizes
            data_rng = make_rng(config.seed)
            datasets = [synthetic_logistic_data(size, dimension, data_rng, model_config.prior_variance)[0]
                        for size in sizes]
        rows = []
        for index, data in enumerate(datasets):
            tables = precompute_alias(data)
            for replicate in range(config.replicates):
                sampler_rng, _, _ = self._streams(config, replicate * len(datasets) + index)

                def body(result: ReplicateResult) -> None:
                    path = logistic_local_bps(data, config.sampler.refresh_rate, config.sampler.window,
                                              config.horizon, sampler_rng, tables=tables,
                                              max_events=config.events)
                    self._fill(result, path, path.truncated)
                    for k in range(data.dimension):
                        estimate = path_integral_moment(path, k, 1, config.batches)
                        result.estimates[f"mean_{k}"] = estimate.value
                        result.standard_errors[f"mean_{k}"] = estimate.standard_error
                    value = ess(discretize(path, _mesh(config, path.horizon))[:, 0]).value
                    result.ess["x_0"] = value
                    per_candidate = path.gradient_evaluations / max(path.data_candidates, 1)
                    result.estimates["datum_evaluations_per_candidate"] = per_candidate
                    rows.append((data.num_data, replicate, value, path.gradient_evaluations,
                                 value / max(path.gradient_evaluations, 1), per_candidate))

                self._guarded(summary, replicate, f"R={data.num_data}", body)

        self.repository.write_table(
            os.path.join(out_dir, "logistic_bench.csv"),
            ("num_data", "replicate", "ess", "datum_evaluations", "ess_per_datum_evaluation",
             "evaluations_per_candidate"), rows,
        )

    def _reducibility(self, config: ExperimentConfig, summary: RunSummary, out_dir: str) -> None:
        events = config.events if config.events is not None else 200
        rate = config.sampler.refresh_rate
        for replicate in range(config.replicates):
            sampler_rng, _, _ = self._streams(config, replicate)

            def body(result: ReplicateResult) -> None:
                trajectory = reducibility_run(events, rate, sampler_rng, config.horizon)
                self._fill(result, trajectory, trajectory.truncated and config.horizon is not None)
                result.estimates["min_norm"] = path_min_norm(trajectory)
                inner = bounce_inner_products(trajectory)
                # Without refreshment every post-bounce state points inward.
                stays = bool(np.all(inner <= 1e-12))
                result.estimates["inner_products_stay_nonpositive"] = float(stays)
                if replicate == 0:
                    self.repository.write_table(
                        os.path.join(out_dir, "reducibility_path.csv"),
                        ("t", "x_0", "x_1", "v_0", "v_1", "event_kind"),
                        ([s.start_time, s.start.position[0], s.start.position[1],
                          s.start.velocity[0], s.start.velocity[1], s.event_kind.value]
                         for s in trajectory.segments()),
                    )

            self._guarded(summary, replicate, f"refresh={rate!r}", body)

        norms = [r.estimates["min_norm"] for r in summary.replicates if r.error is None]
        summary.metrics["min_norm"] = min(norms) if norms else None

    def _radial_invariance(self, config: ExperimentConfig, summary: RunSummary, out_dir: str) -> None:
        horizon = config.horizon if config.horizon is not None else 5.0
        scale = config.model.precision
        rows = []
        for index, k in enumerate(config.radial_orders):
            family = InvariantFamily(k, gradient_scale=scale)
            for replicate in range(config.replicates):
                sampler_rng, init_rng, fresh_rng = self._streams(config, replicate * len(config.radial_orders) + index)

                def body(result: ReplicateResult) -> None:
                    r0, m0 = family.sample(config.samples, init_rng)
                    final_r = np.empty(config.samples)
                    final_m = np.empty(config.samples)
                    jumps = 0
                    for i in range(config.samples):
                        path = radial_simulate(RadialState(float(r0[i]), float(m0[i])), horizon, sampler_rng,
                                               gradient_scale=scale, window=app_settings.RADIAL_WINDOW)
                        jumps += path.jump_count
                        end = path.final_state()
                        final_r[i], final_m[i] = end.r, end.m
                    fresh_r, fresh_m = family.sample(config.samples, fresh_rng)
                    result.bounces = jumps
                    result.total_events = jumps
                    for marginal, simulated, fresh in (("r", final_r, fresh_r), ("m", final_m, fresh_m)):
                        test = stats.ks_2samp(simulated, fresh)
                        result.estimates[f"ks_statistic_{marginal}"] = float(test.statistic)
                        result.estimates[f"ks_pvalue_{marginal}"] = float(test.pvalue)
                        rows.append((k, replicate, marginal, float(test.statistic), float(test.pvalue)))

                self._guarded(summary, replicate, f"k={k}", body)

        self.repository.write_table(
            os.path.join(out_dir, "radial_invariance.csv"),
            ("k", "replicate", "marginal", "ks_statistic", "ks_pvalue"), rows,
        )
        pvalues = [row[4] for row in rows]
        summary.metrics["min_ks_pvalue"] = min(pvalues) if pvalues else None
