"""Small end-to-end runs of every experiment kind."""
import csv
import logging
import os

import pytest

from src.core.exceptions import RadialCollapseError
from src.data.experiment_models import ExperimentConfig, ExperimentKind, RunSummary
from src.repositories.json_result_repository import JsonResultRepository
from src.services.experiment_runner import ExperimentRunner, _pairwise_agreement


@pytest.fixture
def runner():
    return ExperimentRunner(JsonResultRepository())


def _config(tmp_path, **fields) -> ExperimentConfig:
    return ExperimentConfig.model_validate({"output_dir": str(tmp_path), **fields})


def _rows(path):
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.reader(f))


CHAIN = {"name": "chain_gmrf", "dimension": 4, "rho": 0.3}


def test_reducibility_run(runner, tmp_path):
    config = _config(tmp_path, kind="reducibility", sampler={"refresh_rate": 0.0}, events=100)
    summary = runner.run(config, "reducibility")
    assert summary.failed_replicates == 0
    assert summary.metrics["min_norm"] >= 1.0 - 1e-9
    assert summary.replicates[0].estimates["inner_products_stay_nonpositive"] == 1.0
    out = tmp_path / "reducibility"
    assert (out / "summary.json").exists()
    assert _rows(out / "reducibility_path.csv")[0] == ["t", "x_0", "x_1", "v_0", "v_1", "event_kind"]
    assert len(_rows(out / "timings.csv")) == 2


def test_run_timing_is_logged_with_kind_and_seed(runner, tmp_path, caplog):
    config = _config(tmp_path, kind="reducibility", sampler={"refresh_rate": 0.0}, events=20, seed=5)
    with caplog.at_level(logging.DEBUG, logger="src.services.experiment_runner"):
        runner.run(config, "timed")
    assert "experiment timed took" in caplog.text
    assert "(kind=reducibility, seed=5)" in caplog.text

def test_gaussian_moments_summary_is_reproducible(runner, tmp_path):
    fields = dict(kind="gaussian_moments", model={"name": "isotropic_gaussian", "dimension": 2},
                  sampler={"refresh_rate": 1.0}, horizon=200.0, replicates=2, seed=11)
    first = runner.run(_config(tmp_path / "a", **fields), "moments")
    runner.run(_config(tmp_path / "b", **fields), "moments")
    with open(tmp_path / "a" / "moments" / "summary.json", "rb") as f, \
            open(tmp_path / "b" / "moments" / "summary.json", "rb") as g:
        assert f.read() == g.read()
    assert set(first.oracle) == {"mean_0", "mean_1", "second_moment_0", "second_moment_1"}
    assert first.metrics["max_abs_z_score"] is not None
    assert all(result.error is None for result in first.replicates)


def test_seed_changes_the_summary(runner, tmp_path):
    fields = dict(kind="gaussian_moments", model={"name": "isotropic_gaussian", "dimension": 2},
                  sampler={"refresh_rate": 1.0}, horizon=200.0)
    one = runner.run(_config(tmp_path / "a", seed=1, **fields), "moments")
    two = runner.run(_config(tmp_path / "b", seed=2, **fields), "moments")
    assert one.replicates[0].estimates != two.replicates[0].estimates


def test_event_and_mesh_dumps(runner, tmp_path):
    config = _config(tmp_path, kind="gaussian_moments", model={"name": "isotropic_gaussian", "dimension": 2},
                     sampler={"refresh_rate": 1.0}, horizon=150.0, mesh=0.5, dump_events=True)
    runner.run(config, "dumps")
    events = _rows(tmp_path / "dumps" / "events.csv")
    assert events[0] == ["t", "event_kind", "factor_id", "coordinates", "x", "v"]
    assert events[1][1] == "start"
    assert len(events[1][4].split(";")) == 2
    mesh = _rows(tmp_path / "dumps" / "trajectory_mesh.csv")
    assert mesh[0] == ["t", "x_0", "x_1"]
    assert len(mesh) == 1 + 301


def test_dimension_sweep(runner, tmp_path):
    config = _config(tmp_path, kind="dimension_sweep", model={"name": "isotropic_gaussian", "precision": 1.0},
                     sampler={"refresh_rate": 1.0}, horizon=100.0, dimensions=[2, 4])
    summary = runner.run(config, "sweep")
    assert len(summary.replicates) == 2
    assert "log_log_slope" in summary.metrics
    assert len(_rows(tmp_path / "sweep" / "dimension_sweep.csv")) == 3


def test_global_vs_local(runner, tmp_path):
    config = _config(tmp_path, kind="global_vs_local", model=CHAIN,
                     sampler={"refresh_rate": 1.0, "window": 1.0}, horizon=50.0, probes=2)
    summary = runner.run(config, "chain")
    assert [r.sampler for r in summary.replicates] == ["global", "queue", "thinning"]
    assert summary.failed_replicates == 0
    assert set(summary.oracle) == {"variance_0", "variance_3"}
    for label in ("global", "queue", "thinning"):
        assert summary.metrics[f"max_relative_error_{label}"] is not None
    assert summary.replicates[2].windows == 49
    assert summary.metrics["max_pairwise_z_score"] >= 0.0
    assert summary.metrics["pairwise_within_3se"] in (0.0, 1.0)


def test_pairwise_agreement_uses_combined_standard_errors():
    rows = [
        ("global", 0, 0, 1.0, 0.3, 1.0),
        ("queue", 0, 0, 2.0, 0.4, 1.0),
        ("thinning", 0, 0, 1.0, 0.0, 1.0),
    ]
    metrics = _pairwise_agreement(rows)
    # |1 - 2| / 0.5 = 2 for global/queue, |2 - 1| / 0.4 = 2.5 for queue/thinning
    assert metrics["max_pairwise_z_score"] == pytest.approx(2.5)
    assert metrics["pairwise_within_3se"] == 1.0
    rows[1] = ("queue", 0, 0, 3.0, 0.4, 1.0)
    assert _pairwise_agreement(rows)["pairwise_within_3se"] == 0.0


def test_refresh_comparison(runner, tmp_path):
    config = _config(tmp_path, kind="refresh_comparison", model=CHAIN,
                     sampler={"refresh_rate": 1.0, "implementation": "queue", "alpha": 1.0, "beta": 4.0},
                     refresh_rates=[1.0], horizon=20.0, probes=2)
    summary = runner.run(config, "refresh")
    assert len(summary.replicates) == 4
    assert summary.failed_replicates == 0
    assert "median_abs_relative_error_restricted_partial@1.0" in summary.metrics
    assert "median_abs_relative_error_local@1.0" in summary.metrics


def test_refresh_comparison_honors_the_implementation(runner, tmp_path):
    config = _config(tmp_path, kind="refresh_comparison", model=CHAIN,
                     sampler={"refresh_rate": 1.0, "implementation": "thinning", "window": 1.0},
                     schemes=["global_gaussian", "local"], refresh_rates=[1.0], horizon=20.0, probes=2)
    summary = runner.run(config, "refresh")
    assert summary.failed_replicates == 0
    # Only the thinning sampler counts window advances.
    assert all(result.windows == 19 for result in summary.replicates)


def test_refresh_comparison_runs_the_global_sampler(runner, tmp_path):
    config = _config(tmp_path, kind="refresh_comparison", model=CHAIN,
                     sampler={"refresh_rate": 1.0, "implementation": "global"},
                     schemes=["global_gaussian", "restricted_sphere"], refresh_rates=[1.0], horizon=20.0, probes=2)
    summary = runner.run(config, "refresh")
    assert summary.failed_replicates == 0
    assert all(result.windows == 0 and result.rejections == 0 for result in summary.replicates)


def test_poisson_gmrf_global_runs_the_global_sampler(runner, tmp_path):
    config = _config(tmp_path, kind="poisson_gmrf", model={"name": "grid_poisson", "side": 3, "rho": 0.5},
                     sampler={"refresh_rate": 1.0, "implementation": "global"}, horizon=20.0)
    summary = runner.run(config, "grid")
    assert summary.failed_replicates == 0
    assert [r.sampler for r in summary.replicates] == ["global"]
    assert summary.replicates[0].bounces > 0
    assert _rows(tmp_path / "grid" / "timings.csv")[1][1] == "global"


def test_poisson_gmrf(runner, tmp_path):
    config = _config(tmp_path, kind="poisson_gmrf", model={"name": "grid_poisson", "side": 3, "rho": 0.5},
                     sampler={"refresh_rate": 1.0, "scheme": "local", "implementation": "queue"}, horizon=20.0)
    summary = runner.run(config, "grid")
    assert summary.failed_replicates == 0
    assert len(summary.replicates[0].estimates) == 9
    assert len(_rows(tmp_path / "grid" / "poisson_gmrf.csv")) == 10
    assert summary.metrics["mean_abs_error_vs_latent"] >= 0.0


def test_logistic_bench(runner, tmp_path):
    config = _config(tmp_path, kind="logistic_bench", model={"name": "logistic", "dimension": 2},
                     sampler={"refresh_rate": 1.0, "implementation": "thinning", "window": 0.5},
                     data_sizes=[20], horizon=20.0)
    summary = runner.run(config, "logistic")
    assert summary.failed_replicates == 0
    assert summary.replicates[0].estimates["datum_evaluations_per_candidate"] == 1.0
    rows = _rows(tmp_path / "logistic" / "logistic_bench.csv")
    assert rows[0][-1] == "evaluations_per_candidate"
    assert rows[1][0] == "20"


def test_radial_invariance(runner, tmp_path):
    config = _config(tmp_path, kind="radial_invariance", sampler={"refresh_rate": 0.0},
                     horizon=1.0, samples=50, radial_orders=[3])
    summary = runner.run(config, "radial")
    assert summary.failed_replicates == 0
    assert 0.0 <= summary.metrics["min_ks_pvalue"] <= 1.0
    assert len(_rows(tmp_path / "radial" / "radial_invariance.csv")) == 3


def test_sampler_failure_is_recorded_not_raised(runner):
    summary = RunSummary(kind=ExperimentKind.REDUCIBILITY, seed=0)

    def body(result):
        raise RadialCollapseError("reached the origin")

    result = runner._guarded(summary, 0, "radial", body)
    assert result.error == "RadialCollapseError: reached the origin"
    assert summary.failed_replicates == 1
    assert result.total_events == 0
