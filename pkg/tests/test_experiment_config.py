"""Tests for configuration validation and the JSON result repository."""
import glob
import json
import logging
import os

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.exceptions import InvalidConfigError
from src.data.experiment_models import (
    ExperimentConfig,
    ExperimentKind,
    ReplicateResult,
    RunSummary,
)
from src.repositories.json_result_repository import JsonResultRepository


CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "configs")

BAD_RATE = """{
  "kind": "reducibility",
  "sampler": {
    "refresh_rate": -1.0
  }
}
"""

PARTIAL_WITHOUT_BETA = """{
  "kind": "gaussian_moments",
  "model": {"name": "isotropic_gaussian", "dimension": 2},
  "horizon": 10.0,
  "sampler": {
    "refresh_rate": 1.0,
    "scheme": "restricted_partial",
    "alpha": 1.0
  }
}
"""


@pytest.fixture
def repository():
    return JsonResultRepository()


@pytest.mark.parametrize("path", sorted(glob.glob(os.path.join(CONFIG_DIR, "*.json"))))
def test_shipped_configs_validate(path, repository):
    assert repository.validate_config(path) == []


def test_field_problem_reports_its_line(repository, write_config):
    path = write_config(BAD_RATE)
    problems = repository.validate_config(path)
    assert len(problems) == 1
    assert problems[0].startswith(f"{path}:4: sampler.refresh_rate:")


def test_missing_field_is_named(repository, write_config):
    path = write_config('{\n  "kind": "reducibility"\n}\n')
    assert repository.validate_config(path) == [f"{path}:1: sampler: missing field"]


def test_cross_field_problem_points_at_its_section(repository, write_config):
    path = write_config(PARTIAL_WITHOUT_BETA)
    problems = repository.validate_config(path)
    assert problems == [f"{path}:5: sampler: restricted_partial refreshment requires alpha and beta"]


def test_several_cross_field_problems_are_listed_separately(repository, write_config):
    text = json.dumps({
        "kind": "global_vs_local",
        "model": {"name": "isotropic_gaussian", "dimension": 4},
        "sampler": {"refresh_rate": 1.0, "minibatch": 2},
    }, indent=2)
    problems = repository.validate_config(write_config(text))
    assert len(problems) >= 4
    assert any("minibatch > 1 with heterogeneous bounds" in p for p in problems)
    assert any("need a finite horizon" in p for p in problems)
    assert any("runs on a chain_gmrf model" in p for p in problems)


def test_malformed_json(repository, write_config):
    path = write_config('{\n  "kind": "reducibility",\n  "sampler": \n}\n')
    problems = repository.validate_config(path)
    assert len(problems) == 1
    assert problems[0].startswith(f"{path}:4: malformed JSON")


def test_non_object_config(repository, write_config):
    path = write_config("[1, 2]")
    assert repository.validate_config(path) == [f"{path}:1: the configuration must be a JSON object"]


def test_missing_file(repository, tmp_path):
    path = str(tmp_path / "absent.json")
    with pytest.raises(InvalidConfigError) as excinfo:
        repository.load_config(path)
    assert excinfo.value.problems == [f"{path}:1: file not found"]


def test_unknown_key_warns_but_loads(repository, write_config, caplog):
    text = '{\n  "kind": "reducibility",\n  "sampler": {"refresh_rate": 0.0, "colour": "red"}\n}\n'
    path = write_config(text)
    with caplog.at_level(logging.WARNING):
        config = repository.load_config(path)
    assert config.kind is ExperimentKind.REDUCIBILITY
    assert f"{path}:3: ignoring unknown key 'colour'" in caplog.text


def test_local_refresh_needs_local_implementation():
    with pytest.raises(ValidationError):
        ExperimentConfig(kind="gaussian_moments", horizon=1.0,
                         model={"name": "isotropic_gaussian", "dimension": 2},
                         sampler={"refresh_rate": 1.0, "scheme": "local"})


def test_refresh_comparison_with_global_sampler_rejects_local_scheme():
    fields = {"kind": "refresh_comparison", "horizon": 10.0,
              "model": {"name": "chain_gmrf", "dimension": 4, "rho": 0.3},
              "sampler": {"refresh_rate": 1.0, "implementation": "global"}}
    with pytest.raises(ValidationError) as excinfo:
        ExperimentConfig.model_validate(fields)
    assert "schemes: local refreshment needs a local implementation" in str(excinfo.value)
    assert ExperimentConfig.model_validate({**fields, "schemes": ["global_gaussian"]}).schemes


def test_radial_orders_must_be_at_least_two():
    with pytest.raises(ValidationError) as excinfo:
        ExperimentConfig.model_validate(
            {"kind": "radial_invariance", "sampler": {"refresh_rate": 0.0}, "radial_orders": [1, 3]})
    assert "radial_orders: invariant family orders must be >= 2" in str(excinfo.value)


def test_replicate_tallies_must_add_up():
    with pytest.raises(ValidationError):
        ReplicateResult(replicate=0, bounces=2, refreshes=1, total_events=4)
    assert ReplicateResult(replicate=0, bounces=2, refreshes=1, rejections=1, total_events=4).total_events == 4


def test_summary_bytes_are_stable_and_skip_wall_time(repository, tmp_path):
    summary = RunSummary(kind=ExperimentKind.REDUCIBILITY, seed=3, metrics={"min_norm": 1.0, "b": [1, 2]})
    summary.record(ReplicateResult(replicate=0, estimates={"z": 1.5, "a": 0.25}, wall_seconds=12.5))
    summary.record(ReplicateResult(replicate=1, error="RadialCollapseError: boom"))
    first = repository.save_summary(summary, str(tmp_path / "one" / "summary.json"))
    second = repository.save_summary(summary, str(tmp_path / "two" / "summary.json"))
    with open(first, "rb") as f, open(second, "rb") as g:
        text = f.read()
        assert text == g.read()
    assert b"wall_seconds" not in text
    assert summary.failed_replicates == 1
    loaded = repository.load_summary(first)
    assert loaded.replicates[0].estimates == {"a": 0.25, "z": 1.5}
    assert loaded.failed_replicates == 1


def test_table_cells_are_plain_numbers(repository, tmp_path):
    path = repository.write_table(
        str(tmp_path / "table.csv"), ("a", "b", "c"), [(np.float64(0.1), np.int64(3), "x")]
    )
    with open(path, encoding="utf-8") as f:
        assert f.read() == "a,b,c\n0.1,3,x\n"
