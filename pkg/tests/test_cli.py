"""Tests for the command-line entry point."""
import json

import pytest

import bps


REDUCIBILITY = json.dumps({
    "kind": "reducibility",
    "sampler": {"refresh_rate": 0.0},
    "events": 50,
}, indent=2)


@pytest.fixture(autouse=True)
def quiet_logging(monkeypatch):
    monkeypatch.setattr(bps, "setup_logging", lambda level, log_file=None: None)


def test_validate_good_config(write_config):
    assert bps.main(["validate", write_config(REDUCIBILITY)]) == bps.EXIT_OK


def test_validate_bad_config_lists_problems(write_config, capsys):
    path = write_config('{\n  "kind": "reducibility",\n  "sampler": {\n    "refresh_rate": -2\n  }\n}\n')
    assert bps.main(["validate", path]) == bps.EXIT_INVALID_CONFIG
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 1
    assert lines[0].startswith(f"{path}:4: sampler.refresh_rate:")


def test_run_writes_summary_under_config_stem(write_config, tmp_path):
    path = write_config(REDUCIBILITY, name="witness.json")
    out = tmp_path / "out"
    assert bps.main(["run", path, "--out-dir", str(out), "--seed", "9"]) == bps.EXIT_OK
    with open(out / "witness" / "summary.json", encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["seed"] == 9
    assert summary["metrics"]["min_norm"] >= 1.0 - 1e-9


def test_run_rejects_invalid_override(write_config, tmp_path, capsys):
    path = write_config(REDUCIBILITY)
    code = bps.main(["run", path, "--replicates", "0", "--out-dir", str(tmp_path)])
    assert code == bps.EXIT_INVALID_CONFIG
    assert f"{path}:command line: replicates:" in capsys.readouterr().err


def test_run_rejects_invalid_config(write_config, capsys):
    path = write_config('{"kind": "nonsense", "sampler": {"refresh_rate": 1.0}}')
    assert bps.main(["run", path]) == bps.EXIT_INVALID_CONFIG
    assert f"{path}:1: kind:" in capsys.readouterr().err


def test_missing_command_fails():
    assert bps.main([]) == bps.EXIT_FAILED


def test_overrides_map_flags_to_fields():
    args = bps.build_parser().parse_args(["run", "c.json", "--out-dir", "x", "--mesh", "0.5"])
    assert bps._overrides(args) == {"output_dir": "x", "mesh": 0.5}
