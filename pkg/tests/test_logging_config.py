"""Tests for the logging helpers."""
import logging

from src.utils.logging_config import get_logger, log_duration, setup_logging


def test_log_duration_records_seconds(caplog):
    logger = get_logger("bps.test")
    assert logger.name == "bps.test"
    with caplog.at_level(logging.DEBUG, logger="bps.test"):
        with log_duration(logger, "block") as timing:
            pass
    assert timing["seconds"] >= 0.0
    assert "block took" in caplog.text


def test_setup_logging_mirrors_to_file(tmp_path):
    root = logging.getLogger()
    saved_handlers, saved_level = list(root.handlers), root.level
    log_file = tmp_path / "run.log"
    try:
        setup_logging("warning", str(log_file))
        assert root.level == logging.WARNING
        get_logger("bps.test").warning("capped run")
        for handler in root.handlers:
            handler.flush()
        assert "bps.test - WARNING - capped run" in log_file.read_text(encoding="utf-8")
    finally:
        for handler in root.handlers:
            handler.close()
        root.handlers[:] = saved_handlers
        root.setLevel(saved_level)


def test_log_duration_carries_run_identifiers(caplog):
    logger = get_logger("bps.test")
    with caplog.at_level(logging.DEBUG, logger="bps.test"):
        with log_duration(logger, "experiment demo", kind="reducibility", seed=7) as timing:
            pass
    assert timing["kind"] == "reducibility"
    assert timing["seed"] == 7
    assert "experiment demo took" in caplog.text
    assert "(kind=reducibility, seed=7)" in caplog.text
