"""Tests for logger setup and structured step records."""

import json
import logging

from drfer.utils.logger import get_logger, log_step, setup_logger


def _records(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]


def test_file_log_is_json_lines(tmp_path):
    log_file = tmp_path / "logs" / "drfer.jsonl"
    logger = setup_logger("drfer_test_file", log_file=str(log_file), console_output=False)

    logger.info("Loading configuration")
    logger.debug("hidden at INFO")

    (record,) = _records(log_file)
    assert record["message"] == "Loading configuration"
    assert record["level"] == "INFO"
    assert {"timestamp", "name", "pathname", "lineno"} <= set(record)


def test_step_records_carry_terms(tmp_path):
    log_file = tmp_path / "steps.jsonl"
    logger = setup_logger(
        "drfer_test_steps", log_file=str(log_file), level="DEBUG", console_output=False
    )

    log_step(logger, "3", "joint", 0, 4, {"cls_exp": 1.5, "tri": 0.25}, 1.75)
    log_step(logger, "1exp", "expression", 1, 0, {"cls_exp": float("nan")}, float("nan"))

    first, second = _records(log_file)
    assert first["event"] == "step"
    assert first["stage"] == "3" and first["step"] == 4
    assert first["terms"] == {"cls_exp": 1.5, "tri": 0.25}
    assert first["total"] == 1.75
    assert second["total"] == "nan"


def test_json_console(capsys):
    logger = setup_logger("drfer_test_console", json_logs=True)
    logger.warning("console record")
    line = capsys.readouterr().out.strip()
    assert json.loads(line)["message"] == "console record"


def test_setup_is_idempotent(tmp_path):
    for _ in range(3):
        logger = setup_logger("drfer_test_idem", log_file=str(tmp_path / "a.jsonl"))
    assert len(logger.handlers) == 2
    assert get_logger("drfer_test_idem") is logger
    assert logger.level == logging.INFO
