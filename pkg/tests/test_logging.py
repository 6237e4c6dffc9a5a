import logging

import pytest

from aquitrans.utils.logging import LOG_LEVEL_ENV, resolve_log_level, setup_logging


@pytest.fixture(autouse=True)
def detach_shared_handlers():
    yield
    setup_logging(None, "teardown", "test")


def test_level_from_environment(monkeypatch):
    monkeypatch.setenv(LOG_LEVEL_ENV, "debug")
    assert resolve_log_level() == logging.DEBUG


def test_unknown_level_falls_back(monkeypatch, caplog):
    monkeypatch.setenv(LOG_LEVEL_ENV, "chatty")
    with caplog.at_level(logging.WARNING):
        assert resolve_log_level() == logging.INFO
    assert "Unknown log level 'CHATTY'" in caplog.text


def test_without_log_dir_only_sets_level(monkeypatch):
    monkeypatch.setenv(LOG_LEVEL_ENV, "WARNING")
    logger = setup_logging(None, "20240101_000000", "scenario")
    assert logger.name == "aquitrans.scenario"
    assert logging.getLogger("aquitrans").level == logging.WARNING


def test_package_records_reach_log_dir(tmp_path):
    setup_logging(tmp_path / "logs", "20240101_000000", "scenario", level=logging.INFO)
    logging.getLogger("aquitrans.physics.darcy").warning("routed into the run log")
    for handler in logging.getLogger("aquitrans").handlers + logging.getLogger().handlers:
        handler.flush()

    written = [p.read_text(encoding="utf-8") for p in (tmp_path / "logs").rglob("*") if p.is_file()]
    assert any("routed into the run log" in text for text in written)


def test_rerun_does_not_duplicate_package_handlers(tmp_path):
    setup_logging(tmp_path / "a", "1", "scenario")
    setup_logging(tmp_path / "b", "2", "scenario")
    handlers = logging.getLogger("aquitrans").handlers
    assert len(handlers) == len(set(map(id, handlers)))
