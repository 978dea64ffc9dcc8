import logging

import pytest

from src import config
from src.setup_logging import setup_logging


@pytest.fixture
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield root
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)


def test_creates_missing_log_directory(tmp_path, restore_root_logger):
    log_file = tmp_path / "nested" / "run.log"
    assert setup_logging(logging.DEBUG, str(log_file)) == str(log_file)
    logging.getLogger("src.trainer").debug("step 1")
    for handler in restore_root_logger.handlers:
        handler.flush()
    assert "src.trainer - DEBUG - step 1" in log_file.read_text(encoding="utf-8")


def test_default_file_goes_to_log_dir(tmp_path, monkeypatch, restore_root_logger):
    monkeypatch.setattr(config, "TTM_LOG_DIR", str(tmp_path / "logs"))
    log_file = setup_logging()
    assert log_file.startswith(str(tmp_path / "logs"))
    assert log_file.endswith(".log")


def test_repeated_setup_replaces_handlers(tmp_path, restore_root_logger):
    setup_logging(log_file=str(tmp_path / "a.log"))
    setup_logging(log_file=str(tmp_path / "b.log"))
    files = [h.baseFilename for h in restore_root_logger.handlers if isinstance(h, logging.FileHandler)]
    assert files == [str(tmp_path / "b.log")]
    assert len(restore_root_logger.handlers) == 2


def test_plotting_loggers_stay_quiet_at_debug(tmp_path, restore_root_logger):
    setup_logging(logging.DEBUG, str(tmp_path / "run.log"))
    for name in config.QUIET_LOGGERS:
        assert logging.getLogger(name).level == logging.WARNING
