import logging

import pytest

from effectfuse.services.progress import LoggingProgress, NullProgress


def test_null_progress_accepts_everything():
    p = NullProgress()
    p.set_status("x")
    p.set_progress(value=3, maximum=10)


def test_logging_progress_reports_every_nth_and_last(caplog):
    log = logging.getLogger("effectfuse.test.progress")
    p = LoggingProgress(every=4, log=log)
    with caplog.at_level(logging.INFO, logger=log.name):
        p.set_status("sampling")
        p.set_progress(value=0, maximum=10)
        for i in range(1, 11):
            p.set_progress(value=i)
    messages = [r.getMessage() for r in caplog.records]
    assert messages == ["sampling", "sampling: 4/10", "sampling: 8/10", "sampling: 10/10"]


def test_logging_progress_indeterminate(caplog):
    log = logging.getLogger("effectfuse.test.progress2")
    p = LoggingProgress(every=2, log=log)
    with caplog.at_level(logging.INFO, logger=log.name):
        p.set_progress(value=2)
    assert [r.getMessage() for r in caplog.records] == ["progress: 2"]


def test_logging_progress_rejects_bad_interval():
    with pytest.raises(ValueError):
        LoggingProgress(every=0)
