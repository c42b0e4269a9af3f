import json
import logging
import threading

import pytest

from utils.logger import ContextFilter, LogContext, StructuredLogFormatter, current_context


def _record(message: str = "hello") -> logging.LogRecord:
    return logging.LogRecord("templink.test", logging.INFO, __file__, 12, message, None, None)


@pytest.mark.logging
class TestLogContext:
    """Context fields shared by every record in a block."""

    def test_fields_visible_inside_block_only(self):
        """Context fields exist inside the with block and vanish after it."""
        with LogContext(command="train", seed=7):
            assert current_context() == {"command": "train", "seed": 7}
        assert current_context() == {}

    def test_nested_inner_wins(self):
        """Nested contexts merge and the inner value wins on a clash."""
        with LogContext(command="pipeline", seed=1):
            with LogContext(seed=2, variant="RNN_LINK"):
                assert current_context() == {"command": "pipeline", "seed": 2, "variant": "RNN_LINK"}
            assert current_context() == {"command": "pipeline", "seed": 1}

    def test_worker_threads_see_context(self):
        """Records made on another thread carry the context opened by the caller."""
        seen = {}

        def work():
            seen.update(current_context())

        with LogContext(stage="prepare"):
            worker = threading.Thread(target=work)
            worker.start()
            worker.join()
        assert seen == {"stage": "prepare"}


@pytest.mark.logging
class TestStructuredFormatter:
    """JSON-lines file records."""

    def test_json_line_has_fixed_and_context_fields(self):
        """A formatted record is one JSON object with the context merged in."""
        record = _record("epoch %d done")
        record.args = (3,)
        with LogContext(command="train", variant="TWO_SEAL_RNN"):
            ContextFilter().filter(record)
        entry = json.loads(StructuredLogFormatter().format(record))
        assert entry["message"] == "epoch 3 done"
        assert entry["level"] == "INFO"
        assert entry["logger"] == "templink.test"
        assert entry["line"] == 12
        assert entry["command"] == "train"
        assert entry["variant"] == "TWO_SEAL_RNN"

    def test_context_cannot_overwrite_fixed_fields(self):
        """A context key named like a fixed field keeps the record's own value."""
        record = _record()
        with LogContext(level="bogus"):
            ContextFilter().filter(record)
        entry = json.loads(StructuredLogFormatter().format(record))
        assert entry["level"] == "INFO"

    def test_record_without_filter(self):
        """Records that never passed the filter still format."""
        entry = json.loads(StructuredLogFormatter().format(_record()))
        assert entry["message"] == "hello"
        assert "exception" not in entry
