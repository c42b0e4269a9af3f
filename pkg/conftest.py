import logging
from datetime import datetime
from pathlib import Path

import pytest

from nn.tensor import set_debug
from utils.logger import setup_logger

TEST_LOG_DIR = Path("logs")


def pytest_addoption(parser) -> None:
    """Register the templink test options.

    Args:
        parser: pytest command line parser
    """
    group = parser.getgroup("templink")
    group.addoption(
        "--logging-level",
        action="store",
        default="WARNING",
        help="Console and file log level for the session (default WARNING)",
    )
    group.addoption(
        "--seed",
        action="store",
        type=int,
        default=3,
        help="Seed of the session synthetic dataset (default 3)",
    )
    group.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Also run the full synthetic acceptance tests",
    )


def pytest_collection_modifyitems(config, items) -> None:
    """Skip tests marked slow unless --run-slow is given."""
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session", autouse=True)
def setup_logging(request) -> None:
    """Log the whole session to logs/test-run-<timestamp>.log as JSON lines."""
    level = request.config.getoption("--logging-level")
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    setup_logger(level, TEST_LOG_DIR / f"test-run-{stamp}.log")
    logging.getLogger(__name__).info("Test session started (level %s)", level)


@pytest.fixture(scope="session")
def base_seed(request) -> int:
    """Seed from --seed; fixtures derive their own streams from it."""
    return request.config.getoption("--seed")


@pytest.fixture
def debug_tensors():
    """Check every tensor op for non-finite output while the test runs."""
    set_debug(True)
    yield
    set_debug(False)
