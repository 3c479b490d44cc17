import os

import numpy as np
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session", autouse=True)
def reference_cache(tmp_path_factory):
    """Fine-mesh references go to a per-session directory unless the caller
    chose one with LAPBEL_CACHE_DIR."""
    if "LAPBEL_CACHE_DIR" in os.environ:
        yield os.environ["LAPBEL_CACHE_DIR"]
        return
    path = tmp_path_factory.mktemp("reference-cache")
    os.environ["LAPBEL_CACHE_DIR"] = str(path)
    yield str(path)
    del os.environ["LAPBEL_CACHE_DIR"]


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
