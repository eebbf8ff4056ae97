import math
from pathlib import Path

import numpy as np
import pytest

from scalarflow.ambient import make_metric
from scalarflow.surface import GridChart

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def report_line(request):
    """Record one ``PASS``/``FAIL`` line for the acceptance summary."""
    lines = request.config.stash[_LINES]

    def emit(label: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)

    return emit


@pytest.fixture
def flat2():
    return make_metric("flat-static", 2)


@pytest.fixture
def warp2():
    return make_metric("exp-warp", 2)


@pytest.fixture
def torus64():
    return GridChart.torus(2, 64)


def wave(chart, eps=0.1):
    return chart.sample(lambda X: eps * np.sin(X[..., 0]) * np.sin(X[..., 1]))


TWO_PI = 2.0 * math.pi
