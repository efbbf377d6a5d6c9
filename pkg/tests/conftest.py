import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from bridgenet.data import make_patch  # noqa: E402
from bridgenet.models import ModelConfig  # noqa: E402
from bridgenet.synthetic import make_sample  # noqa: E402

TOY = ModelConfig(dsr_channels=8, mde_channels=4, pyramid_channels=8)
TINY = ModelConfig(dsr_channels=4, mde_channels=4, pyramid_channels=4, transform_blocks=1,
                   bottleneck_blocks=1, mde_stage_blocks=1)

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        _criteria[n] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, status = _criteria[n]
        terminalreporter.write_line(f"criterion {n} [{status}] {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)


def toy_patches(n, scale=4, size=None, seed=0):
    """``n`` patches, one per synthetic scene, taken from the scene centre."""
    s = 16 * scale
    size = size or 2 * s
    off = (size - s) // 2
    return [make_patch(make_sample(size, size, seed=seed + k), scale, off, off) for k in range(n)]
