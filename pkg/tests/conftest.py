import numpy as np
import pytest
from PIL import Image

from starseg.imagecore import BinaryMask, ImageGrid

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def write_png(tmp_path):
    """Write an integer array as PNG and return the path."""

    def _write(arr, name="img.png"):
        path = tmp_path / name
        Image.fromarray(np.asarray(arr)).save(path)
        return path

    return _write


def random_mask(rng, shape, p=0.5):
    return BinaryMask(rng.random(shape) < p)


def random_image(rng, shape):
    return ImageGrid(rng.random(shape))


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    if "acceptance" not in report.keywords:
        return
    _ACCEPTANCE.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
