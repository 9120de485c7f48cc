import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import mnist_root  # noqa: E402
from tdamnist.cli import DATA_ENV  # noqa: E402


@pytest.fixture(scope="session")
def mnist_train():
    root = mnist_root()
    if root is None:
        pytest.skip(f"MNIST IDX files not found; set {DATA_ENV}")
    from tdamnist.imageio import load_mnist

    return load_mnist(root, "train")


@pytest.fixture(scope="session")
def digit(mnist_train):
    return mnist_train.images[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
