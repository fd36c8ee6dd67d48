import os
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]


def mnist_dir():
    """MNIST IDX directory: $EFNET_MNIST_DIR, else data/mnist in the repo."""
    d = Path(os.environ.get("EFNET_MNIST_DIR", REPO / "data" / "mnist"))
    names = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
             "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    if all((d / n).exists() or (d / (n + ".gz")).exists() for n in names):
        return d
    return None


@pytest.fixture(scope="session")
def mnist_path():
    d = mnist_dir()
    if d is None:
        pytest.skip("MNIST IDX files not found; run scripts/fetch_mnist.py or set EFNET_MNIST_DIR")
    return d


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
