import os

import pytest

MNIST_CANDIDATES = [os.environ.get("ARBNETS_MNIST_DIR", ""), "data/mnist", "/root/data/mnist"]


def find_mnist():
    for d in MNIST_CANDIDATES:
        if d and os.path.exists(os.path.join(d, "train-images-idx3-ubyte")):
            return d
    return None


@pytest.fixture(scope="session")
def mnist_dir():
    d = find_mnist()
    if d is None:
        pytest.skip("MNIST IDX files not found; set ARBNETS_MNIST_DIR")
    return d


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
