import numpy as np
import pytest

from wganlab.nets import MlpParams


def linear_critic(w1: float, w2: float, bias: float = 0.0) -> MlpParams:
    """ReLU critic computing exactly w1*x + w2*y + bias (away from the axes).

    Hidden units carry relu(x), relu(-x), relu(y), relu(-y) unchanged.
    """
    first = np.array([[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]])
    eye = np.eye(4)
    last = np.array([[w1], [-w1], [w2], [-w2]])
    layers = [(first, np.zeros(4)), (eye, np.zeros(4)), (eye, np.zeros(4)), (last, np.array([bias]))]
    return MlpParams(layers, "relu", "critic")


def random_tanh_critic(rng: np.random.Generator, max_width: int = 16) -> MlpParams:
    widths = rng.integers(2, max_width + 1, size=3)
    dims = [2, *widths, 1]
    layers = [
        (rng.normal(size=(a, b)) / np.sqrt(a), 0.1 * rng.normal(size=b))
        for a, b in zip(dims[:-1], dims[1:])
    ]
    return MlpParams(layers, "tanh", "critic")


def off_axis_points(rng: np.random.Generator, n: int) -> np.ndarray:
    pts = rng.uniform(-2, 2, size=(n, 2))
    pts[np.abs(pts) < 0.05] = 0.5
    return pts


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
