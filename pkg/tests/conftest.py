import numpy as np
import pytest


def rel_err(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


def central_difference(f, inputs, tangents, eps=1e-5):
    """(f(x + eps v) - f(x - eps v)) / (2 eps) for lists of array inputs."""
    plus = [x + eps * v for x, v in zip(inputs, tangents)]
    minus = [x - eps * v for x, v in zip(inputs, tangents)]
    return (np.asarray(f(*plus)) - np.asarray(f(*minus))) / (2 * eps)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


_CRITERIA = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    _CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
