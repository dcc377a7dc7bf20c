import numpy as np
import pytest
from hypothesis import settings

from advrecon.measurement import gen_gaussian_operator

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_operator():
    return gen_gaussian_operator(6, 10, seed=3)


def fd_gradient(fun, x, h=1e-6):
    """Central finite differences of a scalar function over every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        up = fun(x)
        x[i] = orig - h
        down = fun(x)
        x[i] = orig
        grad[i] = (up - down) / (2 * h)
    return grad


def assert_grad_close(analytic, numeric, rtol=1e-4):
    """Relative agreement measured against the gradient's overall scale."""
    scale = max(np.linalg.norm(numeric), 1e-12)
    assert np.linalg.norm(analytic - numeric) / scale < rtol


ACCEPTANCE_LINES = []


def record_acceptance(number, ok, detail):
    ACCEPTANCE_LINES.append("criterion %s: %s  %s" % (number, "PASS" if ok else "FAIL", detail))
    print(ACCEPTANCE_LINES[-1])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split(":")[0]):
            terminalreporter.write_line(line)
