import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_circulant(xi):
    """Reference circulant built entry by entry: A[k, j] = xi[(k - j) mod n]."""
    n = len(xi)
    return np.array([[xi[(k - j) % n] for j in range(n)] for k in range(n)])


def dense_toeplitz(xi, n):
    """Reference Toeplitz T[i, j] = xi[n - 1 + i - j] (0-based)."""
    return np.array([[xi[n - 1 + i - j] for j in range(n)] for i in range(n)])


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        request.config.stash.setdefault(_ACCEPTANCE, []).append((number, line))
        print(line)
        return passed

    return report


_ACCEPTANCE = pytest.StashKey()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
