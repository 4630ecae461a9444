import numpy as np
import pytest
from scipy.linalg import expm

from hamloop import symp_core as sc


def random_symplectic(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    """exp(J S) for a random symmetric S; block order."""
    a = rng.standard_normal((2 * n, 2 * n)) * scale
    return expm(sc.standard_j(n) @ (a + a.T) / 2)


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria register a one-line verdict here; printed at the end of the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
