import zlib

import numpy as np
import pytest
from hypothesis import settings

from rnchain.cpmaps import CpMap

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_cp(rng, n, m, r=None):
    r = r or int(rng.integers(1, n * m + 1))
    k = rng.normal(size=(r, m, n)) + 1j * rng.normal(size=(r, m, n))
    return CpMap(n, m, k / np.sqrt(r * n))


def random_matrix(rng, n, m=None):
    m = n if m is None else m
    return rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m))


def random_density(rng, d, rank=None):
    g = random_matrix(rng, d, rank or d)
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def unit(n, i, j):
    e = np.zeros((n, n), dtype=complex)
    e[i, j] = 1
    return e


@pytest.fixture
def rng(request):
    return np.random.default_rng(zlib.crc32(request.node.name.encode()))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
