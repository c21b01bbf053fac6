import numpy as np
import pytest

from hessquot import kernels


def random_hermitian_pd(rng, n, lo=0.5, hi=2.0, size=None):
    """Random Hermitian positive definite matrices with spectrum in [lo, hi]."""
    shape = () if size is None else (size,)
    x = rng.standard_normal(shape + (n, n)) + 1j * rng.standard_normal(shape + (n, n))
    q, _ = np.linalg.qr(x)
    lam = rng.uniform(lo, hi, shape + (n,))
    return (q * lam[..., None, :]) @ np.conj(np.swapaxes(q, -1, -2))


def random_hermitian(rng, n, size=None):
    shape = () if size is None else (size,)
    x = rng.standard_normal(shape + (n, n)) + 1j * rng.standard_normal(shape + (n, n))
    return 0.5 * (x + np.conj(np.swapaxes(x, -1, -2)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request):
    return kernels.available_backends()[request.param]


# acceptance results, printed as one PASS/FAIL line each at the end of the run
ACCEPTANCE = {}


def record_criterion(number, title, passed, detail=""):
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  [{k}] {title}: {detail}")
