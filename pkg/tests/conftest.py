import numpy as np
import pytest

from usmo.data import Dataset
from usmo.kernel import KernelSpec, kernel_matrix
from usmo.solver import Hyperparams


def t1_dataset():
    return Dataset([[1.0]], [[1.0], [-1.0]])


def t1_hyperparams(**kw):
    return Hyperparams(pi=0.5, lam=0.25, kernel=KernelSpec.linear(), **kw)


def random_dataset(rng, p, n, d, shift=1.5):
    """Positives around +shift on every axis; the pool mixes both classes."""
    mu = np.full(d, shift / np.sqrt(d))
    n_pos = n // 3
    P = rng.normal(mu, 1.0, (p, d))
    U = np.vstack([rng.normal(mu, 1.0, (n_pos, d)), rng.normal(-mu, 1.0, (n - n_pos, d))])
    return Dataset(P, rng.permutation(U))


def dense_f(dataset, kernel, alpha):
    """Bias-free f on the unlabeled pool, from a dense Gram block."""
    return kernel_matrix(kernel, dataset.unlabeled, dataset.X) @ alpha


@pytest.fixture
def t1():
    return t1_dataset(), t1_hyperparams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail); filled by test_acceptance, printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
