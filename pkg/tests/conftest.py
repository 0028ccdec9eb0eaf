from pathlib import Path

import numpy as np
import pytest

from hqnn import data


def embed(op, targets, n):
    """Full 2^n matrix of ``op`` acting on ``targets`` (qubit 0 = MSB), by explicit bit loops."""
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        bi = [(i >> (n - 1 - q)) & 1 for q in range(n)]
        for j in range(dim):
            bj = [(j >> (n - 1 - q)) & 1 for q in range(n)]
            if any(bi[q] != bj[q] for q in range(n) if q not in targets):
                continue
            li = int("".join(str(bi[q]) for q in targets), 2)
            lj = int("".join(str(bj[q]) for q in targets), 2)
            out[i, j] = op[li, lj]
    return out


def random_density(n, rng, rank=None):
    dim = 2**n
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_pure(rng):
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


DATA_DIR = Path(__file__).resolve().parents[1] / "data" / "mnist"


@pytest.fixture(scope="session")
def mnist_splits():
    images, labels = data.find_idx_files(DATA_DIR)
    pool = data.filter_and_normalize(data.load_idx(images, labels))
    return data.stratified_split(pool, 150, 50, 0)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
