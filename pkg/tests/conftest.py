"""Shared oracles: dense Pauli matrices built with plain ``np.kron``."""
from functools import reduce

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

SIGMA = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_label(label: str) -> np.ndarray:
    return reduce(np.kron, [SIGMA[c] for c in label])


def dense_of(terms: dict, L: int) -> np.ndarray:
    out = np.zeros((1 << L, 1 << L), dtype=complex)
    for label, c in terms.items():
        out += c * kron_label(label)
    return out


def site_op(L: int, j: int, m: np.ndarray) -> np.ndarray:
    ops = [np.eye(2)] * L
    ops[j] = m
    return reduce(np.kron, ops)


def collective(L: int, axis: str) -> np.ndarray:
    return sum(site_op(L, j, SIGMA[axis.upper()] / 2) for j in range(L))


def random_labels(rng, L, n):
    return ["".join(rng.choice(list("IXYZ"), L)) for _ in range(n)]


def random_hermitian(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (a + a.conj().T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE: dict[int, list] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    status, notes = ACCEPTANCE.get(number, (True, []))
    ACCEPTANCE[number] = (status and bool(ok), notes + [detail])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, notes = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {'; '.join(notes)}")
