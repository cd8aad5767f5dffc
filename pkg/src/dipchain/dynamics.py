"""Dense exact-diagonalization engine.

Operators are plain ``numpy`` arrays of shape ``(2^L, 2^L)``.  Hamiltonians
that conserve the parity ``prod_j sigma_z^j`` (every model in
:mod:`dipchain.models`) are diagonalized sector by sector, which cuts the
cost by about four and keeps ``L = 13`` within a few gigabytes.

Time evolution follows the density-matrix convention
``O(t) = U(t) O U(t)^dag`` with ``U(t) = exp(-i H t)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .pauli import OperatorSum

MAX_SITES = 14
HERMITIAN_TOL = 1e-10

# Times used for the discrete time average of the experiment (units of 1/J).
EXPERIMENT_TIMES = (3.77, 5.02, 6.28, 7.54, 8.80, 10.05)


def as_dense(op) -> np.ndarray:
    """Dense matrix of an :class:`OperatorSum`, a sparse matrix or an array."""
    if isinstance(op, OperatorSum):
        _guard_sites(op.L)
        return op.to_dense()
    if hasattr(op, "toarray"):
        return op.toarray()
    return np.asarray(op)


def num_sites(dim: int) -> int:
    L = int(dim).bit_length() - 1
    if dim != 1 << L:
        raise ValueError(f"dimension {dim} is not a power of two")
    return L


def _guard_sites(L: int) -> None:
    if L > MAX_SITES:
        raise ValueError(f"dense engine limited to L <= {MAX_SITES} (got L={L})")


def parity_sectors(L: int) -> list[np.ndarray]:
    """Basis indices with even and odd numbers of down spins."""
    odd = np.bitwise_count(np.arange(1 << L)) & 1
    return [np.nonzero(odd == 0)[0], np.nonzero(odd == 1)[0]]


def _conserves(matrix: np.ndarray, sectors: Sequence[np.ndarray]) -> bool:
    label = np.empty(matrix.shape[0], dtype=np.int64)
    for s, idx in enumerate(sectors):
        label[idx] = s
    rows, cols = np.nonzero(matrix)
    return bool(np.all(label[rows] == label[cols]))


@dataclass(frozen=True)
class EigenBlock:
    indices: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray


class EigenSystem:
    """Spectral decomposition of a Hermitian matrix, possibly sector-blocked.

    ``eigenvalues`` are sorted ascending; ``eigenvectors`` holds the matching
    columns (assembled on first access, which costs a full ``dim x dim``
    array).
    """

    def __init__(self, blocks: Sequence[EigenBlock], dim: int):
        self.blocks = tuple(blocks)
        self.dim = dim

    @property
    def L(self) -> int:
        return num_sites(self.dim)

    @cached_property
    def _order(self) -> np.ndarray:
        return np.argsort(np.concatenate([b.energies for b in self.blocks]), kind="stable")

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.concatenate([b.energies for b in self.blocks])[self._order]

    @cached_property
    def eigenvectors(self) -> np.ndarray:
        dtype = np.result_type(*[b.vectors.dtype for b in self.blocks])
        vecs = np.zeros((self.dim, self.dim), dtype=dtype)
        col = 0
        for b in self.blocks:
            n = len(b.energies)
            vecs[b.indices, col:col + n] = b.vectors
            col += n
        return vecs[:, self._order]

    @property
    def norm(self) -> float:
        return float(max(abs(self.eigenvalues[0]), abs(self.eigenvalues[-1])))

    # ---- basis changes ----
    def to_eigenbasis(self, op: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
        """Nonzero blocks ``V_i^dag O[I_i, I_j] V_j`` of ``op`` in the eigenbasis."""
        op = as_dense(op)
        if op.shape != (self.dim, self.dim):
            raise ValueError(f"dimension mismatch: operator {op.shape}, Hamiltonian {self.dim}")
        out = {}
        for i, bi in enumerate(self.blocks):
            for j, bj in enumerate(self.blocks):
                sub = op[np.ix_(bi.indices, bj.indices)]
                if not np.any(sub):
                    continue
                out[i, j] = bi.vectors.conj().T @ sub @ bj.vectors
        return out

    def from_eigenbasis(self, blocks: dict[tuple[int, int], np.ndarray]) -> np.ndarray:
        dtype = np.result_type(complex if any(np.iscomplexobj(v) for v in blocks.values()) else float,
                               *[b.vectors.dtype for b in self.blocks])
        out = np.zeros((self.dim, self.dim), dtype=dtype)
        for (i, j), tilde in blocks.items():
            bi, bj = self.blocks[i], self.blocks[j]
            out[np.ix_(bi.indices, bj.indices)] = bi.vectors @ tilde @ bj.vectors.conj().T
        return out

    def phases(self, i: int, j: int, t: float) -> np.ndarray:
        """``exp(-i (E_m - E_n) t)`` for ``m`` in block ``i`` and ``n`` in block ``j``."""
        return np.exp(-1j * t * np.subtract.outer(self.blocks[i].energies, self.blocks[j].energies))

    def propagator(self, t: float) -> np.ndarray:
        blocks = {(i, i): np.diag(np.exp(-1j * t * b.energies)) for i, b in enumerate(self.blocks)}
        return self.from_eigenbasis(blocks)


def diagonalize(H, sectors: str | Sequence[np.ndarray] | None = "auto") -> EigenSystem:
    """Diagonalize a Hermitian matrix.

    ``sectors="auto"`` splits by spin-flip parity whenever ``H`` conserves
    it; ``None`` forces a single block; an explicit list of index arrays is
    used as given (and checked).
    """
    H = as_dense(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    dim = H.shape[0]
    L = num_sites(dim)
    _guard_sites(L)
    scale = max(1.0, float(np.max(np.abs(H))))
    if np.max(np.abs(H - H.conj().T)) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian")
    if np.iscomplexobj(H) and not np.any(H.imag):
        H = H.real
    if sectors == "auto":
        parity = parity_sectors(L)
        sectors = parity if L > 1 and _conserves(H, parity) else [np.arange(dim)]
    elif sectors is None:
        sectors = [np.arange(dim)]
    else:
        sectors = [np.asarray(s) for s in sectors]
        if sum(len(s) for s in sectors) != dim or not _conserves(H, sectors):
            raise ValueError("sectors do not partition the basis or are not conserved")
    blocks = []
    for idx in sectors:
        try:
            e, v = np.linalg.eigh(H[np.ix_(idx, idx)])
        except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
            raise RuntimeError(f"eigensolver failed to converge: {exc}") from exc
        blocks.append(EigenBlock(idx, e, v))
    return EigenSystem(blocks, dim)


def evolve_operator(op, eig: EigenSystem, t: float) -> np.ndarray:
    """``U(t) O U(t)^dag``."""
    tilde = eig.to_eigenbasis(op)
    return eig.from_eigenbasis({ij: m * eig.phases(*ij, t) for ij, m in tilde.items()})


def _phase_table(energies: np.ndarray, times: np.ndarray) -> np.ndarray:
    return np.exp(-1j * np.outer(times, energies))


def _trace_series(a_tilde, b_tilde, eig: EigenSystem, times: np.ndarray) -> np.ndarray:
    """``Tr(A(t) B)`` for every time, from eigenbasis blocks of A and B."""
    total = np.zeros(len(times), dtype=complex)
    for (i, j), a in a_tilde.items():
        b = b_tilde.get((j, i))
        if b is None:
            continue
        w = a * b.T
        pm = _phase_table(eig.blocks[i].energies, times)
        pn = _phase_table(eig.blocks[j].energies, times).conj()
        total += np.einsum("tm,tm->t", pm, pn @ w.T)
    return total


def two_point_correlator(A, B, eig: EigenSystem, t):
    """``4 Tr(A(t) B) / (2^L L)``; scalar or array ``t``."""
    times = np.atleast_1d(np.asarray(t, dtype=float))
    L = eig.L
    vals = _trace_series(eig.to_eigenbasis(A), eig.to_eigenbasis(B), eig, times)
    out = 4.0 * vals.real / (eig.dim * L)
    return float(out[0]) if np.ndim(t) == 0 else out


def diagonal_ensemble(op, eig: EigenSystem, tol: float | None = None) -> np.ndarray:
    """Projection onto the commutant of H: eigenbasis entries with ``|E_m - E_n| < tol``.

    Degenerate eigenspaces are kept as full blocks, so the result commutes
    with ``H`` even when symmetries produce degeneracies.
    """
    if tol is None:
        tol = 1e-9 * max(eig.norm, 1.0)
    tilde = eig.to_eigenbasis(op)
    kept = {}
    for (i, j), m in tilde.items():
        mask = np.abs(np.subtract.outer(eig.blocks[i].energies, eig.blocks[j].energies)) < tol
        if np.any(mask):
            kept[i, j] = m * mask
    return eig.from_eigenbasis(kept)


def time_average_operator(op, eig: EigenSystem, times: Iterable[float]) -> np.ndarray:
    """Arithmetic mean of ``O(t_n)`` over the grid."""
    times = np.asarray(list(times), dtype=float)
    if times.size == 0:
        raise ValueError("empty time grid")
    tilde = eig.to_eigenbasis(op)
    out = {}
    for (i, j), m in tilde.items():
        pm = _phase_table(eig.blocks[i].energies, times)
        pn = _phase_table(eig.blocks[j].energies, times)
        out[i, j] = m * (pm.T @ pn.conj()) / len(times)
    return eig.from_eigenbasis(out)


def hs_norm_sq(op: np.ndarray) -> float:
    """``Tr(O^dag O) / 2^L``."""
    op = np.asarray(op)
    return float(np.vdot(op, op).real) / op.shape[0]
