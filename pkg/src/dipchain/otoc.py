"""Out-of-time-order commutators, directly and through the simulated MQC protocol."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import EigenSystem, as_dense, evolve_operator, hs_norm_sq, num_sites

# cap on cached evolved operators (M * dim^2 complex entries) for the double-time sum
MAX_CACHED_ENTRIES = 1 << 28


@dataclass(frozen=True)
class MqcSpectrum:
    """Intensities ``I_q`` for ``q = -L..L`` (``intensities[q + L]``)."""

    intensities: np.ndarray

    @property
    def L(self) -> int:
        return (len(self.intensities) - 1) // 2

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.L, self.L + 1)

    def __getitem__(self, q: int) -> float:
        if abs(q) > self.L:
            return 0.0
        return float(self.intensities[q + self.L])

    def total(self) -> float:
        return float(self.intensities.sum())

    def second_moment(self) -> float:
        return float(np.sum(self.orders ** 2 * self.intensities))


def _commutator_norm(A_t: np.ndarray, B: np.ndarray) -> float:
    """``Tr([A, B][A, B]^dag) / 2^L``, with a fast path for diagonal ``B``."""
    if np.count_nonzero(B - np.diag(np.diagonal(B))) == 0:
        b = np.diagonal(B)
        return hs_norm_sq(A_t * np.subtract.outer(b, b).T)
    K = A_t @ B - B @ A_t
    return hs_norm_sq(K)


def oto_commutator_direct(A, B, eig: EigenSystem, t: float) -> float:
    """``(4/L) <|[A(t), B]|^2>`` at infinite temperature."""
    A = as_dense(A)
    B = as_dense(B)
    if A.shape != B.shape or A.shape[0] != eig.dim:
        raise ValueError("dimension mismatch")
    return 4.0 / eig.L * _commutator_norm(evolve_operator(A, eig, t), B)


def oto_commutator_of(op: np.ndarray, B, L: int | None = None) -> float:
    """``(4/L) <|[op, B]|^2>`` for an already evolved or averaged operator."""
    op = np.asarray(op)
    B = as_dense(B)
    if op.shape != B.shape:
        raise ValueError("dimension mismatch")
    L = num_sites(op.shape[0]) if L is None else L
    return 4.0 / L * _commutator_norm(op, B)


def oto_correlator(A, B, eig: EigenSystem, t: float) -> complex:
    """``F(t) = Tr(A(t)^dag B^dag A(t) B) / 2^L``."""
    A = as_dense(A)
    B = as_dense(B)
    if A.shape != B.shape or A.shape[0] != eig.dim:
        raise ValueError("dimension mismatch")
    At = evolve_operator(A, eig, t)
    return complex(np.trace(At.conj().T @ B.conj().T @ At @ B)) / eig.dim


def _generator_basis(P: np.ndarray):
    P = np.asarray(P)
    if np.count_nonzero(P - np.diag(np.diagonal(P))) == 0:
        return np.diagonal(P).real, None
    evals, vecs = np.linalg.eigh(P)
    return evals, vecs


def _in_basis(op: np.ndarray, vecs) -> np.ndarray:
    return op if vecs is None else vecs.conj().T @ op @ vecs


def _check_normalized(rho0: np.ndarray, tol: float = 1e-8) -> None:
    n = hs_norm_sq(rho0)
    if abs(n - 1.0) > tol:
        raise ValueError(f"initial deviation must satisfy Tr(rho^2)/2^L = 1, got {n:.6g}")


def mqc_signal(rho0, eig_fwd: EigenSystem, eig_bwd: EigenSystem | None, t1: float, t2: float,
               P, L: int | None = None) -> np.ndarray:
    """Signals ``S_m = 2^-L Tr[e^{-i phi_m P} rho(t1) e^{i phi_m P} rho(t2)]``.

    ``phi_m = m pi / L`` for ``m = 0..2L-1``.  ``rho(t1)`` is evolved with the
    forward Hamiltonian and ``rho(t2)`` with the one whose time reversal closes
    the echo (``eig_bwd``; defaults to the forward one, i.e. perfect reversal).
    The result is complex in general and real when ``t1 == t2`` with perfect
    reversal.
    """
    rho0 = as_dense(rho0)
    P = as_dense(P)
    if rho0.shape != P.shape or rho0.shape[0] != eig_fwd.dim:
        raise ValueError("dimension mismatch")
    L = eig_fwd.L if L is None else L
    _check_normalized(rho0)
    eig_bwd = eig_fwd if eig_bwd is None else eig_bwd
    rho1 = evolve_operator(rho0, eig_fwd, t1)
    rho2 = rho1 if (eig_bwd is eig_fwd and t2 == t1) else evolve_operator(rho0, eig_bwd, t2)
    return _signal_from_pair(rho1, rho2, P, L)


def _signal_from_pair(rho1, rho2, P, L) -> np.ndarray:
    evals, vecs = _generator_basis(P)
    a = _in_basis(rho1, vecs)
    b = _in_basis(rho2, vecs).T
    diff = np.subtract.outer(evals, evals)
    dim = a.shape[0]
    out = np.empty(2 * L, dtype=complex)
    for m in range(2 * L):
        rot = np.exp(-1j * (m * np.pi / L) * diff)
        out[m] = np.sum(rot * a * b) / dim
    return out


def mqc_intensities(signal: Sequence[complex], L: int, tol: float = 1e-10) -> MqcSpectrum:
    """``I_q = (1/2L) sum_m e^{i q m pi / L} S_m``.

    Orders ``+L`` and ``-L`` share one Fourier coefficient on the ``2L``-point
    grid; it is split evenly, which is exact for Hermitian sources since
    ``I_q = I_{-q}``.
    """
    s = np.asarray(signal, dtype=complex)
    if s.shape != (2 * L,):
        raise ValueError(f"signal must have length 2L = {2 * L}, got {s.shape}")
    m = np.arange(2 * L)
    q = np.arange(-L, L + 1)
    vals = np.exp(1j * np.pi * np.outer(q, m) / L) @ s / (2 * L)
    vals[0] *= 0.5
    vals[-1] *= 0.5
    scale = max(1.0, float(np.max(np.abs(s))))
    if np.max(np.abs(vals.imag)) > tol * scale:
        raise ValueError(f"intensities have imaginary residue {np.max(np.abs(vals.imag)):.3e}")
    return MqcSpectrum(vals.real.copy())


def oto_from_second_moment(spectrum: MqcSpectrum) -> float:
    """``sum_q q^2 I_q``."""
    return spectrum.second_moment()


def mqc_spectrum(rho0, eig: EigenSystem, t: float, P, L: int | None = None) -> MqcSpectrum:
    L = eig.L if L is None else L
    return mqc_intensities(mqc_signal(rho0, eig, None, t, t, P, L), L)


def oto_time_averaged(rho0, eig: EigenSystem, P, grid: Sequence[float], L: int | None = None,
                      eig_bwd: EigenSystem | None = None) -> float:
    """``sum_q (q^2 / M^2) sum_{j,k} I_q(t_j, t_k)`` from double-time MQC signals."""
    grid = list(grid)
    if not grid:
        raise ValueError("empty time grid")
    rho0 = as_dense(rho0)
    L = eig.L if L is None else L
    if len(grid) * eig.dim ** 2 * 2 > MAX_CACHED_ENTRIES:
        raise MemoryError("double-time cache would exceed the configured memory cap")
    _check_normalized(rho0)
    eig_bwd = eig if eig_bwd is None else eig_bwd
    fwd = [evolve_operator(rho0, eig, t) for t in grid]
    bwd = fwd if eig_bwd is eig else [evolve_operator(rho0, eig_bwd, t) for t in grid]
    P = as_dense(P)
    total = np.zeros(2 * L, dtype=complex)
    for r1 in fwd:
        for r2 in bwd:
            total += _signal_from_pair(r1, r2, P, L)
    total /= len(grid) ** 2
    return oto_from_second_moment(mqc_intensities(total, L))


def initial_deviation(op) -> np.ndarray:
    """Scale a collective magnetization to ``Tr(rho^2)/2^L = 1`` (e.g. ``2 Z / sqrt(L)``)."""
    op = as_dense(op)
    return op / np.sqrt(hs_norm_sq(op))
