"""Pulse sequences, toggling frames and average Hamiltonians.

Pulse phases are angles of the rotation axis in the xy-plane (``x = 0``,
``y = pi/2``, ``-x = pi``, ``-y = 3 pi/2``).  Delays are measured between
pulse midpoints, so they add up to the cycle time for any pulse width; the
free evolution between two pulses is the delay minus half of each adjacent
pulse, and the free durations plus the pulse widths also add up to ``t_c``.

Dimensionless runs measure time in units of ``1 / J_eff``; the experimental
cycle then has ``t_c = PAPER_CYCLE_TIME``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from functools import reduce
from typing import Sequence

import numpy as np
from scipy.linalg import schur

from .models import SpinChainModel, build_collective, build_dipolar
from .pauli import OperatorSum, commutator

PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
AXIS_PHASES = {"x": 0.0, "y": np.pi / 2, "-x": np.pi, "-y": 3 * np.pi / 2}
MAX_DENSE_SITES = 10

PAPER_U = 0.2
PAPER_CYCLE_TIME = 0.62  # J_eff * t_c for t_c = 96 us


@dataclass(frozen=True)
class PulseSequence:
    delays: tuple[float, ...]
    phases: tuple[float, ...]
    angles: tuple[float, ...]
    width: float = 0.0
    u: float | None = None
    tau: float | None = None

    def __post_init__(self):
        if len(self.delays) != len(self.phases) + 1 or len(self.angles) != len(self.phases):
            raise ValueError("need one more delay than pulses and one angle per pulse")
        if self.width < 0:
            raise ValueError("pulse width must be nonnegative")
        if np.any(np.asarray(self.free_durations) < -1e-15):
            raise ValueError("negative inter-pulse spacing; parameters are out of the admissible range")

    @property
    def n_pulses(self) -> int:
        return len(self.phases)

    @property
    def cycle_time(self) -> float:
        return float(sum(self.delays))

    @property
    def free_durations(self) -> list[float]:
        n = len(self.delays)
        out = []
        for k, d in enumerate(self.delays):
            eaten = (self.width / 2 if k > 0 else 0.0) + (self.width / 2 if k < n - 1 else 0.0)
            out.append(d - eaten)
        return out

    def scaled(self, factor: float) -> "PulseSequence":
        tau = None if self.tau is None else self.tau * factor
        return replace(self, delays=tuple(d * factor for d in self.delays),
                       width=self.width * factor, tau=tau)

    def shifted(self, phase: float) -> "PulseSequence":
        """Every pulse axis rotated by ``phase`` about z."""
        return replace(self, phases=tuple(p + phase for p in self.phases))

    @classmethod
    def from_dict(cls, spec: dict) -> "PulseSequence":
        """Sequence from ``{"delays": [...], "pulses": [{"axis": "x", "angle": 90}, ...], "width": 0}``.

        ``axis`` is ``x``, ``y``, ``-x``, ``-y`` or a phase in degrees; ``angle``
        is in degrees and defaults to 90.
        """
        phases, angles = [], []
        for p in spec["pulses"]:
            axis = p["axis"]
            phases.append(AXIS_PHASES[axis] if isinstance(axis, str) else np.deg2rad(axis))
            angles.append(np.deg2rad(p.get("angle", 90.0)))
        return cls(tuple(map(float, spec["delays"])), tuple(phases), tuple(angles),
                   float(spec.get("width", 0.0)))


def _four_pulse_blocks(pattern_delays, axes):
    delays, phases = [0.0], []
    for sign in (+1, +1, -1, -1):
        delays[-1] += pattern_delays[0]
        for d, a in zip(pattern_delays[1:], axes):
            phases.append(AXIS_PHASES[a] + (np.pi if sign < 0 else 0.0))
            delays.append(d)
    return delays, phases


def build_sequence(direction: str, u: float, tau: float, width: float = 0.0) -> PulseSequence:
    """Sixteen-pulse forward or backward sequence with ``t_c = 24 tau``."""
    if direction == "forward":
        t1, t2 = tau * (1 - u), tau * (1 + 2 * u)
        delays, phases = _four_pulse_blocks((t1, t2, 2 * t1, t2, t1), ("x", "y", "y", "x"))
    elif direction == "backward":
        t3, t4 = tau * (1 + u), tau * (1 - 2 * u)
        delays, phases = _four_pulse_blocks((t3, t3, 2 * t4, t3, t3), ("y", "x", "x", "y"))
    else:
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    if min(delays) < 0:
        raise ValueError(f"u = {u} makes an inter-pulse spacing negative")
    return PulseSequence(tuple(delays), tuple(phases), (np.pi / 2,) * len(phases), width, u, tau)


# ---------------------------------------------------------------------------
# single-spin rotations and their action on Pauli strings
# ---------------------------------------------------------------------------

def rotation(phase: float, angle: float) -> np.ndarray:
    """``exp(-i angle n.sigma / 2)`` with ``n = (cos phase, sin phase, 0)``."""
    n_sigma = np.cos(phase) * PAULI["X"] + np.sin(phase) * PAULI["Y"]
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * n_sigma


def _adjoint_table(U: np.ndarray) -> np.ndarray:
    """``R[a, b]`` with ``U^dag sigma_a U = sum_b R[a, b] sigma_b`` (a, b over X, Y, Z)."""
    R = np.empty((3, 3))
    for a, sa in enumerate("XYZ"):
        conj = U.conj().T @ PAULI[sa] @ U
        for b, sb in enumerate("XYZ"):
            R[a, b] = np.trace(PAULI[sb] @ conj).real / 2
    return R


def conjugate_collective(op: OperatorSum, U: np.ndarray, tol: float = 1e-13) -> OperatorSum:
    """``(U^dag)^{(x)L} op U^{(x)L}`` for a single-spin unitary ``U``."""
    R = _adjoint_table(U)
    R[np.abs(R) < tol] = 0.0
    options = [[(b, R[a, b]) for b in range(3) if R[a, b] != 0.0] for a in range(3)]
    labels, coeffs = [], []
    for label, c in op.terms.items():
        sites = [(j, "XYZ".index(p)) for j, p in enumerate(label) if p != "I"]
        for choice in itertools.product(*[options[a] for _, a in sites]):
            new = list(label)
            w = c
            for (j, _), (b, r) in zip(sites, choice):
                new[j] = "XYZ"[b]
                w *= r
            labels.append("".join(new))
            coeffs.append(w)
    if not labels:
        return OperatorSum(op.L)
    return OperatorSum.from_terms(list(zip(labels, coeffs)), op.L)


def rf_propagator(seq: PulseSequence) -> np.ndarray:
    """Single-spin rf propagator accumulated over one cycle."""
    return reduce(lambda acc, p: rotation(*p) @ acc, zip(seq.phases, seq.angles), np.eye(2, dtype=complex))


def is_cyclic(seq: PulseSequence, tol: float = 1e-12) -> bool:
    """True when the rf propagator is the identity up to a global phase."""
    U = rf_propagator(seq)
    return bool(np.allclose(U, U[0, 0] * np.eye(2), atol=tol) and abs(abs(U[0, 0]) - 1) < tol)


def toggling_hamiltonians(seq: PulseSequence, H_int: OperatorSum,
                          substeps: int = 8) -> list[tuple[OperatorSum, float]]:
    """Piecewise-constant toggling-frame Hamiltonians ``U_rf^dag H_int U_rf`` with durations.

    Finite-width pulses are split into ``substeps`` pieces, each using the
    frame at its midpoint rotation.
    """
    frames = []
    acc = np.eye(2, dtype=complex)
    free = seq.free_durations
    frames.append((conjugate_collective(H_int, acc), free[0]))
    for k, (phase, angle) in enumerate(zip(seq.phases, seq.angles)):
        if seq.width > 0:
            dt = seq.width / substeps
            for s in range(substeps):
                partial = rotation(phase, angle * (s + 0.5) / substeps) @ acc
                frames.append((conjugate_collective(H_int, partial), dt))
        acc = rotation(phase, angle) @ acc
        frames.append((conjugate_collective(H_int, acc), free[k + 1]))
    return [(h, d) for h, d in frames if d > 0]


def average_hamiltonian(frames: Sequence[tuple[OperatorSum, float]], order: int = 0) -> OperatorSum:
    """Zeroth- or first-order Magnus term of a piecewise-constant frame list."""
    if not frames:
        raise ValueError("empty frame list")
    t_c = sum(d for _, d in frames)
    if order == 0:
        return OperatorSum.linear_combination([h for h, _ in frames], [d / t_c for _, d in frames])
    if order == 1:
        terms, weights = [], []
        for k in range(len(frames)):
            for l in range(k):
                c = commutator(frames[k][0], frames[l][0])
                if len(c):
                    terms.append(c)
                    weights.append(-0.5j * frames[k][1] * frames[l][1] / t_c)
        if not terms:
            return OperatorSum(frames[0][0].L)
        return OperatorSum.linear_combination(terms, weights)
    raise ValueError("only Magnus orders 0 and 1 are available")


# ---------------------------------------------------------------------------
# dense propagators
# ---------------------------------------------------------------------------

def _dense_guard(L: int) -> None:
    if L > MAX_DENSE_SITES:
        raise ValueError(f"dense propagators limited to L <= {MAX_DENSE_SITES}")


def expm_hermitian(H: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i H t)`` through one eigendecomposition."""
    e, v = np.linalg.eigh(H)
    return (v * np.exp(-1j * t * e)) @ v.conj().T


def collective_rotation(L: int, phase: float, angle: float) -> np.ndarray:
    r = rotation(phase, angle)
    return reduce(np.kron, [r] * L)


def cycle_propagator(seq: PulseSequence, H_int: OperatorSum, phase_offset: float = 0.0) -> np.ndarray:
    """Lab-frame propagator over one cycle with explicit pulses.

    Delta pulses (``width == 0``) act as instantaneous collective rotations;
    finite pulses evolve under ``H_int + (angle / width) n.S``.  All pulse
    axes are advanced by ``phase_offset``.
    """
    L = H_int.L
    _dense_guard(L)
    H = H_int.to_dense()
    e, v = np.linalg.eigh(H)
    free = lambda d: (v * np.exp(-1j * d * e)) @ v.conj().T  # noqa: E731
    Sx = build_collective(L, "x").to_dense()
    Sy = build_collective(L, "y").to_dense()
    U = free(seq.free_durations[0])
    cache = {}
    for k, (phase, angle) in enumerate(zip(seq.phases, seq.angles)):
        phase = phase + phase_offset
        if seq.width == 0:
            P = collective_rotation(L, phase, angle)
        else:
            key = (round(phase % (2 * np.pi), 12), angle)
            if key not in cache:
                drive = (angle / seq.width) * (np.cos(phase) * Sx + np.sin(phase) * Sy)
                cache[key] = expm_hermitian(H + drive, seq.width)
            P = cache[key]
        U = free(seq.free_durations[k + 1]) @ P @ U
    return U


def toggling_propagator(frames: Sequence[tuple[OperatorSum, float]]) -> np.ndarray:
    """``prod_k exp(-i H_k tau_k)`` (latest frame on the left)."""
    L = frames[0][0].L
    _dense_guard(L)
    U = np.eye(1 << L, dtype=complex)
    for h, d in frames:
        U = expm_hermitian(h.to_dense(), d) @ U
    return U


def unitary_distance(U: np.ndarray, V: np.ndarray) -> float:
    """Spectral-norm distance minimized over a global phase."""
    ov = np.trace(V.conj().T @ U)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.linalg.norm(U - phase * V, 2))


def floquet_hamiltonian(U_cycle: np.ndarray, t_c: float) -> np.ndarray:
    """Principal-branch ``H_F`` with ``U_cycle = exp(-i H_F t_c)``."""
    # complex Schur form of a unitary is diagonal, with orthonormal vectors
    T, Zv = schur(U_cycle, output="complex")
    energies = -np.angle(np.diagonal(T)) / t_c
    H = (Zv * energies) @ Zv.conj().T
    return (H + H.conj().T) / 2


# ---------------------------------------------------------------------------
# effective transverse field from phase-shifted cycles
# ---------------------------------------------------------------------------

@dataclass
class PhaseShiftResult:
    """Propagators and errors of the phase-shift construction.

    ``distance`` compares the exact pulse train with the zeroth-order model
    ``e^{-i n phi Z} e^{-i (H0 + g Z) n t_c}``.  ``absorption_error`` isolates
    the merge of ``e^{i phi Z}`` into the exponent by using the exact Floquet
    Hamiltonian of the unshifted cycle; ``absorption_error_symmetric`` also
    removes the constant boundary rotation ``e^{i phi Z / 2}``, which does not
    grow with ``n``.
    """

    exact: np.ndarray
    telescoped: np.ndarray
    approximate: np.ndarray
    frame_correction: np.ndarray
    g: float
    telescope_error: float
    distance: float
    absorption_error: float
    absorption_error_symmetric: float


def telescoped_propagator(U_cycle: np.ndarray, z_diag: np.ndarray, n: int, phi: float) -> np.ndarray:
    """``e^{-i n phi Z} [e^{i phi Z} U_cycle]^n`` for diagonal ``Z``."""
    step = np.exp(1j * phi * z_diag)[:, None] * U_cycle
    return np.exp(-1j * n * phi * z_diag)[:, None] * np.linalg.matrix_power(step, n)


def shifted_cycle_product(U_cycle: np.ndarray, z_diag: np.ndarray, n: int, phi: float) -> np.ndarray:
    """``U_n ... U_1`` with ``U_k = e^{-i(k-1) phi Z} U_cycle e^{i(k-1) phi Z}``."""
    U = np.eye(len(z_diag), dtype=complex)
    for k in range(n):
        rot = np.exp(-1j * k * phi * z_diag)
        U = (rot[:, None] * U_cycle * rot.conj()[None, :]) @ U
    return U


def phase_shift_field(seq: PulseSequence, H_int: OperatorSum, n_cycles: int, phi: float,
                      H_avg: OperatorSum | None = None) -> PhaseShiftResult:
    """Compare a phase-shifted pulse train with a static field ``g = -phi / t_c``.

    ``exact`` multiplies ``n_cycles`` cycles whose pulse axes are advanced by
    ``(k-1) phi`` (explicit pulses, no algebraic shortcut); ``telescoped`` is
    the closed form built from the unshifted cycle.  ``H_avg`` defaults to
    the zeroth Magnus term of the sequence.
    """
    if not -np.pi < phi <= np.pi:
        raise ValueError("phi must lie in (-pi, pi]")
    L = H_int.L
    _dense_guard(L)
    t_c = seq.cycle_time
    z = np.diagonal(build_collective(L, "z").to_dense()).real
    exact = np.eye(1 << L, dtype=complex)
    for k in range(n_cycles):
        exact = cycle_propagator(seq, H_int, phase_offset=k * phi) @ exact
    U_cycle = cycle_propagator(seq, H_int)
    telescoped = telescoped_propagator(U_cycle, z, n_cycles, phi)
    if H_avg is None:
        H_avg = average_hamiltonian(toggling_hamiltonians(seq, H_int), 0)
    g = -phi / t_c
    field = g * np.diag(z)
    frame = np.diag(np.exp(-1j * n_cycles * phi * z))
    approximate = frame @ expm_hermitian(H_avg.to_dense() + field, n_cycles * t_c)

    bracket = np.linalg.matrix_power(np.exp(1j * phi * z)[:, None] * U_cycle, n_cycles)
    merged = expm_hermitian(floquet_hamiltonian(U_cycle, t_c) + field, n_cycles * t_c)
    half = np.exp(1j * phi * z / 2)
    return PhaseShiftResult(
        exact, telescoped, approximate, frame, g,
        telescope_error=unitary_distance(exact, telescoped),
        distance=unitary_distance(exact, approximate),
        absorption_error=unitary_distance(bracket, merged),
        absorption_error_symmetric=unitary_distance(bracket, half[:, None] * merged * half.conj()[None, :]),
    )


# ---------------------------------------------------------------------------
# closing the loop with the target Hamiltonian
# ---------------------------------------------------------------------------

@dataclass
class EngineeringReport:
    scales: np.ndarray
    cycle_times: np.ndarray
    defects: np.ndarray
    slope: float
    first_order_norm: float
    n_cycles: int


def verify_engineering(seq: PulseSequence, H_int: OperatorSum, n_cycles: int = 1,
                       scales: Sequence[float] = (1.0, 0.5, 0.25, 0.125, 0.1)) -> EngineeringReport:
    """Defect ``||U(n t_c) - exp(-i H0 n t_c)||`` for the sequence rescaled by each factor.

    ``slope`` is the log-log fit of the defect against the cycle time; a
    vanishing first-order term leaves a third-order local error, so the
    expected slope for one cycle is 3.
    """
    _dense_guard(H_int.L)
    frames = toggling_hamiltonians(seq, H_int)
    H0 = average_hamiltonian(frames, 0).to_dense()
    H1 = average_hamiltonian(frames, 1)
    defects, tcs = [], []
    for s in scales:
        sq = seq.scaled(s)
        U = np.linalg.matrix_power(cycle_propagator(sq, H_int), n_cycles)
        target = expm_hermitian(H0, n_cycles * sq.cycle_time)
        defects.append(unitary_distance(U, target))
        tcs.append(sq.cycle_time)
    defects = np.array(defects)
    tcs = np.array(tcs)
    good = defects > 0
    slope = float(np.polyfit(np.log(tcs[good]), np.log(defects[good]), 1)[0]) if good.sum() >= 2 else float("nan")
    return EngineeringReport(np.asarray(scales, float), tcs, defects, slope, H1.norm(), n_cycles)


def paper_interaction(L: int, u: float = PAPER_U, range: str = "full") -> OperatorSum:
    """Natural ``H_Dip,z`` scaled so that the engineered coupling is ``J_eff = 1``."""
    return build_dipolar(SpinChainModel(L, J=-1.0 / u, u=u, range=range), "z")


def paper_sequence(direction: str, u: float = PAPER_U, cycle_time: float = PAPER_CYCLE_TIME,
                   width: float = 0.0) -> PulseSequence:
    return build_sequence(direction, u, cycle_time / 24, width)


def stroboscopic_correlator(seq: PulseSequence, H_int: OperatorSum, g: float, n_cycles: int,
                            target: OperatorSum | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``4 Tr(Z(n t_c) Z) / (2^L L)`` for the phase-shifted train and for ``target + g Z``.

    ``target`` defaults to the zeroth Magnus term.  The frame rotation
    ``e^{-i n phi Z}`` commutes with ``Z`` and drops out.
    """
    L = H_int.L
    _dense_guard(L)
    t_c = seq.cycle_time
    Zm = build_collective(L, "z").to_dense()
    z = np.diagonal(Zm).real
    step = np.exp(-1j * g * t_c * z)[:, None] * cycle_propagator(seq, H_int)
    if target is None:
        target = average_hamiltonian(toggling_hamiltonians(seq, H_int), 0)
    ref = expm_hermitian(target.to_dense() + g * Zm, t_c)
    out = np.empty((2, n_cycles + 1))
    A = np.eye(1 << L, dtype=complex)
    B = A.copy()
    norm = 4.0 / ((1 << L) * L)
    for n in range(n_cycles + 1):
        if n:
            A = step @ A
            B = ref @ B
        out[0, n] = norm * np.trace(A @ Zm @ A.conj().T @ Zm).real
        out[1, n] = norm * np.trace(B @ Zm @ B.conj().T @ Zm).real
    return out[0], out[1]
