"""Pauli-string algebra on open spin-1/2 chains.

Conventions used throughout the package
---------------------------------------
* Spin operators are ``S_a = sigma_a / 2``.  An :class:`OperatorSum` stores
  coefficients of *bare* Pauli strings, so ``S_z^j`` is the string ``Z`` on
  site ``j`` with coefficient ``0.5``.
* A Pauli string is a pair of L-bit masks ``(x, z)`` and denotes
  ``i^{popcount(x & z)} X^x Z^z``; a site with both bits set is ``Y``.
* Site ``j`` (0-based, leftmost in labels) lives on bit ``L - 1 - j`` so the
  integer index of a computational basis state matches the ``kron`` ordering
  used by the dense matrices in :mod:`dipchain.dynamics`.
* Hamming weights ``f_k`` are computed from squared coefficients of bare
  strings normalized by the total traceless weight.  This is the same as
  expanding in unit-norm strings ``B = P / sqrt(2^L)``, in which case the
  collective magnetization ``Z`` has prefactor ``sqrt(2^(L-2) L)`` and the
  weights sum to one.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import sparse

PRUNE_TOL = 1e-14
MAX_SITES = 31

_LABELS = "IXYZ"
_POW_I = np.array([1, 1j, -1, -1j], dtype=complex)
# chunk size (number of pair products) for vectorized products
_CHUNK = 1 << 22


def _popcount(a):
    return np.bitwise_count(a).astype(np.int64)


def _label_to_masks(label: str) -> tuple[int, int]:
    x = z = 0
    n = len(label)
    for j, c in enumerate(label.upper()):
        bit = 1 << (n - 1 - j)
        if c == "X":
            x |= bit
        elif c == "Y":
            x |= bit
            z |= bit
        elif c == "Z":
            z |= bit
        elif c != "I":
            raise ValueError(f"invalid Pauli label character {c!r}")
    return x, z


def _site_code(x: int, z: int, bit: int) -> str:
    xb, zb = bool(x & bit), bool(z & bit)
    if xb and zb:
        return "Y"
    if xb:
        return "X"
    if zb:
        return "Z"
    return "I"


def masks_to_label(x: int, z: int, L: int) -> str:
    return "".join(_site_code(x, z, 1 << (L - 1 - j)) for j in range(L))


def _check_length(L: int) -> None:
    if not 1 <= L <= MAX_SITES:
        raise ValueError(f"chain length must be in [1, {MAX_SITES}], got {L}")


@dataclass(frozen=True)
class PauliTerm:
    """A single weighted Pauli string."""

    L: int
    x: int
    z: int
    coeff: complex = 1.0

    @classmethod
    def from_label(cls, label: str, coeff: complex = 1.0) -> "PauliTerm":
        x, z = _label_to_masks(label)
        return cls(len(label), x, z, complex(coeff))

    @property
    def label(self) -> str:
        return masks_to_label(self.x, self.z, self.L)

    @property
    def weight(self) -> int:
        return int(self.x | self.z).bit_count()

    def to_dense(self) -> np.ndarray:
        return OperatorSum.from_term(self).to_dense()


def _product_phase(x1, z1, x2, z2):
    """Exponent e (mod 4) with P(x1,z1) P(x2,z2) = i^e P(x1^x2, z1^z2)."""
    x3 = x1 ^ x2
    z3 = z1 ^ z2
    e = _popcount(x1 & z1) + _popcount(x2 & z2) - _popcount(x3 & z3) + 2 * _popcount(z1 & x2)
    return x3, z3, e % 4


def multiply(a: PauliTerm, b: PauliTerm) -> PauliTerm:
    """Product ``a @ b`` of two Pauli terms, phase folded into the coefficient."""
    if a.L != b.L:
        raise ValueError(f"length mismatch: {a.L} != {b.L}")
    x3 = a.x ^ b.x
    z3 = a.z ^ b.z
    e = ((a.x & a.z).bit_count() + (b.x & b.z).bit_count() - (x3 & z3).bit_count()
         + 2 * (a.z & b.x).bit_count()) % 4
    return PauliTerm(a.L, x3, z3, complex(a.coeff * b.coeff * _POW_I[e]))


def _canonical(L, x, z, c, tol=PRUNE_TOL):
    if len(c) == 0:
        empty = np.zeros(0, dtype=np.uint64)
        return empty, empty.copy(), np.zeros(0, dtype=complex)
    key = (x.astype(np.uint64) << np.uint64(L)) | z.astype(np.uint64)
    uniq, inv = np.unique(key, return_inverse=True)
    if len(uniq) == len(key):
        order = np.argsort(key, kind="stable")
        coeffs = c[order]
        uniq = key[order]
    else:
        coeffs = (np.bincount(inv, weights=c.real, minlength=len(uniq))
                  + 1j * np.bincount(inv, weights=c.imag, minlength=len(uniq)))
    keep = np.abs(coeffs) > tol
    uniq = uniq[keep]
    mask = np.uint64((1 << L) - 1)
    return uniq >> np.uint64(L), uniq & mask, coeffs[keep].astype(complex)


class OperatorSum:
    """Sparse complex linear combination of Pauli strings on ``L`` sites.

    Instances are immutable and always canonical: one entry per string,
    sorted by key, coefficients with modulus below ``PRUNE_TOL`` dropped.
    ``@`` is the operator product, ``*`` multiplies by scalars.
    """

    __slots__ = ("L", "_x", "_z", "_c")

    def __init__(self, L: int, x=(), z=(), coeffs=(), *, tol: float = PRUNE_TOL):
        _check_length(L)
        x = np.asarray(x, dtype=np.uint64).ravel()
        z = np.asarray(z, dtype=np.uint64).ravel()
        c = np.asarray(coeffs, dtype=complex).ravel()
        if not (len(x) == len(z) == len(c)):
            raise ValueError("mask and coefficient arrays differ in length")
        full = np.uint64((1 << L) - 1)
        if len(x) and (np.any(x & ~full) or np.any(z & ~full)):
            raise ValueError(f"mask has bits beyond {L} sites")
        self.L = L
        self._x, self._z, self._c = _canonical(L, x, z, c, tol)
        for arr in (self._x, self._z, self._c):
            arr.setflags(write=False)

    # ---- construction ----
    @classmethod
    def zero(cls, L: int) -> "OperatorSum":
        return cls(L)

    @classmethod
    def identity(cls, L: int, coeff: complex = 1.0) -> "OperatorSum":
        return cls(L, [0], [0], [coeff])

    @classmethod
    def from_term(cls, term: PauliTerm) -> "OperatorSum":
        return cls(term.L, [term.x], [term.z], [term.coeff])

    @classmethod
    def from_terms(cls, terms: Mapping[str, complex] | Iterable[tuple[str, complex]],
                   L: int | None = None) -> "OperatorSum":
        """Build from ``{label: coeff}`` or ``(label, coeff)`` pairs; repeats add up."""
        items = list(terms.items()) if isinstance(terms, Mapping) else list(terms)
        if L is None:
            if not items:
                raise ValueError("cannot infer L from an empty term list")
            L = len(items[0][0])
        xs, zs, cs = [], [], []
        for label, coeff in items:
            if len(label) != L:
                raise ValueError(f"label {label!r} does not have {L} sites")
            x, z = _label_to_masks(label)
            xs.append(x)
            zs.append(z)
            cs.append(coeff)
        return cls(L, xs, zs, cs)

    @classmethod
    def single(cls, L: int, sites: Mapping[int, str], coeff: complex = 1.0) -> "OperatorSum":
        """String with the given ``{site: 'X'|'Y'|'Z'}`` factors and identity elsewhere."""
        label = ["I"] * L
        for j, p in sites.items():
            if not 0 <= j < L:
                raise ValueError(f"site {j} outside chain of length {L}")
            label[j] = p.upper()
        return cls.from_terms({"".join(label): coeff})

    @classmethod
    def spin(cls, L: int, site: int, axis: str) -> "OperatorSum":
        """Single-spin operator ``S_axis^site = sigma_axis / 2``."""
        return cls.single(L, {site: axis}, 0.5)

    @classmethod
    def linear_combination(cls, ops: Iterable["OperatorSum"], weights: Iterable[complex] | None = None,
                           *, tol: float = PRUNE_TOL) -> "OperatorSum":
        ops = list(ops)
        if not ops:
            raise ValueError("need at least one operator")
        weights = [1.0] * len(ops) if weights is None else list(weights)
        L = ops[0].L
        for op in ops:
            _same_length(ops[0], op)
        return cls(L,
                   np.concatenate([op._x for op in ops]),
                   np.concatenate([op._z for op in ops]),
                   np.concatenate([w * op._c for op, w in zip(ops, weights)]),
                   tol=tol)

    # ---- views ----
    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def z(self) -> np.ndarray:
        return self._z

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def num_terms(self) -> int:
        return len(self._c)

    def __len__(self) -> int:
        return len(self._c)

    def __iter__(self):
        for x, z, c in zip(self._x, self._z, self._c):
            yield PauliTerm(self.L, int(x), int(z), complex(c))

    @property
    def terms(self) -> dict[str, complex]:
        return {masks_to_label(int(x), int(z), self.L): complex(c)
                for x, z, c in zip(self._x, self._z, self._c)}

    def coefficient(self, label: str) -> complex:
        x, z = _label_to_masks(label)
        hit = np.nonzero((self._x == x) & (self._z == z))[0]
        return complex(self._c[hit[0]]) if len(hit) else 0j

    def weights(self) -> np.ndarray:
        """Hamming weight (number of non-identity sites) of every stored string."""
        return _popcount(self._x | self._z)

    def correlation_distances(self) -> np.ndarray:
        """Distance between the outermost non-identity sites of every string (0 for one-body)."""
        support = (self._x | self._z).astype(np.uint64)
        return np.array([_span(int(s)) for s in support], dtype=np.int64)

    def __repr__(self) -> str:
        if not len(self):
            return f"OperatorSum(L={self.L}, 0)"
        shown = list(self.terms.items())[:6]
        body = " + ".join(f"({c:.4g}){s}" for s, c in shown)
        more = f" + ... ({len(self) - 6} more)" if len(self) > 6 else ""
        return f"OperatorSum(L={self.L}, {body}{more})"

    # ---- linear structure ----
    def __add__(self, other):
        if isinstance(other, OperatorSum):
            _same_length(self, other)
            return OperatorSum(self.L, np.concatenate([self._x, other._x]),
                               np.concatenate([self._z, other._z]),
                               np.concatenate([self._c, other._c]))
        if np.isscalar(other):
            return self + OperatorSum.identity(self.L, other)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return OperatorSum(self.L, self._x, self._z, -self._c)

    def __sub__(self, other):
        if isinstance(other, OperatorSum) or np.isscalar(other):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return OperatorSum(self.L, self._x, self._z, scalar * self._c)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other: "OperatorSum") -> "OperatorSum":
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return _product(self, other, anticommuting_only=False)

    def __eq__(self, other):
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return (self.L == other.L and np.array_equal(self._x, other._x)
                and np.array_equal(self._z, other._z) and np.array_equal(self._c, other._c))

    __hash__ = None

    def allclose(self, other: "OperatorSum", atol: float = 1e-12) -> bool:
        _same_length(self, other)
        diff = self - other
        return bool(np.all(np.abs(diff._c) <= atol))

    def prune(self, tol: float) -> "OperatorSum":
        return OperatorSum(self.L, self._x, self._z, self._c, tol=tol)

    # ---- adjoint and norms ----
    def dagger(self) -> "OperatorSum":
        # bare Pauli strings are Hermitian
        return OperatorSum(self.L, self._x, self._z, np.conj(self._c))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self._c.imag) <= tol))

    def is_anti_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self._c.real) <= tol))

    def trace(self) -> complex:
        """Normalized trace ``Tr(A) / 2^L`` (the identity coefficient)."""
        hit = np.nonzero((self._x == 0) & (self._z == 0))[0]
        return complex(self._c[hit[0]]) if len(hit) else 0j

    def norm_sq(self) -> float:
        """``Tr(A^dag A) / 2^L``."""
        return float(np.sum(np.abs(self._c) ** 2))

    def norm(self) -> float:
        return float(np.sqrt(self.norm_sq()))

    # ---- dense conversion ----
    def to_sparse(self) -> sparse.csr_matrix:
        if self.L > 16:
            raise ValueError("refusing to build a matrix for more than 16 sites")
        n = 1 << self.L
        a = np.arange(n, dtype=np.uint64)
        if not len(self):
            return sparse.csr_matrix((n, n), dtype=complex)
        rows, vals = [], []
        for x, z, c in zip(self._x, self._z, self._c):
            phase = c * _POW_I[int(x & z).bit_count() % 4]
            sign = 1 - 2 * (_popcount(a & z) & 1)
            rows.append(a ^ x)
            vals.append(phase * sign)
        rows = np.concatenate(rows).astype(np.int64)
        cols = np.tile(np.arange(n, dtype=np.int64), len(self))
        return sparse.csr_matrix((np.concatenate(vals), (rows, cols)), shape=(n, n))

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    @classmethod
    def from_dense(cls, matrix: np.ndarray, tol: float = 1e-12) -> "OperatorSum":
        """Pauli decomposition of a ``2^L x 2^L`` matrix (Walsh-Hadamard per X-mask)."""
        L = _dim_to_sites(matrix.shape)
        xs, zs, cs = [], [], []
        for x_chunk, coeffs in _pauli_coefficient_chunks(matrix):
            hit = np.nonzero(np.abs(coeffs) > tol)
            xs.append(x_chunk[hit[0]])
            zs.append(hit[1].astype(np.uint64))
            cs.append(coeffs[hit])
        if not xs:
            return cls(L)
        return cls(L, np.concatenate(xs), np.concatenate(zs), np.concatenate(cs), tol=tol)

    # ---- text format: one "re im LABEL" line per term ----
    def to_text(self) -> str:
        lines = [f"{c.real:.17g} {c.imag:.17g} {masks_to_label(int(x), int(z), self.L)}"
                 for x, z, c in zip(self._x, self._z, self._c)]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, L: int | None = None) -> "OperatorSum":
        items = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 're im LABEL', got {line!r}")
            items.append((parts[2], complex(float(parts[0]), float(parts[1]))))
        if not items and L is None:
            raise ValueError("empty operator text needs an explicit L")
        return cls.from_terms(items, L) if items else cls(L)


def _span(support: int) -> int:
    if support == 0:
        return 0
    return support.bit_length() - 1 - ((support & -support).bit_length() - 1)


def _same_length(a: OperatorSum, b: OperatorSum) -> None:
    if a.L != b.L:
        raise ValueError(f"length mismatch: {a.L} != {b.L}")


def _dim_to_sites(shape) -> int:
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ValueError(f"expected a square matrix, got shape {shape}")
    L = int(shape[0]).bit_length() - 1
    if shape[0] != 1 << L or L < 1:
        raise ValueError(f"dimension {shape[0]} is not a power of two")
    return L


def _product(a: OperatorSum, b: OperatorSum, *, anticommuting_only: bool) -> OperatorSum:
    _same_length(a, b)
    L = a.L
    if not len(a) or not len(b):
        return OperatorSum(L)
    rows = max(1, _CHUNK // len(b))
    xs, zs, cs = [], [], []
    for start in range(0, len(a), rows):
        xa = a._x[start:start + rows, None]
        za = a._z[start:start + rows, None]
        ca = a._c[start:start + rows, None]
        x3, z3, e = _product_phase(xa, za, b._x[None, :], b._z[None, :])
        coeff = ca * b._c[None, :] * _POW_I[e]
        if anticommuting_only:
            anti = ((_popcount(xa & b._z[None, :]) + _popcount(za & b._x[None, :])) & 1).astype(bool)
            x3, z3, coeff = x3[anti], z3[anti], 2.0 * coeff[anti]
        part = OperatorSum(L, x3.ravel(), z3.ravel(), coeff.ravel())
        xs.append(part._x)
        zs.append(part._z)
        cs.append(part._c)
    return OperatorSum(L, np.concatenate(xs), np.concatenate(zs), np.concatenate(cs))


def commutator(a: OperatorSum, b: OperatorSum) -> OperatorSum:
    """``[a, b]``; only anticommuting string pairs contribute (twice their product)."""
    return _product(a, b, anticommuting_only=True)


def hs_inner(a: OperatorSum, b: OperatorSum) -> complex:
    """Normalized Hilbert-Schmidt product ``Tr(a^dag b) / 2^L``."""
    _same_length(a, b)
    ka = (a._x << np.uint64(a.L)) | a._z
    kb = (b._x << np.uint64(b.L)) | b._z
    _, ia, ib = np.intersect1d(ka, kb, assume_unique=True, return_indices=True)
    return complex(np.sum(np.conj(a._c[ia]) * b._c[ib]))


# ---------------------------------------------------------------------------
# Hamming-weight analysis
# ---------------------------------------------------------------------------

def zeta(L: int) -> np.ndarray:
    """Number of Pauli strings of each weight ``k = 0..L``: ``3^k C(L, k)``."""
    return np.array([3 ** k * comb(L, k) for k in range(L + 1)], dtype=float)


def random_baseline(L: int) -> np.ndarray:
    """Weight fractions of a uniformly random traceless operator, ``zeta_k / (4^L - 1)``."""
    f = zeta(L) / (4.0 ** L - 1.0)
    f[0] = 0.0
    return f


@dataclass(frozen=True)
class HammingSpectrum:
    """Weight fractions ``f[k]`` for ``k = 0..L``; ``f[0]`` is always zero."""

    f: np.ndarray

    @property
    def L(self) -> int:
        return len(self.f) - 1

    def __getitem__(self, k: int) -> float:
        return float(self.f[k])


def _pauli_coefficient_chunks(matrix: np.ndarray, x_values: np.ndarray | None = None,
                              chunk_rows: int | None = None):
    """Yield ``(x_masks, coeffs)`` with ``coeffs[i, z] = Tr(P(x_i, z)^dag M) / 2^L``."""
    L = _dim_to_sites(matrix.shape)
    n = 1 << L
    a = np.arange(n, dtype=np.int64)
    if x_values is None:
        x_values = np.arange(n, dtype=np.int64)
    if chunk_rows is None:
        chunk_rows = max(1, (1 << 21) // n)
    for start in range(0, len(x_values), chunk_rows):
        xc = np.asarray(x_values[start:start + chunk_rows], dtype=np.int64)
        v = matrix[a[None, :] ^ xc[:, None], a[None, :]].astype(complex)
        _walsh_hadamard_inplace(v, L)
        # phase i^{-|x & z|}
        v *= _POW_I[(-_popcount(xc[:, None] & a[None, :])) % 4]
        v /= n
        yield xc.astype(np.uint64), v


def _walsh_hadamard_inplace(v: np.ndarray, L: int) -> None:
    rows = v.shape[0]
    h = 1
    for _ in range(L):
        w = v.reshape(rows, -1, 2, h)
        lo = w[:, :, 0, :].copy()
        w[:, :, 0, :] += w[:, :, 1, :]
        w[:, :, 1, :] *= -1
        w[:, :, 1, :] += lo
        h *= 2


def pauli_power(matrix: np.ndarray, key: Callable[[np.ndarray], np.ndarray], nbins: int,
                x_values: np.ndarray | None = None) -> np.ndarray:
    """Sum of ``|c_P|^2`` binned by ``key(support_mask)`` for a dense operator.

    ``key`` receives an integer array of support masks ``x | z`` and returns
    bin indices in ``[0, nbins)``.  Only the X-masks listed in ``x_values``
    are visited (the rest are assumed to carry no weight).
    """
    L = _dim_to_sites(matrix.shape)
    n = 1 << L
    zmask = np.arange(n, dtype=np.int64)
    out = np.zeros(nbins)
    for xc, coeffs in _pauli_coefficient_chunks(matrix, x_values):
        support = xc.astype(np.int64)[:, None] | zmask[None, :]
        out += np.bincount(key(support).ravel(), weights=(np.abs(coeffs) ** 2).ravel(),
                           minlength=nbins)[:nbins]
    return out


def hamming_weight_key(support: np.ndarray) -> np.ndarray:
    return _popcount(support)


def span_key(support: np.ndarray) -> np.ndarray:
    """Correlation distance of each support mask (vectorized ``_span``)."""
    s = np.asarray(support, dtype=np.int64)
    out = np.zeros(s.shape, dtype=np.int64)
    nz = s != 0
    hi = np.floor(np.log2(np.where(nz, s, 1))).astype(np.int64)
    low = s & -s
    lo = np.floor(np.log2(np.where(nz, low, 1))).astype(np.int64)
    out[nz] = (hi - lo)[nz]
    return out


def hamming_decompose(op, *, trace_tol: float = 1e-8) -> HammingSpectrum:
    """Weight fractions ``f_k`` of a traceless operator.

    ``op`` may be an :class:`OperatorSum` or a dense ``2^L x 2^L`` matrix.
    When the dense operator conserves the parity ``prod_j sigma_z^j``, only the
    even X-masks are visited.
    """
    if isinstance(op, OperatorSum):
        L = op.L
        power = np.bincount(op.weights(), weights=np.abs(op.coeffs) ** 2, minlength=L + 1)
    else:
        op = np.asarray(op)
        L = _dim_to_sites(op.shape)
        x_values = None
        n = 1 << L
        par = _popcount(np.arange(n)) & 1
        if not np.any(op[par[:, None] != par[None, :]]):
            x_values = np.nonzero((_popcount(np.arange(n)) & 1) == 0)[0]
        power = pauli_power(op, hamming_weight_key, L + 1, x_values)
    total = power[1:].sum()
    if total <= 0:
        raise ValueError("cannot decompose a zero (or pure identity) operator")
    if power[0] > trace_tol * total:
        raise ValueError("operator is not traceless")
    f = power / total
    f[0] = 0.0
    return HammingSpectrum(f)


# ---------------------------------------------------------------------------
# Coherence-order (MQC) components
# ---------------------------------------------------------------------------

def _vandermonde_inverse(qmax: int, odd: bool) -> np.ndarray:
    """Exact inverse of ``M[i, q-1] = q^(2i+1)`` (odd) or ``q^(2i+2)`` (even)."""
    n = qmax
    m = [[Fraction(q) ** (2 * i + (1 if odd else 2)) for q in range(1, n + 1)] for i in range(n)]
    inv = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = next(r for r in range(col, n) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        inv[col], inv[piv] = inv[piv], inv[col]
        p = m[col][col]
        m[col] = [v / p for v in m[col]]
        inv[col] = [v / p for v in inv[col]]
        for r in range(n):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[col])]
                inv[r] = [a - f * b for a, b in zip(inv[r], inv[col])]
    return np.array([[float(v) for v in row] for row in inv])


def mqc_components_nested(op: OperatorSum, generator: OperatorSum, qmax: int | None = None,
                          *, check_tol: float = 1e-9) -> dict[int, OperatorSum]:
    """Split ``op`` into components with ``[generator, O_q] = q O_q``.

    Nested commutators ``ad_P^k(op)`` for ``k = 1..2*qmax`` are combined with
    the exact inverses of the odd and even Vandermonde systems.  ``qmax``
    defaults to the number of sites.  Raises ``ValueError`` when the
    components fail the ladder relation, which happens if the generator does
    not have an integer-spaced spectrum.
    """
    _same_length(op, generator)
    qmax = op.L if qmax is None else qmax
    nested = []
    cur = op
    for _ in range(2 * qmax):
        cur = commutator(generator, cur)
        nested.append(cur)
    odd_inv = _vandermonde_inverse(qmax, odd=True)
    even_inv = _vandermonde_inverse(qmax, odd=False)
    odd_terms = nested[0::2]
    even_terms = nested[1::2]
    comps: dict[int, OperatorSum] = {}
    plus_total = []
    for q in range(1, qmax + 1):
        minus = OperatorSum.linear_combination(odd_terms, odd_inv[q - 1])
        plus = OperatorSum.linear_combination(even_terms, even_inv[q - 1])
        comps[q] = (plus + minus) * 0.5
        comps[-q] = (plus - minus) * 0.5
        plus_total.append(plus)
    comps[0] = op - OperatorSum.linear_combination(plus_total) if plus_total else op
    scale = max(op.norm(), 1e-300)
    for q, comp in comps.items():
        resid = commutator(generator, comp) - q * comp
        if resid.norm() > check_tol * scale * max(1, abs(q)):
            raise ValueError(f"ladder relation fails at q={q} (residual {resid.norm():.3e}); "
                             "generator spectrum is not integer-spaced within qmax")
    return {q: comps[q] for q in range(-qmax, qmax + 1)}


def mqc_components_dft(op: np.ndarray, generator: np.ndarray, L: int) -> dict[int, np.ndarray]:
    """Dense coherence components from the ``2L``-point rotation average."""
    op = np.asarray(op)
    generator = np.asarray(generator)
    if op.shape != generator.shape or op.shape[0] != op.shape[1]:
        raise ValueError(f"dimension mismatch: {op.shape} vs {generator.shape}")
    evals, vecs = np.linalg.eigh(generator)
    comps = {q: np.zeros(op.shape, dtype=complex) for q in range(-L, L + 1)}
    for m in range(2 * L):
        phi = m * np.pi / L
        rot = (vecs * np.exp(-1j * phi * evals)) @ vecs.conj().T
        rotated = rot @ op @ rot.conj().T
        for q in range(-L + 1, L + 1):
            comps[q] += np.exp(1j * q * phi) * rotated
    for q in range(-L + 1, L + 1):
        comps[q] /= 2 * L
    # the +-L orders alias on the 2L-point grid; split the shared Fourier
    # coefficient between them using their ladder direction
    shared = comps.pop(L)
    up = _ladder_projection(shared, evals, vecs, L)
    comps[L] = up
    comps[-L] = shared - up
    return dict(sorted(comps.items()))


def _ladder_projection(op: np.ndarray, evals: np.ndarray, vecs: np.ndarray, q: int) -> np.ndarray:
    """Part of ``op`` raising the generator eigenvalue by exactly ``q``."""
    tilde = vecs.conj().T @ op @ vecs
    mask = np.abs((evals[:, None] - evals[None, :]) - q) < 0.5
    return vecs @ (tilde * mask) @ vecs.conj().T
