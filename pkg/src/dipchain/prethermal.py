"""Order-by-order prethermal Hamiltonian.

Writes ``H = H0 + eps V`` with ``H0`` integer-spaced and finds
``S = sum_j eps^j S_j`` such that ``e^S H e^-S = H0 + sum_j eps^j D_j`` up to
the truncation order, with every ``D_j`` commuting with ``H0``.  At order
``n`` all terms of the expansion of ``e^{ad S} H`` carrying ``eps^n`` except
``[S_n, H0]`` form a residual ``R_n``; its coherence components with respect
to ``H0`` give ``D_n = R_{n,0}`` and ``S_n = sum_{q != 0} R_{n,q} / q``, which
cancels every non-commuting part.

Two interchangeable backends evaluate the same collector:

``"pauli"``
    exact symbolic :class:`~dipchain.pauli.OperatorSum` arithmetic with
    ladder components from nested commutators; suited to short chains and
    regression checks.
``"dense"``
    parity-blocked matrices in the ``H0`` eigenbasis, where the coherence
    components are plain masks; used for ``L ~ 10-12``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import SpinChainModel, build_collective, ising_y_generator
from .pauli import OperatorSum, commutator, mqc_components_nested, span_key, pauli_power
from .dynamics import parity_sectors

DEFAULT_TERM_CAP = 5_000_000
_LEVEL_TOL = 1e-8


class SeriesDivergence(RuntimeError):
    """Raised inside the collector when an order exceeds the term-count cap."""


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

class PauliAlgebra:
    name = "pauli"

    def __init__(self, H0: OperatorSum, V: OperatorSum, qmax: int | None = None,
                 term_cap: int = DEFAULT_TERM_CAP):
        if H0.L != V.L:
            raise ValueError("H0 and V act on different chain lengths")
        self.L = H0.L
        self.H0 = H0
        self.V = V
        self.qmax = self.L if qmax is None else qmax
        self.term_cap = term_cap

    def zero(self):
        return OperatorSum(self.L)

    def combine(self, ops, weights):
        if not ops:
            return self.zero()
        return OperatorSum.linear_combination(ops, weights)

    def comm(self, a, b):
        out = commutator(a, b)
        if len(out) > self.term_cap:
            raise SeriesDivergence(f"{len(out)} Pauli strings exceed the cap of {self.term_cap}")
        return out

    def comm_h0(self, s):
        return commutator(s, self.H0)

    def split(self, residual):
        comps = mqc_components_nested(residual, self.H0, self.qmax)
        diag = comps[0]
        gen = OperatorSum.linear_combination([c for q, c in comps.items() if q != 0],
                                             [1.0 / q for q in comps if q != 0])
        return diag, gen

    def norm(self, op) -> float:
        return op.norm()

    def to_operator_sum(self, op) -> OperatorSum:
        return op

    def to_dense(self, op) -> np.ndarray:
        return op.to_dense()


@dataclass
class _Sector:
    indices: np.ndarray
    levels: np.ndarray
    basis: np.ndarray | None
    orders: np.ndarray = field(init=False)

    def __post_init__(self):
        self.orders = np.rint(np.subtract.outer(self.levels, self.levels)).astype(np.int64)


class DenseAlgebra:
    """Operators as tuples of sector blocks expressed in the ``H0`` eigenbasis."""

    name = "dense"

    def __init__(self, H0: OperatorSum, V: OperatorSum, term_cap: int | None = None):
        if H0.L != V.L:
            raise ValueError("H0 and V act on different chain lengths")
        L = self.L = H0.L
        if L > 14:
            raise ValueError("dense backend limited to L <= 14")
        h0 = H0.to_sparse().tocsr()
        v = V.to_sparse().tocsr()
        parity = parity_sectors(L)
        sectors = parity if _block_conserving(h0, parity) and _block_conserving(v, parity) \
            else [np.arange(1 << L)]
        real = not (np.any(h0.data.imag) or np.any(v.data.imag))
        self.dtype = float if real else complex
        self.sectors = []
        self.H0_levels = []
        vblocks = []
        for idx in sectors:
            hb = h0[idx][:, idx].toarray()
            vb = v[idx][:, idx].toarray()
            if real:
                hb, vb = hb.real, vb.real
            if np.count_nonzero(hb - np.diag(np.diagonal(hb))) == 0:
                levels, basis = np.diagonal(hb).real.copy(), None
            else:
                levels, basis = np.linalg.eigh(hb)
            frac = levels - levels.min()
            if np.max(np.abs(frac - np.rint(frac))) > _LEVEL_TOL:
                raise ValueError("H0 does not have an integer-spaced spectrum")
            sec = _Sector(idx, levels, basis)
            self.sectors.append(sec)
            vblocks.append(vb if basis is None else basis.conj().T @ vb @ basis)
        self.H0 = tuple(np.diag(s.levels).astype(self.dtype) for s in self.sectors)
        self.V = tuple(vblocks)

    def zero(self):
        return tuple(np.zeros((len(s.levels),) * 2, dtype=self.dtype) for s in self.sectors)

    def combine(self, ops, weights):
        out = self.zero()
        for op, w in zip(ops, weights):
            out = tuple(o + w * b for o, b in zip(out, op))
        return out

    def comm(self, a, b):
        return tuple(x @ y - y @ x for x, y in zip(a, b))

    def comm_h0(self, s):
        # [S, H0]_{mn} = S_{mn} (h_n - h_m) = -q_{mn} S_{mn}
        return tuple(-blk * sec.orders for blk, sec in zip(s, self.sectors))

    def split(self, residual):
        diag = tuple(np.where(sec.orders == 0, blk, 0) for blk, sec in zip(residual, self.sectors))
        gen = tuple(np.where(sec.orders != 0, blk / np.where(sec.orders == 0, 1, sec.orders), 0)
                    for blk, sec in zip(residual, self.sectors))
        return diag, gen

    def norm(self, op) -> float:
        dim = 1 << self.L
        return float(np.sqrt(sum(np.vdot(b, b).real for b in op) / dim))

    def eigvals(self, op) -> np.ndarray:
        return np.sort(np.concatenate([np.linalg.eigvalsh(b) for b in op]))

    def to_dense(self, op) -> np.ndarray:
        dim = 1 << self.L
        out = np.zeros((dim, dim), dtype=self.dtype)
        for blk, sec in zip(op, self.sectors):
            m = blk if sec.basis is None else sec.basis @ blk @ sec.basis.conj().T
            out[np.ix_(sec.indices, sec.indices)] = m
        return out

    def to_operator_sum(self, op, tol: float = 1e-12) -> OperatorSum:
        return OperatorSum.from_dense(self.to_dense(op), tol=tol)


def _block_conserving(matrix, sectors) -> bool:
    label = np.empty(matrix.shape[0], dtype=np.int64)
    for s, idx in enumerate(sectors):
        label[idx] = s
    coo = matrix.tocoo()
    return bool(np.all(label[coo.row] == label[coo.col]))


# ---------------------------------------------------------------------------
# the series
# ---------------------------------------------------------------------------

@dataclass
class PrethermalSeries:
    """Per-order generators ``S_j`` and diagonal parts ``D_j`` (``j = 1..n``).

    ``scale`` converts the dimensionless ``H0 + eps V`` back to physical
    units; ``r_by_order[n-1]`` is the eigenvalue difference for truncation
    order ``n`` when computed (see :func:`series_gaps`).
    """

    epsilon: float
    algebra: object
    generators: list = field(default_factory=list)
    diagonals: list = field(default_factory=list)
    scale: float = 1.0
    status: str = "ok"
    r_by_order: list[float] = field(default_factory=list)

    @property
    def H0(self):
        return self.algebra.H0

    @property
    def V(self):
        return self.algebra.V

    @property
    def n_orders(self) -> int:
        return len(self.diagonals)

    @property
    def orders(self) -> list[tuple[object, object]]:
        return list(zip(self.generators, self.diagonals))

    def hamiltonian(self, n_max: int | None = None):
        """Truncated ``H0 + sum_{j<=n_max} eps^j D_j`` (dimensionless)."""
        n_max = self.n_orders if n_max is None else n_max
        ops = [self.algebra.H0] + self.diagonals[:n_max]
        weights = [1.0] + [self.epsilon ** j for j in range(1, n_max + 1)]
        return self.algebra.combine(ops, weights)

    def full_hamiltonian(self):
        return self.algebra.combine([self.algebra.H0, self.algebra.V], [1.0, self.epsilon])

    def generator(self, n_max: int | None = None):
        """``S = sum_{j<=n_max} eps^j S_j``."""
        n_max = self.n_orders if n_max is None else n_max
        return self.algebra.combine(self.generators[:n_max],
                                    [self.epsilon ** j for j in range(1, n_max + 1)])

    def optimal_order(self) -> int | None:
        """Order with the smallest ``|r|`` among those computed (labelled ``n*``)."""
        if not self.r_by_order:
            return None
        return int(np.argmin(np.abs(self.r_by_order))) + 1

    def dump(self) -> dict[str, str]:
        """Text dumps of every ``S_j`` and ``D_j`` in the OperatorSum line format."""
        out = {}
        for j, (s, d) in enumerate(self.orders, 1):
            out[f"S_{j}"] = self.algebra.to_operator_sum(s).to_text()
            out[f"D_{j}"] = self.algebra.to_operator_sum(d).to_text()
        return out


def collect_bch(algebra, epsilon: float, n_max: int):
    """Run the automated BCH collector; returns ``(generators, diagonals, residuals, status)``.

    ``T[k][m]`` holds the ``eps^m`` coefficient of ``ad_S^k(H) / k!``; the
    recursion ``T[k][m] = (1/k) sum_j [S_j, T[k-1][m-j]]`` only needs
    generators of lower order than ``m`` except in ``T[1][m]``, where
    ``S_m`` enters as ``[S_m, H0]``.
    """
    if n_max < 1:
        raise ValueError("need at least one order")
    T: list[dict[int, object]] = [{0: algebra.H0, 1: algebra.V}]
    gens, diags, residuals = [], [], []
    status = "ok"
    try:
        for n in range(1, n_max + 1):
            T.append({})
            parts = [T[0].get(n)] if n in T[0] else []
            # T[1][n] without the unknown [S_n, H0]
            t1 = [algebra.comm(gens[j - 1], T[0][n - j]) for j in range(1, n) if (n - j) in T[0]]
            for k in range(2, n + 1):
                terms = [algebra.comm(gens[j - 1], T[k - 1][n - j])
                         for j in range(1, n - k + 2) if (n - j) in T[k - 1]]
                if terms:
                    T[k][n] = algebra.combine(terms, [1.0 / k] * len(terms))
                    parts.append(T[k][n])
            parts.extend(t1)
            residual = algebra.combine(parts, [1.0] * len(parts))
            diag, gen = algebra.split(residual)
            t1.append(algebra.comm_h0(gen))
            T[1][n] = algebra.combine(t1, [1.0] * len(t1))
            leftover = algebra.combine([residual, algebra.comm_h0(gen), diag], [1.0, 1.0, -1.0])
            gens.append(gen)
            diags.append(diag)
            residuals.append(algebra.norm(leftover))
    except SeriesDivergence as exc:
        status = f"stopped at order {len(diags) + 1}: {exc}"
    return gens, diags, residuals, status


def split_h0_v(H: OperatorSum, g: float, J_eff: float = 1.0):
    """Write ``H / g = Z + eps * V`` with ``eps = J_eff / g``.

    ``V`` is the non-field part divided by ``J_eff``, so for the
    transverse-field dipolar chain its nearest-neighbour coefficients are of
    order one.  Raises ``ValueError`` for ``g == 0``, where no field-based
    split exists.
    """
    if g == 0:
        raise ValueError("g = 0: the field cannot serve as H0; use the Ising generator instead")
    Z = build_collective(H.L, "z")
    eps = J_eff / g
    V = (H - g * Z) / J_eff
    return Z, V, eps


def construct_series(H0: OperatorSum, V: OperatorSum, n_max: int, epsilon: float = 1.0, *,
                     backend: str = "pauli", scale: float = 1.0,
                     term_cap: int = DEFAULT_TERM_CAP, qmax: int | None = None) -> PrethermalSeries:
    """Prethermal series of ``H0 + epsilon V`` through order ``n_max``."""
    if backend == "pauli":
        algebra = PauliAlgebra(H0, V, qmax=qmax, term_cap=term_cap)
    elif backend == "dense":
        algebra = DenseAlgebra(H0, V)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    gens, diags, residuals, status = collect_bch(algebra, epsilon, n_max)
    series = PrethermalSeries(epsilon, algebra, gens, diags, scale=scale, status=status)
    series.residuals = residuals
    return series


def transverse_dipolar_series(model: SpinChainModel, n_max: int, backend: str = "dense",
                              **kwargs) -> PrethermalSeries:
    """Series for the model with ``H0 = Z``; energies scale back by ``g``."""
    from .models import build_transverse_dipolar
    H = build_transverse_dipolar(model)
    H0, V, eps = split_h0_v(H, model.g, model.J_eff)
    return construct_series(H0, V, n_max, eps, backend=backend, scale=model.g, **kwargs)


def alternative_generator_series(model: SpinChainModel, n_max: int, backend: str = "dense",
                                 **kwargs) -> PrethermalSeries:
    """Series with the nearest-neighbour Ising generator ``H0 = sum_j 2 S_y^j S_y^{j+1}``.

    The Hamiltonian is divided by the coefficient ``lam = -u J / 2`` that
    matches its own nearest-neighbour ``yy`` part to ``H0``; everything else
    is the perturbation with ``eps = 1``.
    """
    from .models import build_transverse_dipolar
    H = build_transverse_dipolar(model)
    lam = model.u * model.coupling(0, 1) / 2.0
    H0 = ising_y_generator(model.L)
    V = H / lam - H0
    return construct_series(H0, V, n_max, 1.0, backend=backend, scale=lam,
                            qmax=model.L - 1, **kwargs)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def eigenvalue_gap(H, H_pre, L: int, statistic: str = "mean") -> float:
    """Mean difference of ascending-paired eigenvalues, per site.

    ``statistic="mean"`` gives the signed ``mean_m (E_m - E_m^pre) / L``,
    which equals ``Tr(H - H_pre) / (dim L)`` and therefore vanishes for any
    pair of traceless operators.  ``"mean_abs"`` averages ``|E_m - E_m^pre|``
    and is the one that tracks convergence of the series.
    """
    H = np.asarray(H)
    H_pre = np.asarray(H_pre)
    if H.shape != H_pre.shape:
        raise ValueError(f"dimension mismatch: {H.shape} vs {H_pre.shape}")
    e = np.linalg.eigvalsh(H) if H.ndim == 2 else np.sort(H)
    e_pre = np.linalg.eigvalsh(H_pre) if H_pre.ndim == 2 else np.sort(H_pre)
    return _gap(e, e_pre, L, statistic)


def _gap(e, e_pre, L, statistic):
    d = np.sort(e) - np.sort(e_pre)
    if statistic == "mean":
        return float(np.mean(d) / L)
    if statistic == "mean_abs":
        return float(np.mean(np.abs(d)) / L)
    raise ValueError(f"unknown statistic {statistic!r}")


def series_gaps(series: PrethermalSeries, statistic: str = "mean_abs") -> list[float]:
    """``r(n)`` for every computed order, in the physical units set by ``series.scale``."""
    alg = series.algebra
    L = alg.L
    if isinstance(alg, DenseAlgebra):
        eig = lambda op: alg.eigvals(op)  # noqa: E731
    else:
        eig = lambda op: np.linalg.eigvalsh(op.to_dense())  # noqa: E731
    e_full = series.scale * eig(series.full_hamiltonian())
    gaps = []
    for n in range(1, series.n_orders + 1):
        e_pre = series.scale * eig(series.hamiltonian(n))
        gaps.append(_gap(e_full, e_pre, L, statistic))
    series.r_by_order = gaps
    return gaps


def locality_profile(S) -> np.ndarray:
    """Normalized squared-coefficient weight by correlation distance ``d = 0..L-1``."""
    if isinstance(S, OperatorSum):
        if not len(S):
            raise ValueError("empty operator")
        L = S.L
        w = np.bincount(S.correlation_distances(), weights=np.abs(S.coeffs) ** 2, minlength=L)
        ident = (S.x | S.z) == 0
        w[0] -= float(np.sum(np.abs(S.coeffs[ident]) ** 2))
    else:
        S = np.asarray(S)
        L = int(S.shape[0]).bit_length() - 1
        w = pauli_power(S, span_key, L)
        # the identity string also lands in bin 0
        w[0] -= abs(np.trace(S) / S.shape[0]) ** 2
    total = w.sum()
    if total <= 0:
        raise ValueError("empty operator")
    return w / total
