"""Hamiltonians and collective observables of the dipolar spin chain."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .pauli import OperatorSum

RANGES = ("full", "nn")
AXES = ("x", "y", "z")


@dataclass(frozen=True)
class SpinChainModel:
    """Open dipolar chain ``H = u * H_Dip,y + g * Z``.

    ``J`` is the signed natural nearest-neighbour coupling (negative for
    fluorapatite) and ``u`` the scale factor set by the pulse sequence, so the
    engineered coupling is ``J_eff = -u * J``.  Dimensionless runs use
    :meth:`normalized`, which fixes ``J_eff = 1`` so that times are ``J t``
    and fields are ``g / J``.
    """

    L: int
    J: float = -1.0
    u: float = 1.0
    g: float = 0.0
    range: str = "full"
    boundary: str = "open"

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"need at least two sites, got L={self.L}")
        for name in ("J", "u", "g"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.range not in RANGES:
            raise ValueError(f"range must be one of {RANGES}, got {self.range!r}")
        if self.boundary != "open":
            raise ValueError("only open boundaries are supported")

    @classmethod
    def normalized(cls, L: int, g: float = 0.0, range: str = "full") -> "SpinChainModel":
        return cls(L=L, J=-1.0, u=1.0, g=g, range=range)

    @property
    def J_eff(self) -> float:
        return -self.u * self.J

    def with_field(self, g: float) -> "SpinChainModel":
        return replace(self, g=g)

    def coupling(self, j: int, k: int) -> float:
        d = abs(j - k)
        if d == 0:
            raise ValueError("no self-coupling")
        if self.range == "nn" and d > 1:
            return 0.0
        return self.J / d ** 3

    def pairs(self) -> list[tuple[int, int, float]]:
        out = []
        for j in range(self.L):
            for k in range(j + 1, self.L):
                c = self.coupling(j, k)
                if c != 0.0:
                    out.append((j, k, c))
        return out


def _pair_terms(L: int, j: int, k: int, axis: str, weight: float) -> list[tuple[str, float]]:
    # weight * [S_a S_a - (S_b S_b + S_c S_c)/2]; bare strings carry 1/4
    terms = []
    for b in AXES:
        label = ["I"] * L
        label[j] = label[k] = b.upper()
        coeff = weight / 4 if b == axis else -weight / 8
        terms.append(("".join(label), coeff))
    return terms


def build_dipolar(model: SpinChainModel, axis: str = "z") -> OperatorSum:
    """Secular dipolar Hamiltonian with quantization axis ``axis``."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    terms = []
    for j, k, c in model.pairs():
        terms.extend(_pair_terms(model.L, j, k, axis, c))
    return OperatorSum.from_terms(terms, model.L)


def build_collective(L: int, direction: str | Sequence[float] = "z") -> OperatorSum:
    """Collective spin ``sum_j n . S_j`` along an axis name or a direction vector."""
    if isinstance(direction, str):
        if direction not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {direction!r}")
        n = np.zeros(3)
        n[AXES.index(direction)] = 1.0
    else:
        n = np.asarray(direction, dtype=float)
        if n.shape != (3,):
            raise ValueError("direction must have three components")
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("zero direction vector")
        n = n / norm
    terms = []
    for j in range(L):
        for a, comp in zip("XYZ", n):
            if comp != 0.0:
                label = ["I"] * L
                label[j] = a
                terms.append(("".join(label), comp / 2))
    return OperatorSum.from_terms(terms, L)


def build_transverse_dipolar(model: SpinChainModel) -> OperatorSum:
    """``u * H_Dip,y + g * Z``."""
    return model.u * build_dipolar(model, "y") + model.g * build_collective(model.L, "z")


def ising_y_generator(L: int) -> OperatorSum:
    """Nearest-neighbour ``sum_j 2 S_y^j S_y^{j+1}`` (integer-spaced spectrum)."""
    terms = []
    for j in range(L - 1):
        label = ["I"] * L
        label[j] = label[j + 1] = "Y"
        terms.append(("".join(label), 0.5))
    return OperatorSum.from_terms(terms, L)
