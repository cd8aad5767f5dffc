from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dipchain.pauli import (
    OperatorSum, PauliTerm, commutator, hamming_decompose, hs_inner, masks_to_label,
    mqc_components_dft, mqc_components_nested, multiply, random_baseline, zeta,
)
from dipchain.models import build_collective
from conftest import collective, dense_of, kron_label, random_hermitian, random_labels

labels = st.integers(1, 5).flatmap(lambda L: st.text("IXYZ", min_size=L, max_size=L))


def _random_sum(rng, L, n=8, hermitian=False):
    terms = {}
    for lab in random_labels(rng, L, n):
        c = rng.normal() + (0 if hermitian else 1j * rng.normal())
        terms[lab] = terms.get(lab, 0) + c
    return OperatorSum.from_terms(terms, L)


# ---- single strings ----

@given(labels)
def test_label_roundtrip(label):
    t = PauliTerm.from_label(label)
    assert t.label == label
    assert masks_to_label(t.x, t.z, len(label)) == label
    assert t.weight == sum(c != "I" for c in label)


@given(labels, labels)
def test_product_matches_kron(a, b):
    if len(a) != len(b):
        b = (b * len(a))[:len(a)]
    p = multiply(PauliTerm.from_label(a, 0.5), PauliTerm.from_label(b, 2j))
    np.testing.assert_allclose(p.to_dense(), (0.5 * kron_label(a)) @ (2j * kron_label(b)), atol=1e-14)


def test_site_zero_is_leftmost_kron_factor():
    op = OperatorSum.spin(3, 0, "x")
    np.testing.assert_allclose(op.to_dense(), np.kron(kron_label("X"), np.eye(4)) / 2)


def test_xy_is_iz():
    p = multiply(PauliTerm.from_label("X"), PauliTerm.from_label("Y"))
    assert p.label == "Z" and p.coeff == 1j


# ---- sums ----

def test_arithmetic_matches_dense(rng):
    L = 4
    a, b = _random_sum(rng, L), _random_sum(rng, L)
    A, B = dense_of(a.terms, L), dense_of(b.terms, L)
    np.testing.assert_allclose((a + b).to_dense(), A + B, atol=1e-13)
    np.testing.assert_allclose((a - 2.5 * b).to_dense(), A - 2.5 * B, atol=1e-13)
    np.testing.assert_allclose((a @ b).to_dense(), A @ B, atol=1e-12)
    np.testing.assert_allclose(commutator(a, b).to_dense(), A @ B - B @ A, atol=1e-12)
    np.testing.assert_allclose(a.dagger().to_dense(), A.conj().T, atol=1e-14)
    assert hs_inner(a, b) == pytest.approx(np.trace(A.conj().T @ B) / 2 ** L, abs=1e-12)
    assert a.trace() == pytest.approx(np.trace(A) / 2 ** L, abs=1e-13)
    assert a.norm_sq() == pytest.approx(np.vdot(A, A).real / 2 ** L, rel=1e-12)


@given(st.integers(0, 2 ** 31 - 1))
def test_commutator_antisymmetry_and_jacobi(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_sum(rng, 3, 5) for _ in range(3))
    assert (commutator(a, b) + commutator(b, a)).norm() < 1e-12
    jac = commutator(a, commutator(b, c)) + commutator(b, commutator(c, a)) + commutator(c, commutator(a, b))
    assert jac.norm() < 1e-10


@given(st.integers(0, 2 ** 31 - 1))
def test_commutator_of_hermitians_is_antihermitian(seed):
    rng = np.random.default_rng(seed)
    a, b = _random_sum(rng, 4, 6, True), _random_sum(rng, 4, 6, True)
    assert commutator(a, b).is_anti_hermitian(1e-12)


def test_canonical_and_pruned():
    op = OperatorSum.from_terms([("XZ", 1.0), ("XZ", 1.0), ("YY", 1e-16)], 2)
    assert op.terms == {"XZ": 2.0}
    assert len(OperatorSum.from_terms([("XI", 1.0), ("XI", -1.0)], 2)) == 0


def test_from_dense_roundtrip(rng):
    L = 4
    M = random_hermitian(rng, 16) + 1j * random_hermitian(rng, 16)
    op = OperatorSum.from_dense(M)
    np.testing.assert_allclose(op.to_dense(), M, atol=1e-13)
    assert len(op) == 4 ** L


def test_spin_and_collective():
    L = 3
    np.testing.assert_allclose(build_collective(L, "y").to_dense(), collective(L, "y"), atol=1e-14)
    assert OperatorSum.spin(L, 1, "z").coefficient("IZI") == 0.5


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        OperatorSum.from_terms({"XX": 1}, 2) + OperatorSum.from_terms({"XXX": 1}, 3)


# ---- serialization ----

def test_text_roundtrip(rng):
    op = _random_sum(rng, 5, 12)
    back = OperatorSum.from_text(op.to_text())
    assert back == op


def test_text_golden(tmp_path):
    from pathlib import Path
    golden = Path(__file__).parent / "golden" / "dipolar_z_L3.txt"
    from dipchain.models import SpinChainModel, build_dipolar
    op = build_dipolar(SpinChainModel(3), "z")
    assert op.to_text() == golden.read_text()
    assert OperatorSum.from_text(golden.read_text()) == op


def test_text_rejects_garbage():
    with pytest.raises(ValueError):
        OperatorSum.from_text("1.0 XX")
    with pytest.raises(ValueError):
        OperatorSum.from_text("")


# ---- Hamming weights ----

@pytest.mark.parametrize("L", [1, 3, 6])
def test_zeta_counts_strings(L):
    z = zeta(L)
    assert z.sum() == 4 ** L
    assert all(z[k] == 3 ** k * comb(L, k) for k in range(L + 1))
    assert random_baseline(L).sum() == pytest.approx(1.0)


def test_collective_magnetization_is_weight_one():
    f = hamming_decompose(build_collective(5, "z")).f
    np.testing.assert_allclose(f, [0, 1, 0, 0, 0, 0])


def test_dense_and_symbolic_hamming_agree(rng):
    L = 5
    op = _random_sum(rng, L, 30, hermitian=True)
    op = op - op.trace()
    f_sym = hamming_decompose(op).f
    f_dense = hamming_decompose(op.to_dense()).f
    np.testing.assert_allclose(f_sym, f_dense, atol=1e-12)
    assert f_sym.sum() == pytest.approx(1.0)


def test_random_operator_approaches_baseline(rng):
    L = 6
    M = random_hermitian(rng, 2 ** L)
    M -= np.trace(M) / 2 ** L * np.eye(2 ** L)
    assert np.max(np.abs(hamming_decompose(M).f - random_baseline(L))) < 0.02


def test_hamming_rejects_trace_and_zero():
    with pytest.raises(ValueError):
        hamming_decompose(OperatorSum.identity(3) + build_collective(3, "z"))
    with pytest.raises(ValueError):
        hamming_decompose(np.zeros((8, 8)))


# ---- coherence components ----

def _ladder_check(comps, P):
    for q, c in comps.items():
        assert (commutator(P, c) - q * c).norm() < 1e-9 * max(1, abs(q))


def test_nested_components_satisfy_ladder(rng):
    L = 4
    op = _random_sum(rng, L, 20, hermitian=True)
    Z = build_collective(L, "z")
    comps = mqc_components_nested(op, Z)
    _ladder_check(comps, Z)
    assert (OperatorSum.linear_combination(comps.values()) - op).norm() < 1e-10


def test_single_flip_flop_has_order_two():
    Z = build_collective(2, "z")
    plus = OperatorSum.from_terms({"XX": 0.25, "YY": -0.25, "XY": 0.25j, "YX": 0.25j}, 2)  # S+S+
    comps = mqc_components_nested(plus, Z)
    assert comps[2].allclose(plus) and all(comps[q].norm() < 1e-12 for q in comps if q != 2)


def test_nested_matches_dft(rng):
    L = 3
    op = _random_sum(rng, L, 25)
    Z = build_collective(L, "z")
    nested = mqc_components_nested(op, Z)
    dft = mqc_components_dft(op.to_dense(), Z.to_dense(), L)
    for q in range(-L, L + 1):
        np.testing.assert_allclose(nested[q].to_dense(), dft[q], atol=1e-10)


def test_nested_raises_for_non_integer_generator(rng):
    op = _random_sum(rng, 3, 10, hermitian=True)
    bad = build_collective(3, "z") * 0.7
    with pytest.raises(ValueError):
        mqc_components_nested(op, bad)
