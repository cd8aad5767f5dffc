import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from dipchain import dynamics
from dipchain.dynamics import (
    EXPERIMENT_TIMES, diagonal_ensemble, diagonalize, evolve_operator, hs_norm_sq,
    parity_sectors, time_average_operator, two_point_correlator,
)
from dipchain.models import SpinChainModel, build_collective, build_transverse_dipolar
from dipchain.pauli import commutator
from conftest import collective, random_hermitian


def _model_eig(L=6, g=0.5, u=1.0):
    m = SpinChainModel(L, J=-1.0, u=u, g=g)
    H = build_transverse_dipolar(m)
    return H, diagonalize(H)


def test_free_spin_spectrum():
    e = diagonalize(0.7 * collective(3, "z")).eigenvalues
    np.testing.assert_allclose(e, 0.7 * np.array([-1.5, -.5, -.5, -.5, .5, .5, .5, 1.5]), atol=1e-14)


def test_single_site():
    np.testing.assert_allclose(diagonalize(collective(1, "x")).eigenvalues, [-0.5, 0.5])


def test_random_reconstruction(rng):
    H = random_hermitian(rng, 16)
    eig = diagonalize(H)
    V, E = eig.eigenvectors, eig.eigenvalues
    assert np.all(np.diff(E) >= 0)
    np.testing.assert_allclose(V.conj().T @ V, np.eye(16), atol=1e-10)
    np.testing.assert_allclose(H @ V, V * E, atol=1e-9 * eig.norm)


def test_parity_blocks_used_and_correct():
    H, eig = _model_eig(5)
    assert len(eig.blocks) == 2
    Hd = H.to_dense()
    np.testing.assert_allclose(eig.eigenvalues, np.linalg.eigvalsh(Hd), atol=1e-12)
    assert sum(len(s) for s in parity_sectors(5)) == 32


def test_rejects_bad_input(monkeypatch):
    with pytest.raises(ValueError):
        diagonalize(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        diagonalize(np.eye(3))
    monkeypatch.setattr(dynamics, "MAX_SITES", 3)
    with pytest.raises(ValueError, match="limited"):
        diagonalize(np.eye(16))


def test_evolution_matches_expm():
    H, eig = _model_eig(4, g=0.3)
    Hd = H.to_dense()
    O = collective(4, "y")
    U = expm(-1j * 1.7 * Hd)
    np.testing.assert_allclose(evolve_operator(O, eig, 1.7), U @ O @ U.conj().T, atol=1e-12)
    np.testing.assert_allclose(evolve_operator(O, eig, 0.0), O, atol=1e-13)


def test_short_time_commutator_oracle():
    H, eig = _model_eig(4, g=0.8)
    Y = build_collective(4, "y")
    first_order = lambda dt: Y.to_dense() - 1j * dt * commutator(H, Y).to_dense()  # noqa: E731
    errs = [np.linalg.norm(evolve_operator(Y, eig, dt) - first_order(dt)) for dt in (1e-2, 5e-3)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_conserved_operator_unchanged():
    H, eig = _model_eig(5, u=0.0, g=0.9)
    Z = collective(5, "z")
    np.testing.assert_allclose(evolve_operator(Z, eig, 3.3), Z, atol=1e-12)


@given(st.floats(0, 20), st.floats(0, 20))
def test_propagator_composition(t1, t2):
    _, eig = _model_eig(4, g=0.6)
    np.testing.assert_allclose(eig.propagator(t1) @ eig.propagator(t2), eig.propagator(t1 + t2), atol=1e-10)


def test_unitarity_preserves_norm_and_hermiticity(rng):
    _, eig = _model_eig(5, g=0.4)
    O = random_hermitian(rng, 32)
    for t in (0.5, 7.0, 40.0):
        Ot = evolve_operator(O, eig, t)
        assert hs_norm_sq(Ot) == pytest.approx(hs_norm_sq(O), rel=1e-9)
        assert np.max(np.abs(Ot - Ot.conj().T)) < 1e-10


def test_correlator_normalization_and_conservation():
    L = 5
    _, eig = _model_eig(L, g=1.0)
    Z = build_collective(L, "z")
    assert two_point_correlator(Z, Z, eig, 0.0) == pytest.approx(1.0)
    _, eig0 = _model_eig(L, u=0.0, g=1.0)
    np.testing.assert_allclose(two_point_correlator(Z, Z, eig0, np.linspace(0, 10, 11)), 1.0, atol=1e-12)


def test_correlator_array_matches_scalar_and_trace():
    L = 5
    H, eig = _model_eig(L, g=0.5)
    Y = collective(L, "y")
    ts = np.array([0.0, 0.7, 3.0])
    arr = two_point_correlator(Y, Y, eig, ts)
    for t, v in zip(ts, arr):
        direct = 4 * np.trace(evolve_operator(Y, eig, t) @ Y).real / (2 ** L * L)
        assert v == pytest.approx(direct, abs=1e-12)
        assert two_point_correlator(Y, Y, eig, t) == pytest.approx(v, abs=1e-12)


def test_correlator_time_reversal_symmetry(rng):
    L = 4
    _, eig = _model_eig(L, g=0.5)
    A, B = random_hermitian(rng, 16), random_hermitian(rng, 16)
    lhs = np.trace(evolve_operator(A, eig, 1.3) @ B) / 16
    rhs = np.conj(np.trace(evolve_operator(B, eig, -1.3) @ A) / 16)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_fig1a_regimes():
    # <Z(t)Z> at g/J=1 settles on a large plateau; <Y(t)Y> at g/J=0.25 keeps decaying toward zero
    L = 8
    _, e1 = _model_eig(L, g=1.0)
    _, e2 = _model_eig(L, g=0.25)
    Z, Y = build_collective(L, "z"), build_collective(L, "y")
    assert two_point_correlator(Z, Z, e1, np.linspace(5, 40, 36)).min() > 0.6
    cy = two_point_correlator(Y, Y, e2, np.array([10.0, 20.0, 40.0, 80.0]))
    assert np.all(np.diff(cy) < 0) and cy[-1] < 0.3


def test_diagonal_ensemble_commutes_and_is_idempotent():
    H, eig = _model_eig(6, g=0.5)
    Hd = H.to_dense()
    Z = collective(6, "z")
    zinf = diagonal_ensemble(Z, eig)
    assert np.max(np.abs(zinf @ Hd - Hd @ zinf)) < 1e-10
    np.testing.assert_allclose(diagonal_ensemble(zinf, eig), zinf, atol=1e-10)
    # conserved quantity in the eigenbasis is unchanged
    np.testing.assert_allclose(diagonal_ensemble(Hd, eig), Hd, atol=1e-10)


def test_diagonal_ensemble_field_limits():
    L = 6
    Z = collective(L, "z")
    ratio = lambda g: hs_norm_sq(diagonal_ensemble(Z, _model_eig(L, g=g)[1])) / hs_norm_sq(Z)  # noqa: E731
    assert ratio(8.0) > 0.95
    assert ratio(0.02) < ratio(0.5) < ratio(8.0)


def test_time_average_limits():
    H, eig = _model_eig(5, g=0.5)
    Z = collective(5, "z")
    np.testing.assert_allclose(time_average_operator(Z, eig, [0.0]), Z, atol=1e-13)
    _, eig0 = _model_eig(5, u=0.0, g=0.5)
    np.testing.assert_allclose(time_average_operator(Z, eig0, EXPERIMENT_TIMES), Z, atol=1e-12)
    with pytest.raises(ValueError):
        time_average_operator(Z, eig, [])


def test_long_time_average_approaches_diagonal_ensemble():
    # random field strengths break the degeneracies of the uniform chain
    rng = np.random.default_rng(5)
    L = 4
    H = random_hermitian(rng, 2 ** L)
    eig = diagonalize(H, sectors=None)
    Z = collective(L, "z")
    d = diagonal_ensemble(Z, eig)
    errs = [hs_norm_sq(time_average_operator(Z, eig, np.linspace(0, T, 4000)) - d) for T in (50, 500)]
    assert errs[1] < errs[0] and errs[1] < 1e-3
