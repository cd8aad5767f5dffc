import numpy as np
import pytest

from dipchain.models import (
    SpinChainModel, build_collective, build_dipolar, build_transverse_dipolar, ising_y_generator,
)
from conftest import SIGMA, collective, site_op


def _dipolar_oracle(model, axis):
    """Direct sum of J_jk [S_a S_a - (S_b S_b + S_c S_c) / 2] from site operators."""
    L = model.L
    others = [a for a in "xyz" if a != axis]
    H = 0
    for j in range(L):
        for k in range(j + 1, L):
            c = model.coupling(j, k)
            if c == 0:
                continue
            s = lambda a, i: site_op(L, i, SIGMA[a.upper()] / 2)  # noqa: E731
            H = H + c * (s(axis, j) @ s(axis, k)
                         - 0.5 * sum(s(b, j) @ s(b, k) for b in others))
    return H


@pytest.mark.parametrize("axis", ["x", "y", "z"])
@pytest.mark.parametrize("rng_kind", ["full", "nn"])
def test_dipolar_matches_site_oracle(axis, rng_kind):
    m = SpinChainModel(5, J=-1.3, range=rng_kind)
    np.testing.assert_allclose(build_dipolar(m, axis).to_dense(), _dipolar_oracle(m, axis), atol=1e-13)


def test_coupling_law():
    m = SpinChainModel(6, J=-2.0)
    assert m.coupling(0, 1) == -2.0
    assert m.coupling(1, 4) == pytest.approx(-2.0 / 27)
    assert SpinChainModel(6, range="nn").coupling(0, 2) == 0.0
    assert len(SpinChainModel(6).pairs()) == 15


def test_normalized_has_unit_effective_coupling():
    m = SpinChainModel.normalized(4, g=0.5)
    assert m.J_eff == 1.0 and m.g == 0.5


def test_transverse_model_is_sum_of_parts():
    m = SpinChainModel(4, J=-1.0, u=0.3, g=0.7)
    H = build_transverse_dipolar(m).to_dense()
    expected = 0.3 * _dipolar_oracle(m, "y") + 0.7 * collective(4, "z")
    np.testing.assert_allclose(H, expected, atol=1e-13)
    assert np.allclose(H, H.conj().T)


def test_dipolar_commutes_with_its_collective_axis():
    m = SpinChainModel(5)
    H = build_dipolar(m, "z").to_dense()
    Z = collective(5, "z")
    assert np.max(np.abs(H @ Z - Z @ H)) < 1e-12


def test_parity_conserved():
    m = SpinChainModel(5, g=0.4)
    H = build_transverse_dipolar(m).to_dense()
    P = np.diag((-1.0) ** np.bitwise_count(np.arange(32)))
    assert np.max(np.abs(H @ P - P @ H)) < 1e-12


def test_axis_sum_vanishes():
    # the secular form is traceless in the axis: sum over the three quantization axes is zero
    m = SpinChainModel(4)
    total = sum((build_dipolar(m, a) for a in "xyz"), start=build_dipolar(m, "x") * 0)
    assert total.norm() < 1e-14


def test_collective_direction_vector():
    n = np.array([1.0, 1.0, 0.0])
    op = build_collective(3, n).to_dense()
    expected = (collective(3, "x") + collective(3, "y")) / np.sqrt(2)
    np.testing.assert_allclose(op, expected, atol=1e-14)
    with pytest.raises(ValueError):
        build_collective(3, [0, 0, 0])
    with pytest.raises(ValueError):
        build_collective(3, "w")


def test_ising_generator_integer_spectrum():
    e = np.linalg.eigvalsh(ising_y_generator(5).to_dense())
    np.testing.assert_allclose(e * 2, np.round(e * 2), atol=1e-12)
    assert np.allclose(np.diff(np.unique(np.round(e, 9))) % 1, 0)


@pytest.mark.parametrize("kwargs", [{"L": 1}, {"L": 4, "range": "long"}, {"L": 4, "boundary": "periodic"},
                                    {"L": 4, "g": float("nan")}])
def test_invalid_models(kwargs):
    with pytest.raises(ValueError):
        SpinChainModel(**kwargs)
