import numpy as np
import pytest

from mpsboson.models import (blbq, flip, heisenberg_staggered, heisenberg_staggered_unrotated_pair,
                             make_model, rotate_density, spin_matrices)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_spin_algebra(d):
    sx, sy, sz = spin_matrices(d)
    s = (d - 1) / 2
    np.testing.assert_allclose(sx @ sy - sy @ sx, 1j * sz, atol=1e-12)
    casimir = sx @ sx + sy @ sy + sz @ sz
    np.testing.assert_allclose(casimir, s * (s + 1) * np.eye(d), atol=1e-12)


def test_blbq_is_projector_sum_at_aklt_point():
    # S.S + (S.S)^2 / 3 = 2 P_2 - 2/3 on two spin-1 sites
    h = blbq(1 / 3).hdensity
    w = np.linalg.eigvalsh(h)
    np.testing.assert_allclose(np.unique(np.round(w, 10)), [-2 / 3, 4 / 3], atol=1e-10)
    assert np.sum(np.isclose(w, 4 / 3)) == 5


def test_blbq_hermitian_and_h4_layout():
    m = blbq(0.633)
    np.testing.assert_allclose(m.hdensity, m.hdensity.conj().T, atol=1e-14)
    h4 = m.h4
    # h4[s, t, u, v] = <s t | h | u v>
    assert h4[0, 2, 1, 1] == pytest.approx(m.hdensity[0 * 3 + 2, 1 * 3 + 1])


def test_rotation_is_unitary_relabeling():
    for model in (blbq(0.2), heisenberg_staggered(0.0)):
        a = np.linalg.eigvalsh(model.hdensity)
        b = np.linalg.eigvalsh(rotate_density(model).hdensity)
        np.testing.assert_allclose(np.sort(a), np.sort(b), atol=1e-12)
    u = flip(3)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(3), atol=1e-14)


def test_neel_energy_in_rotated_frame():
    # |+1, -1> has <S.S> = -1 and <(S.S)^2> = 2
    p = 0.4
    h = blbq(p, rotated=True).hdensity
    assert h[0, 0].real == pytest.approx(-1 + 2 * p)


def test_heis_stag_rotation_matches_pair_hamiltonian():
    h = 0.2
    pair = heisenberg_staggered_unrotated_pair(h)
    u = np.kron(np.eye(2), flip(2))
    # the pair carries the full field on both sites, the density half of it
    rot = heisenberg_staggered(2 * h).hdensity
    np.testing.assert_allclose(u.conj().T @ pair @ u, rot, atol=1e-12)


def test_make_model():
    assert make_model("blbq", p=0.5).params["p"] == 0.5
    assert make_model("heis_stag", h=0.2).d == 2
    with pytest.raises(ValueError):
        make_model("ising")
