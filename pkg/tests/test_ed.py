import numpy as np
import pytest

from mpsboson.ed import ChainHamiltonian, EdError, ed_dense, ed_ground
from mpsboson.models import SpinModel, blbq, heisenberg_staggered, spin_matrices
from mpsboson.saddle import find_saddle


def heisenberg_half():
    sx, sy, sz = spin_matrices(2)
    h = sum(np.kron(a, a) for a in (sx, sy, sz))
    return SpinModel("heis", 2, h)


def test_singlet():
    r = ed_ground(heisenberg_half(), 2)
    assert r.energy == pytest.approx(-0.75, abs=1e-12)


def test_aklt_open_chain():
    r = ed_ground(blbq(1 / 3), 8, "open")
    assert r.energy == pytest.approx(-14 / 3, abs=1e-8)
    assert r.energy_density == pytest.approx(-2 / 3, abs=1e-8)
    assert r.residual < 1e-9


@pytest.mark.parametrize("model,N,bc", [(blbq(0.0), 6, "periodic"), (blbq(0.5), 5, "open"),
                                        (heisenberg_staggered(0.2), 9, "periodic")])
def test_krylov_equals_dense(model, N, bc):
    assert ed_ground(model, N, bc).energy == pytest.approx(ed_dense(model, N, bc)[0], abs=1e-10)


def test_hamiltonian_is_hermitian():
    H = ChainHamiltonian(blbq(0.3), 4, "periodic").dense()
    np.testing.assert_allclose(H, H.conj().T, atol=1e-13)


def test_aklt_gap_positive():
    r = ed_ground(blbq(1 / 3), 8, "periodic", excited=True)
    assert r.gap > 0.3


def test_limits():
    with pytest.raises(EdError):
        ed_ground(blbq(0.0), 14)
    with pytest.raises(EdError):
        ed_ground(blbq(0.0), 4, bc="twisted")


def test_variational_bound_against_periodic_chain():
    model = blbq(0.0)
    e_ed = ed_ground(model, 10, "periodic").energy_density
    e_mps = find_saddle(model, 2).energy_density
    # finite periodic chains sit slightly below the infinite-chain value
    assert e_mps > e_ed - 5e-3
