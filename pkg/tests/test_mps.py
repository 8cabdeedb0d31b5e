import numpy as np
import pytest

from mpsboson.linalg import complete_isometry, hermitian_eig, pseudo_inverse, psd_power
from mpsboson.models import aklt_state
from mpsboson.mps import (MpsError, TransferMap, canonicalize, correlation_length, finite_chain_embed,
                          geometric_sum, load_tensor, save_tensor, tangent_basis, transfer_spectrum)
from mpsboson.saddle import random_tensor


def test_canonical_form(rng):
    mps = canonicalize(random_tensor(3, 4, seed=3))
    A = mps.A
    np.testing.assert_allclose(np.einsum("sab,sac->bc", A.conj(), A), np.eye(4), atol=1e-12)
    tm = TransferMap(A)
    np.testing.assert_allclose(tm.apply_right(mps.gamma), mps.gamma, atol=1e-12)
    assert np.trace(mps.gamma).real == pytest.approx(1.0)
    assert np.linalg.eigvalsh(mps.gamma).min() > 0


def test_canonical_rejects_bad_shapes():
    with pytest.raises(MpsError):
        canonicalize(np.zeros((2, 3, 4)))


def test_aklt_transfer_spectrum_and_xi():
    mps = aklt_state()
    w = transfer_spectrum(mps, 4)
    np.testing.assert_allclose(np.sort(w.real), [-1 / 3] * 3 + [1.0], atol=1e-12)
    assert mps.xi == pytest.approx(1 / np.log(3), rel=1e-10)
    assert correlation_length(mps.A) == pytest.approx(mps.xi)
    with pytest.raises(MpsError):
        transfer_spectrum(mps, 5)


def test_tangent_basis_orthonormal_and_gauge_fixed():
    mps = canonicalize(random_tensor(2, 3, seed=5))
    B = tangent_basis(mps).B
    m = B.shape[0]
    assert m == 3 * 3 * (2 - 1)
    # <B_mu, B_nu> with the right fixed point is the identity
    ov = np.einsum("msab,nsac,cb->mn", B.conj(), B, mps.gamma)
    np.testing.assert_allclose(ov, np.eye(m), atol=1e-10)
    # left gauge: sum_s A_s^dag B_s = 0
    np.testing.assert_allclose(np.einsum("sab,msac->mbc", mps.A.conj(), B), 0, atol=1e-12)


def test_geometric_sum_inverts_one_minus_t(rng):
    mps = canonicalize(random_tensor(3, 3, seed=11))
    tm = TransferMap(mps.A)
    v = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    x = geometric_sum(tm, v, "left", gamma=mps.gamma)
    vc = v - np.trace(mps.gamma @ v) * np.eye(3)
    np.testing.assert_allclose(x - tm.apply_left(x), vc, atol=1e-10)
    assert abs(np.trace(mps.gamma @ x)) < 1e-10
    y = geometric_sum(tm, v, "right", gamma=mps.gamma)
    np.testing.assert_allclose(y - tm.apply_right(y), v - np.trace(v) * mps.gamma, atol=1e-10)


def test_finite_chain_embed_is_normalized_window():
    mps = aklt_state()
    psi = finite_chain_embed(mps, 5)
    assert np.vdot(psi.ravel(), psi.ravel()).real == pytest.approx(1.0, abs=1e-12)
    basis = tangent_basis(mps)
    a = finite_chain_embed(mps, 5, [(2, 0)], basis).ravel()
    b = finite_chain_embed(mps, 5, [(2, 1)], basis).ravel()
    assert np.vdot(a, a).real == pytest.approx(1.0, abs=1e-12)
    assert abs(np.vdot(a, b)) < 1e-12
    assert abs(np.vdot(psi.ravel(), a)) < 1e-12
    with pytest.raises(MpsError):
        finite_chain_embed(mps, 5, [(1, 0), (1, 1)], basis)


def test_tensor_round_trip(tmp_path):
    A = random_tensor(3, 2, seed=1)
    save_tensor(tmp_path / "a.mps", A)
    np.testing.assert_array_equal(load_tensor(tmp_path / "a.mps"), A)


def test_linalg_helpers(rng):
    a = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
    q, _ = np.linalg.qr(a)
    c = complete_isometry(q)
    full = np.hstack([q, c])
    np.testing.assert_allclose(full.conj().T @ full, np.eye(5), atol=1e-12)
    m = a @ a.conj().T  # rank 3
    p, rank = pseudo_inverse(m)
    assert rank == 3
    np.testing.assert_allclose(m @ p @ m, m, atol=1e-10)
    w, _ = hermitian_eig(m)
    assert w.min() > -1e-12
    h = psd_power(m, 0.5)
    np.testing.assert_allclose(h @ h, m, atol=1e-10)
