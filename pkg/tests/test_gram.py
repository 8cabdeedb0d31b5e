import numpy as np
import pytest

from mpsboson.gram import (GramError, aklt_analytic_spectrum, build_gram, default_window, gram_tilde,
                           lanczos_filter_apply, overlap_M, pinv_project, spectrum_table, truncation_floor)
from mpsboson.mps import canonicalize, finite_chain_embed, tangent_basis
from mpsboson.saddle import random_tensor


@pytest.fixture(scope="module")
def generic():
    mps = canonicalize(random_tensor(2, 2, seed=21))
    return mps, tangent_basis(mps)


def test_overlap_M_against_dense_window(generic):
    mps, basis = generic
    N, i0, x = 7, 2, 2
    for mu in range(basis.m):
        bra = finite_chain_embed(mps, N, [(i0, mu)], basis).ravel()
        for nu in range(basis.m):
            ket = finite_chain_embed(mps, N, [(i0, 0), (i0 + x, nu)], basis).ravel()
            assert abs(np.vdot(bra, ket) - overlap_M(mps, basis, x)[mu, 0, nu]) < 1e-12


def test_gram_is_hermitian_psd(generic):
    mps, basis = generic
    gd = build_gram(mps, basis, 4, floor=0.0)
    np.testing.assert_allclose(gd.Gtilde, gd.Gtilde.conj().T, atol=1e-12)
    assert gd.eigvals.min() > -1e-10
    np.testing.assert_allclose(gd.proj @ gd.proj, gd.proj, atol=1e-10)
    np.testing.assert_allclose(gd.Gtilde @ gd.pinv @ gd.Gtilde, gd.Gtilde, atol=1e-9)


def test_gram_tilde_rejects_indefinite():
    G = np.diag([1.0, -0.1]).astype(complex)
    with pytest.raises(GramError):
        gram_tilde(G, np.zeros((1, 1, 1, 2)))
    Mx = np.array([0.5, 0.0]).reshape(1, 1, 1, 2)
    np.testing.assert_allclose(gram_tilde(np.eye(2), Mx), np.diag([0.75, 1.0]))


def test_pinv_floor_drops_small_directions():
    G = np.diag([1.0, 0.5, 1e-6, 0.0]).astype(complex)
    pinv, proj, null_dim, w = pinv_project(G, 1e-10, floor=1e-4)
    assert null_dim == 2
    np.testing.assert_allclose(np.diag(pinv).real, [1, 2, 0, 0], atol=1e-12)


def test_matrix_free_matches_dense(generic):
    mps, basis = generic
    dense = build_gram(mps, basis, 5, floor=0.0)
    free = build_gram(mps, basis, 5, floor=0.0, dense=False)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(dense.dim) + 1j * rng.standard_normal(dense.dim)
    np.testing.assert_allclose(free.apply_gtilde(v), dense.apply_gtilde(v), atol=1e-11)
    # project onto the well-conditioned range before comparing inverses
    np.testing.assert_allclose(free.apply_pinv(dense.Gtilde @ v, tol=1e-12), dense.proj @ v, atol=1e-6)


def test_lanczos_filter_on_diagonal():
    w = np.array([3.0, 1.0, 0.5, 1e-8, 0.0])
    v = np.ones(5, dtype=complex)
    x = lanczos_filter_apply(lambda c: w * c, v, cut=1e-6)
    np.testing.assert_allclose(x, [1 / 3, 1, 2, 0, 0], atol=1e-10)


def test_aklt_analytic_families():
    an = aklt_analytic_spectrum(6)
    assert an.lam == pytest.approx(-1 / 3)
    fam = {y: (ep, em) for y, ep, em in an.eigen_families}
    expected = {1: (4, 0), 2: (0, 4 / 3), 3: (4 / 3, 8 / 9), 4: (8 / 9, 28 / 27)}
    for y, (ep, em) in expected.items():
        assert fam[y][0] == pytest.approx(ep, abs=1e-12)
        assert fam[y][1] == pytest.approx(em, abs=1e-12)
    # large separations approach independent derivatives
    assert abs(fam[6][1] - 1) < abs(fam[4][1] - 1)
    assert max(an.residuals.values()) < 1e-10
    with pytest.raises(GramError):
        aklt_analytic_spectrum(2)


def test_aklt_numeric_spectrum_l12(aklt):
    mps, basis, _ = aklt
    gd = build_gram(mps, basis, 12, floor=0.0)
    rows = spectrum_table(aklt_analytic_spectrum(6), gd.eigvals)
    assert max(r[4] for r in rows) < 1e-8


def test_window_helpers():
    assert default_window(0.1) == 8
    assert default_window(2.0) == 16
    assert truncation_floor(1.0, 10) == pytest.approx(np.exp(-10))
    assert truncation_floor(0.0, 10) == 0.0
