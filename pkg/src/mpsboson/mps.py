"""Uniform matrix product states in left-canonical form.

Index layout of every site tensor is ``(s, a, b)``: physical index, left
bond, right bond.  The state is stored left-canonical,
``sum_s A[s]^dag A[s] = 1``, and ``gamma`` is the right fixed point of the
transfer map.  Left environments are indexed ``(bra, ket)`` and right
environments ``(ket, bra)`` so that closing a chain is ``trace(L @ R)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .linalg import EINSUM_OPT, RANK_TOL, complete_isometry, psd_power

DENSE_TRANSFER_MAX = 400  # D**2 above which iterative eigensolvers are used


class MpsError(ValueError):
    pass


@dataclass(frozen=True)
class UniformMps:
    A: np.ndarray
    gamma: np.ndarray
    xi: float

    @property
    def d(self):
        return self.A.shape[0]

    @property
    def D(self):
        return self.A.shape[1]


@dataclass(frozen=True)
class TangentBasis:
    B: np.ndarray  # (m, d, D, D)

    @property
    def m(self):
        return self.B.shape[0]


# -- environment steps -------------------------------------------------------

def left_step(env, ket, bra):
    """``sum_s bra[s]^dag env ket[s]``; ``env`` may carry leading batch axes."""
    return np.einsum("sab,...ak,skc->...bc", bra.conj(), env, ket, optimize=EINSUM_OPT)


def right_step(env, ket, bra):
    """``sum_s ket[s] env bra[s]^dag``."""
    return np.einsum("skc,...cd,sbd->...kb", ket, env, bra.conj(), optimize=EINSUM_OPT)


class TransferMap:
    """Mixed transfer map ``T(ket, bra)`` on bond-space operators."""

    def __init__(self, ket, bra=None):
        self.ket = ket
        self.bra = ket if bra is None else bra
        self.D = ket.shape[1]

    def apply_left(self, env):
        return left_step(env, self.ket, self.bra)

    def apply_right(self, env):
        return right_step(env, self.ket, self.bra)

    def matrix(self):
        """Matrix of the left action on row-major vectorised environments."""
        return sum(np.kron(self.bra[s].conj().T, self.ket[s].T) for s in range(self.ket.shape[0]))


def _leading_left(A):
    D = A.shape[1]
    tm = TransferMap(A)
    if D * D <= DENSE_TRANSFER_MAX:
        w, v = np.linalg.eig(tm.matrix())
    else:
        op = spla.LinearOperator(
            (D * D, D * D), matvec=lambda x: tm.apply_left(x.reshape(D, D)).ravel(), dtype=complex
        )
        w, v = spla.eigs(op, k=2, which="LM", v0=np.eye(D, dtype=complex).ravel())
    order = np.argsort(-np.abs(w))
    return w[order], v[:, order]


def transfer_eigs(A, count=None):
    """Transfer eigenvalues sorted by descending modulus."""
    D = A.shape[1]
    count = D * D if count is None else count
    if D * D <= DENSE_TRANSFER_MAX:
        w = np.linalg.eigvals(TransferMap(A).matrix())
    else:
        tm = TransferMap(A)
        op = spla.LinearOperator(
            (D * D, D * D), matvec=lambda x: tm.apply_left(x.reshape(D, D)).ravel(), dtype=complex
        )
        w = spla.eigs(op, k=min(count, D * D - 2), which="LM", return_eigenvectors=False)
    return w[np.argsort(-np.abs(w), kind="stable")][:count]


def _right_fixed_point(A):
    D = A.shape[1]
    tm = TransferMap(A)
    if D * D <= DENSE_TRANSFER_MAX:
        mat = sum(np.kron(A[s], A[s].conj()) for s in range(A.shape[0]))
        w, v = np.linalg.eig(mat)
        g = v[:, np.argmax(np.abs(w))].reshape(D, D)
    else:
        op = spla.LinearOperator(
            (D * D, D * D), matvec=lambda x: tm.apply_right(x.reshape(D, D)).ravel(), dtype=complex
        )
        _, v = spla.eigs(op, k=1, which="LM", v0=np.eye(D, dtype=complex).ravel())
        g = v[:, 0].reshape(D, D)
    g = g / np.trace(g)
    g = 0.5 * (g + g.conj().T)
    # a few power steps tighten the fixed point to machine precision
    for _ in range(3):
        g = tm.apply_right(g)
        g = 0.5 * (g + g.conj().T) / np.trace(g).real
    return g


def correlation_length(A):
    if A.shape[1] == 1:
        return 0.0
    lam2 = abs(transfer_eigs(A, 2)[1])
    if lam2 < 1e-300:
        return 0.0
    return -1.0 / np.log(lam2)


def canonicalize(A_raw, rank_tol=1e-12):
    """Bring a raw site tensor to left-canonical form with its fixed point."""
    A = np.asarray(A_raw, dtype=complex)
    if A.ndim != 3 or A.shape[1] != A.shape[2]:
        raise MpsError(f"site tensor must have shape (d, D, D), got {A.shape}")
    D = A.shape[1]
    for _ in range(2):
        w, v = _leading_left(A)
        if D > 1 and abs(w[1]) > abs(w[0]) * (1 - 1e-10):
            raise MpsError("non-injective MPS: degenerate leading transfer eigenvalue")
        eta = w[0]
        l = v[:, 0].reshape(D, D)
        l = l / np.trace(l)
        l = 0.5 * (l + l.conj().T)
        lw, lv = np.linalg.eigh(l)
        if lw.min() < rank_tol * lw.max():
            raise MpsError("rank-deficient gauge: left fixed point is singular")
        x = (lv * np.sqrt(lw)) @ lv.conj().T
        xinv = (lv / np.sqrt(lw)) @ lv.conj().T
        A = np.einsum("ab,sbc,cd->sad", x, A, xinv) / np.sqrt(eta.real if abs(eta.imag) < 1e-12 * abs(eta) else eta)
    # remove the residual non-canonicity with a polar step
    V = A.reshape(-1, D)
    u, _, vh = np.linalg.svd(V, full_matrices=False)
    A = (u @ vh).reshape(A.shape)
    gamma = _right_fixed_point(A)
    return UniformMps(A=A, gamma=gamma, xi=float(correlation_length(A)))


def transfer_spectrum(mps, count):
    if count > mps.D ** 2:
        raise MpsError(f"count {count} exceeds D^2 = {mps.D ** 2}")
    return transfer_eigs(mps.A, count)


def tangent_basis(mps):
    """Orthonormal tangent directions ``B_mu = V_perp e_mu gamma^{-1/2}``."""
    d, D = mps.d, mps.D
    V = mps.A.reshape(d * D, D)
    Vp = complete_isometry(V)  # (dD, (d-1)D)
    gis = psd_power(mps.gamma, -0.5, RANK_TOL)
    # mode mu = (p, b): column p of Vp times row b of gamma^{-1/2}
    B = np.einsum("xp,bc->pbxc", Vp, gis).reshape((d - 1) * D * D, d, D, D)
    return TangentBasis(B=B)


def geometric_sum(tmap, v, side="left", gamma=None, center=True, tol=1e-12, fixed=None, weight=None):
    """Sum ``sum_n T^n v`` on the complement of the leading eigenspace.

    For ``side='left'`` the fixed point is the identity and the functional is
    ``trace(gamma @ .)``; for ``side='right'`` the fixed point is ``gamma`` and
    the functional is the trace.  ``fixed`` and ``weight`` override the fixed
    point and the functional ``trace(weight @ .)`` for other gauges.
    """
    v = np.asarray(v, dtype=complex)
    D = v.shape[-1]
    eye = np.eye(D)
    if fixed is None or weight is None:
        if gamma is None:
            raise MpsError("geometric_sum needs the right fixed point")
        fixed, weight = (eye, gamma) if side == "left" else (gamma, eye)
    apply = tmap.apply_left if side == "left" else tmap.apply_right
    fix = fixed

    def func(x):
        return np.trace(weight @ x)

    if center:
        v = v - func(v) * fix
    if not np.any(v):
        return np.zeros_like(v)

    def op(x):
        x = x.reshape(D, D)
        return (x - apply(x) + func(x) * fix).ravel()

    if D * D <= DENSE_TRANSFER_MAX:
        mat = np.column_stack([op(e) for e in np.eye(D * D, dtype=complex)])
        out = np.linalg.solve(mat, v.ravel())
    else:
        lin = spla.LinearOperator((D * D, D * D), matvec=op, dtype=complex)
        out, info = spla.gmres(lin, v.ravel(), rtol=tol, atol=0.0, restart=60, maxiter=200)
        if info != 0:
            res = np.linalg.norm(op(out) - v.ravel())
            raise MpsError(f"geometric sum did not converge (residual {res:.3e})")
    out = out.reshape(D, D)
    res = np.linalg.norm(out - apply(out) - v)
    if res > max(1e-9, 100 * tol) * max(1.0, np.linalg.norm(v)):
        raise MpsError(f"geometric sum residual {res:.3e}")
    return out


def finite_chain_embed(mps, N, derivs=(), basis=None):
    """Dense window of the infinite chain with derivative tensors inserted.

    The two boundary bonds are purified: the left one carries the identity
    environment and the right one ``gamma^{1/2}``, so the returned array of
    shape ``(D, d**N, D)`` reproduces infinite-chain overlaps of the window
    exactly.  Flatten it for a plain vector.
    """
    d, D = mps.d, mps.D
    if d ** N * D * D > 2 ** 24:
        raise MpsError(f"window too large: d^N = {d ** N}")
    sites = [s for s, _ in derivs]
    if len(set(sites)) != len(sites):
        raise MpsError("at most one derivative per site")
    if any(not 0 <= s < N for s in sites):
        raise MpsError("derivative site outside the window")
    if derivs and basis is None:
        raise MpsError("a tangent basis is needed to place derivatives")
    placed = dict(derivs)
    psi = np.eye(D, dtype=complex).reshape(D, 1, D)  # (left ancilla, phys, bond)
    for i in range(N):
        T = basis.B[placed[i]] if i in placed else mps.A
        psi = np.einsum("xpa,sab->xpsb", psi, T).reshape(D, -1, D)
    root = psd_power(mps.gamma, 0.5)
    return np.einsum("xpb,bc->xpc", psi, root)


def save_tensor(path, A):
    d, D, _ = A.shape
    with open(path, "w") as fh:
        fh.write(f"{d} {D}\n")
        for z in A.ravel():
            fh.write(f"{z.real:.17g} {z.imag:.17g}\n")


def load_tensor(path):
    with open(path) as fh:
        d, D = (int(t) for t in fh.readline().split())
        vals = np.loadtxt(fh, ndmin=2)
    if vals.shape != (d * D * D, 2):
        raise MpsError(f"{path}: expected {d * D * D} entries, got {vals.shape[0]}")
    return (vals[:, 0] + 1j * vals[:, 1]).reshape(d, D, D)
