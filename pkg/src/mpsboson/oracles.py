"""Brute-force checks on dense windows of the infinite chain.

Every quantity the library computes by transfer-matrix contractions is
recomputed here from explicit state vectors built by ``finite_chain_embed``.
The windows are purified at both ends, so overlaps are exact; Hamiltonian
matrix elements use the same bond range as ``quadratic_coeffs(bonds=k)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .boson import quadratic_coeffs
from .gram import _Pieces, gram_blocks, overlap_M_all
from .mps import finite_chain_embed
from .saddle import Environments


def apply_bonds(psi, h4, N, bonds):
    """Sum of the two-site density on the given bonds of a window vector.

    ``psi`` has shape ``(D, d**N, D)``; bond ``j`` couples sites ``j, j+1``.
    """
    D = psi.shape[0]
    d = h4.shape[0]
    t = psi.reshape((D,) + (d,) * N + (D,))
    out = np.zeros_like(t)
    for j in bonds:
        r = np.tensordot(h4, t, axes=([2, 3], [j + 1, j + 2]))
        out += np.moveaxis(r, [0, 1], [j + 1, j + 2])
    return out.reshape(psi.shape)


@dataclass
class WindowReport:
    deviations: dict = field(default_factory=dict)  # name -> max abs deviation
    tol: float = 1e-5

    @property
    def max_dev(self):
        return max(self.deviations.values(), default=0.0)

    @property
    def passed(self):
        return self.max_dev < self.tol

    def add(self, name, dev):
        self.deviations[name] = max(self.deviations.get(name, 0.0), float(dev))


def window_checks(mps, basis, model, N=10, margin=3, k=2, modes=None, tol=1e-5):
    """Compare ``M``, ``G``, ``eps`` and ``delta_prime`` with dense overlaps.

    Derivatives stay ``margin`` sites away from both ends.  ``modes`` limits
    the tangent modes used for the pair-state Gram blocks (default: three
    spread over the basis).
    """
    m = basis.m
    i0 = max(margin, k + 1)
    L = N - margin - 1 - i0
    if L < 1:
        raise ValueError("window too short for the requested margin")
    rep = WindowReport(tol=tol)
    pc = _Pieces(mps, basis)
    Mx = overlap_M_all(pc, L)
    G = gram_blocks(pc, L).reshape(L, m, m, L, m, m)
    sub = sorted({0, m // 2, m - 1}) if modes is None else list(modes)

    def embed(derivs):
        return finite_chain_embed(mps, N, derivs, basis).ravel()

    bras = [embed([(i0, mu)]) for mu in range(m)]
    for x in range(1, L + 1):
        for mu in range(m):
            for nu in range(m):
                ket = embed([(i0, mu), (i0 + x, nu)])
                ov = np.array([np.vdot(b, ket) for b in bras])
                rep.add("M", np.abs(ov - Mx[:, x - 1, mu, nu]).max())
    pairs = {(x, a, b): embed([(i0, a), (i0 + x, b)]) for x in range(1, L + 1) for a in sub for b in sub}
    for (x, a, b), vb in pairs.items():
        for (y, c, e), vk in pairs.items():
            rep.add("G", abs(np.vdot(vb, vk) - G[x - 1, a, b, y - 1, c, e]))

    envs = Environments(mps, model)
    ht = envs.ht
    bq = quadratic_coeffs(mps, basis, model, L, bonds=k, covariant=False)
    left = i0 - 1 - k
    for x in range(0, L + 1):
        bonds = range(left, i0 + k + 1) if x == 0 else range(left, N - 1)
        for nu in range(m):
            ket = finite_chain_embed(mps, N, [(i0 + x, nu)], basis)
            hk = apply_bonds(ket, ht, N, bonds).ravel()
            ov = np.array([np.vdot(b, hk) for b in bras])
            rep.add("eps", np.abs(ov - bq.eps[x][:, nu]).max())
    psi = finite_chain_embed(mps, N, [], basis)
    hpsi = apply_bonds(psi, ht, N, range(left, N - 1)).ravel()
    for x in range(1, L + 1):
        for mu in range(m):
            for nu in range(m):
                val = np.vdot(embed([(i0, mu), (i0 + x, nu)]), hpsi)
                rep.add("delta_prime", abs(val - bq.delta_prime[x - 1][mu, nu]))
    return rep


def delta_reconstruction(gram, bq):
    """Relative residual of ``Gtilde delta = proj delta_prime``.

    Holds for the Gram-corrected pair amplitudes; a corrupted ``delta`` shows
    up as an order-one residual.
    """
    if bq.delta is None:
        raise ValueError("delta has not been computed")
    lhs = gram.apply_gtilde(bq.delta.reshape(-1))
    dp = bq.delta_prime.reshape(-1)
    if gram.dense:
        rhs = gram.proj @ dp
    else:
        rhs = gram.apply_gtilde(gram.apply_pinv(dp))
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(dp), 1e-300))
