"""Overlaps of the first and second tangent spaces and the anchored Gram matrix.

Pair states are anchored: the left derivative sits on site 0 and the right
one on site ``x = 1..L``.  Pairs with different anchors are exactly
orthogonal in the left-canonical gauge, so the anchored block is the whole
second-tangent Gram matrix per anchor.  Composite indices are ordered
``(x - 1, mu, nu)``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .linalg import EINSUM_OPT, RANK_TOL, hermitian_eig
from .mps import left_step, right_step

DENSE_GRAM_MAX = 1024


class GramError(ValueError):
    pass


class _Pieces:
    """Reusable single-site contractions for a state and its tangent basis."""

    def __init__(self, mps, basis):
        A, g, B = mps.A, mps.gamma, basis.B
        self.A, self.g, self.B = A, g, B
        self.m = B.shape[0]
        # left env after site 0, bra B_mu ket B_alpha: (mu, alpha, bra, ket)
        self.ell = np.einsum("msab,nsac->mnbc", B.conj(), B, optimize=EINSUM_OPT)
        # right envs at site y closing on gamma, indexed (ket, bra)
        self.r_ba = np.einsum("nskc,cd,sbd->nkb", B, g, A.conj(), optimize=EINSUM_OPT)  # ket B, bra A
        self.r_ab = np.einsum("skc,cd,nsbd->nkb", A, g, B.conj(), optimize=EINSUM_OPT)  # ket A, bra B
        self.r_bb = np.einsum("nskc,cd,msbd->nmkb", B, g, B.conj(), optimize=EINSUM_OPT)  # ket B_n, bra B_m

    def ell_powers(self, n):
        """``[E^k(ell) for k in range(n)]``."""
        out = [self.ell]
        for _ in range(n - 1):
            out.append(left_step(out[-1], self.A, self.A))
        return out

    def rba_powers(self, n):
        out = [self.r_ba]
        for _ in range(n - 1):
            out.append(right_step(out[-1], self.A, self.A))
        return out


def overlap_M(mps, basis, x, pieces=None):
    """``M[kappa, mu, nu] = <d_kappa^(0) Psi | d_mu^(0) d_nu^(x) Psi>``."""
    if x < 1:
        raise GramError("offset must be at least 1")
    pc = _Pieces(mps, basis) if pieces is None else pieces
    env = pc.ell_powers(x)[-1]
    return np.einsum("kmbc,ncb->kmn", env, pc.r_ba, optimize=EINSUM_OPT)


def overlap_M_all(pc, L):
    envs = pc.ell_powers(L)
    return np.stack([np.einsum("kmbc,ncb->kmn", e, pc.r_ba, optimize=EINSUM_OPT) for e in envs], axis=1)


def gram_blocks(pc, L):
    """Dense anchored Gram matrix ``G`` of shape ``(L m^2, L m^2)``."""
    m, A, B = pc.m, pc.A, pc.B
    ells = pc.ell_powers(L)
    zs = pc.rba_powers(L)
    G = np.zeros((L, m, m, L, m, m), dtype=complex)
    for x in range(1, L + 1):
        P = ells[x - 1]  # (mu, alpha, b, k)
        G[x - 1, :, :, x - 1] = _diag_block(P, pc.r_bb)
        # bra B_nu at x, ket A: (mu, alpha, nu, b, k)
        P2 = np.einsum("nsdb,madk,skc->manbc", B.conj(), P, A, optimize=EINSUM_OPT)
        for y in range(x + 1, L + 1):
            blk = np.einsum("manbk,pkb->mnap", P2, zs[y - x - 1], optimize=EINSUM_OPT)
            G[x - 1, :, :, y - 1] = blk
            G[y - 1, :, :, x - 1] = blk.conj().transpose(2, 3, 0, 1)
    return G.reshape(L * m * m, L * m * m)


def _diag_block(P, r_bb):
    # G[mu, nu, alpha, beta] = sum_{b,k} P[mu, alpha, b, k] r_bb[beta, nu, k, b]
    return np.einsum("mabk,pnkb->mnap", P, r_bb, optimize=EINSUM_OPT)


@dataclass
class GramData:
    L: int
    m: int
    Mx: np.ndarray  # (m, L, m, m): M[kappa, x-1, mu, nu]
    G: np.ndarray = None
    Gtilde: np.ndarray = None
    pinv: np.ndarray = None
    proj: np.ndarray = None
    null_dim: int = None
    eigvals: np.ndarray = None
    operator: object = None  # matrix-free Gtilde when the dense matrix is too large
    cut: float = 0.0

    @property
    def dim(self):
        return self.L * self.m * self.m

    @property
    def g(self):
        return self.Gtilde - np.eye(self.dim)

    @property
    def dense(self):
        return self.Gtilde is not None

    def apply_gtilde(self, c):
        c = np.asarray(c).reshape(self.dim)
        if self.dense:
            return self.Gtilde @ c
        return self.operator.matvec(c)

    def apply_pinv(self, v, tol=1e-10):
        v = np.asarray(v).reshape(self.dim)
        if self.dense:
            return self.pinv @ v
        return self.operator.solve(v, self.cut, tol=tol)


def gram_G(mps, basis, L, pieces=None):
    if L < 1:
        raise GramError("window length must be positive")
    pc = _Pieces(mps, basis) if pieces is None else pieces
    return gram_blocks(pc, L)


def gram_tilde(G, Mx, check=True):
    """Covariant Gram matrix ``G - M^dag M``."""
    m = Mx.shape[0]
    Ms = Mx.reshape(m, -1)
    Gt = G - Ms.conj().T @ Ms
    Gt = 0.5 * (Gt + Gt.conj().T)
    if check:
        w = np.linalg.eigvalsh(Gt)
        # round-off scales with the largest overlap
        if w.min() < -1e-8 * max(1.0, abs(w).max()):
            raise GramError(f"non-PSD Gram matrix (min eigenvalue {w.min():.3e})")
    return Gt


def pinv_project(Gtilde, rel_tol=RANK_TOL, floor=0.0):
    """Pseudo-inverse and range projector of a Hermitian PSD matrix.

    Eigenvalues at or below ``max(rel_tol * max_eig, floor)`` count as null.
    Returns ``(pinv, proj, null_dim, eigenvalues)``.
    """
    w, v = hermitian_eig(Gtilde, tol=1e-10)
    n = Gtilde.shape[0]
    if n == 0 or w.max() <= 0:
        return np.zeros_like(Gtilde), np.zeros_like(Gtilde), n, w
    keep = w > max(rel_tol * w.max(), floor)
    vk = v[:, keep]
    pinv = (vk / w[keep]) @ vk.conj().T
    proj = vk @ vk.conj().T
    return pinv, proj, int((~keep).sum()), w


def truncation_floor(xi, L):
    """Scale below which a window-``L`` Gram eigenvalue is indistinguishable
    from an exact null direction of the infinite chain."""
    if not np.isfinite(xi) or xi <= 0:
        return 0.0
    return float(np.exp(-L / xi))


def lanczos_filter_apply(matvec, v, cut, tol=1e-10, maxiter=600, check_every=10):
    """``f(G) v`` with ``f(t) = 1/t`` above ``cut`` and zero below.

    Lanczos with full reorthogonalisation; the Krylov approximation is
    accepted once successive estimates agree to ``tol``.
    """
    v = np.asarray(v, dtype=complex)
    beta0 = np.linalg.norm(v)
    if beta0 == 0:
        return np.zeros_like(v)
    n = v.size
    maxiter = min(maxiter, n)
    Q = np.zeros((maxiter + 1, n), dtype=complex)
    Q[0] = v / beta0
    alpha, beta = [], []
    prev = None

    def estimate(k):
        T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
        th, Y = np.linalg.eigh(T)
        f = np.where(th > cut, 1.0 / np.where(th > cut, th, 1.0), 0.0)
        coef = Y @ (f * Y[0].conj())
        return beta0 * (coef @ Q[:k])

    for k in range(maxiter):
        w = matvec(Q[k])
        a = np.vdot(Q[k], w).real
        w = w - a * Q[k] - (beta[-1] * Q[k - 1] if k else 0)
        # full reorthogonalisation, twice for stability
        for _ in range(2):
            w = w - Q[: k + 1].T @ (Q[: k + 1].conj() @ w)
        alpha.append(a)
        b = np.linalg.norm(w)
        done = b < 1e-13 * max(1.0, abs(a))
        if done or (k + 1) % check_every == 0 or k + 1 == maxiter:
            x = estimate(k + 1)
            if done:
                return x
            if prev is not None and np.linalg.norm(x - prev) <= tol * max(np.linalg.norm(x), 1e-300):
                return x
            prev = x
        beta.append(b)
        Q[k + 1] = w / b
    raise GramError(f"Lanczos filter did not converge in {maxiter} steps")


class GramOperator:
    """Matrix-free covariant Gram matrix for windows too large to store."""

    def __init__(self, pc, L, Mx):
        self.pc, self.L, self.m = pc, L, pc.m
        self.Mx = Mx.reshape(pc.m, -1)
        A, B = pc.A, pc.B
        zs = pc.rba_powers(L)
        # W[n][beta, nu] = right env after the bra-derivative site
        self.W = [np.einsum("skc,pcd,nsbd->pnkb", A, z, B.conj(), optimize=EINSUM_OPT) for z in zs]
        self.dim = L * pc.m * pc.m

    def matvec_G(self, c):
        pc, L, m = self.pc, self.L, self.m
        A, B = pc.A, pc.B
        c = c.reshape(L, m, m)
        out = np.zeros((L, m, m), dtype=complex)
        lam = np.einsum("mabk,yap->mypbk", pc.ell, c, optimize=EINSUM_OPT)  # (mu, y, beta, b, k)
        D = A.shape[1]
        omega = np.zeros((m, D, D), dtype=complex)
        for j in range(1, L + 1):
            jj = j - 1
            out[jj] += np.einsum("mpbk,pnkb->mn", lam[:, jj], pc.r_bb, optimize=EINSUM_OPT)
            if j < L:
                wstack = np.stack(self.W[: L - j])  # offsets y - j - 1
                out[jj] += np.einsum("mypbk,ypnkb->mn", lam[:, jj + 1:], wstack, optimize=EINSUM_OPT)
            out[jj] += np.einsum("mbk,nkb->mn", omega, pc.r_ab, optimize=EINSUM_OPT)
            omega = left_step(omega, A, A) + np.einsum(
                "sab,mpak,pskc->mbc", A.conj(), lam[:, jj], B, optimize=EINSUM_OPT)
            lam[:, jj + 1:] = left_step(lam[:, jj + 1:], A, A)
        return out.ravel()

    def matvec(self, c):
        c = np.asarray(c, dtype=complex).ravel()
        return self.matvec_G(c) - self.Mx.conj().T @ (self.Mx @ c)

    def linear_operator(self):
        return spla.LinearOperator((self.dim, self.dim), matvec=self.matvec, dtype=complex)

    def solve(self, v, cut, tol=1e-10):
        """Pseudo-inverse applied to ``v`` with eigenvalues below ``cut`` dropped."""
        return lanczos_filter_apply(self.matvec, v, cut, tol=tol)


def build_gram(mps, basis, L, rel_tol=RANK_TOL, floor=None, dense=None):
    """Anchored Gram data for a window of ``L`` offsets.

    ``floor`` defaults to the window truncation scale ``exp(-L / xi)``; pass
    ``0.0`` to keep every eigenvalue above the relative tolerance.
    """
    if L < 1:
        raise GramError("window length must be positive")
    pc = _Pieces(mps, basis)
    Mx = overlap_M_all(pc, L)
    if floor is None:
        floor = truncation_floor(mps.xi, L)
    dim = L * pc.m ** 2
    if dense is None:
        dense = dim <= DENSE_GRAM_MAX
    if not dense:
        op = GramOperator(pc, L, Mx)
        # crude bound on the largest eigenvalue for the relative cut
        vmax = float(spla.eigsh(op.linear_operator(), k=1, which="LA", return_eigenvectors=False,
                                tol=1e-3)[0].real) if dim > 2 else 1.0
        return GramData(L=L, m=pc.m, Mx=Mx, operator=op, cut=max(rel_tol * vmax, floor))
    G = gram_blocks(pc, L)
    Gt = gram_tilde(G, Mx)
    pinv, proj, null_dim, w = pinv_project(Gt, rel_tol, floor)
    cut = max(rel_tol * (w.max() if w.size else 0.0), floor)
    return GramData(L=L, m=pc.m, Mx=Mx, G=G, Gtilde=Gt, pinv=pinv, proj=proj, null_dim=null_dim,
                    eigvals=w, cut=cut)


def default_window(xi):
    return max(8, int(np.ceil(8 * xi)))


@dataclass
class AkltGramAnalytics:
    lam: float
    L_mat: np.ndarray
    J: np.ndarray
    M1: np.ndarray
    kappas: np.ndarray
    eigen_families: list  # (y, E_plus, E_minus)
    multiplicities: dict  # (y, branch) -> dimension of the solution space
    residuals: dict  # (y, branch) -> worst recurrence residual


def _recurrence_mats(lam, L_mat, J):
    n = L_mat.shape[0]
    eye = np.eye(n)
    P = J - lam * L_mat + lam * eye
    Q = J + J.conj().T + (1 + lam) * (eye - L_mat)
    R = J.conj().T - lam * L_mat + lam * eye

    def A(j, E):
        return lam ** j * P + (E - 1) * eye

    def B(j, E):
        return lam ** j * Q + (1 + lam) * (E - 1) * eye

    def C(j, E):
        return lam ** (j - 1) * R + lam * (E - 1) * eye

    return P, Q, R, A, B, C


def _null_space(m, rcond):
    u, s, vh = np.linalg.svd(m)
    tol = rcond * max(s.max(), 1.0)
    rank = int((s > tol).sum())
    return vh[rank:].conj().T


def recurrence_solutions(lam, L_mat, J, y, kappa, s_max=20, j_extra=30):
    """Solve the second-order recurrence for vectors starting on site ``y``.

    The starting vector lies in the ``kappa`` eigenspace of ``J - lam L`` and
    the tail is ``v_j = sum_s lam^(s (j - y)) alpha_s``.  The tail
    coefficients follow from ``alpha_1`` by the order-by-order recursion;
    ``alpha_1`` is fixed by the boundary equation together with a vanishing
    last coefficient.  Returns ``(E, dimension, worst relative residual)``.
    """
    n = L_mat.shape[0]
    eye = np.eye(n)
    P, Q, R, A, B, C = _recurrence_mats(lam, L_mat, J)
    E = 1 - lam ** (y - 2) * (kappa + lam)
    N = _null_space(J - lam * L_mat - kappa * eye, 1e-9)
    T = [np.zeros((n, n), dtype=complex), eye.astype(complex)]
    for t in range(2, s_max + 1):
        num = lam ** y * (P * lam ** (2 * t - 2) - Q * lam ** (t - 1) + R / lam)
        T.append(-num @ T[-1] / ((E - 1) * (lam ** t - 1) * (lam ** t - lam)))
    S1 = sum(lam ** s * T[s] for s in range(s_max + 1))
    last = T[-1] / max(1.0, np.linalg.norm(T[-1]))
    system = np.vstack([
        np.hstack([A(y - 1, E) @ S1, -B(y - 1, E) @ N]),
        np.hstack([last, np.zeros((n, N.shape[1]))]),
    ])
    sols = _null_space(system, 1e-9)
    worst = 0.0
    dim = 0
    for z in sols.T:
        a1, v = z[:n], N @ z[n:]
        nv = np.linalg.norm(v)
        if nv < 1e-8:
            continue
        dim += 1
        tail = [T[s] @ a1 for s in range(s_max + 1)]

        def vec(j):
            if j < y:
                return np.zeros(n, dtype=complex)
            if j == y:
                return v
            return sum(lam ** (s * (j - y)) * tail[s] for s in range(s_max + 1))

        for j in range(y - 2, y + j_extra):
            r = A(j, E) @ vec(j + 2) - B(j, E) @ vec(j + 1) + C(j, E) @ vec(j)
            worst = max(worst, np.linalg.norm(r) / nv)
    return E, dim, worst


def aklt_analytic_spectrum(y_max=4, mps=None, tol=1e-8):
    """Closed-form Gram spectrum of the AKLT state, checked numerically."""
    from .models import aklt_state
    from .mps import tangent_basis, transfer_spectrum

    if y_max < 3:
        raise GramError("y_max must be at least 3")
    mps = aklt_state() if mps is None else mps
    basis = tangent_basis(mps)
    lam = float(np.real(transfer_spectrum(mps, 2)[1]))
    pc = _Pieces(mps, basis)
    n = pc.m ** 2
    G = gram_blocks(pc, 2)
    L_mat, J = G[:n, :n], G[:n, n:]
    M1 = overlap_M_all(pc, 1)[:, 0].reshape(pc.m, n)
    kappas = np.linalg.eigvals(J - lam * L_mat)
    expected = np.array([0.0, 1 - lam])
    dist = np.abs(kappas[:, None] - expected[None, :]).min(axis=1)
    if dist.max() > 1e-9:
        raise GramError(f"eigenvalues of J - lam L off the expected pair by {dist.max():.2e}")
    families, mult, resid = [], {}, {}
    for y in range(1, y_max + 1):
        es = {}
        for branch, kappa in (("plus", 1 - lam), ("minus", 0.0)):
            E, dim, worst = recurrence_solutions(lam, L_mat, J, y, kappa)
            if worst > tol or dim == 0:
                raise GramError(f"recurrence residual {worst:.2e} at y={y}, branch {branch}")
            es[branch] = E
            mult[(y, branch)] = dim
            resid[(y, branch)] = worst
        families.append((y, es["plus"], es["minus"]))
    return AkltGramAnalytics(lam=lam, L_mat=L_mat, J=J, M1=M1, kappas=kappas,
                             eigen_families=families, multiplicities=mult, residuals=resid)


def spectrum_table(analytics, eigvals):
    """Rows ``(y, branch, E_analytic, E_numeric, abs_err)`` matching each
    analytic eigenvalue to the closest numerical one."""
    w = np.asarray(eigvals)
    rows = []
    for y, ep, em in analytics.eigen_families:
        for branch, e in (("plus", ep), ("minus", em)):
            k = int(np.argmin(np.abs(w - e)))
            rows.append((y, branch, e, float(w[k]), float(abs(w[k] - e))))
    return rows
