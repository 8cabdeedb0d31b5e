"""Quadratic bosonic Hamiltonian of tangent-space fluctuations.

Two independent routes produce the coefficients: direct contraction of the
infinite chain (``quadratic_coeffs``) and the pull-through expansion of the
Hamiltonian density into derivative configurations (``pullthrough_coeffs``).
Mode ``mu`` at site ``x`` is the tangent tensor ``B_mu`` of the basis.
"""

import itertools
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .gram import _Pieces, overlap_M_all
from .linalg import EINSUM_OPT
from .mps import left_step, right_step
from .saddle import Environments

logger = logging.getLogger(__name__)

SADDLE_TOL = 1e-6


class BosonError(ValueError):
    pass


@dataclass
class BosonQuadratic:
    """Coefficients ``eps[x]`` (x = 0..L) and pair terms for x = 1..L.

    ``delta_prime[x - 1]`` holds the pair amplitude with anchors ``0`` and
    ``x``; ``delta`` is the Gram-corrected version once it has been computed.
    """

    E0: float
    eps: np.ndarray  # (L + 1, m, m)
    delta_prime: np.ndarray  # (L, m, m)
    grad: np.ndarray = None
    delta: np.ndarray = None
    warnings: list = field(default_factory=list)

    @property
    def L(self):
        return self.delta_prime.shape[0]

    @property
    def m(self):
        return self.eps.shape[1]

    @property
    def delta_bar(self):
        # annihilation part is not Gram-corrected
        return self.delta_prime.conj()

    def eps_at(self, x):
        """``eps`` at any signed offset, using ``eps(-x) = eps(x)^dag``."""
        if abs(x) > self.L:
            return np.zeros((self.m, self.m), dtype=complex)
        return self.eps[x] if x >= 0 else self.eps[-x].conj().T


def _partial_sum(tm_apply, v, n):
    out = np.zeros_like(v)
    cur = v
    for _ in range(n):
        out = out + cur
        cur = tm_apply(cur)
    return out


def _tails(envs, bonds):
    """Left and right Hamiltonian tails, optionally truncated to ``bonds``."""
    if bonds is None:
        return envs.Lh, envs.Rh
    A = envs.mps.A
    Lh = _partial_sum(lambda e: left_step(e, A, A), envs.h_left, bonds)
    Rh = _partial_sum(lambda e: right_step(e, A, A), envs.h_right, bonds)
    return Lh, Rh


def _direct(mps, basis, envs, L, bonds=None):
    """Raw ``eps`` and ``delta_prime`` by transfer contraction."""
    A, g, B = mps.A, mps.gamma, basis.B
    ht = envs.ht
    Lh, Rh = _tails(envs, bonds)
    Ac = A.conj()
    pc = _Pieces(mps, basis)
    m = B.shape[0]
    eps = np.zeros((L + 1, m, m), dtype=complex)
    dp = np.zeros((L, m, m), dtype=complex)

    # x = 0: left tail, bonds (-1, 0) and (0, 1), right tail
    eps[0] = np.einsum("msab,ak,nskc,cb->mn", B.conj(), Lh, B, g, optimize=EINSUM_OPT)
    eps[0] += np.einsum("uab,msbc,usvw,vak,nwkl,lc->mn", Ac, B.conj(), ht, A, B, g, optimize=EINSUM_OPT)
    eps[0] += np.einsum("msab,tbc,stuv,nuak,vkl,lc->mn", B.conj(), Ac, ht, B, A, g, optimize=EINSUM_OPT)
    eps[0] += np.einsum("mnbk,kb->mn", pc.ell, Rh, optimize=EINSUM_OPT)

    # env after site 0 with bra B_mu and ket A, from operators at or left of 0
    T = np.einsum("msab,ak,skc->mbc", B.conj(), Lh, A, optimize=EINSUM_OPT)
    T += np.einsum("uab,msbc,usvw,vak,wkl->mcl", Ac, B.conj(), ht, A, A, optimize=EINSUM_OPT)
    # env after site 1 from the bond (0, 1), bra (B_mu, A) and ket (A, A)
    U = np.einsum("msab,tbc,stuv,uak,vkl->mcl", B.conj(), Ac, ht, A, A, optimize=EINSUM_OPT)

    # right envs at the bond after site 0 (ket B_nu or bra B_nu at distance)
    r_ket = [pc.r_ba]
    r_bra = [pc.r_ab]
    for _ in range(L):
        r_ket.append(right_step(r_ket[-1], A, A))
        r_bra.append(right_step(r_bra[-1], A, A))

    # bond (0, 1) with the ket derivative at site 1, closed on gamma
    V = np.einsum("msab,tbc,stuv,uak,nvkl,lc->mn", B.conj(), Ac, ht, A, B, g, optimize=EINSUM_OPT)
    # bond (0, 1) with both bra derivatives
    W = np.einsum("msab,ntbc,stuv,uak,vkl,lc->mn", B.conj(), B.conj(), ht, A, A, g, optimize=EINSUM_OPT)
    for x in range(1, L + 1):
        eps[x] = np.einsum("mbk,nkb->mn", T, r_ket[x - 1], optimize=EINSUM_OPT)
        dp[x - 1] = np.einsum("mbk,nkb->mn", T, r_bra[x - 1], optimize=EINSUM_OPT)
        if x == 1:
            eps[x] += V
            dp[x - 1] += W
        else:
            eps[x] += np.einsum("mbk,nkb->mn", U, r_ket[x - 2], optimize=EINSUM_OPT)
            dp[x - 1] += np.einsum("mbk,nkb->mn", U, r_bra[x - 2], optimize=EINSUM_OPT)
    return eps, dp, pc


def quadratic_coeffs(mps, basis, model, L, bonds=None, covariant=True):
    """Quadratic coefficients by direct contraction of the infinite chain.

    Parameters
    ----------
    mps, basis : reference state and its tangent basis.
    model : SpinModel with a two-site density.
    L : largest offset kept.
    bonds : if given, the left and right Hamiltonian tails keep only this
        many bonds beyond the local ones (used to compare with finite windows).
    covariant : subtract the first-tangent-space projection weighted by the
        gradient from the pair terms.
    """
    envs = Environments(mps, model)
    eps, dp, pc = _direct(mps, basis, envs, L, bonds)
    diag_im = np.abs(np.diag(eps[0]).imag).max() if eps.shape[1] else 0.0
    if diag_im > 1e-8:
        raise BosonError(f"imaginary residue {diag_im:.2e} on the on-site diagonal")
    eps[0] = 0.5 * (eps[0] + eps[0].conj().T)
    grad = np.einsum("msab,sab->m", basis.B.conj(), envs.gradient_tensor())
    warnings = []
    gnorm = np.abs(grad).max() if grad.size else 0.0
    if gnorm > SADDLE_TOL:
        msg = f"reference is not a saddle point (gradient {gnorm:.2e})"
        logger.warning(msg)
        warnings.append(msg)
    if covariant:
        dp = covariant_correction(dp, overlap_M_all(pc, L), grad)
    return BosonQuadratic(E0=envs.e0, eps=eps, delta_prime=dp, grad=grad, warnings=warnings)


def covariant_correction(delta_prime, Mx, grad):
    """Remove the first-tangent-space part: ``dp - sum_k conj(M_k) h_k``."""
    return delta_prime - np.einsum("kxmn,k->xmn", Mx.conj(), grad)


def delta_from_prime(gram, bq, tol=1e-10):
    """Gram-corrected pair amplitudes ``delta = pinv(Gtilde) delta_prime``."""
    if gram.L != bq.L or gram.m != bq.m:
        raise BosonError("Gram data and coefficients built on different windows")
    delta = gram.apply_pinv(bq.delta_prime.ravel(), tol=tol).reshape(bq.delta_prime.shape)
    return replace(bq, delta=delta)


# ---------------------------------------------------------------------------
# pull-through expansion
#
# A configuration state is a dict mapping a sorted tuple of derivative sites
# to an array of shape (batch, m, ..., m) holding the mode coefficients.  A
# pending state additionally carries a bond matrix in two trailing axes; it
# sits on the bond to the right of the site being processed.


def _add(store, key, arr):
    if key in store:
        store[key] = store[key] + arr
    else:
        store[key] = arr


def _insert_key(key, site):
    pos = int(np.searchsorted(key, site))
    return key[:pos] + (site,) + key[pos:], pos


class PullThrough:
    """Exact expansion of local operators on derivative configurations."""

    def __init__(self, mps, basis, horizon):
        A, g, B = mps.A, mps.gamma, basis.B
        self.A, self.g, self.B = A, g, B
        self.m, self.D = B.shape[0], A.shape[1]
        self.horizon = int(horizon)
        Bc = B.conj()
        # x-coefficients of a bond matrix placed before A or before B_nu
        self.Xa = np.einsum("ksab,scd,db->kac", Bc, A, g, optimize=EINSUM_OPT)
        self.Xb = np.einsum("ksab,nscd,db->knac", Bc, B, g, optimize=EINSUM_OPT)
        # bond matrix left behind when B_nu is absorbed
        self.Yb = np.einsum("sab,nscd->nacbd", A.conj(), B, optimize=EINSUM_OPT)
        self.tail = 0.0

    def pull_through_step(self, M, derivative=None):
        """One step of the pull-through map for a bond matrix ``M``.

        Returns ``(x, pulled)`` with ``M T = sum_mu x_mu B_mu + A pulled``
        for ``T = A`` (``derivative=None``) or ``T = B_derivative``.
        """
        if derivative is None:
            x = np.einsum("kac,ac->k", self.Xa, M)
            return x, left_step(M, self.A, self.A)
        x = np.einsum("kac,ac->k", self.Xb[:, derivative], M)
        return x, np.einsum("acbd,ac->bd", self.Yb[derivative], M)

    def _pull(self, pend, site, out):
        """Carry pending bond matrices from the bond right of ``site``."""
        eye = np.eye(self.D)
        for j in range(site + 1, site + self.horizon + 1):
            nxt = {}
            for key, P in pend.items():
                c = np.tensordot(P, self.g, axes=([-2, -1], [1, 0]))
                _add(out, key, c)
                Pc = P - c[..., None, None] * eye
                if j in key:
                    a = 1 + key.index(j)
                    Pm = np.moveaxis(Pc, a, -3)  # (..., nu, D, D)
                    x = np.tensordot(Pm, self.Xb, axes=([-3, -2, -1], [1, 2, 3]))
                    _add(out, key, np.moveaxis(x, -1, a))
                    k = np.tensordot(Pm, self.Yb, axes=([-3, -2, -1], [0, 1, 2]))
                    _add(nxt, key[: a - 1] + key[a:], k)
                else:
                    x = np.tensordot(Pc, self.Xa, axes=([-2, -1], [1, 2]))
                    nkey, pos = _insert_key(key, j)
                    _add(out, nkey, np.moveaxis(x, -1, 1 + pos))
                    _add(nxt, key, left_step(Pc, self.A, self.A))
            pend = nxt
        for key, P in pend.items():
            c = np.tensordot(P, self.g, axes=([-2, -1], [1, 0]))
            _add(out, key, c)
            self.tail = max(self.tail, float(np.abs(P - c[..., None, None] * eye).max()))
        return out

    def site_tables(self, O):
        """Contractions of a single-site operator with ``A`` and ``B``."""
        A, B, g = self.A, self.B, self.g
        OA = np.einsum("st,tab->sab", O, A)
        OB = np.einsum("st,ntab->nsab", O, B)
        xa = np.einsum("ksab,sac,cb->k", B.conj(), OA, g, optimize=EINSUM_OPT)
        ka = np.einsum("sab,sac->bc", A.conj(), OA, optimize=EINSUM_OPT)
        xb = np.einsum("ksab,nsac,cb->kn", B.conj(), OB, g, optimize=EINSUM_OPT)
        kb = np.einsum("sab,nsac->nbc", A.conj(), OB, optimize=EINSUM_OPT)
        return xa, ka, xb, kb

    def apply_site(self, state, O, site, tables=None):
        """Expand ``O`` acting on the physical leg of ``site``."""
        xa, ka, xb, kb = self.site_tables(O) if tables is None else tables
        out, pend = {}, {}
        for key, T in state.items():
            if site in key:
                a = 1 + key.index(site)
                Tm = np.moveaxis(T, a, -1)
                _add(out, key, np.moveaxis(Tm @ xb.T, -1, a))
                _add(pend, key[: a - 1] + key[a:], np.tensordot(Tm, kb, axes=([-1], [0])))
            else:
                nkey, pos = _insert_key(key, site)
                _add(out, nkey, np.moveaxis(np.multiply.outer(T, xa), -1, 1 + pos))
                _add(pend, key, np.multiply.outer(T, ka))
        return self._pull(pend, site, out)

    def bond_tables(self, h4):
        """Operator Schmidt decomposition of a two-site term with site tables."""
        d = h4.shape[0]
        mat = h4.transpose(0, 2, 1, 3).reshape(d * d, d * d)
        u, s, vh = np.linalg.svd(mat)
        terms = []
        for k in range(len(s)):
            if s[k] < 1e-14 * max(s[0], 1e-300):
                break
            left = (u[:, k] * s[k]).reshape(d, d)
            right = vh[k].reshape(d, d)
            terms.append((self.site_tables(left), self.site_tables(right)))
        return terms

    def apply_bond(self, state, h4, n, keep=None, tables=None):
        """Expand a two-site operator on sites ``(n, n + 1)``."""
        terms = self.bond_tables(h4) if tables is None else tables
        out = {}
        for tl, tr in terms:
            part = self.apply_site(self.apply_site(state, None, n + 1, tr), None, n, tl)
            for key, T in part.items():
                if keep is None or keep(key):
                    _add(out, key, T)
        return out


def config_overlap(pt, bra_sites, key, T):
    """``<d^(bra_sites) Psi | config>`` for configurations anchored together.

    Returns an array ``(batch, m, ..., m)`` over the bra modes.  Overlaps
    vanish unless both leftmost derivatives sit on the same site.
    """
    A, B, g = pt.A, pt.B, pt.g
    nb = len(bra_sites)
    batch = T.shape[0]
    if not key or not bra_sites or key[0] != bra_sites[0]:
        return np.zeros((batch,) + (pt.m,) * nb, dtype=complex)
    # env layout: (batch, bra modes..., remaining ket coefficients..., D, D)
    env = T[..., None, None] * np.eye(pt.D)
    nbra = 0
    ket_left = list(key)
    for j in range(key[0], max(max(bra_sites), key[-1]) + 1):
        if j in ket_left:
            # contract the first remaining ket axis with B
            ax = 1 + nbra
            Em = np.moveaxis(env, ax, -3)
            if j in bra_sites:
                new = np.einsum("...nak,msab,nskc->...mbc", Em, B.conj(), B, optimize=EINSUM_OPT)
                env = np.moveaxis(new, -3, 1 + nbra)
                nbra += 1
            else:
                env = np.einsum("...nak,sab,nskc->...bc", Em, A.conj(), B, optimize=EINSUM_OPT)
            ket_left.remove(j)
        else:
            if j in bra_sites:
                new = np.einsum("...ak,msab,skc->...mbc", env, B.conj(), A, optimize=EINSUM_OPT)
                env = np.moveaxis(new, -3, 1 + nbra)
                nbra += 1
            else:
                env = left_step(env, A, A)
    return np.tensordot(env, g, axes=([-2, -1], [1, 0]))


def operator_expand(mps, basis, h, horizon, pt=None):
    """Tangent coefficients of a centred single-site operator.

    Row ``i`` of the result is ``x^(i)``: ``h`` on site 0 acting on the
    reference equals ``sum_i sum_mu x^(i)_mu |d_mu^(i) Psi>`` up to the part
    still pending after the last row.  Rows stop once they drop below 1e-12.
    """
    pt = PullThrough(mps, basis, horizon) if pt is None else pt
    h = np.asarray(h, dtype=complex)
    xa, ka, _, _ = pt.site_tables(h)
    shift = np.trace(ka @ pt.g)
    if abs(shift) > 1e-10:
        raise BosonError(f"operator is not centred (expectation {shift.real:.3e})")
    rows = [xa]
    K = ka
    for _ in range(horizon):
        if np.abs(rows[-1]).max(initial=0.0) < 1e-12 and np.abs(K).max(initial=0.0) < 1e-12:
            break
        x, K = pt.pull_through_step(K)
        rows.append(x)
    tail = float(np.linalg.norm(K))
    if tail > 1e-8:
        warnings.warn(f"operator expansion truncated at horizon {horizon} with tail {tail:.1e}",
                      RuntimeWarning, stacklevel=2)
    return np.array(rows)


def _spectator_embed(coef, C, A, S, K, m):
    """Lift a monomial block ``c(C, A)`` to the output/input sites ``(S, K)``.

    Sites of ``K`` outside ``A`` are spectators: their mode passes through.
    """
    out_idx = dict(zip(S, "abcdefgh"))
    in_idx = dict(zip(K, "ijklmnop"))
    spect = [site for site in K if site not in A]
    for site in spect:
        in_idx[site] = out_idx[site].upper()
    src = "".join(out_idx[c] for c in C) + "".join(in_idx[a] for a in A)
    dst = "".join(out_idx[c] for c in S) + "".join(in_idx[k] for k in K)
    specs = [src] + [out_idx[site] + in_idx[site] for site in spect]
    return np.einsum(",".join(specs) + "->" + dst, coef, *([np.eye(m)] * len(spect)))


@dataclass
class BosonPolynomial:
    """Normal-ordered boson polynomial of a single-site operator on site 0.

    ``blocks[(C, A)]`` holds the coefficients of ``a^dag(C) a(A)``, an array
    with one mode axis per creation site followed by one per annihilation
    site.  Creation on an occupied site is projected out.
    """

    m: int
    degree: int
    horizon: int
    blocks: dict
    tail: float = 0.0

    def monomials(self, tol=1e-14):
        """Ordered list of ``(creators, annihilators, coefficient)``.

        Creators and annihilators are lists of ``(site, mode)`` pairs.
        """
        out = []
        for (C, A) in sorted(self.blocks, key=lambda k: (len(k[0]) + len(k[1]), k)):
            arr = self.blocks[(C, A)]
            for idx in zip(*np.nonzero(np.abs(arr) > tol)):
                cre = list(zip(C, idx[: len(C)]))
                ann = list(zip(A, idx[len(C):]))
                out.append((cre, ann, complex(arr[idx])))
        return out

    def truncate(self, degree):
        blocks = {k: v for k, v in self.blocks.items() if len(k[0]) + len(k[1]) <= degree}
        return replace(self, degree=degree, blocks=blocks)

    def shifted(self, n):
        blocks = {(tuple(c + n for c in C), tuple(a + n for a in A)): v for (C, A), v in self.blocks.items()}
        return replace(self, blocks=blocks)

    @property
    def vacuum_expectation(self):
        return complex(self.blocks.get(((), ()), 0.0))

    def apply(self, state):
        """Action on a configuration state (same layout as ``PullThrough``)."""
        out = {}
        for key, T in state.items():
            kset = set(key)
            for (C, A), coef in self.blocks.items():
                if not set(A) <= kset:
                    continue
                rest = tuple(s for s in key if s not in A)
                if set(C) & set(rest):
                    continue
                S = tuple(sorted(rest + C))
                # contract the annihilated axes of T, then order the axes by site
                t_ax = [1 + key.index(a) for a in A]
                c_ax = list(range(len(C), len(C) + len(A)))
                r = np.tensordot(T, coef, axes=(t_ax, c_ax)) if A else np.multiply.outer(T, coef)
                # axes now: batch, rest sites (in key order), C sites
                labels = list(rest) + list(C)
                perm = [0] + [1 + labels.index(site) for site in S]
                _add(out, S, r.transpose(perm))
        return out


def boson_map_local(mps, basis, h, horizon, degree=2, pt=None):
    """Boson polynomial of a centred single-site operator on site 0.

    Coefficients are read off from the exact pull-through action on states
    with up to two derivatives, removing spectator contributions of lower
    monomials.  Terms with more than ``degree`` operators are dropped.
    """
    pt = PullThrough(mps, basis, horizon) if pt is None else pt
    h = np.asarray(h, dtype=complex)
    m = pt.m
    tables = pt.site_tables(h)
    if abs(np.trace(tables[1] @ pt.g)) > 1e-10:
        raise BosonError("operator is not centred")
    blocks = {}
    max_ann = min(2, degree)
    inputs = [()]
    sites = range(0, horizon + 1)
    if max_ann >= 1:
        inputs += [(j,) for j in sites]
    if max_ann >= 2:
        inputs += list(itertools.combinations(sites, 2))
    pt.tail = 0.0
    for K in inputs:
        T = np.eye(m ** len(K), dtype=complex).reshape((m ** len(K),) + (m,) * len(K)) if K else np.ones(1, dtype=complex)
        result = pt.apply_site({K: T}, None, 0, tables)
        exact = {}
        for S, arr in result.items():
            # batch axis holds the input modes: move them behind the output modes
            exact[S] = np.moveaxis(arr.reshape((m,) * len(K) + arr.shape[1:]), list(range(len(K))),
                                   list(range(len(S), len(S) + len(K)))) if K else arr[0]
        # what the monomials already found produce on this input, with the
        # untouched derivatives of K passing through as spectators
        lower = {}
        for (C, A), blk in blocks.items():
            if len(A) >= len(K) or not set(A) <= set(K):
                continue
            spect = tuple(k for k in K if k not in A)
            if set(C) & set(spect):
                continue
            S = tuple(sorted(spect + C))
            _add(lower, S, _spectator_embed(blk, C, A, S, K, m))
        for S in set(exact) | set(lower):
            coef = exact.get(S, 0.0) - lower.get(S, 0.0)
            if len(S) + len(K) <= degree and np.abs(coef).max(initial=0.0) > 1e-14:
                blocks[(S, K)] = np.asarray(coef, dtype=complex)
    if pt.tail > 1e-8:
        warnings.warn(f"boson map truncated at horizon {horizon} with tail {pt.tail:.1e}",
                      RuntimeWarning, stacklevel=2)
    return BosonPolynomial(m=m, degree=degree, horizon=horizon, blocks=blocks, tail=pt.tail)


def poly_matrix_element(pt, poly, bra_sites, ket_key):
    """Physical overlaps ``<d^(bra) Psi| h |d^(ket) Psi>`` from a polynomial.

    Returns an array over bra modes then ket modes.
    """
    m = pt.m
    n = len(ket_key)
    T = np.eye(m ** n, dtype=complex).reshape((m ** n,) + (m,) * n) if n else np.ones(1, dtype=complex)
    total = np.zeros((m ** n,) + (m,) * len(bra_sites), dtype=complex)
    for key, arr in poly.apply({tuple(ket_key): T}).items():
        if not key:
            continue
        total += config_overlap(pt, tuple(bra_sites), key, arr)
    return np.moveaxis(total.reshape((m,) * n + (m,) * len(bra_sites)), list(range(n)),
                       list(range(len(bra_sites), len(bra_sites) + n)))


def eps_from_maps(pt, pairs, L, shift=0.0):
    """Hopping blocks of ``sum_n sum_k left_k(n) right_k(n + 1) - shift``.

    ``pairs`` lists ``(left, right)`` boson polynomials of single-site
    operators, composed by acting with the right factor first.
    """
    m, H = pt.m, pt.horizon
    eps = np.zeros((L + 1, m, m), dtype=complex)
    ident = np.eye(m, dtype=complex)
    for y in range(-H - 1, L + H + 2):
        state = {(y,): ident}
        out = {(y,): -shift * ident}
        for left, right in pairs:
            for key, T in left.apply(right.shifted(1).apply(state)).items():
                _add(out, key, T)
        for key, T in out.items():
            if not key:
                continue
            x = y - key[0]
            if 0 <= x <= L:
                eps[x] += config_overlap(pt, (0,), tuple(s - key[0] for s in key), T).T
    return eps


def default_horizon(xi, L):
    """Pull-through horizon: at least ``L`` and long enough for a 1e-6 tail."""
    if not np.isfinite(xi):
        return L
    return max(L, int(np.ceil(13 * xi)))


def pullthrough_coeffs(mps, basis, model, L, horizon=None, covariant=True):
    """Quadratic coefficients from the pull-through expansion.

    The Hamiltonian density is expanded on derivative configurations and the
    coefficients are read off with exact configuration overlaps.
    """
    if horizon is None:
        horizon = default_horizon(mps.xi, L)
    envs = Environments(mps, model)
    ht = envs.ht
    pt = PullThrough(mps, basis, horizon)
    tables = pt.bond_tables(ht)
    m = pt.m

    # vacuum: h on (0, 1) acting on Psi, every configuration shifted so that
    # its leftmost derivative sits on site 0 (sum over translations)
    vac = {}
    for key, T in pt.apply_bond({(): np.ones(1, dtype=complex)}, ht, 0, tables=tables).items():
        if key:
            _add(vac, tuple(s - key[0] for s in key), T)
    grad = sum(config_overlap(pt, (0,), k, T)[0] for k, T in vac.items())
    dp = np.zeros((L, m, m), dtype=complex)
    for x in range(1, L + 1):
        for k, T in vac.items():
            dp[x - 1] += config_overlap(pt, (0, x), k, T)[0]

    # single excitations: by translation invariance only the bond (0, 1) is
    # needed; a configuration anchored at site a contributes to the bra
    # derivative on a, i.e. to the offset y - a
    eps = np.zeros((L + 1, m, m), dtype=complex)
    ident = np.eye(m, dtype=complex)
    for y in range(-horizon - 1, L + horizon + 2):
        for key, T in pt.apply_bond({(y,): ident}, ht, 0, tables=tables).items():
            if not key:
                continue
            x = y - key[0]
            if 0 <= x <= L:
                shifted = tuple(s - key[0] for s in key)
                eps[x] += config_overlap(pt, (0,), shifted, T).T
    if pt.tail > 1e-8:
        logger.warning("pull-through horizon %d leaves a tail of %.1e", horizon, pt.tail)
    eps[0] = 0.5 * (eps[0] + eps[0].conj().T)
    if covariant:
        dp = covariant_correction(dp, overlap_M_all(_Pieces(mps, basis), L), grad)
    return BosonQuadratic(E0=envs.e0, eps=eps, delta_prime=dp, grad=grad)


@dataclass
class CrossCheck:
    eps_dev: np.ndarray  # per offset
    delta_dev: np.ndarray
    tol: float

    @property
    def max_dev(self):
        return float(max(self.eps_dev.max(initial=0.0), self.delta_dev.max(initial=0.0)))

    @property
    def passed(self):
        return self.max_dev < self.tol


def cross_check(bq_contraction, bq_pullthrough, tol=1e-6):
    a, b = bq_contraction, bq_pullthrough
    if a.L != b.L or a.m != b.m:
        raise BosonError("coefficient sets have different shapes")
    eps_dev = np.abs(a.eps - b.eps).reshape(a.L + 1, -1).max(axis=1) if a.m else np.zeros(a.L + 1)
    delta_dev = np.abs(a.delta_prime - b.delta_prime).reshape(a.L, -1).max(axis=1) if a.m else np.zeros(a.L)
    return CrossCheck(eps_dev=eps_dev, delta_dev=delta_dev, tol=tol)
