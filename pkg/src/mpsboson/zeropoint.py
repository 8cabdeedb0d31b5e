"""Momentum-space Bogoliubov problem and the zero-point energy correction.

Fourier convention: ``a^dag(i) = N^{-1/2} sum_k exp(-i k i) a^dag(k)``, so
that ``eps_k = sum_x eps(x) exp(i k x)``, ``delta_k = sum_{x>0} delta(x)
exp(i k x)`` and ``delta_bar_k = sum_{x>0} delta_bar(x) exp(-i k x)``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .boson import delta_from_prime, quadratic_coeffs
from .gram import build_gram, default_window
from .mps import tangent_basis
from .saddle import find_saddle

logger = logging.getLogger(__name__)

IMAG_TOL = 1e-6
PAIRING_TOL = 1e-6


class BogoliubovError(ValueError):
    pass


@dataclass
class Dispersion:
    kgrid: np.ndarray
    omega: np.ndarray  # (N_k, m) positive branch, ascending per k
    omega_imag: np.ndarray
    max_imag: float
    pairing_error: float
    efluct: float
    E0: float

    @property
    def e_total(self):
        return self.E0 + self.efluct

    @property
    def stable(self):
        return self.max_imag < IMAG_TOL

    @property
    def flags(self):
        return "" if self.stable else "unstable"


def fourier_blocks(bq, k, delta=None):
    """``(eps_k, delta_k, delta_bar_k)`` at momentum ``k``.

    ``delta`` defaults to the corrected pair amplitudes when present.
    """
    if delta is None:
        delta = bq.delta if bq.delta is not None else bq.delta_prime
    L = bq.L
    x = np.arange(1, L + 1)
    ph = np.exp(1j * k * x)
    eps_k = bq.eps[0] + np.einsum("x,xmn->mn", ph, bq.eps[1:])
    eps_k = eps_k + np.einsum("x,xnm->mn", ph.conj(), bq.eps[1:].conj())
    eps_k = 0.5 * (eps_k + eps_k.conj().T)
    delta_k = np.einsum("x,xmn->mn", ph, delta)
    delta_bar_k = np.einsum("x,xmn->mn", ph.conj(), bq.delta_bar)
    return eps_k, delta_k, delta_bar_k


def bogoliubov_matrix(eps_k, eps_minus_k, delta_k, delta_minus_k, dbar_k, dbar_minus_k):
    """Dynamical matrix acting on ``(a(k), a^dag(-k))``.

    The pair terms are symmetrised: ``S(k) = (delta_k + delta_{-k}^T) / 2``.
    """
    s = 0.5 * (delta_k + delta_minus_k.T)
    sbar_minus = 0.5 * (dbar_minus_k + dbar_k.T)
    return np.block([[eps_k, 2 * s], [-2 * sbar_minus, -eps_minus_k.T]])


def bogoliubov_spectrum(eps_k, eps_minus_k, delta_k, delta_bar_k, delta_minus_k=None, delta_bar_minus_k=None):
    """Positive branch of the Bogoliubov spectrum at one momentum.

    With ``k = -k`` (single-momentum problems) the minus-momentum blocks
    default to the plus ones.  Returns ``(omega, max_imag, eigenvalues)``
    where ``omega`` holds the ``m`` eigenvalues of largest real part.
    """
    dm = delta_k if delta_minus_k is None else delta_minus_k
    dbm = delta_bar_k if delta_bar_minus_k is None else delta_bar_minus_k
    K = bogoliubov_matrix(eps_k, eps_minus_k, delta_k, dm, delta_bar_k, dbm)
    w = np.linalg.eigvals(K)
    w = w[np.argsort(w.real)]
    m = eps_k.shape[0]
    pos = w[m:]
    return pos.real, float(np.abs(w.imag).max()) if w.size else 0.0, w


def zero_point_energy(bq, N_k=512, delta=None, check_pairing=True):
    """Gaussian zero-point correction on a uniform momentum grid."""
    if N_k < 2 or N_k % 2:
        raise BogoliubovError("N_k must be an even integer >= 2")
    m = bq.m
    ks = 2 * np.pi * np.arange(N_k) / N_k
    blocks = [fourier_blocks(bq, k, delta) for k in ks]
    omega = np.zeros((N_k, m))
    omega_im = np.zeros((N_k, m))
    full = np.zeros((N_k, 2 * m), dtype=complex)
    traces = np.zeros(N_k)
    max_imag = 0.0
    for i in range(N_k):
        j = (-i) % N_k
        e, dk, dbk = blocks[i]
        em, dmk, dbmk = blocks[j]
        pos, mi, w = bogoliubov_spectrum(e, em, dk, dbk, dmk, dbmk)
        full[i] = w
        omega[i] = pos
        omega_im[i] = w[m:].imag
        max_imag = max(max_imag, mi)
        traces[i] = np.trace(e).real
    # spectrum at k is {omega(k)} and {-omega(-k)}
    pair_err = 0.0
    for i in range(N_k):
        j = (-i) % N_k
        neg = np.sort(-full[i][:m].real)
        pair_err = max(pair_err, np.abs(neg - np.sort(full[j][m:].real)).max() if m else 0.0)
    if check_pairing and pair_err > PAIRING_TOL and max_imag < IMAG_TOL:
        raise BogoliubovError(f"Bogoliubov spectrum is not +/- paired (error {pair_err:.2e})")
    if max_imag >= IMAG_TOL:
        logger.warning("complex Bogoliubov frequencies (max imaginary part %.2e)", max_imag)
    efluct = float(np.mean(0.5 * (omega.sum(axis=1) - traces)))
    return Dispersion(kgrid=ks, omega=omega, omega_imag=omega_im, max_imag=max_imag,
                      pairing_error=pair_err, efluct=efluct, E0=bq.E0)


@dataclass
class Correction:
    model: str
    D: int
    L: int
    E0: float
    efluct: float
    grad_norm: float
    null_dim: int
    dispersion: Dispersion

    @property
    def e_total(self):
        return self.E0 + self.efluct

    @property
    def flags(self):
        return self.dispersion.flags


def fluctuation_correction(model, D=None, L=None, N_k=512, mps=None, seed=7, tol=1e-8, max_iter=20000):
    """Saddle point, quadratic boson problem and its zero-point energy.

    Pass ``mps`` to skip the saddle search (it must then be a saddle).  The
    window ``L`` defaults to a multiple of the correlation length.
    """
    grad = 0.0
    if mps is None:
        report = find_saddle(model, D, seed=seed, tol=tol, max_iter=max_iter)
        mps, grad = report.mps, report.grad_norm
        if not report.converged:
            logger.warning("saddle search stopped at gradient %.2e", grad)
    basis = tangent_basis(mps)
    if L is None:
        L = default_window(mps.xi)
    bq = quadratic_coeffs(mps, basis, model, L)
    gram = build_gram(mps, basis, L)
    bq = delta_from_prime(gram, bq)
    disp = zero_point_energy(bq, N_k)
    return Correction(model=model.name, D=mps.D, L=L, E0=bq.E0, efluct=disp.efluct, grad_norm=grad,
                      null_dim=gram.null_dim if gram.null_dim is not None else -1, dispersion=disp)
