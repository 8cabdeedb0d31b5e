"""Exact diagonalisation of short spin chains with a matrix-free Hamiltonian."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .kernels import apply_two_site

MAX_DIM = 2_000_000
DENSE_MAX = 1000


class EdError(ValueError):
    pass


@dataclass
class EdResult:
    N: int
    bc: str
    energy: float
    energy_density: float
    residual: float
    gap: float = None
    vector: np.ndarray = None


def _bonds(N, bc):
    if bc not in ("open", "periodic"):
        raise EdError(f"unknown boundary condition {bc!r}")
    bonds = [(i, i + 1) for i in range(N - 1)]
    if bc == "periodic" and N > 2:
        bonds.append((N - 1, 0))
    return bonds


class ChainHamiltonian:
    """Sum of identical two-site densities on a chain of ``N`` sites."""

    def __init__(self, model, N, bc="open"):
        self.d, self.N, self.bc = model.d, N, bc
        self.dim = self.d ** N
        if self.dim > MAX_DIM:
            raise EdError(f"Hilbert space dimension {self.dim} exceeds {MAX_DIM}")
        self.h = np.ascontiguousarray(model.hdensity, dtype=complex)
        self.bonds = _bonds(N, bc)

    def matvec(self, v):
        v = np.ascontiguousarray(v, dtype=complex).ravel()
        out = np.zeros_like(v)
        for i, j in self.bonds:
            apply_two_site(v, self.h, self.d, self.N, i, j, out)
        return out

    def operator(self):
        return spla.LinearOperator((self.dim, self.dim), matvec=self.matvec, dtype=complex)

    def dense(self):
        if self.dim > DENSE_MAX * 4:
            raise EdError("dense matrix requested for a large chain")
        return np.column_stack([self.matvec(e) for e in np.eye(self.dim, dtype=complex)])


def _density(E, N, bc):
    return E / N if bc == "periodic" else E / (N - 1)


def ed_dense(model, N, bc="open"):
    """Full diagonalisation; only for small chains."""
    H = ChainHamiltonian(model, N, bc).dense()
    w = np.linalg.eigvalsh(0.5 * (H + H.conj().T))
    return w


def ed_ground(model, N, bc="open", seed=7, restarts=3, excited=False, tol=1e-9):
    """Ground-state energy by restarted Lanczos (ARPACK) runs.

    The lowest energy over ``restarts`` runs from different random vectors is
    kept; its residual must be below ``tol``.
    """
    if N < 2:
        raise EdError("need at least two sites")
    H = ChainHamiltonian(model, N, bc)
    k = 2 if excited else 1
    if H.dim <= 64:
        w, v = np.linalg.eigh(H.dense())
        best = (w[:k], v[:, :k])
    else:
        rng = np.random.default_rng(seed)
        op = H.operator()
        best = None
        for _ in range(restarts):
            v0 = rng.standard_normal(H.dim) + 1j * rng.standard_normal(H.dim)
            # ARPACK tolerance is relative to |E|, which grows with N
            w, v = spla.eigsh(op, k=k, which="SA", v0=v0, tol=0.01 * tol / N, ncv=min(H.dim, max(20, 4 * k + 16)))
            order = np.argsort(w)
            w, v = w[order], v[:, order]
            if best is None or w[0] < best[0][0]:
                best = (w, v)
    w, v = best
    vec = v[:, 0] / np.linalg.norm(v[:, 0])
    E = float(w[0])
    res = float(np.linalg.norm(H.matvec(vec) - E * vec))
    if res > tol:
        raise EdError(f"Lanczos residual {res:.2e} above {tol:.0e}")
    gap = float(w[1] - w[0]) if excited else None
    return EdResult(N=N, bc=bc, energy=E, energy_density=_density(E, N, bc), residual=res, gap=gap, vector=vec)
