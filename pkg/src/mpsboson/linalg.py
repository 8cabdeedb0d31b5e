"""Dense complex linear algebra used throughout the package."""

import numpy as np

RANK_TOL = 1e-10
# numpy otherwise caps intermediates at the largest operand and falls back to
# one giant loop for the multi-tensor contractions used here
EINSUM_OPT = ("greedy", 2 ** 24)


class LinalgError(ValueError):
    pass


def as_matrix(m):
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise LinalgError(f"expected a matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise LinalgError("matrix has non-finite entries")
    return m


def hermiticity_defect(m):
    scale = max(np.linalg.norm(m), 1e-300)
    return np.linalg.norm(m - m.conj().T) / scale


def hermitian_eig(m, tol=1e-12):
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise LinalgError(f"matrix is not square: {m.shape}")
    defect = hermiticity_defect(m)
    if defect > tol:
        raise LinalgError(f"matrix is not Hermitian (relative defect {defect:.3e})")
    return np.linalg.eigh(0.5 * (m + m.conj().T))


def pseudo_inverse(m, rel_tol=RANK_TOL):
    """Moore-Penrose inverse of a Hermitian positive-semidefinite matrix.

    Eigenvalues below ``rel_tol * max_eigenvalue`` are treated as exact
    zeros.  Returns ``(pinv, rank)``.
    """
    m = as_matrix(m)
    n = m.shape[0]
    if not np.any(m):
        return np.zeros((n, n), dtype=complex), 0
    w, v = hermitian_eig(m, tol=1e-10)
    keep = w > rel_tol * w.max()
    vk = v[:, keep]
    pinv = (vk / w[keep]) @ vk.conj().T
    return pinv, int(keep.sum())


def psd_power(m, power, rel_tol=RANK_TOL):
    """``m**power`` for a PSD Hermitian matrix, restricted to its range."""
    w, v = hermitian_eig(as_matrix(m), tol=1e-10)
    keep = w > rel_tol * max(w.max(), 0.0)
    vk = v[:, keep]
    return (vk * w[keep] ** power) @ vk.conj().T


def general_eig(m):
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise LinalgError(f"matrix is not square: {m.shape}")
    return np.linalg.eigvals(m)


def complete_isometry(v):
    """Orthonormal columns spanning the complement of the isometry ``v``."""
    q, _ = np.linalg.qr(v, mode="complete")
    return q[:, v.shape[1]:]
