"""Spin operators, Hamiltonian densities and closed-form reference states."""

from dataclasses import dataclass, field

import numpy as np

from .mps import canonicalize


@dataclass(frozen=True)
class SpinModel:
    name: str
    d: int
    hdensity: np.ndarray  # (d*d, d*d), acts on two neighbouring sites
    params: dict = field(default_factory=dict)

    @property
    def h4(self):
        """Density as a tensor ``h[s1, s2, t1, t2] = <s1 s2|h|t1 t2>``."""
        d = self.d
        return self.hdensity.reshape(d, d, d, d)


def spin_matrices(two_s_plus_one):
    d = int(two_s_plus_one)
    if d < 2:
        raise ValueError("spin dimension must be at least 2")
    s = (d - 1) / 2
    m = s - np.arange(d)  # basis ordered m = s, s-1, ..., -s
    sp = np.zeros((d, d), dtype=complex)
    for k in range(1, d):
        sp[k - 1, k] = np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    sx = 0.5 * (sp + sp.conj().T)
    sy = -0.5j * (sp - sp.conj().T)
    sz = np.diag(m).astype(complex)
    return sx, sy, sz


def _dot(d, rotate=False):
    sx, sy, sz = spin_matrices(d)
    sign = (1, -1, -1) if rotate else (1, 1, 1)
    return sum(c * np.kron(a, a) for c, a in zip(sign, (sx, sy, sz)))


def flip(d):
    """Rotation by pi about the x axis, applied on every other site."""
    sx, _, _ = spin_matrices(d)
    w, v = np.linalg.eigh(sx)
    return (v * np.exp(-1j * np.pi * w)) @ v.conj().T


def blbq(p, rotated=False):
    """Bilinear-biquadratic spin-1 density ``S.S + p (S.S)^2``.

    ``rotated=True`` returns the density after the sublattice flip, which
    keeps a one-site unit cell for staggered references.
    """
    ss = _dot(3, rotate=rotated)
    h = ss + p * ss @ ss
    name = "blbq_rot" if rotated else "blbq"
    return SpinModel(name=name, d=3, hdensity=0.5 * (h + h.conj().T), params={"p": float(p)})


def heisenberg_staggered(h):
    """Spin-1/2 Heisenberg chain in a staggered field, sublattice-rotated.

    The physical model is ``sum S_i.S_{i+1} - h sum (-1)^i S^z_i``.  After the
    flip on odd sites the field is uniform and is split evenly over the two
    sites of each bond.
    """
    _, _, sz = spin_matrices(2)
    eye = np.eye(2)
    dens = _dot(2, rotate=True) - 0.5 * h * (np.kron(sz, eye) + np.kron(eye, sz))
    return SpinModel(name="heis_stag", d=2, hdensity=dens, params={"h": float(h)})


def heisenberg_staggered_unrotated_pair(h):
    """Two-site (even, odd) Hamiltonian of the unrotated staggered chain."""
    _, _, sz = spin_matrices(2)
    eye = np.eye(2)
    return _dot(2) - h * (np.kron(sz, eye) - np.kron(eye, sz))


def rotate_density(model):
    """Apply the sublattice flip to the second site of a bond density."""
    u = np.kron(np.eye(model.d), flip(model.d))
    h = u.conj().T @ model.hdensity @ u
    return SpinModel(name=model.name + "_flipped", d=model.d, hdensity=h, params=dict(model.params))


def make_model(name, **params):
    if name == "blbq":
        return blbq(params.get("p", 0.0), rotated=bool(params.get("rotated", False)))
    if name == "heis_stag":
        return heisenberg_staggered(params.get("h", 0.0))
    raise ValueError(f"unknown model {name!r}")


def aklt_tensor():
    """Raw AKLT site tensor in the ``m = +1, 0, -1`` basis."""
    sp = np.array([[0, 1], [0, 0]], dtype=complex)
    sz = np.diag([1.0, -1.0]).astype(complex)
    A = np.array([np.sqrt(2 / 3) * sp, -np.sqrt(1 / 3) * sz, -np.sqrt(2 / 3) * sp.T])
    return A


def aklt_state():
    return canonicalize(aklt_tensor())


def neel_state(d=3):
    """Product state ``|m = s>`` on every site of the rotated frame."""
    A = np.zeros((d, 1, 1), dtype=complex)
    A[0, 0, 0] = 1.0
    return canonicalize(A)
