"""Pure numpy version of the compiled kernels."""

import numpy as np


def apply_two_site(psi, h, d, n_sites, i, j, out):
    """Accumulate ``h`` acting on sites ``(i, j)`` into ``out``."""
    t = psi.reshape((d,) * n_sites)
    r = np.tensordot(h.reshape(d, d, d, d), t, axes=([2, 3], [i, j]))
    out += np.moveaxis(r, [0, 1], [i, j]).reshape(-1)
