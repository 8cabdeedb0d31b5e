"""Two-site kernel timing: compiled extension against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--sites N] [--d D]``.  Prints
one line per bond position and the time of a full periodic Hamiltonian
application.
"""

import argparse
import timeit

import numpy as np

from mpsboson import _kernels_py, kernels
from mpsboson.ed import ChainHamiltonian
from mpsboson.models import blbq, heisenberg_staggered


def time_call(fn, repeat=5):
    fn()  # warm up
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sites", type=int, default=10)
    ap.add_argument("--d", type=int, default=3, choices=(2, 3))
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    d, n = args.d, args.sites
    rng = np.random.default_rng(0)
    psi = rng.standard_normal(d ** n) + 1j * rng.standard_normal(d ** n)
    model = blbq(0.3) if d == 3 else heisenberg_staggered(0.2)
    h = np.ascontiguousarray(model.hdensity, dtype=complex)
    impls = {"numpy": _kernels_py.apply_two_site}
    if kernels.BACKEND == "cython":
        from mpsboson import _kernels

        impls["cython"] = _kernels.apply_two_site
    print(f"d={d} N={n} dim={d ** n} backend={kernels.BACKEND}")
    print(f"{'bond':>8} " + " ".join(f"{k:>12}" for k in impls))
    for i, j in ((0, 1), (n // 2, n // 2 + 1), (n - 2, n - 1), (n - 1, 0)):
        out = np.zeros_like(psi)
        ts = [time_call(lambda f=f: f(psi, h, d, n, i, j, out), args.repeat) for f in impls.values()]
        print(f"{i:>3}-{j:<4} " + " ".join(f"{1e3 * t:10.2f}ms" for t in ts))
    H = ChainHamiltonian(model, n, "periodic")
    print(f"full H|psi> with selected backend: {1e3 * time_call(lambda: H.matvec(psi), args.repeat):.1f} ms")


if __name__ == "__main__":
    main()
