"""Compiled vs numpy kernels on the three hot loops.

    python benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best wall time over the repeats and checks that the two
backends agree.
"""

import argparse
import time

import numpy as np

from qpress import kernels
from qpress.symbolic import random_potential
from qpress.transfer import _structure


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases():
    # (label, callable taking a backend)
    for q, m in [(2, 2), (3, 3), (2, 6)]:
        pot = random_potential(q, m, 1)
        idx, succ = _structure(q, max(m, 2))
        psi = pot.lifted(max(m, 2)).table[idx]
        xis = np.linspace(-3, 3, 201)
        yield f"perron_logroot q={q} m={m} x201", lambda be, psi=psi, succ=succ, xis=xis: be.perron_logroot(
            psi, succ, xis, 1e-15, 100_000
        )[0]
        glog = np.zeros(psi.shape[0])
        zs = np.linspace(-2, 2, 256)
        yield f"log_iterate q={q} m={m} x256 n=500", lambda be, psi=psi, succ=succ, zs=zs, glog=glog: be.log_iterate(
            psi, succ, zs, glog, 500
        )
    for q, m, n in [(2, 2, 18), (2, 1, 22), (3, 2, 12)]:
        pot = random_potential(q, m, 2)
        coef = 1.5 / (2 * n)
        shift = coef * (n * pot.A) ** 2
        yield f"prefix_logsumexp q={q} m={m} n={n}", lambda be, pot=pot, n=n, coef=coef, shift=shift: (
            be.prefix_logsumexp(pot.table, q, pot.memory, n + pot.memory - 1, n, 2, coef, shift)
        )


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if kernels.compiled_backend is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'kernel':<40} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8} {'max diff':>10}")
    for label, fn in cases():
        tp, ref = best_of(lambda: fn(kernels.python_backend), args.repeat)
        tc, got = best_of(lambda: fn(kernels.compiled_backend), args.repeat)
        diff = float(np.max(np.abs(np.asarray(ref) - np.asarray(got))))
        print(f"{label:<40} {1e3 * tp:>12.2f} {1e3 * tc:>12.2f} {tp / tc:>8.1f} {diff:>10.1e}")


if __name__ == "__main__":
    main()
