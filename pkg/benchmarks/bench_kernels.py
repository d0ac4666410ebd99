"""Compare the numba and numpy kernel paths.

    python benchmarks/bench_kernels.py [--repeat 5]

Kernel timings call both variants directly in one process (numba timings
exclude the first, compiling call). The end-to-end line runs one bootstrap
GOF test in a fresh interpreter with MSDI_NUMBA=1 and MSDI_NUMBA=0, so it
measures the dispatch the package actually uses.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from msdi import kernels as K

GOF_SNIPPET = """
import time
from msdi import copulas as cop
pairs = cop.simulate(cop.CopulaModel("Frank", 3.0), 492, 1)
cop.gof_pvalue("Frank", pairs, 100, 2)  # warm-up (numba compile)
t0 = time.perf_counter()
m = cop.gof_pvalue("Frank", pairs, 1000, 3)
print(time.perf_counter() - t0, m.fit.p_value)
"""


def _best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in (500, 5_000, 100_000):
        x, y = rng.normal(size=(2, n))
        rows.append((f"kendall_counts n={n}", _best(lambda: K.kendall_counts_numba(x, y), repeat), _best(lambda: K.kendall_counts_numpy(x, y), repeat)))
    for n in (492, 2_000):
        us, vs = rng.uniform(size=(2, n))
        rows.append((f"dominated_counts n={n}", _best(lambda: K.dominated_counts_numba(us, vs, us, vs), repeat), _best(lambda: K.dominated_counts_numpy(us, vs, us, vs), repeat)))
    for n in (1_000, 100_000):
        u, w = rng.uniform(size=(2, n))
        rows.append((f"frank_inverse n={n}", _best(lambda: K.frank_conditional_inverse_numba(5.0, u, w), repeat), _best(lambda: K.frank_conditional_inverse_numpy(5.0, u, w), repeat)))
    return rows


def gof_seconds(flag):
    env = dict(os.environ, MSDI_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", GOF_SNIPPET], env=env, capture_output=True, text=True, check=True)
    secs, p = out.stdout.split()
    return float(secs), float(p)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-gof", action="store_true")
    args = parser.parse_args()

    print(f"{'kernel':<28}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, t_nb, t_np in kernel_table(args.repeat):
        print(f"{name:<28}{t_nb * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_nb:>10.1f}")
    if args.skip_gof:
        return
    nb, p_nb = gof_seconds("1")
    npy, p_np = gof_seconds("0")
    print(f"\ngof_pvalue Frank n=492 N=1000: numba {nb:.2f}s  numpy {npy:.2f}s  (p-values {p_nb:.4f} / {p_np:.4f})")


if __name__ == "__main__":
    main()
