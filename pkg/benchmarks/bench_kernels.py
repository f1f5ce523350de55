"""Time the numba kernels against their numpy twins.

Run with ``python3 benchmarks/bench_kernels.py``.  Both variants are
imported from the same module, so the comparison does not depend on the
``IPMTMLE_NUMBA`` flag; if numba is missing only the numpy column is shown.
"""

import argparse
import timeit

import numpy as np

from ipmtmle import kernels
from ipmtmle._accel import NUMBA_ENABLED


def cases(rng, n_classes, n_sample):
    locs = rng.uniform(0, 1, n_classes)
    edges = np.linspace(0, 1, n_classes + 1)
    sample = rng.normal(0, 0.1, n_sample)
    x = rng.uniform(0, 1, n_sample)
    A = rng.uniform(0, 1, (n_classes, n_classes))
    x0 = np.full(n_classes, 1.0 / n_classes)
    return {
        "kde_cdf_matrix": (kernels._kde_cdf_matrix_jit, kernels._kde_cdf_matrix_numpy,
                           (locs, edges, sample, 0.05)),
        "kde_pdf": (kernels._kde_pdf_jit, kernels._kde_pdf_numpy, (x, sample, 0.05)),
        "power_iterate": (kernels._power_iterate_jit, kernels._power_iterate_numpy,
                          (A, x0, 1e-12, 100000)),
    }


def best_of(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--classes", type=int, default=100)
    p.add_argument("--sample", type=int, default=800)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, (jit, ref, a) in cases(rng, args.classes, args.sample).items():
        t_np = best_of(ref, a, args.repeat)
        if NUMBA_ENABLED:
            jit(*a)  # compile outside the timing
            t_jit = best_of(jit, a, args.repeat)
            print(f"{name:<16s} {1e3 * t_np:11.2f} {1e3 * t_jit:11.2f} {t_np / t_jit:8.1f}")
        else:
            print(f"{name:<16s} {1e3 * t_np:11.2f} {'n/a':>11s} {'':>8s}")


if __name__ == "__main__":
    main()
