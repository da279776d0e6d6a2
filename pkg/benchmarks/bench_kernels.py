"""Time the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Both implementations are
imported directly, so the result does not depend on SPECINIT_PURE_PYTHON.
"""
import argparse
import timeit

import numpy as np

from specinit import _kernels_py

try:
    from specinit import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def cases(rng):
    z = np.unique(rng.random(400))
    w = rng.random(z.size)
    ws2 = w * rng.random(z.size) * 3
    lams = 1.0 + np.geomspace(1e-8, 50, 2000)
    p = np.sort(rng.random(1000) * 5)
    q2 = rng.random(1000) ** 2
    big_p = np.sort(rng.random(100_000))
    big_w = rng.random(100_000) / 100_000
    return {
        "atom_moments (400 atoms x 2000 lambdas)": lambda k: k.atom_moments(z, w, ws2, lams),
        "secular_top (m = 1e5)": lambda k: k.secular_top(big_p, big_w),
        "secular_roots (n = 1000)": lambda k: k.secular_roots(p, q2),
        "arrowhead_fixed_point (n = 1000)": lambda k: k.arrowhead_fixed_point(0.3, p, q2),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':42} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _kernels_c is None:
            print(f"{name:42} {t_py:12.2f} {'n/a':>12} {'':>8}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_kernels_c), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:42} {t_py:12.2f} {t_c:12.2f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
