"""Compare the numba and numpy modular kernels.

Usage: python benchmarks/bench_kernels.py [--sizes 32 128 256] [--repeat 5]

Both backends are timed in the same process through their named entry
points, so the PMPIR_BACKEND flag does not matter here. The numba kernels
are called once before timing to exclude JIT compilation.
"""

import argparse
import timeit

import numpy as np

from pmpir import _accel

Q = 2**31 - 1


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench(sizes, repeat, seed):
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        a = rng.integers(0, Q, size=(n, n), dtype=np.int64)
        b = rng.integers(0, Q, size=(n, n), dtype=np.int64)
        if _accel.HAS_NUMBA:
            _accel.numba_matmul_mod(a[:2, :2], b[:2, :2], Q)
            _accel.numba_rref_mod(a[:2, :2].copy(), Q, 2)
        for name, np_fn, nb_fn in [
            ("matmul", lambda: _accel.numpy_matmul_mod(a, b, Q),
             lambda: _accel.numba_matmul_mod(a, b, Q)),
            ("rref", lambda: _accel.numpy_rref_mod(a.copy(), Q, n),
             lambda: _accel.numba_rref_mod(a.copy(), Q, n)),
        ]:
            t_np = best(np_fn, repeat)
            t_nb = best(nb_fn, repeat) if _accel.HAS_NUMBA else float("nan")
            rows.append((name, n, t_np, t_nb))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 64, 128, 256])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    print(f"{'kernel':<8}{'n':>6}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, n, t_np, t_nb in bench(args.sizes, args.repeat, args.seed):
        print(f"{name:<8}{n:>6}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>10.1f}x")


if __name__ == "__main__":
    main()
