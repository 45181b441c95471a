"""Time the compiled kernels against the pure-Python fallback.

Run from the repository root after installing the package::

    python benchmarks/bench_kernels.py --repeat 5

Both backends are fed identical inputs and their outputs are checked for
equality before timings are reported.
"""
import argparse
import sys
import timeit

import numpy as np

from postclust import _fallback

try:
    from postclust import _kernels
except ImportError:  # extension not built
    _kernels = None


def squared_distances(x):
    d = x[:, None, :] - x[None, :, :]
    return (d * d).sum(axis=2)


def cases(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    d2 = squared_distances(x)
    sizes = np.ones(n)
    tags = np.zeros(n, dtype=np.int8)
    tags[: n // 3] = 1
    tags[n // 3: 2 * n // 3] = 2
    base = squared_distances(x[:, 1:])
    direction = rng.normal(size=n) / n
    shifts = rng.normal(size=50)
    uniforms = rng.random((200, n))
    sample = np.sort(rng.normal(size=n))
    return {
        "ward_merges": lambda mod: mod.ward_merges(d2, sizes, n - 1),
        "ward_preserved_many (50 shifts)": lambda mod: mod.ward_preserved_many(
            base, x[:, 0].copy(), direction, shifts, tags, 3),
        "dip_sorted": lambda mod: mod.dip_sorted(sample),
        "dip_uniform_many (200 samples)": lambda mod: mod.dip_uniform_many(uniforms),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(u, v) for u, v in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, nargs="+", default=[50, 200])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if _kernels is None:
        print("compiled extension not available; nothing to compare", file=sys.stderr)
        return 1

    print(f"{'kernel':34s} {'n':>5s} {'cython (ms)':>12s} {'python (ms)':>12s} {'speedup':>8s}")
    for n in args.n:
        for name, call in cases(n, args.seed).items():
            if not same(call(_kernels), call(_fallback)):
                print(f"{name}: backends disagree at n={n}", file=sys.stderr)
                return 2
            fast = min(timeit.repeat(lambda: call(_kernels), number=1, repeat=args.repeat))
            slow = min(timeit.repeat(lambda: call(_fallback), number=1, repeat=args.repeat))
            print(f"{name:34s} {n:5d} {fast * 1e3:12.3f} {slow * 1e3:12.3f} {slow / fast:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
