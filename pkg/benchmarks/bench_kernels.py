"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--m 68] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from kinshape import grassmann, kernels


def bench(label, fn, number, repeat):
    best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
    return label, best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--m", type=int, default=68)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    s0 = rng.standard_normal((args.m, 2))
    s1 = rng.standard_normal((args.m, 2))
    g = rng.standard_normal((args.m, args.m))
    upstream = g + g.T
    decomp = grassmann.shape_to_projector(s0)
    u, d, v = decomp.svd
    gu = 2.0 * upstream @ u
    w = u.T @ gu
    r = gu - u @ w

    backends = sorted(kernels.BACKENDS)
    rows = {}
    for name in backends:
        cases = [
            ("thin_svd", lambda: kernels.thin_svd(s0, backend=name)),
            ("svd_grad_contract", lambda: kernels.svd_grad_contract(u, d, v, w, r, backend=name)),
            ("aisc_backward_svd", lambda: grassmann.aisc_backward_svd(s0, s1, upstream, backend=name)),
        ]
        for label, fn in cases:
            rows.setdefault(label, {})[name] = bench(label, fn, args.number, args.repeat)[1]

    header = f"{'kernel (m=' + str(args.m) + ')':<24}" + "".join(f"{b + ' [us]':>16}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, times in rows.items():
        line = f"{label:<24}" + "".join(f"{times[b] * 1e6:>16.1f}" for b in backends)
        if len(backends) == 2:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)
    print(f"default backend: {kernels.BACKEND}")


if __name__ == "__main__":
    main()
