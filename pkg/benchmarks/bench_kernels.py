"""Compare the compiled RBF kernels with the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from mvgp_cbf._core import HAVE_EXT, backend, fallback


def cases(rng):
    P3 = np.diag([1.0, 0.5, 2.0])
    for k in (16, 64, 256):
        X = rng.standard_normal((k, 3))
        x = rng.standard_normal(3)
        yield f"gram {k}x{k}", "rbf_gram", (X, X, P3, 1.3)
        yield f"grad k={k}", "rbf_grad", (x, X, P3, 1.3)
        yield f"cross_hess k={k}", "rbf_cross_hess", (x, X, P3, 1.3)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args(argv)
    if not HAVE_EXT:
        print("compiled extension not available; only the numpy fallback will be timed")
    rng = np.random.default_rng(0)
    print(f"{'case':<20}{'numpy us':>12}{'cython us':>12}{'speedup':>10}")
    for label, fn, call_args in cases(rng):
        times = {}
        for name, mod in (("numpy", fallback), ("cython", backend if HAVE_EXT else None)):
            if mod is None:
                continue
            f = getattr(mod, fn)
            best = min(timeit.repeat(lambda: f(*call_args), repeat=args.repeat, number=args.number))
            times[name] = 1e6 * best / args.number
        if "cython" in times:
            np.testing.assert_allclose(getattr(backend, fn)(*call_args), getattr(fallback, fn)(*call_args),
                                       rtol=1e-12, atol=1e-14)
            print(f"{label:<20}{times['numpy']:>12.2f}{times['cython']:>12.2f}"
                  f"{times['numpy'] / times['cython']:>9.1f}x")
        else:
            print(f"{label:<20}{times['numpy']:>12.2f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
