"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--seed S]

Inputs are sized like the training split of the real corpus (159 rows,
TF-IDF-like sparse columns). Each kernel is also checked for identical
output across backends before it is timed.
"""
import argparse
import statistics
import time

import numpy as np

from psychnotes import _kernels


def tfidf_like(rng, n, d, density=0.05):
    X = rng.random((n, d)) * (rng.random((n, d)) < density)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.ascontiguousarray(X / np.where(norms > 0, norms, 1.0))


def cases(rng):
    n = 159
    y = (rng.random(n) < 0.36).astype(np.intp)
    samples = np.arange(n, dtype=np.intp)
    for d in (50, 500):
        X = tfidf_like(rng, n, d)
        feats = np.arange(d, dtype=np.intp)
        yield f"best_split_classif n={n} d={d}", "best_split_classif", (
            X, y, samples, feats, _kernels.GINI, 1)
        p = np.full(n, 0.5)
        yield f"best_split_gbt     n={n} d={d}", "best_split_gbt", (
            X, p - y, p * (1 - p), samples, feats, 1.0, 0.0, 1.0)
    X = tfidf_like(rng, n, 300)
    sq = (X ** 2).sum(1)
    K = np.ascontiguousarray(np.exp(-1.0 * (sq[:, None] + sq[None] - 2 * X @ X.T)))
    yield f"smo rbf            n={n}", "smo", (K, np.where(y == 1, 1.0, -1.0), 1.0, 1e-3, 10,
                                                10000, 0)


def timed(fn, args, repeats):
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def same(a, b):
    return all(np.asarray(u).tobytes() == np.asarray(v).tobytes() for u, v in zip(a, b))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    backends = _kernels.backends()
    if "cython" not in backends:
        raise SystemExit("compiled extension not built; run `pip install -e .` first")
    py, cy = backends["python"], backends["cython"]
    print(f"{'kernel':<32} {'python (ms)':>12} {'cython (ms)':>12} {'speedup':>8}  identical")
    for label, name, fargs in cases(np.random.default_rng(args.seed)):
        f_py, f_cy = getattr(py, name), getattr(cy, name)
        ok = same(f_py(*fargs), f_cy(*fargs))
        t_py = timed(f_py, fargs, args.repeats)
        t_cy = timed(f_cy, fargs, args.repeats)
        print(f"{label:<32} {t_py * 1e3:>12.2f} {t_cy * 1e3:>12.2f} {t_py / t_cy:>7.1f}x  {ok}")


if __name__ == "__main__":
    main()
