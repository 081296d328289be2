"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--quick]

Runs the two hot loops (collapsed-Gibbs sweep, projected-SGD epoch) on
realistic problem sizes through both implementations, verifies they agree
(Gibbs bitwise; SGD to rounding error), and reports the speedup.
"""

import argparse
import sys
import time

import numpy as np

from mqle.kernels import pure
from mqle.rng import SplitMix64

try:
    from mqle.kernels import _native as native
except ImportError:
    native = None


def gibbs_problem(n_docs, n_topics, vocab, n_positions, seed=0):
    rng = np.random.default_rng(seed)
    doc_ids = np.sort(rng.integers(0, n_docs, n_positions)).astype(np.int32)
    tokens = rng.integers(0, vocab, n_positions).astype(np.int32)
    sm = SplitMix64(seed + 1)
    z = np.array([sm.randint(n_topics) for _ in range(n_positions)], dtype=np.int32)
    n_iz = np.zeros((n_docs, n_topics), dtype=np.int64)
    n_zv = np.zeros((n_topics, vocab), dtype=np.int64)
    n_z = np.zeros(n_topics, dtype=np.int64)
    np.add.at(n_iz, (doc_ids, z), 1)
    np.add.at(n_zv, (z, tokens), 1)
    np.add.at(n_z, z, 1)
    return [doc_ids, tokens, z, n_iz, n_zv, n_z], sm.state


def sgd_problem(n_users, n_photos, n_factors, nnz, seed=0):
    rng = np.random.default_rng(seed)
    cells = set()
    while len(cells) < nnz:
        cells.add((int(rng.integers(n_users)), int(rng.integers(n_photos))))
    cells = sorted(cells)
    rows = np.array([c[0] for c in cells], dtype=np.int32)
    cols = np.array([c[1] for c in cells], dtype=np.int32)
    order = np.lexsort((cols, rows))
    row_ptr = np.zeros(n_users + 1, dtype=np.int64)
    np.add.at(row_ptr, rows + 1, 1)
    row_ptr = np.cumsum(row_ptr)
    blocked = cols[order].astype(np.int32)
    p = rng.uniform(0, 0.3, (n_users, n_factors))
    vt = rng.uniform(0, 0.3, (n_photos, n_factors))
    return rows, cols, row_ptr, blocked, p, vt


def time_gibbs(impl, sweeps, args, state):
    work = [a.copy() for a in args]
    start = time.perf_counter()
    s = state
    for _ in range(sweeps):
        s = impl.gibbs_sweep(*work, 0.5, 0.01, s)
    return time.perf_counter() - start, work, s


def time_sgd(impl, epochs, problem, state):
    rows, cols, row_ptr, blocked, p0, vt0 = problem
    p, vt = p0.copy(), vt0.copy()
    start = time.perf_counter()
    s = state
    for _ in range(epochs):
        s = impl.sgd_epoch(p, vt, rows, cols, row_ptr, blocked, 0.05, 0.01, 1, s)
    return time.perf_counter() - start, p, vt, s


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller problems")
    opts = parser.parse_args(argv)

    if native is None:
        print("compiled extension not built; run `python setup.py build_ext --inplace`")

    scale = 0.25 if opts.quick else 1.0
    gibbs_args, gibbs_state = gibbs_problem(
        n_docs=600, n_topics=20, vocab=256, n_positions=int(4096 * scale * 4)
    )
    sweeps = int(40 * scale) or 5
    sgd = sgd_problem(
        n_users=577, n_photos=2800, n_factors=64, nnz=int(2800 * scale * 4)
    )
    epochs = int(30 * scale) or 5

    print(f"{'kernel':<18}{'pure':>12}{'native':>12}{'speedup':>10}")

    pure_t, pure_work, pure_s = time_gibbs(pure, sweeps, gibbs_args, gibbs_state)
    if native is not None:
        nat_t, nat_work, nat_s = time_gibbs(native, sweeps, gibbs_args, gibbs_state)
        assert nat_s == pure_s, "Gibbs RNG streams diverged"
        for a, b in zip(pure_work, nat_work):
            assert np.array_equal(a, b), "Gibbs kernels disagree"
        print(f"{'gibbs_sweep':<18}{pure_t:>11.3f}s{nat_t:>11.3f}s{pure_t / nat_t:>9.1f}x"
              f"   ({sweeps} sweeps, bitwise identical)")
    else:
        print(f"{'gibbs_sweep':<18}{pure_t:>11.3f}s{'-':>12}{'-':>10}")

    pure_t, pure_p, pure_vt, pure_s = time_sgd(pure, epochs, sgd, 17)
    if native is not None:
        nat_t, nat_p, nat_vt, nat_s = time_sgd(native, epochs, sgd, 17)
        assert nat_s == pure_s, "SGD RNG streams diverged"
        assert np.allclose(pure_p, nat_p, rtol=1e-9, atol=1e-12)
        assert np.allclose(pure_vt, nat_vt, rtol=1e-9, atol=1e-12)
        print(f"{'sgd_epoch':<18}{pure_t:>11.3f}s{nat_t:>11.3f}s{pure_t / nat_t:>9.1f}x"
              f"   ({epochs} epochs, allclose 1e-9)")
    else:
        print(f"{'sgd_epoch':<18}{pure_t:>11.3f}s{'-':>12}{'-':>10}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
