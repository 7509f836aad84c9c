"""Benchmark the compiled tournament kernel against the pure-numpy twin.

Run:
    python benchmarks/bench_simkernel.py [--trials 20000]

Reports per-cell wall time for both backends and verifies that they produce
bit-identical results on the same draws.
"""

import argparse
import time

import numpy as np

from reps import simkernel
from reps.seeding import derive_numpy_rng

CELLS = [
    # (n_candidates, votes, p_accuracy, length_bias)
    (8, 5, 0.7, 0.0),
    (16, 5, 0.9, 0.0),
    (64, 5, 0.95, 1.5),
]


def run_cell(n, s, p, beta, trials, backend):
    rng = derive_numpy_rng(0, "bench", n, s, p, beta)
    lengths = np.empty((trials, n))
    lengths[:, 0] = rng.normal(300.0, 40.0, trials)
    lengths[:, 1:] = rng.normal(450.0, 60.0, (trials, n - 1))
    np.maximum(lengths, 1.0, out=lengths)
    uniforms = rng.random((trials, simkernel.draw_count(n, s)))
    start = time.perf_counter()
    won, winner_len = simkernel.simulate_batch(s, p, beta, lengths, uniforms, backend=backend)
    elapsed = time.perf_counter() - start
    return elapsed, won, winner_len


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--trials", type=int, default=20000)
    args = parser.parse_args()

    print(f"selected backend at import: {simkernel.backend_name()}")
    if not simkernel.HAVE_COMPILED:
        print("compiled kernel not built; timing the pure backend only")

    header = f"{'cell':>24} {'pure':>10} {'compiled':>10} {'speedup':>8}  identical"
    print(header)
    print("-" * len(header))
    for n, s, p, beta in CELLS:
        t_pure, won_p, len_p = run_cell(n, s, p, beta, args.trials, "pure")
        if simkernel.HAVE_COMPILED:
            t_core, won_c, len_c = run_cell(n, s, p, beta, args.trials, "compiled")
            same = np.array_equal(won_p, won_c) and np.array_equal(len_p, len_c)
            print(
                f"N={n:<3} S={s} p={p} beta={beta:<4} "
                f"{t_pure:>9.3f}s {t_core:>9.3f}s {t_pure / t_core:>7.1f}x  {same}"
            )
        else:
            print(f"N={n:<3} S={s} p={p} beta={beta:<4} {t_pure:>9.3f}s {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
