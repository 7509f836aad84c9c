"""Pure-numpy tournament kernel, vectorized across trials.

Mirrors reps.simkernel._core draw-for-draw: every uniform at position
(trial, column) is consumed for the same purpose in both backends, so the
two produce bit-identical winners.
"""

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    z = np.exp(-x[pos])
    out[pos] = 1.0 / (1.0 + z)
    z = np.exp(x[~pos])
    out[~pos] = z / (1.0 + z)
    return out


def simulate_batch_impl(votes, p_accuracy, length_bias, lengths, uniforms,
                        valid_won, winner_length):
    trials, n = lengths.shape
    part = np.tile(np.arange(n, dtype=np.int64), (trials, 1))
    rows = np.arange(trials)
    col = 0
    k = n
    while k > 1:
        # Fisher-Yates across all trials; one uniform per (i, trial)
        for i in range(k - 1, 0, -1):
            j = (uniforms[:, col] * (i + 1)).astype(np.int64)
            col += 1
            np.minimum(j, i, out=j)
            tmp = part[rows, i].copy()
            part[rows, i] = part[rows, j]
            part[rows, j] = tmp
        m = k // 2
        odd = k & 1
        for match in range(m):
            left = part[:, 2 * match].copy()
            right = part[:, 2 * match + 1].copy()
            left_valid = left == 0
            right_valid = right == 0
            p_eff = np.where(
                left_valid == right_valid,
                0.5,
                np.where(left_valid, p_accuracy, 1.0 - p_accuracy),
            )
            p_left = np.empty(trials, dtype=np.float64)
            lo = p_eff <= 0.0
            hi = p_eff >= 1.0
            mid = ~(lo | hi)
            p_left[lo] = 0.0
            p_left[hi] = 1.0
            if length_bias == 0.0:
                # exact constants; keeps parity with the scalar kernel, which
                # also skips the sigmoid in this case
                p_left[mid] = p_eff[mid]
            elif np.any(mid):
                ll = lengths[rows, left][mid]
                lr = lengths[rows, right][mid]
                x = np.log(p_eff[mid] / (1.0 - p_eff[mid]))
                x += length_bias * (ll - lr) / (ll + lr)
                p_left[mid] = _sigmoid(x)
            wins = np.zeros(trials, dtype=np.int64)
            for _ in range(votes):
                wins += uniforms[:, col] < p_left
                col += 1
            part[:, match] = np.where(2 * wins > votes, left, right)
        if odd:
            part[:, m] = part[:, k - 1]
        k = m + odd
    winner = part[:, 0]
    valid_won[:] = winner == 0
    winner_length[:] = lengths[rows, winner]
