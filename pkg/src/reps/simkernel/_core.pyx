# cython: language_level=3
"""Compiled Monte Carlo tournament kernel.

Mirrors reps.simkernel._pure draw-for-draw: both backends consume the same
uniform array at the same (trial, column) positions, so results match
bit-for-bit.
"""

from libc.math cimport exp, log


cdef inline double _sigmoid(double x) noexcept nogil:
    cdef double z
    if x >= 0:
        z = exp(-x)
        return 1.0 / (1.0 + z)
    z = exp(x)
    return z / (1.0 + z)


def simulate_batch_impl(int votes, double p_accuracy, double length_bias,
                        double[:, ::1] lengths, double[:, ::1] uniforms,
                        unsigned char[::1] valid_won, double[::1] winner_length,
                        long long[::1] scratch):
    cdef Py_ssize_t trials = lengths.shape[0]
    cdef int n = <int> lengths.shape[1]
    cdef Py_ssize_t t
    cdef int k, i, j, m, odd, match, v, wins, col
    cdef long long left, right, tmp, winner
    cdef double u, p_eff, p_left, ll, lr

    with nogil:
        for t in range(trials):
            for i in range(n):
                scratch[i] = i
            col = 0
            k = n
            while k > 1:
                for i in range(k - 1, 0, -1):
                    u = uniforms[t, col]
                    col += 1
                    j = <int> (u * (i + 1))
                    if j > i:
                        j = i
                    tmp = scratch[i]
                    scratch[i] = scratch[j]
                    scratch[j] = tmp
                m = k // 2
                odd = k & 1
                for match in range(m):
                    left = scratch[2 * match]
                    right = scratch[2 * match + 1]
                    if (left == 0) == (right == 0):
                        p_eff = 0.5
                    elif left == 0:
                        p_eff = p_accuracy
                    else:
                        p_eff = 1.0 - p_accuracy
                    if p_eff <= 0.0:
                        p_left = 0.0
                    elif p_eff >= 1.0:
                        p_left = 1.0
                    elif length_bias == 0.0:
                        p_left = p_eff
                    else:
                        ll = lengths[t, left]
                        lr = lengths[t, right]
                        p_left = _sigmoid(
                            log(p_eff / (1.0 - p_eff))
                            + length_bias * (ll - lr) / (ll + lr)
                        )
                    wins = 0
                    for v in range(votes):
                        if uniforms[t, col] < p_left:
                            wins += 1
                        col += 1
                    scratch[match] = left if 2 * wins > votes else right
                if odd:
                    scratch[m] = scratch[k - 1]
                k = m + odd
            winner = scratch[0]
            valid_won[t] = 1 if winner == 0 else 0
            winner_length[t] = lengths[t, winner]
