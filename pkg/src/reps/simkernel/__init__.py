"""Monte Carlo tournament-simulation kernel with two interchangeable backends.

``_core`` is a Cython extension built at install time; ``_pure`` is a
numpy twin used when the extension is unavailable. Both consume the same
pre-generated uniform draws in the same positions, so simulation results are
bit-identical whichever backend runs (see benchmarks/bench_simkernel.py for
the speed comparison).
"""

import numpy as np

from ..errors import DomainError
from . import _pure

try:
    from . import _core

    HAVE_COMPILED = True
except ImportError:  # extension not built; pure fallback
    _core = None
    HAVE_COMPILED = False

DEFAULT_BACKEND = "compiled" if HAVE_COMPILED else "pure"


def backend_name() -> str:
    """Backend selected at import: "compiled" or "pure"."""
    return DEFAULT_BACKEND


def available_backends() -> tuple[str, ...]:
    return ("compiled", "pure") if HAVE_COMPILED else ("pure",)


def draw_count(n_candidates: int, votes: int) -> int:
    """Number of uniform draws one simulated tournament consumes."""
    total = 0
    k = n_candidates
    while k > 1:
        m = k // 2
        total += (k - 1) + m * votes
        k = m + (k & 1)
    return total


def simulate_batch(votes, p_accuracy, length_bias, lengths, uniforms, backend=None):
    """Simulate one tournament per row of ``lengths``.

    lengths[:, 0] is the unique ground-truth-valid candidate, the remaining
    columns are invalid candidates. ``uniforms`` must have exactly
    draw_count(N, votes) columns. Returns (valid_won bool array,
    winner_length float array), one entry per trial.
    """
    if backend is None:
        backend = DEFAULT_BACKEND
    if votes < 1 or votes % 2 == 0:
        raise DomainError(f"votes per match must be odd and >= 1, got {votes}")
    lengths = np.ascontiguousarray(lengths, dtype=np.float64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    if lengths.ndim != 2 or lengths.shape[1] < 1:
        raise DomainError("lengths must be a (trials, n_candidates) array")
    trials, n = lengths.shape
    expected = draw_count(n, votes)
    if uniforms.shape != (trials, expected):
        raise DomainError(
            f"uniforms must have shape ({trials}, {expected}), got {uniforms.shape}"
        )
    valid_won = np.zeros(trials, dtype=np.uint8)
    winner_length = np.zeros(trials, dtype=np.float64)
    if backend == "compiled":
        if not HAVE_COMPILED:
            raise DomainError("compiled kernel requested but not built")
        scratch = np.empty(n, dtype=np.int64)
        _core.simulate_batch_impl(
            votes, p_accuracy, length_bias, lengths, uniforms,
            valid_won, winner_length, scratch,
        )
    elif backend == "pure":
        _pure.simulate_batch_impl(
            votes, p_accuracy, length_bias, lengths, uniforms,
            valid_won, winner_length,
        )
    else:
        raise DomainError(f"unknown kernel backend {backend!r}")
    return valid_won.astype(bool), winner_length
