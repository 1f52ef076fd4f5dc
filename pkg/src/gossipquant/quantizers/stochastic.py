"""Unbiased stochastic scalar quantizers (uniform and power-of-two ladders).

Both round a value in [0, 1] to one of the two neighboring ladder points,
with probabilities chosen so the expectation equals the input.
"""

import numpy as np

__all__ = ["stochastic_round_indices", "qsgd_scalar", "natural_scalar"]


def stochastic_round_indices(r, ladder, rng):
    """Round each value to a neighboring ladder index, unbiasedly.

    For ``r`` between ``ladder[m]`` and ``ladder[m+1]`` the upper index is
    chosen with probability ``(r - ladder[m]) / (ladder[m+1] - ladder[m])``.
    Values sitting exactly on a ladder point are kept deterministically.
    """
    r = np.atleast_1d(np.asarray(r, dtype=np.float64))
    lower = np.clip(np.searchsorted(ladder, r, side="right") - 1, 0, ladder.size - 2)
    width = ladder[lower + 1] - ladder[lower]
    p_up = (r - ladder[lower]) / width
    return lower + (rng.random(r.shape) < p_up).astype(np.int64)


def _check_scalar(r, s):
    if not np.isfinite(r) or r < 0.0 or r > 1.0:
        raise ValueError("r must lie in [0, 1]")
    if s < 1:
        raise ValueError("s must be >= 1")


def qsgd_scalar(r, s, rng):
    """Stochastic uniform quantization of ``r`` onto the grid j/s.

    For ``r`` in (j/s, (j+1)/s] returns j/s with probability j+1-sr and
    (j+1)/s otherwise, so the expectation is exactly ``r``.
    """
    _check_scalar(r, s)
    ladder = np.linspace(0.0, 1.0, s + 1)
    return float(ladder[stochastic_round_indices(r, ladder, rng)[0]])


def natural_scalar(r, s, rng):
    """Stochastic quantization of ``r`` onto 0 and the powers of two down to 2^(1-s).

    Within each ladder interval the two endpoints are chosen with linear
    interpolation weights, so the expectation is exactly ``r``.
    """
    _check_scalar(r, s)
    ladder = np.concatenate(([0.0], np.ldexp(1.0, np.arange(1 - s, 1))))
    return float(ladder[stochastic_round_indices(r, ladder, rng)[0]])
