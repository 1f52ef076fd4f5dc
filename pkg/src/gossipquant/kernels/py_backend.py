"""Pure-numpy implementations of the codebook hot kernels.

Used when the compiled extension is unavailable or explicitly disabled via
``GOSSIPQUANT_PURE_PYTHON=1``. Mirrors the semantics of the compiled
backend exactly: bins are half-open on the left, ``(b[j-1], b[j]]``, with
zero assigned to the first bin.
"""

import numpy as np


def assign_bins(values, boundaries):
    """Map each value in [0, 1] to its bin index under ``boundaries``.

    Returns int64 indices in ``[0, len(boundaries) - 2]``.
    """
    idx = np.searchsorted(boundaries, values, side="left") - 1
    return np.clip(idx, 0, len(boundaries) - 2).astype(np.int64)


def fit_codebook(samples, weights, s, tol, max_iter):
    """Alternate centroid and midpoint updates until the weighted MSE stalls.

    ``samples`` and ``weights`` are 1-D float64 arrays; samples lie in
    [0, 1]. Starts from uniform boundaries. Each iteration recomputes the
    levels as weighted bin means (empty bins fall back to the bin
    midpoint), then moves every interior boundary to the midpoint of its
    adjacent levels. Stops when the relative decrease of the weighted MSE
    drops below ``tol``.

    Returns ``(levels, boundaries, history, converged)`` where ``history``
    holds the MSE after each iteration.
    """
    total_w = weights.sum()
    boundaries = np.linspace(0.0, 1.0, s + 1)
    labels = assign_bins(samples, boundaries)
    history = []
    converged = False
    for _ in range(max_iter):
        bin_w = np.bincount(labels, weights=weights, minlength=s)
        bin_wx = np.bincount(labels, weights=weights * samples, minlength=s)
        midpoints = 0.5 * (boundaries[:-1] + boundaries[1:])
        occupied = bin_w > 0
        levels = np.where(occupied, np.divide(bin_wx, bin_w, out=np.zeros(s), where=occupied), midpoints)
        boundaries = np.concatenate(([0.0], 0.5 * (levels[:-1] + levels[1:]), [1.0]))
        labels = assign_bins(samples, boundaries)
        err = samples - levels[labels]
        mse = float(np.sum(weights * err * err) / total_w)
        history.append(mse)
        if len(history) >= 2:
            prev = history[-2]
            if prev == 0.0 or (prev - mse) <= tol * prev:
                converged = True
                break
    return levels, boundaries, np.asarray(history), converged
