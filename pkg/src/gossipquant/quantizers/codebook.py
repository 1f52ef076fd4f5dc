"""Codebook fitting for scalar quantizers on [0, 1].

A codebook is a sorted list of representation levels plus the bin
boundaries that route an input to its level. The optimal (minimum-MSE)
codebook for a given input distribution satisfies two conditions at once:
every level is the centroid of its bin, and every interior boundary is the
midpoint of its two neighboring levels. ``fit_lloyd_max`` alternates the
two updates on an empirical sample set until the distortion stalls; the
coordinate-descent step used by the ALQ quantizer moves one ladder of
levels toward the same stationarity condition using a CDF instead.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .. import kernels

__all__ = ["LevelTable", "EmpiricalCdf", "fit_lloyd_max", "quantize_scalar_lm", "alq_coordinate_step"]


@dataclass(frozen=True)
class LevelTable:
    """Fitted quantization levels and bin boundaries for one codebook.

    ``levels`` has one entry per bin; ``boundaries`` has one more, with
    fixed endpoints 0 and 1. Level ``j`` belongs to the half-open bin
    ``(boundaries[j], boundaries[j+1]]``, except that the first level may
    sit on 0.
    """

    levels: np.ndarray
    boundaries: np.ndarray
    fit_distortion_history: np.ndarray | None = field(default=None, compare=False, repr=False)
    fit_converged: bool | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        boundaries = np.asarray(self.boundaries, dtype=np.float64)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "boundaries", boundaries)
        if levels.ndim != 1 or levels.size < 1:
            raise ValueError("levels must be a nonempty 1-D array")
        if boundaries.shape != (levels.size + 1,):
            raise ValueError("boundaries must have exactly one more entry than levels")
        if boundaries[0] != 0.0 or boundaries[-1] != 1.0:
            raise ValueError("boundaries must start at 0 and end at 1")
        if np.any(np.diff(levels) <= 0) or np.any(np.diff(boundaries) <= 0):
            raise ValueError("levels and boundaries must be strictly increasing")
        if levels[0] < boundaries[0] or np.any(levels[1:] <= boundaries[1:-1]) or np.any(levels > boundaries[1:]):
            raise ValueError("each level must lie inside its bin")

    @property
    def s(self):
        return self.levels.size

    @property
    def table_id(self):
        return hashlib.sha1(self.levels.tobytes()).hexdigest()[:16]

    @classmethod
    def uniform(cls, s):
        """Bin midpoints of the uniform grid; the fixed point for a flat density."""
        if s < 1:
            raise ValueError("s must be >= 1")
        boundaries = np.linspace(0.0, 1.0, s + 1)
        return cls(0.5 * (boundaries[:-1] + boundaries[1:]), boundaries)

    @classmethod
    def from_levels(cls, levels):
        """Build a table around given sorted levels with midpoint boundaries."""
        levels = np.asarray(levels, dtype=np.float64)
        inner = 0.5 * (levels[:-1] + levels[1:])
        return cls(levels, np.concatenate(([0.0], inner, [1.0])))

    def assign(self, r):
        """Bin indices for values in [0, 1]; no input validation."""
        return kernels.assign_bins(np.atleast_1d(np.asarray(r, dtype=np.float64)), self.boundaries)


def _check_unit_interval(values, name):
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} must be finite")
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return values


def fit_lloyd_max(samples, s, *, weights=None, tol=1e-6, max_iter=100):
    """Fit an ``s``-level codebook to empirical samples in [0, 1].

    Iterates weighted bin means against midpoint boundaries starting from
    a uniform grid, which makes the weighted MSE non-increasing across
    iterations. An empty bin keeps its midpoint as the level so the table
    stays ordered even when ``s`` exceeds the number of distinct samples.
    Stops once the relative MSE decrease drops below ``tol``, or after
    ``max_iter`` iterations.

    The returned table carries ``fit_distortion_history`` (MSE per
    iteration) and ``fit_converged`` diagnostics.
    """
    samples = _check_unit_interval(np.ravel(samples), "samples")
    if samples.size == 0:
        raise ValueError("samples must be nonempty")
    if s < 1:
        raise ValueError("s must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if weights is None:
        weights = np.ones_like(samples)
    else:
        weights = np.asarray(weights, dtype=np.float64).ravel()
        if weights.shape != samples.shape:
            raise ValueError("weights must match samples in length")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("weights must be finite, nonnegative, and not all zero")

    levels, boundaries, history, converged = kernels.fit_codebook(samples, weights, int(s), float(tol), int(max_iter))
    return LevelTable(levels, boundaries, fit_distortion_history=history, fit_converged=converged)


def quantize_scalar_lm(r, table):
    """Deterministic level index for a scalar in [0, 1].

    Returns the zero-based bin index ``j`` with ``r`` in
    ``(boundaries[j], boundaries[j+1]]``; zero maps to the first bin.
    """
    if not np.isfinite(r) or r < 0.0 or r > 1.0:
        raise ValueError("r must lie in [0, 1]")
    return int(table.assign(r)[0])


class EmpiricalCdf:
    """Step CDF of a weighted sample set on [0, 1].

    Provides exact Stieltjes integration against the step function, which
    is what the ALQ coordinate-descent update needs when the gradient
    distribution is only known through samples.
    """

    def __init__(self, samples, weights=None):
        samples = _check_unit_interval(np.ravel(samples), "samples")
        if samples.size == 0:
            raise ValueError("samples must be nonempty")
        if weights is None:
            weights = np.ones_like(samples)
        else:
            weights = np.asarray(weights, dtype=np.float64).ravel()
        order = np.argsort(samples, kind="stable")
        self.points = samples[order]
        w = weights[order]
        self.weights = w / w.sum()
        self._cum = np.cumsum(self.weights)

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        idx = np.searchsorted(self.points, r, side="right")
        out = np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)
        return float(out) if out.ndim == 0 else out

    def ramp_integral(self, lo, hi):
        """Exact value of the integral of (r - lo) / (hi - lo) against the CDF over [lo, hi]."""
        if hi <= lo:
            return 0.0
        i0 = np.searchsorted(self.points, lo, side="left")
        i1 = np.searchsorted(self.points, hi, side="right")
        pts = self.points[i0:i1]
        return float(np.sum(self.weights[i0:i1] * (pts - lo)) / (hi - lo))


def _cdf_inverse(cdf, p, tol=1e-9):
    """Smallest r in [0, 1] with cdf(r) >= p, by bisection."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) >= p:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _ramp_integral_quadrature(cdf, lo, hi, order=64):
    # integrate (r-lo)/(hi-lo) dPhi by parts: Phi(hi) - mean of Phi over [lo, hi]
    nodes, w = np.polynomial.legendre.leggauss(order)
    r = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    mean_phi = 0.5 * float(np.sum(w * np.asarray(cdf(r), dtype=np.float64)))
    return float(cdf(hi)) - mean_phi


def alq_coordinate_step(table, cdf):
    """One coordinate-descent pass over the interior levels of a ladder.

    Every interior level moves to the inverse CDF of the mass assigned to
    it by linear interpolation between its neighbors, evaluated from the
    neighbors' current positions. ``cdf`` is either an ``EmpiricalCdf``
    (integrated exactly over its atoms) or any nondecreasing callable with
    cdf(0) = 0 and cdf(1) = 1 (integrated by fixed-order quadrature). The
    inverse is found by bisection to 1e-9.
    """
    old = table.levels
    new = old.copy()
    for j in range(1, old.size - 1):
        lo, hi = old[j - 1], old[j + 1]
        if hi <= lo:
            continue
        if isinstance(cdf, EmpiricalCdf):
            integral = cdf.ramp_integral(lo, hi)
        else:
            integral = _ramp_integral_quadrature(cdf, lo, hi)
        target = float(cdf(hi)) - integral
        new[j] = _cdf_inverse(cdf, target)
    # empirical CDFs can collide adjacent levels; keep the ladder strictly ordered
    for j in range(1, new.size):
        if new[j] <= new[j - 1]:
            new[j] = min(1.0, np.nextafter(new[j - 1], 2.0))
    return LevelTable.from_levels(new)
