"""Quantization distortion: Monte Carlo measurement and closed-form bounds."""

import math

import numpy as np

from .vector import dequantize, natural_level_table, qsgd_level_table, quantize_vector

__all__ = ["empirical_distortion", "empirical_scalar_mse", "distortion_bound", "level_ratio"]


def empirical_distortion(kind, table, v, trials, rng=None):
    """Monte Carlo average of the squared reconstruction error of one vector.

    Deterministic kinds need a single trial; stochastic kinds average the
    squared error over ``trials`` independent quantizations.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    v = np.asarray(v, dtype=np.float64).ravel()
    total = 0.0
    for _ in range(trials):
        q = quantize_vector(v, kind, table=table, rng=rng)
        table_used = _decode_table(kind, table)
        err = dequantize(q, table_used) - v
        total += float(err @ err)
    return total / trials


def _decode_table(kind, table):
    if kind.name in ("lloyd_max", "alq"):
        return table
    if kind.name == "qsgd":
        return qsgd_level_table(kind.s)
    if kind.name == "natural":
        return natural_level_table(kind.s)
    return None


def empirical_scalar_mse(table, rs):
    """Mean squared error of deterministically quantizing scalars in [0, 1]."""
    rs = np.asarray(rs, dtype=np.float64).ravel()
    err = table.levels[table.assign(rs)] - rs
    return float(np.mean(err * err))


def level_ratio(levels):
    """Largest ratio between consecutive strictly positive levels.

    Zero levels are excluded because the ratio is undefined there.
    Returns 1.0 when fewer than two positive levels exist.
    """
    positive = np.asarray(levels, dtype=np.float64)
    positive = positive[positive > 0]
    if positive.size < 2:
        return 1.0
    return float(np.max(positive[1:] / positive[:-1]))


def distortion_bound(kind, d=None, s=None, table=None):
    """Normalized worst-case distortion (squared error over squared norm).

    Family formulas: fitted codebooks obey ``d / (12 s^2)`` given the
    dimension, or the ratio form ``((rho - 1) / (rho + 1))^2`` given the
    fitted table, with ``rho`` the largest positive-level ratio. The
    uniform stochastic ladder obeys ``min(d/s^2, sqrt(d)/s)``; the
    power-of-two ladder ``1/8 + min(sqrt(d)/2^(s-1), d/2^(2(s-1)))``; the
    two-point ALQ rounding ``(rho - 1)^2 / (4 rho)``. Lossless is 0.
    """
    name = kind.name if hasattr(kind, "name") else kind
    if name == "lossless":
        return 0.0
    if name == "lloyd_max":
        if table is not None:
            rho = level_ratio(table.levels)
            return ((rho - 1.0) / (rho + 1.0)) ** 2
        _need(d, s)
        return d / (12.0 * s * s)
    if name == "qsgd":
        _need(d, s)
        return min(d / (s * s), math.sqrt(d) / s)
    if name == "natural":
        _need(d, s)
        return 0.125 + min(math.sqrt(d) / 2 ** (s - 1), d / 2 ** (2 * (s - 1)))
    if name == "alq":
        if table is None:
            raise ValueError("alq bound needs the fitted level ladder")
        rho = level_ratio(table.levels)
        return (rho - 1.0) ** 2 / (4.0 * rho)
    raise ValueError(f"unknown quantizer kind {name!r}")


def _need(d, s):
    if d is None or s is None:
        raise ValueError("this bound needs both d and s")
    if d < 1 or s < 1:
        raise ValueError("d and s must be >= 1")
