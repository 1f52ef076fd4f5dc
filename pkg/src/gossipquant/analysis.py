"""Closed-form convergence calculators for the quantized gossip protocol.

Pure functions of the problem constants: smoothness L, gradient noise
sigma2, gradient divergence delta2, the mixing value zeta, the quantizer
distortion factor omega, and the run shape (nodes, tau, eta, rounds).
They bound the mean squared gradient norm of the node-average model and
locate the communication-optimal quantization level count under a bit
budget.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "consensus_penalty",
    "lr_stability_cap",
    "gradient_norm_bound",
    "tuned_gradient_norm_bound",
    "BitBudgetBound",
    "bit_budget_bound",
    "optimal_level_count",
    "optimal_level_schedule",
    "variable_rate_bound",
    "ConstantEstimates",
    "estimate_constants",
]

LOG2_E = math.log2(math.e)


def consensus_penalty(zeta):
    """Error amplification from imperfect mixing: zeta^2/(1-zeta^2) + zeta/(1-zeta)^2.

    Zero for instant consensus; grows without bound as mixing stalls.
    """
    if not 0.0 <= zeta < 1.0:
        raise ValueError("zeta must lie in [0, 1); the penalty diverges at 1")
    return zeta * zeta / (1.0 - zeta * zeta) + zeta / (1.0 - zeta) ** 2


def lr_stability_cap(*, L, tau, n_nodes, omega, zeta):
    """Largest learning rate covered by the fixed-rate bound."""
    if L <= 0 or tau <= 0 or n_nodes < 1:
        raise ValueError("L, tau must be positive and n_nodes >= 1")
    a = consensus_penalty(zeta)
    n = n_nodes
    root = math.sqrt((omega + n) ** 2 + 4.0 * n * n * (2.0 * a + 1.0))
    return (root - omega - n) / (2.0 * n * L * tau * (2.0 * a + 1.0))


def gradient_norm_bound(*, f_gap, eta, rounds, tau, L, sigma2, delta2, n_nodes, omega, zeta, warn=True):
    """Bound on the round-averaged squared gradient norm at a fixed rate.

    Evaluates even when ``eta`` exceeds the stability cap (with a warning)
    so misconfigured runs can still be inspected.
    """
    if warn and eta > lr_stability_cap(L=L, tau=tau, n_nodes=n_nodes, omega=omega, zeta=zeta):
        warnings.warn("eta exceeds the stability cap; the bound is not guaranteed", stacklevel=2)
    a = consensus_penalty(zeta)
    return (
        2.0 * f_gap / (eta * rounds * tau)
        + L * eta * tau * sigma2 * (omega + n_nodes) / n_nodes
        + (2.0 * a + 2.0 / 3.0) * L * L * eta * eta * sigma2 * tau * tau
        + delta2
    )


def tuned_gradient_norm_bound(*, f_gap, L, tau, sigma2, d, s, n_nodes, zeta, rounds):
    """Fixed-rate bound with eta = 1/(L sqrt(K)) and the fitted-codebook distortion."""
    rk = math.sqrt(rounds)
    a = consensus_penalty(zeta)
    return (
        2.0 * L * f_gap / (tau * rk)
        + tau * sigma2 * d / (12.0 * s * s * n_nodes * rk)
        + tau * sigma2 / rk
        + (2.0 * a + 2.0 / 3.0) * sigma2 * tau * tau / rounds
    )


@dataclass(frozen=True)
class BitBudgetBound:
    """Bound on the budget-averaged squared gradient norm as a function of s.

    ``log_coeff`` multiplies log2(2s) (more levels cost bits per round),
    ``quantization_coeff`` multiplies 1/s^2 (fewer levels cost distortion),
    and ``constant`` gathers the s-independent terms.
    """

    log_coeff: float
    quantization_coeff: float
    constant: float

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        out = self.log_coeff * np.log2(2.0 * s) + self.quantization_coeff / (s * s) + self.constant
        return float(out) if out.ndim == 0 else out


def bit_budget_bound(*, f_gap, d, eta, tau, budget_bits, L, sigma2, delta2, n_nodes, zeta):
    """Coefficients of the level-count trade-off under a per-edge bit budget.

    Uses the smooth ``log2(2s)`` upper bound for the per-payload index
    cost; the exact ceiling form is what the bit ledger accounts.
    """
    if budget_bits <= 0:
        raise ValueError("budget_bits must be positive")
    a = consensus_penalty(zeta)
    log_coeff = 4.0 * f_gap * d / (eta * tau * budget_bits)
    quantization_coeff = L * eta * tau * sigma2 * d / (12.0 * n_nodes)
    constant = (
        (log_coeff / d) * (d + 32.0)
        + (2.0 * a + 2.0 / 3.0) * L * L * eta * eta * sigma2 * tau * tau
        + delta2
        + L * eta * tau * sigma2
    )
    return BitBudgetBound(log_coeff, quantization_coeff, constant)


def optimal_level_count(*, L, eta, tau, sigma2, budget_bits, n_nodes, f_gap):
    """Closed-form level count minimizing the budgeted trade-off."""
    if f_gap <= 0:
        raise ValueError("f_gap must be positive")
    numerator = L * eta * eta * tau * tau * sigma2 * budget_bits
    denominator = 24.0 * n_nodes * n_nodes * LOG2_E * f_gap
    return math.sqrt(numerator / denominator)


def optimal_level_schedule(*, L, eta, tau, sigma2, interval_bits, n_nodes, f_current, f_floor=0.0):
    """Per-round optimal level count given the current loss.

    Same closed form with the per-interval budget and the loss gap at the
    current round; with a zero floor it reduces to scaling the initial
    level count by the root of the loss decay ratio.
    """
    gap = f_current - f_floor
    return optimal_level_count(
        L=L, eta=eta, tau=tau, sigma2=sigma2, budget_bits=interval_bits,
        n_nodes=n_nodes, f_gap=gap,
    )


def variable_rate_bound(etas, levels, *, f_gap, L, tau, sigma2, d, n_nodes, zeta, warn=True):
    """Bound on the eta-weighted squared gradient norm under per-round schedules.

    ``etas`` and ``levels`` give the learning rate and level count per
    round. Each rate should satisfy the per-round stability cap with that
    round's distortion factor; violations warn but still evaluate.
    """
    etas = np.asarray(etas, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    if etas.size == 0 or etas.shape != levels.shape:
        raise ValueError("etas and levels must be nonempty and equal length")
    if warn:
        for eta_k, s_k in zip(etas, levels):
            omega_k = d / (12.0 * s_k * s_k)
            if eta_k > lr_stability_cap(L=L, tau=tau, n_nodes=n_nodes, omega=omega_k, zeta=zeta):
                warnings.warn("a per-round eta exceeds its stability cap", stacklevel=2)
                break
    a = consensus_penalty(zeta)
    sum_eta = etas.sum()
    sum_eta2 = (etas**2).sum()
    sum_eta3 = (etas**3).sum()
    sum_eta2_dist = (etas**2 * (d / (12.0 * levels**2))).sum()
    return (
        2.0 * f_gap / (tau * sum_eta)
        + L * tau * sigma2 * sum_eta2_dist / (n_nodes * sum_eta)
        + L * tau * sigma2 * sum_eta2 / sum_eta
        + (2.0 * a + 2.0 / 3.0) * L * L * tau * tau * sigma2 * sum_eta3 / sum_eta
    )


@dataclass(frozen=True)
class ConstantEstimates:
    """Empirical stand-ins for the analysis constants."""

    L: float
    sigma2: float
    delta2: float


def estimate_constants(model, shards, snapshots, *, batch_size=None, n_draws=50, rng=None):
    """Estimate smoothness, gradient noise, and gradient divergence from data.

    Smoothness is the largest gradient-difference ratio over snapshot
    pairs (identical snapshots are skipped). Gradient noise is the mean
    squared deviation of minibatch gradients from their full-shard
    gradient; divergence is the mean squared distance between per-shard
    and global gradients at the snapshots.
    """
    snapshots = [np.asarray(x, dtype=np.float64) for x in snapshots]
    if len(snapshots) < 2:
        raise ValueError("need at least two parameter snapshots")
    rng = rng or np.random.default_rng(0)
    total = sum(shard.n for shard in shards)

    def global_grad(x):
        return sum(shard.n / total * model.gradient(x, shard) for shard in shards)

    L_hat = 0.0
    grads = [global_grad(x) for x in snapshots]
    for i in range(len(snapshots)):
        for j in range(i + 1, len(snapshots)):
            dx = float(np.linalg.norm(snapshots[i] - snapshots[j]))
            if dx == 0.0:
                continue
            L_hat = max(L_hat, float(np.linalg.norm(grads[i] - grads[j])) / dx)

    from .learning import minibatch_gradient

    noise_terms = []
    divergence_terms = []
    for x, g_global in zip(snapshots, grads):
        for shard in shards:
            g_full = model.gradient(x, shard)
            divergence_terms.append(float(np.sum((g_full - g_global) ** 2)))
            b = batch_size or max(1, shard.n // 4)
            b = min(b, shard.n)
            if b == shard.n:
                noise_terms.append(0.0)
                continue
            for _ in range(n_draws):
                g_batch = minibatch_gradient(model, x, shard, b, rng)
                noise_terms.append(float(np.sum((g_batch - g_full) ** 2)))
    return ConstantEstimates(
        L=L_hat,
        sigma2=float(np.mean(noise_terms)) if noise_terms else 0.0,
        delta2=float(np.mean(divergence_terms)) if divergence_terms else 0.0,
    )
