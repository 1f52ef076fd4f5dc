"""Arithmetic and consistency checks for the convergence calculators."""

import numpy as np
import pytest

from gossipquant.analysis import (
    ConstantEstimates,
    bit_budget_bound,
    consensus_penalty,
    estimate_constants,
    gradient_norm_bound,
    lr_stability_cap,
    optimal_level_count,
    optimal_level_schedule,
    tuned_gradient_norm_bound,
    variable_rate_bound,
)
from gossipquant.learning import Dataset, Model, gen_synthetic, partition_noniid


class TestConsensusPenalty:
    def test_perfect_mixing_is_zero(self):
        assert consensus_penalty(0.0) == 0.0

    def test_half(self):
        assert consensus_penalty(0.5) == pytest.approx(0.25 / 0.75 + 0.5 / 0.25, abs=1e-12)

    def test_diverges_near_one(self):
        assert consensus_penalty(1 - 1e-7) > 1e12

    def test_rejects_one_and_above(self):
        with pytest.raises(ValueError):
            consensus_penalty(1.0)

    def test_pure_and_repeatable(self):
        assert consensus_penalty(0.3) == consensus_penalty(0.3)


class TestLrCap:
    def test_no_distortion_perfect_mixing_closed_form(self):
        # node count cancels: cap = (sqrt(5) - 1) / (2 L tau)
        for n in (1, 4, 10):
            cap = lr_stability_cap(L=2.0, tau=3, n_nodes=n, omega=0.0, zeta=0.0)
            assert cap == pytest.approx((np.sqrt(5) - 1) / (2 * 2.0 * 3), rel=1e-12)

    def test_decreasing_in_distortion(self):
        caps = [lr_stability_cap(L=1, tau=4, n_nodes=10, omega=w, zeta=0.2) for w in np.linspace(0, 5, 20)]
        assert all(a > b for a, b in zip(caps, caps[1:]))

    def test_vanishes_as_mixing_stalls(self):
        assert lr_stability_cap(L=1, tau=4, n_nodes=10, omega=0.1, zeta=1 - 1e-9) < 1e-6


class TestGradientNormBound:
    EX = dict(f_gap=1.0, eta=0.1, rounds=100, tau=4, L=1.0, sigma2=1.0,
              delta2=0.0, n_nodes=10, omega=0.0, zeta=0.0)

    def test_worked_example(self):
        val = gradient_norm_bound(**self.EX, warn=False)
        assert val == pytest.approx(0.5567, abs=1e-4)

    def test_large_round_count_limit(self):
        limit = gradient_norm_bound(**{**self.EX, "rounds": 10**12}, warn=False)
        expected = 0.1 * 4 * (0 + 10) / 10 + (2 / 3) * 0.01 * 16
        assert limit == pytest.approx(expected, abs=1e-9)

    def test_noise_free_case(self):
        val = gradient_norm_bound(**{**self.EX, "sigma2": 0.0}, warn=False)
        assert val == pytest.approx(2 * 1.0 / (0.1 * 100 * 4), abs=1e-12)

    def test_monotone_in_noise_terms(self):
        base = gradient_norm_bound(**self.EX, warn=False)
        for key, values in [("omega", [0.5, 1, 2]), ("sigma2", [2, 3]),
                            ("delta2", [0.1, 0.2]), ("zeta", [0.3, 0.6])]:
            prev = base
            for v in values:
                cur = gradient_norm_bound(**{**self.EX, key: v}, warn=False)
                assert cur > prev
                prev = cur

    def test_warns_above_cap(self):
        args = {**self.EX, "eta": 10.0}
        with pytest.warns(UserWarning):
            gradient_norm_bound(**args)


class TestTunedBound:
    EX = dict(f_gap=1.0, L=1.0, tau=4, sigma2=1.0, d=100, s=10, n_nodes=10, zeta=0.0, rounds=100)

    def test_worked_example(self):
        assert tuned_gradient_norm_bound(**self.EX) == pytest.approx(0.56, abs=1e-4)

    def test_sqrt_round_scaling(self):
        a = tuned_gradient_norm_bound(**self.EX)
        b = tuned_gradient_norm_bound(**{**self.EX, "rounds": 400})
        # the 1/sqrt(K) terms halve; the 1/K term shrinks faster
        sqrt_terms = a - (2 / 3) * 16 / 100
        assert b <= sqrt_terms / 2 + (2 / 3) * 16 / 400 + 1e-12

    def test_fine_quantization_recovers_unquantized(self):
        coarse = tuned_gradient_norm_bound(**self.EX)
        fine = tuned_gradient_norm_bound(**{**self.EX, "s": 10**9})
        no_quant = coarse - 4 * 100 / (12 * 100 * 10 * 10)
        assert fine == pytest.approx(no_quant, rel=1e-9)


class TestBitBudgetBound:
    EX = dict(f_gap=1.0, d=100, eta=0.1, tau=4, budget_bits=1e6, L=1.0,
              sigma2=1.0, delta2=0.0, n_nodes=10, zeta=0.0)

    def test_coefficients(self):
        bound = bit_budget_bound(**self.EX)
        assert bound.log_coeff == pytest.approx(1e-3, rel=1e-12)
        assert bound.quantization_coeff == pytest.approx(1 / 3, rel=1e-9)
        expected_const = (1e-3 / 100) * 132 + (2 / 3) * 0.01 * 16 + 0.0 + 0.4
        assert bound.constant == pytest.approx(expected_const, rel=1e-9)

    def test_unimodal_in_s(self):
        bound = bit_budget_bound(**self.EX)
        grid = np.logspace(0, 3, 400)
        vals = bound(grid)
        k = int(np.argmin(vals))
        assert np.all(np.diff(vals[: k + 1]) <= 1e-15)
        assert np.all(np.diff(vals[k:]) >= -1e-15)

    def test_infinite_budget_removes_log_penalty(self):
        bound = bit_budget_bound(**{**self.EX, "budget_bits": 1e18})
        grid = np.logspace(0, 6, 200)
        vals = bound(grid)
        assert np.all(np.diff(vals) < 0)


class TestOptimalLevels:
    EX = dict(L=1.0, eta=0.1, tau=4, sigma2=1.0, budget_bits=1e6, n_nodes=10, f_gap=1.0)

    def test_worked_example(self):
        assert optimal_level_count(**self.EX) == pytest.approx(6.80, abs=0.01)

    def test_quadrupled_gap_halves_levels(self):
        s1 = optimal_level_count(**self.EX)
        s2 = optimal_level_count(**{**self.EX, "f_gap": 4.0})
        assert s2 == pytest.approx(s1 / 2, rel=1e-12)

    def test_rejects_nonpositive_gap(self):
        with pytest.raises(ValueError):
            optimal_level_count(**{**self.EX, "f_gap": 0.0})

    def test_schedule_ratio_consistency(self):
        # the per-round form scales with the root of the loss decay, so a
        # quartered loss doubles the level count
        s1 = optimal_level_schedule(L=1, eta=0.1, tau=4, sigma2=1.0,
                                    interval_bits=1e4, n_nodes=10, f_current=0.9)
        again = optimal_level_schedule(L=1, eta=0.1, tau=4, sigma2=1.0,
                                       interval_bits=1e4, n_nodes=10, f_current=0.9)
        assert s1 == again
        quarter = optimal_level_schedule(L=1, eta=0.1, tau=4, sigma2=1.0,
                                         interval_bits=1e4, n_nodes=10, f_current=0.9 / 4)
        assert quarter == pytest.approx(2 * s1, rel=1e-12)

    def test_matches_grid_argmin_for_single_node(self):
        # the closed form is the exact stationary point of the budget bound
        # when there is one node; at n nodes it sits sqrt(n) below the
        # argmin of the stated bound (the two forms agree only at n=1)
        args = dict(f_gap=0.5, d=64, eta=0.05, tau=2, budget_bits=2e5, L=2.0,
                    sigma2=1.5, delta2=0.0, n_nodes=1, zeta=0.0)
        bound = bit_budget_bound(**args)
        grid = np.logspace(-0.5, 2.5, 6000)
        s_grid = grid[int(np.argmin(bound(grid)))]
        s_closed = optimal_level_count(L=2.0, eta=0.05, tau=2, sigma2=1.5,
                                       budget_bits=2e5, n_nodes=1, f_gap=0.5)
        step = grid[1] / grid[0]
        assert s_grid / step <= s_closed <= s_grid * step

    def test_multi_node_offset_is_sqrt_n(self):
        args = dict(f_gap=1.0, d=100, eta=0.1, tau=4, budget_bits=1e6, L=1.0,
                    sigma2=1.0, delta2=0.0, n_nodes=10, zeta=0.0)
        bound = bit_budget_bound(**args)
        grid = np.logspace(-0.5, 3.5, 8000)
        s_grid = grid[int(np.argmin(bound(grid)))]
        s_closed = optimal_level_count(**{k: args[k] for k in
                                          ("L", "eta", "tau", "sigma2", "budget_bits", "n_nodes", "f_gap")})
        assert s_grid == pytest.approx(s_closed * np.sqrt(10), rel=0.01)


class TestVariableRateBound:
    EX = dict(f_gap=1.0, L=1.0, tau=4, sigma2=1.0, d=100, n_nodes=10, zeta=0.0)

    def test_constant_schedules_match_fixed_formula(self):
        K, eta, s = 100, 0.1, 10
        varying = variable_rate_bound([eta] * K, [s] * K, **self.EX, warn=False)
        fixed = gradient_norm_bound(
            f_gap=1.0, eta=eta, rounds=K, tau=4, L=1.0, sigma2=1.0, delta2=0.0,
            n_nodes=10, omega=100 / (12 * s * s), zeta=0.0, warn=False,
        )
        assert varying == pytest.approx(fixed, abs=1e-12)

    def test_decaying_rate_shrinks_cubic_term(self):
        K = 40
        flat = np.full(K, 0.1)
        decayed = 0.1 * 0.5 ** (np.arange(K) // 10)
        s = np.full(K, 8)
        # compare the cubic contribution in isolation via a zeta that
        # amplifies it
        args = {**self.EX, "zeta": 0.9}
        flat_val = variable_rate_bound(flat, s, **args, warn=False)
        dec_val = variable_rate_bound(decayed, s, **args, warn=False)
        cubic = lambda e: (e**3).sum() / e.sum()
        assert cubic(decayed) < cubic(flat)
        assert dec_val != flat_val

    def test_two_round_hand_arithmetic(self):
        etas, levels = [0.1, 0.05], [4, 8]
        val = variable_rate_bound(etas, levels, **self.EX, warn=False)
        se = 0.15
        se2 = 0.1**2 + 0.05**2
        se3 = 0.1**3 + 0.05**3
        sed = 0.1**2 * 100 / (12 * 16) + 0.05**2 * 100 / (12 * 64)
        expected = (2 * 1.0 / (4 * se)
                    + 1.0 * 4 * 1.0 * sed / (10 * se)
                    + 1.0 * 4 * 1.0 * se2 / se
                    + (2 / 3) * 1.0 * 16 * 1.0 * se3 / se)
        assert val == pytest.approx(expected, rel=1e-12)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            variable_rate_bound([], [], **self.EX)

    def test_warns_when_rate_exceeds_cap(self):
        with pytest.warns(UserWarning):
            variable_rate_bound([5.0], [4], **self.EX)


class QuadraticModel:
    """Duck-typed stand-in with loss 0.5 x'Hx - b'x per shard."""

    def __init__(self, H):
        self.H = H
        self.d = H.shape[0]

    def gradient(self, params, data):
        return self.H @ params - data.features[0]

    def loss(self, params, data):
        return float(0.5 * params @ self.H @ params - data.features[0] @ params)


class TestEstimateConstants:
    def test_quadratic_smoothness_recovered(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((4, 4))
        H = A @ A.T
        c = float(np.linalg.eigvalsh(H).max())
        model = QuadraticModel(H)
        shards = [Dataset(np.zeros((1, 4)), np.zeros(1, int), 1)]
        snaps = [rng.standard_normal(4) for _ in range(6)]
        est = estimate_constants(model, shards, snaps, batch_size=1)
        assert est.L <= c + 1e-6
        assert est.L >= 0.2 * c

    def test_full_batch_noise_is_zero(self):
        data = gen_synthetic(40, 3, 2, 2.0, seed=0)
        model = Model("logistic", 3, 2)
        est = estimate_constants(model, [data], [np.zeros(model.d), np.ones(model.d)],
                                 batch_size=data.n)
        assert est.sigma2 == 0.0

    def test_identical_shards_have_zero_divergence(self):
        data = gen_synthetic(30, 3, 2, 2.0, seed=1)
        model = Model("logistic", 3, 2)
        est = estimate_constants(model, [data, data], [np.zeros(model.d), np.ones(model.d)],
                                 batch_size=data.n)
        assert est.delta2 == pytest.approx(0.0, abs=1e-24)

    def test_identical_snapshots_skipped(self):
        data = gen_synthetic(30, 3, 2, 2.0, seed=2)
        model = Model("logistic", 3, 2)
        x = np.random.default_rng(3).standard_normal(model.d)
        est = estimate_constants(model, [data], [x, x.copy(), np.zeros(model.d)],
                                 batch_size=data.n)
        assert np.isfinite(est.L) and est.L > 0


def test_soft_empirical_soundness_logged():
    """Informational: measured gradient norms vs the bound with estimated constants."""
    data = gen_synthetic(200, 4, 2, 3.0, seed=0)
    shards = partition_noniid(data, 4, 0.5, seed=0)
    model = Model("logistic", 4, 2)
    x = np.zeros(model.d)
    snaps, grad_norms = [], []
    eta, tau, K = 0.05, 2, 30
    total = sum(s.n for s in shards)
    for _ in range(K):
        g = sum(s.n / total * model.gradient(x, s) for s in shards)
        grad_norms.append(float(g @ g))
        snaps.append(x.copy())
        x = x - eta * g
    est = estimate_constants(model, shards, snaps[:: max(1, K // 5)], batch_size=8,
                             n_draws=20, rng=np.random.default_rng(1))
    f_gap = model.loss(snaps[0], data)
    bound = gradient_norm_bound(
        f_gap=f_gap, eta=eta, rounds=K, tau=tau, L=max(est.L, 1e-9),
        sigma2=est.sigma2, delta2=est.delta2, n_nodes=4, omega=0.0, zeta=0.0, warn=False,
    )
    measured = float(np.mean(grad_norms))
    print(f"soft check: measured mean grad norm {measured:.4f} vs bound {bound:.4f} "
          f"(holds: {measured <= bound})")
