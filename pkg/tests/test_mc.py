import numpy as np
import pytest

from itslab import (
    ModelConfig,
    RewardSpec,
    SamplerConfig,
    classify_k_monotonicity,
    delta,
    delta_k_curve,
    delta_t_curve,
    delta_x,
    stream,
)
from itslab.mc import _select_values
from itslab.posterior import PredictiveMoments

FIG_LIKE = dict(S=1.0, sigma=1e-4, gamma=1e-3)


class TestSelectValues:
    def test_exchange_symmetry_exact_without_ties(self):
        # with distinct penalties the argmax branch is permutation-invariant
        # bit-for-bit (ties are the one place order matters, by the tie rule)
        rng = np.random.default_rng(0)
        Y = np.stack([rng.choice(16, size=6, replace=False) / 4.0 for _ in range(20)])
        L = (Y - 0.25) ** 2
        P = (Y + 0.5) ** 2
        base = _select_values(L, P, T=0.0)
        for _ in range(5):
            perm = rng.permutation(6)
            np.testing.assert_array_equal(_select_values(L[:, perm], P[:, perm], 0.0), base)

    def test_exchange_symmetry_generic(self):
        rng = np.random.default_rng(1)
        Y = rng.normal(size=(50, 8))
        L = (Y - 0.3) ** 2
        P = (Y + 0.1) ** 2
        base = _select_values(L, P, T=0.7)
        for _ in range(5):
            perm = rng.permutation(8)
            np.testing.assert_allclose(
                _select_values(L[:, perm], P[:, perm], 0.7), base, rtol=1e-12
            )

    def test_zero_t_lowest_index_ties(self):
        P = np.array([[1.0, 1.0, 2.0]])
        L = np.array([[10.0, 20.0, 30.0]])
        assert _select_values(L, P, 0.0)[0] == 10.0


class TestDeltaX:
    def test_k1_is_plain_second_moment(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            m = float(rng.normal())
            s2 = float(rng.uniform(0.2, 2.0))
            mu_T = float(rng.normal())
            mu_R = float(rng.normal())
            T = float(rng.uniform(0.1, 5.0))
            mean, se = delta_x(
                PredictiveMoments(m, s2), mu_T, mu_R,
                SamplerConfig(k=1, T=T), n_inner=100_000, rng=stream(4, "inf"),
            )
            target = (m - mu_T) ** 2 + s2
            assert abs(mean - target) < 4 * se

    def test_huge_t_uniform_weights(self):
        m, s2, mu_T = 0.5, 1.3, -0.2
        mean, se = delta_x(
            PredictiveMoments(m, s2), mu_T, 4.0,
            SamplerConfig(k=8, T=1e12 * s2), n_inner=100_000, rng=stream(5, "inf"),
        )
        target = (m - mu_T) ** 2 + s2
        assert abs(mean - target) < 4 * se

    def test_matches_quadrature_oracle(self):
        # k=2, T=2 s^2, m = mu_R = mu_T = 0, s = 1: frozen value from a
        # 200-point Gauss-Hermite evaluation of the 2-d integral (cross-checked
        # against an adaptive quadrature to 1.5e-15).
        oracle = 0.6495418382514772
        mean, se = delta_x(
            PredictiveMoments(0.0, 1.0), 0.0, 0.0,
            SamplerConfig(k=2, T=2.0), n_inner=400_000, rng=stream(6, "inf"),
        )
        assert abs(mean - oracle) < 0.01 * oracle
        assert abs(mean - oracle) < 4 * se

    def test_n_inner_validation(self):
        with pytest.raises(ValueError):
            delta_x(PredictiveMoments(0.0, 1.0), 0.0, 0.0, SamplerConfig(1, 1.0), 0, stream(0, "i"))


class TestDelta:
    def test_nonnegative(self):
        cfg = ModelConfig(d=4, n=200, sigma=0.1, gamma=1.0)
        est = delta(cfg, RewardSpec.radial(0.0), SamplerConfig(k=3, T=0.01),
                    n_outer=50, n_inner=20, seed=1)
        assert est.mean >= 0.0

    def test_prior_predictive_total_variance(self):
        # n = 0, null teacher, near-uniform weights: delta = gamma^2 S^2 + sigma^2.
        cfg = ModelConfig(d=6, n=0, S=1.0, sigma=0.3, gamma=0.8, tau=0.0)
        est = delta(
            cfg, RewardSpec.explicit(np.zeros(6)), SamplerConfig(k=4, T=1e9),
            n_outer=3000, n_inner=60, mode="exact_posterior", seed=2,
        )
        target = cfg.gamma**2 * cfg.S**2 + cfg.sigma**2
        assert abs(est.mean - target) < 4 * est.stderr

    def test_bit_identical_across_runs_and_threads(self):
        cfg = ModelConfig(d=5, n=500, sigma=0.05, gamma=0.5)
        kwargs = dict(n_outer=40, n_inner=30, seed=9)
        sc = SamplerConfig(k=5, T=0.02)
        a = delta(cfg, RewardSpec.radial(1.0), sc, threads=1, **kwargs)
        b = delta(cfg, RewardSpec.radial(1.0), sc, threads=3, **kwargs)
        c = delta(cfg, RewardSpec.radial(1.0), sc, threads=1, **kwargs)
        assert a.mean == b.mean == c.mean
        assert a.stderr == b.stderr == c.stderr

    def test_exact_and_de_modes_agree_in_validity_regime(self):
        cfg = ModelConfig(d=50, n=5000, S=1.0, sigma=1e-2, gamma=1.0)
        sc = SamplerConfig(k=4, T=20 * cfg.sigma**2)
        common = dict(n_outer=400, n_inner=100, seed=3)
        exact = delta(cfg, RewardSpec.radial(0.0), sc, mode="exact_posterior", **common)
        de = delta(cfg, RewardSpec.radial(0.0), sc, mode="det_equiv", **common)
        tol = 3 * (exact.stderr + de.stderr) + 0.03 * de.mean
        assert abs(exact.mean - de.mean) < tol

    def test_unknown_mode_rejected(self):
        cfg = ModelConfig(d=3, n=10)
        with pytest.raises(ValueError, match="mode"):
            delta(cfg, RewardSpec.radial(0.0), SamplerConfig(1, 1.0),
                  n_outer=2, n_inner=2, mode="bogus")


class TestCurves:
    def test_aligned_reward_monotone_decrease(self):
        # teacher-matched reward at moderate temperature: more samples only help
        cfg = ModelConfig(d=10, n=10_000, **FIG_LIKE)
        res = delta_k_curve(
            cfg, RewardSpec.radial(0.0), T=20 * cfg.sigma**2,
            k_grid=[1, 2, 3, 5, 8, 12, 20, 35, 60, 100],
            n_outer=300, n_inner=100, seed=12,
        )
        for i in range(len(res.grid) - 1):
            rise = res.mean[i + 1] - res.mean[i]
            assert rise <= 2 * res.paired_stderr(i, i + 1)
        assert classify_k_monotonicity(res) == "monotone"

    def test_misaligned_reward_interior_minimum(self):
        cfg = ModelConfig(d=10, n=10_000, **FIG_LIKE)
        res = delta_k_curve(
            cfg, RewardSpec.radial(20.0), T=20 * cfg.sigma**2,
            k_grid=[1, 2, 3, 5, 8, 12, 20, 35, 60, 100],
            n_outer=400, n_inner=100, seed=13,
        )
        assert classify_k_monotonicity(res) == "non_monotone"
        interior = res.mean[1:-1]
        assert interior.min() < res.mean[0] and interior.min() < res.mean[-1]

    def test_t_curve_shares_draws(self):
        cfg = ModelConfig(d=4, n=1000, sigma=0.05, gamma=0.5)
        res = delta_t_curve(
            cfg, RewardSpec.radial(0.0), k=6,
            T_grid=[0.0, 1e-4, 1e-3, 1e-2], n_outer=60, n_inner=40, seed=14,
        )
        assert res.per_x.shape == (60, 4)
        # paired noise between close cells is far below the marginal noise
        assert res.paired_stderr(0, 1) < 0.5 * res.stderr[0]

    def test_curve_determinism_across_threads(self):
        cfg = ModelConfig(d=4, n=500, sigma=0.05, gamma=0.5)
        kw = dict(n_outer=30, n_inner=20, seed=15)
        r1 = delta_k_curve(cfg, RewardSpec.radial(0.5), 0.01, [1, 3, 9], threads=1, **kw)
        r2 = delta_k_curve(cfg, RewardSpec.radial(0.5), 0.01, [1, 3, 9], threads=4, **kw)
        np.testing.assert_array_equal(r1.per_x, r2.per_x)

    def test_dataset_averaging_mode(self):
        cfg = ModelConfig(d=4, n=100, sigma=0.1, gamma=1.0)
        res = delta_k_curve(
            cfg, RewardSpec.radial(0.0), T=0.01, k_grid=[1, 2],
            n_outer=25, n_inner=10, mode="exact_posterior", seed=16, n_datasets=3,
        )
        assert res.per_x.shape[0] == 75
        assert res.meta["n_datasets"] == 3

    def test_validation(self):
        cfg = ModelConfig(d=3, n=50)
        with pytest.raises(ValueError):
            delta_k_curve(cfg, RewardSpec.radial(0.0), 1.0, [0, 2], n_outer=5, n_inner=5)
        with pytest.raises(ValueError):
            delta_t_curve(cfg, RewardSpec.radial(0.0), 2, [-1.0], n_outer=5, n_inner=5)
