import math

import numpy as np
import pytest

from itslab import (
    Dataset,
    ModelConfig,
    fit_posterior,
    generate_dataset,
    predictive_moments,
    predictive_moments_batch,
    sample_teacher,
    stream,
)


def ridge_solution_oracle(X, y, d, sigma, gamma):
    """Normal-equations ridge fit with penalty sigma^2/gamma^2 on x/sqrt(d)."""
    Xs = X / math.sqrt(d)
    A = Xs.T @ Xs + (sigma**2 / gamma**2) * np.eye(d)
    return np.linalg.solve(A, Xs.T @ y)


def test_empty_dataset_returns_prior():
    cfg = ModelConfig(d=3, n=0, sigma=0.2, gamma=1.5)
    post = fit_posterior(Dataset(np.zeros((0, 3)), np.zeros(0)), cfg)
    assert np.array_equal(post.mu, np.zeros(3))
    np.testing.assert_allclose(post.omega, 1.5**2 * np.eye(3), rtol=1e-15)


def test_single_observation_hand_solved():
    # d=1, x=1, y=1, sigma=1, gamma=1: precision = 1 + 1 so omega = 1/2,
    # mu = omega * 1 = 1/2.
    cfg = ModelConfig(d=1, n=1, sigma=1.0, gamma=1.0)
    post = fit_posterior(Dataset(np.array([[1.0]]), np.array([1.0])), cfg)
    assert post.omega[0, 0] == pytest.approx(0.5, rel=1e-14)
    assert post.mu[0] == pytest.approx(0.5, rel=1e-14)
    pm = predictive_moments(post, np.array([1.0]))
    assert pm.mean == pytest.approx(0.5, rel=1e-14)
    assert pm.variance == pytest.approx(1.5, rel=1e-14)


def test_sigma_zero_rejected():
    cfg = ModelConfig(d=2, n=1, sigma=0.0)
    with pytest.raises(ValueError, match="degenerate"):
        fit_posterior(Dataset(np.ones((1, 2)), np.ones(1)), cfg)


def test_nonfinite_rejected():
    cfg = ModelConfig(d=2, n=2, sigma=0.1)
    X = np.array([[1.0, 2.0], [np.inf, 0.0]])
    with pytest.raises(ValueError):
        fit_posterior(Dataset(X, np.ones(2)), cfg)


def test_mean_equals_ridge_regression():
    rng = np.random.default_rng(42)
    for _ in range(5):
        d = int(rng.integers(2, 20))
        n = int(rng.integers(d, 200))
        sigma = float(rng.uniform(0.05, 1.0))
        gamma = float(rng.uniform(0.2, 3.0))
        cfg = ModelConfig(d=d, n=n, sigma=sigma, gamma=gamma)
        X = rng.normal(size=(n, d))
        y = rng.normal(size=n)
        post = fit_posterior(Dataset(X, y), cfg)
        oracle = ridge_solution_oracle(X, y, d, sigma, gamma)
        np.testing.assert_allclose(post.mu, oracle, rtol=1e-8)


def test_brute_force_covariance_agreement():
    rng = np.random.default_rng(1)
    for _ in range(5):
        d = int(rng.integers(2, 20))
        n = int(rng.integers(1, 200))
        cfg = ModelConfig(d=d, n=n, sigma=0.3, gamma=1.2)
        X = rng.normal(size=(n, d))
        y = rng.normal(size=n)
        post = fit_posterior(Dataset(X, y), cfg)
        Xs = X / math.sqrt(d)
        prec = Xs.T @ Xs / cfg.sigma**2 + np.eye(d) / cfg.gamma**2
        omega_oracle = np.linalg.solve(prec, np.eye(d))
        np.testing.assert_allclose(post.omega, omega_oracle, rtol=1e-8, atol=1e-14)


def test_omega_symmetric_spd_and_bounded_by_prior():
    cfg = ModelConfig(d=8, n=40, sigma=0.2, gamma=0.9)
    w = sample_teacher(cfg, stream(0, "teacher"))
    data = generate_dataset(cfg, w, stream(0, "data"))
    post = fit_posterior(data, cfg)
    asym = np.max(np.abs(post.omega - post.omega.T))
    assert asym <= 1e-12 * np.max(np.abs(post.omega))
    eigs = np.linalg.eigvalsh(post.omega)
    assert np.all(eigs > 0)
    assert np.all(eigs <= cfg.gamma**2 * (1 + 1e-12))


def test_predictive_at_origin_and_prior_point():
    cfg = ModelConfig(d=4, n=0, sigma=0.3, gamma=2.0)
    post = fit_posterior(Dataset(np.zeros((0, 4)), np.zeros(0)), cfg)
    pm0 = predictive_moments(post, np.zeros(4))
    assert pm0.mean == 0.0
    assert pm0.variance == pytest.approx(cfg.sigma**2, rel=1e-15)
    x = np.array([1.0, -2.0, 0.5, 3.0])
    pm = predictive_moments(post, x)
    assert pm.mean == 0.0
    assert pm.variance == pytest.approx(
        cfg.gamma**2 * (x @ x) / cfg.d + cfg.sigma**2, rel=1e-14
    )


def test_predictive_variance_strictly_above_noise():
    cfg = ModelConfig(d=6, n=30, sigma=0.2, gamma=1.0)
    w = sample_teacher(cfg, stream(4, "teacher"))
    data = generate_dataset(cfg, w, stream(4, "data"))
    post = fit_posterior(data, cfg)
    X = stream(4, "test_points").normal(size=(50, 6))
    _, variances = predictive_moments_batch(post, X)
    assert np.all(variances > cfg.sigma**2)


def test_duplicate_sample_never_increases_posterior_variance():
    # Adding an observation can only add information: the quadratic form
    # x^T Omega x is non-increasing for every x.
    rng = np.random.default_rng(7)
    for _ in range(10):
        d = int(rng.integers(1, 9))
        n = int(rng.integers(1, 17))
        cfg = ModelConfig(d=d, n=n, sigma=0.4, gamma=1.1)
        X = rng.normal(size=(n, d))
        y = rng.normal(size=n)
        post = fit_posterior(Dataset(X, y), cfg)
        dup = rng.integers(0, n)
        cfg2 = ModelConfig(d=d, n=n + 1, sigma=0.4, gamma=1.1)
        post2 = fit_posterior(
            Dataset(np.vstack([X, X[dup]]), np.append(y, y[dup])), cfg2
        )
        for _ in range(5):
            x = rng.normal(size=d)
            q1 = x @ post.omega @ x
            q2 = x @ post2.omega @ x
            assert q2 <= q1 * (1 + 1e-12)
