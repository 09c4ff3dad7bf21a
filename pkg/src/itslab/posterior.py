"""Exact Bayesian linear-regression posterior and posterior predictive.

With features x/sqrt(d), noise variance sigma^2 and prior N(0, gamma^2 I),
the posterior over weights is N(mu, Omega) with

    Omega^{-1} = (1/sigma^2) sum_i (x^i/sqrt(d))(x^i/sqrt(d))^T + (1/gamma^2) I
    mu         = (1/sigma^2) Omega sum_i y^i x^i/sqrt(d)

and the predictive at a test point x is N(mu.x/sqrt(d),
(x/sqrt(d))^T Omega (x/sqrt(d)) + sigma^2). The precision matrix is solved
through a symmetric positive-definite factorization, never an explicit
inverse of an ill-conditioned matrix.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import Dataset, ModelConfig


@dataclass(frozen=True)
class Posterior:
    """Posterior mean vector, covariance matrix, and the carried noise std."""

    mu: np.ndarray
    omega: np.ndarray
    sigma: float

    @property
    def d(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class PredictiveMoments:
    """Mean and variance of the predictive distribution at one test point."""

    mean: float
    variance: float


def fit_posterior(data: Dataset, config: ModelConfig) -> Posterior:
    """Compute the exact posterior for a dataset.

    n = 0 returns the prior (mu = 0, Omega = gamma^2 I). sigma = 0 with
    n > 0 is rejected: the Gaussian likelihood is degenerate.
    """
    if data.d != config.d:
        raise ValueError(f"dataset dimension {data.d} != config d {config.d}")
    if data.n == 0:
        return Posterior(
            mu=np.zeros(config.d),
            omega=config.gamma**2 * np.eye(config.d),
            sigma=config.sigma,
        )
    if config.sigma == 0:
        raise ValueError("sigma = 0 with n > 0: likelihood is degenerate")
    if not (np.all(np.isfinite(data.inputs)) and np.all(np.isfinite(data.labels))):
        raise ValueError("dataset contains non-finite values")

    Xs = data.inputs / math.sqrt(config.d)
    prec = Xs.T @ Xs / config.sigma**2 + np.eye(config.d) / config.gamma**2
    prec = 0.5 * (prec + prec.T)  # suppress asymmetric rounding before factorizing
    factor = cho_factor(prec, lower=True)
    mu = cho_solve(factor, Xs.T @ data.labels) / config.sigma**2
    omega = cho_solve(factor, np.eye(config.d))
    omega = 0.5 * (omega + omega.T)
    return Posterior(mu=mu, omega=omega, sigma=config.sigma)


def predictive_moments(post: Posterior, x: np.ndarray) -> PredictiveMoments:
    """Predictive mean and variance at a single test point."""
    x = np.asarray(x, dtype=float)
    if x.shape != (post.d,):
        raise ValueError(f"x has shape {x.shape}, expected ({post.d},)")
    xs = x / math.sqrt(post.d)
    mean = float(post.mu @ xs)
    variance = float(xs @ post.omega @ xs + post.sigma**2)
    return PredictiveMoments(mean=mean, variance=variance)


def predictive_moments_batch(post: Posterior, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized predictive moments for rows of X; returns (means, variances)."""
    Xs = np.asarray(X, dtype=float) / math.sqrt(post.d)
    means = Xs @ post.mu
    variances = np.einsum("ij,jk,ik->i", Xs, post.omega, Xs) + post.sigma**2
    return means, variances
