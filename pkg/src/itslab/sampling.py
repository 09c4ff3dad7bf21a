"""Reward-weighted selection among inference-time candidates.

Each of k candidates y_i drawn from the predictive is scored with the
quadratic reward r(y) = -(y - mu_R)^2 and one is selected from the softmax
Categorical(q), q_i proportional to exp(r_i / T). T = 0 is an exact argmax
branch (best-of-k), never a tiny-T limit, to avoid overflow; ties at T = 0
break to the lowest index.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SamplerConfig:
    """Number of inference samples k and reward softmax temperature T."""

    k: int
    T: float

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.T < 0:
            raise ValueError(f"T must be >= 0, got {self.T}")


def quadratic_reward(y, mu_R):
    """Reward -(y - mu_R)^2; maximal (zero) when y hits the reward target."""
    diff = np.asarray(y, dtype=float) - mu_R
    return -(diff * diff)


def softmax_weights(rewards, T: float) -> np.ndarray:
    """Selection probabilities over rewards at temperature T.

    Numerically stable via max-subtraction. T = 0 returns the one-hot of the
    maximal reward (lowest index on ties).
    """
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 1:
        raise ValueError("rewards must be a non-empty 1-d array")
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    top = np.max(r)
    if top == -np.inf:
        raise ValueError("all rewards are -inf")
    if np.isnan(top) or top == np.inf:
        raise ValueError("rewards must be < +inf and not NaN")
    if T == 0:
        w = np.zeros(r.size)
        w[np.argmax(r)] = 1.0
        return w
    w = np.exp((r - top) / T)
    return w / w.sum()


def reward_weighted_select(samples, mu_R: float, T: float, rng: np.random.Generator):
    """Pick one of the samples by softmax over quadratic rewards.

    Returns (index, value). The T = 0 branch is a deterministic argmax of the
    reward.
    """
    y = np.asarray(samples, dtype=float)
    rewards = quadratic_reward(y, mu_R)
    if T == 0:
        idx = int(np.argmax(rewards))
        return idx, float(y[idx])
    q = softmax_weights(rewards, T)
    idx = int(rng.choice(y.size, p=q))
    return idx, float(y[idx])
