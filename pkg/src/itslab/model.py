"""Teacher-student generative model: configuration, datasets, reward weights.

The data model is a linear teacher observed through Gaussian noise,

    y = w_T . x / sqrt(d) + eta,   x ~ N(0, S^2 I),   eta ~ N(0, sigma^2),

with an isotropic Gaussian prior N(0, gamma^2 I) used downstream for the
Bayesian fit. The reward weight w_R scores candidate outputs and may be
misaligned with w_T; three parameterizations are supported (explicit vector,
radial multiple of w_T, and a planar offset at an angle from w_T).
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_TEACHER_MODES = ("sampled", "normalized")
_REWARD_MODES = ("explicit", "radial_c", "polar")

# Keys accepted in a config file, with their parsers.
_CONFIG_KEYS = {
    "d": int,
    "n": int,
    "S": float,
    "sigma": float,
    "gamma": float,
    "tau": float,
    "teacher_mode": str,
}


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and scales of the teacher-student setup.

    d: input dimension, n: training set size, S: input scale (covariance
    S^2 I), sigma: label noise std, gamma: prior std, tau: teacher sampling
    std. ``teacher_mode`` selects between sampling w_T ~ N(0, tau^2 I) and
    rescaling the draw so that ||w_T||^2 = d exactly.
    """

    d: int
    n: int
    S: float = 1.0
    sigma: float = 1e-4
    gamma: float = 1e-3
    tau: float = 2.0
    teacher_mode: str = "sampled"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.n < 0:
            raise ValueError(f"n must be >= 0, got {self.n}")
        if not self.S > 0:
            raise ValueError(f"S must be > 0, got {self.S}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.teacher_mode not in _TEACHER_MODES:
            raise ValueError(
                f"teacher_mode must be one of {_TEACHER_MODES}, got {self.teacher_mode!r}"
            )

    @property
    def alpha(self) -> float:
        """Aspect ratio d/n. Only defined for n > 0."""
        if self.n == 0:
            raise ValueError("alpha = d/n is undefined for n = 0")
        return self.d / self.n

    @classmethod
    def from_file(cls, path, **overrides) -> "ModelConfig":
        """Build a config from a key=value file, applying keyword overrides.

        Recognized keys: d, n, S, sigma, gamma, tau, teacher_mode. Lines may
        use ``key = value`` or ``key: value``; ``#`` starts a comment.
        """
        raw = _parse_kv_file(path)
        merged: dict = {}
        for key, value in raw.items():
            if key not in _CONFIG_KEYS:
                raise ValueError(f"unknown config key {key!r} in {path}")
            merged[key] = _CONFIG_KEYS[key](value)
        for key, value in overrides.items():
            if value is not None:
                merged[key] = value
        return cls(**merged)


def _parse_kv_file(path) -> dict:
    raw = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, _, value = line.partition(sep)
                raw[key.strip()] = value.strip()
                break
        else:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
    return raw


@dataclass(frozen=True)
class Dataset:
    """Training inputs (n x d) and labels (n,)."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("inputs must be 2-d and labels 1-d")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels disagree on n")
        if self.labels.size and not np.all(np.isfinite(self.labels)):
            raise ValueError("labels contain non-finite values")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class RewardSpec:
    """How the reward weight w_R is derived from the teacher.

    explicit: use ``explicit_w`` as-is.
    radial_c: w_R = (1 + c R/(R + S^2)) w_T, a shrinkage-compensating multiple.
    polar: w_R = w_T + c (cos(theta_T + theta), sin(theta_T + theta)), d = 2
        only; theta is the angle between w_R - w_T and w_T, c its magnitude.
    """

    mode: str
    explicit_w: np.ndarray | None = None
    c: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.mode not in _REWARD_MODES:
            raise ValueError(f"mode must be one of {_REWARD_MODES}, got {self.mode!r}")
        if self.mode == "explicit" and self.explicit_w is None:
            raise ValueError("explicit mode requires explicit_w")
        if self.mode != "explicit" and self.explicit_w is not None:
            raise ValueError(f"explicit_w is only valid in explicit mode, not {self.mode!r}")

    @classmethod
    def explicit(cls, w) -> "RewardSpec":
        return cls(mode="explicit", explicit_w=np.asarray(w, dtype=float))

    @classmethod
    def radial(cls, c: float) -> "RewardSpec":
        return cls(mode="radial_c", c=float(c))

    @classmethod
    def polar(cls, c: float, theta: float) -> "RewardSpec":
        return cls(mode="polar", c=float(c), theta=float(theta))


def sample_teacher(config: ModelConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw the teacher weight w_T.

    Entries are i.i.d. N(0, tau^2); in normalized mode the draw is rescaled
    so that ||w_T||^2 = d.
    """
    w = rng.normal(0.0, config.tau, size=config.d) if config.tau > 0 else np.zeros(config.d)
    if config.teacher_mode == "normalized":
        ss = float(np.dot(w, w))
        if ss == 0.0:
            raise ValueError("cannot normalize a zero teacher draw (tau = 0?)")
        w = w * math.sqrt(config.d / ss)
    return w


def generate_dataset(config: ModelConfig, w_T: np.ndarray, rng: np.random.Generator) -> Dataset:
    """Sample a training set of size n from the teacher.

    x^i ~ N(0, S^2 I) and y^i = w_T . x^i / sqrt(d) + eta^i with
    eta^i ~ N(0, sigma^2). n = 0 yields an empty dataset.
    """
    if w_T.shape != (config.d,):
        raise ValueError(f"w_T has shape {w_T.shape}, expected ({config.d},)")
    X = rng.normal(0.0, config.S, size=(config.n, config.d))
    eta = rng.normal(0.0, config.sigma, size=config.n) if config.sigma > 0 else np.zeros(config.n)
    y = X @ w_T / math.sqrt(config.d) + eta
    return Dataset(inputs=X, labels=y)


def resolve_reward(spec: RewardSpec, w_T: np.ndarray, R: float, S: float) -> np.ndarray:
    """Materialize the reward weight w_R for the chosen parameterization."""
    if R < 0:
        raise ValueError(f"R must be >= 0, got {R}")
    if spec.mode == "explicit":
        w = np.asarray(spec.explicit_w, dtype=float)
        if w.shape != w_T.shape:
            raise ValueError(f"explicit_w has shape {w.shape}, expected {w_T.shape}")
        return w.copy()
    if spec.mode == "radial_c":
        return (1.0 + spec.c * R / (R + S * S)) * w_T
    # polar
    if w_T.shape != (2,):
        raise ValueError("polar reward parameterization requires d = 2")
    theta_T = math.atan2(w_T[1], w_T[0])
    offset = spec.c * np.array(
        [math.cos(theta_T + spec.theta), math.sin(theta_T + spec.theta)]
    )
    return w_T + offset
