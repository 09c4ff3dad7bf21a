"""Monte Carlo estimation of the selection generalization error.

The error of reward-weighted selection at a test point x is

    delta(x) = E[ sum_i (y_i - mu_T)^2 e^{-(y_i - mu_R)^2 / T}
                  / sum_j e^{-(y_j - mu_R)^2 / T} ],

with y_1..y_k i.i.d. from the predictive at x, and delta = E_x delta(x).
The estimator averages the softmax-weighted loss inside each batch of k
draws (same expectation as sampling the categorical index, strictly lower
variance); T = 0 takes the loss of the argmax-reward draw.

Sweeps over k, T or the reward misalignment c share the underlying Gaussian
draws (common random numbers): the draw matrix is extended as k grows and
reweighted as T or c change, so curves are smooth at fixed seed and
neighboring grid points can be compared through paired differences.

Reproducibility contract: all randomness is derived from (seed, purpose,
index) named streams. The outer loop over test points is processed in
fixed-size blocks, each test point owning its own substream, and the
reduction is performed in index order, so results are bit-identical for any
thread count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import ModelConfig, RewardSpec, generate_dataset, resolve_reward, sample_teacher
from .posterior import PredictiveMoments, fit_posterior, predictive_moments_batch
from .ridge import de_moments_batch, solve_for_config
from .rngstreams import stream
from .sampling import SamplerConfig

MODES = ("exact_posterior", "det_equiv")

_BLOCK = 16  # test points per work unit; fixed so results never depend on threading
_MAX_ELEMS = 1 << 23  # cap on draws held in memory at once (per work unit)


@dataclass(frozen=True)
class ErrorEstimate:
    """Estimated error with its standard error and sample budget."""

    mean: float
    stderr: float
    n_outer: int
    n_inner: int
    mode: str


@dataclass(frozen=True)
class SweepResult:
    """A delta curve along one axis, with per-test-point values retained.

    ``per_x[i, g]`` is the inner-averaged estimate at test point i and grid
    cell g; columns share draws, so differences between cells should be
    assessed with :meth:`paired_stderr`, not the marginal ``stderr``.
    """

    axis: str
    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    per_x: np.ndarray
    n_outer: int
    n_inner: int
    mode: str
    seed: int
    meta: dict = field(default_factory=dict)

    def paired_stderr(self, i: int, j: int) -> float:
        """Standard error of mean[j] - mean[i] using the shared draws."""
        diff = self.per_x[:, j] - self.per_x[:, i]
        n = diff.shape[0]
        if n < 2:
            return math.inf
        return float(np.std(diff, ddof=1) / math.sqrt(n))

    def estimate(self, g: int) -> ErrorEstimate:
        return ErrorEstimate(
            mean=float(self.mean[g]),
            stderr=float(self.stderr[g]),
            n_outer=self.n_outer,
            n_inner=self.n_inner,
            mode=self.mode,
        )


def _select_values(L: np.ndarray, P: np.ndarray, T: float) -> np.ndarray:
    """Per-batch weighted loss for batches in rows: losses L, penalties P."""
    if T == 0:
        idx = np.argmin(P, axis=1)  # first minimum: lowest-index tie rule
        return np.take_along_axis(L, idx[:, None], axis=1)[:, 0]
    Pmin = P.min(axis=1, keepdims=True)
    W = np.exp((Pmin - P) / T)
    return (W * L).sum(axis=1) / W.sum(axis=1)


def delta_x(
    moments: PredictiveMoments,
    mu_T: float,
    mu_R: float,
    sc: SamplerConfig,
    n_inner: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Estimate delta(x) from n_inner independent batches of k draws.

    Returns (mean, stderr); the stderr is the sample standard error over the
    per-batch weighted losses.
    """
    if n_inner < 1:
        raise ValueError(f"n_inner must be >= 1, got {n_inner}")
    s = math.sqrt(moments.variance)
    values = np.empty(n_inner)
    done = 0
    rows_per_chunk = max(1, _MAX_ELEMS // max(1, sc.k))
    while done < n_inner:
        rows = min(rows_per_chunk, n_inner - done)
        Y = moments.mean + s * rng.standard_normal((rows, sc.k))
        L = (Y - mu_T) ** 2
        Pen = (Y - mu_R) ** 2
        values[done : done + rows] = _select_values(L, Pen, sc.T)
        done += rows
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(n_inner)) if n_inner > 1 else math.inf
    return mean, stderr


# ---------------------------------------------------------------------------
# Sweep engine
# ---------------------------------------------------------------------------


def _cell_means_for_x(
    rng: np.random.Generator,
    m: float,
    s: float,
    mu_T: float,
    cell_k: np.ndarray,
    cell_T: np.ndarray,
    cell_muR: np.ndarray,
    n_inner: int,
    kmax: int,
) -> np.ndarray:
    """Inner-averaged weighted losses for every grid cell at one test point.

    One (n_inner, kmax) draw matrix backs every cell: cell k uses its first k
    columns, temperatures and reward targets only reweight. Inner rows are
    chunked to bound memory; only per-cell means are accumulated.
    """
    out = np.zeros(len(cell_k))
    rows_per_chunk = max(1, _MAX_ELEMS // max(1, kmax))
    done = 0
    while done < n_inner:
        rows = min(rows_per_chunk, n_inner - done)
        Y = m + s * rng.standard_normal((rows, kmax))
        L = (Y - mu_T) ** 2
        Pen = None
        last_muR = None
        for g in range(len(cell_k)):
            muR = cell_muR[g]
            if Pen is None or muR != last_muR:
                Pen = (Y - muR) ** 2
                last_muR = muR
            k = int(cell_k[g])
            out[g] += _select_values(L[:, :k], Pen[:, :k], float(cell_T[g])).sum()
        done += rows
    return out / n_inner


@dataclass(frozen=True)
class _Context:
    """Per-dataset predictive scalars at the sampled test points."""

    dataset_index: int
    m: np.ndarray
    s: np.ndarray
    mu_T: np.ndarray
    mu_R: np.ndarray


def _prepare_contexts(config, reward, mode, seed, n_outer, n_datasets):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    w_T = sample_teacher(config, stream(seed, "teacher"))
    de = solve_for_config(config) if config.n > 0 else None
    R = de.R if de is not None else 0.0
    w_R = resolve_reward(reward, w_T, R, config.S)
    sqrt_d = math.sqrt(config.d)

    if mode == "det_equiv":
        if de is None:
            raise ValueError("det_equiv mode requires n > 0")
        n_datasets = 1

    contexts = []
    for j in range(n_datasets):
        X = stream(seed, "test_points", j).normal(0.0, config.S, size=(n_outer, config.d))
        if mode == "exact_posterior":
            data = generate_dataset(config, w_T, stream(seed, "data", j))
            post = fit_posterior(data, config)
            m, s2 = predictive_moments_batch(post, X)
        else:
            m, s2 = de_moments_batch(X, w_T, de, config)
        contexts.append(
            _Context(
                dataset_index=j,
                m=m,
                s=np.sqrt(s2),
                mu_T=X @ w_T / sqrt_d,
                mu_R=X @ w_R / sqrt_d,
            )
        )
    return contexts, w_T, w_R, de


def _run_cells(
    config: ModelConfig,
    reward: RewardSpec,
    cell_k,
    cell_T,
    mu_R_factor,
    n_outer: int,
    n_inner: int,
    mode: str,
    seed: int,
    threads: int,
    n_datasets: int,
):
    """Evaluate every (k, T, reward-target) cell at every test point.

    ``mu_R_factor`` is either None (use the reward spec's mu_R for every
    cell) or an array of per-cell multipliers applied to mu_T (the radial
    reward family mu_R = (1 + c B) mu_T).
    """
    if n_outer < 1 or n_inner < 1:
        raise ValueError("n_outer and n_inner must be >= 1")
    cell_k = np.asarray(cell_k, dtype=int)
    cell_T = np.asarray(cell_T, dtype=float)
    if np.any(cell_k < 1):
        raise ValueError("every k must be >= 1")
    if np.any(cell_T < 0):
        raise ValueError("every T must be >= 0")
    kmax = int(cell_k.max())

    contexts, w_T, w_R, de = _prepare_contexts(
        config, reward, mode, seed, n_outer, n_datasets
    )
    n_rows = len(contexts) * n_outer
    per_x = np.empty((n_rows, len(cell_k)))

    def run_block(ctx: _Context, start: int, stop: int):
        base = ctx.dataset_index * n_outer
        for i in range(start, stop):
            if mu_R_factor is None:
                cell_muR = np.full(len(cell_k), ctx.mu_R[i])
            else:
                cell_muR = mu_R_factor * ctx.mu_T[i]
            rng = stream(seed, "inference", ctx.dataset_index, i)
            per_x[base + i] = _cell_means_for_x(
                rng, ctx.m[i], ctx.s[i], ctx.mu_T[i], cell_k, cell_T, cell_muR,
                n_inner, kmax,
            )

    blocks = [
        (ctx, start, min(start + _BLOCK, n_outer))
        for ctx in contexts
        for start in range(0, n_outer, _BLOCK)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: run_block(*b), blocks))
    else:
        for b in blocks:
            run_block(*b)

    mean = per_x.mean(axis=0)
    stderr = (
        per_x.std(axis=0, ddof=1) / math.sqrt(n_rows)
        if n_rows > 1
        else np.full(len(cell_k), math.inf)
    )
    meta = {
        "w_T_norm2": float(w_T @ w_T),
        "n_datasets": len(contexts),
        "R": de.R if de is not None else 0.0,
    }
    return per_x, mean, stderr, meta


def delta(
    config: ModelConfig,
    reward: RewardSpec,
    sc: SamplerConfig,
    n_outer: int = 2000,
    n_inner: int = 200,
    mode: str = "det_equiv",
    seed: int = 0,
    threads: int = 1,
    n_datasets: int = 1,
) -> ErrorEstimate:
    """Estimate delta = E_x delta(x) for one sampler setting.

    In exact_posterior mode, ``n_datasets`` > 1 averages over that many
    independently drawn training sets (each with its own test points); the
    estimate is then a data-averaged error rather than a per-dataset one.
    """
    per_x, mean, stderr, _ = _run_cells(
        config, reward, [sc.k], [sc.T], None, n_outer, n_inner, mode, seed,
        threads, n_datasets,
    )
    return ErrorEstimate(
        mean=float(mean[0]),
        stderr=float(stderr[0]),
        n_outer=per_x.shape[0],
        n_inner=n_inner,
        mode=mode,
    )


def delta_k_curve(
    config: ModelConfig,
    reward: RewardSpec,
    T: float,
    k_grid,
    n_outer: int = 2000,
    n_inner: int = 200,
    mode: str = "det_equiv",
    seed: int = 0,
    threads: int = 1,
    n_datasets: int = 1,
) -> SweepResult:
    """delta as a function of k at fixed T, with draws shared across k."""
    k_grid = np.asarray(k_grid, dtype=int)
    per_x, mean, stderr, meta = _run_cells(
        config, reward, k_grid, np.full(len(k_grid), float(T)), None,
        n_outer, n_inner, mode, seed, threads, n_datasets,
    )
    meta["T"] = float(T)
    return SweepResult(
        axis="k", grid=k_grid, mean=mean, stderr=stderr, per_x=per_x,
        n_outer=per_x.shape[0], n_inner=n_inner, mode=mode, seed=seed, meta=meta,
    )


def delta_t_curve(
    config: ModelConfig,
    reward: RewardSpec,
    k: int,
    T_grid,
    n_outer: int = 2000,
    n_inner: int = 200,
    mode: str = "det_equiv",
    seed: int = 0,
    threads: int = 1,
    n_datasets: int = 1,
) -> SweepResult:
    """delta as a function of T at fixed k, with draws shared across T."""
    T_grid = np.asarray(T_grid, dtype=float)
    per_x, mean, stderr, meta = _run_cells(
        config, reward, np.full(len(T_grid), int(k)), T_grid, None,
        n_outer, n_inner, mode, seed, threads, n_datasets,
    )
    meta["k"] = int(k)
    return SweepResult(
        axis="T", grid=T_grid, mean=mean, stderr=stderr, per_x=per_x,
        n_outer=per_x.shape[0], n_inner=n_inner, mode=mode, seed=seed, meta=meta,
    )


def delta_c_curve(
    config: ModelConfig,
    c_grid,
    T: float,
    k: int,
    n_outer: int = 2000,
    n_inner: int = 200,
    mode: str = "det_equiv",
    seed: int = 0,
    threads: int = 1,
    n_datasets: int = 1,
) -> SweepResult:
    """delta across the radial reward family w_R = (1 + c B) w_T at fixed (k, T)."""
    c_grid = np.asarray(c_grid, dtype=float)
    if config.n == 0:
        raise ValueError("the radial reward family requires n > 0")
    de = solve_for_config(config)
    factors = 1.0 + c_grid * de.R / (de.R + config.S**2)
    per_x, mean, stderr, meta = _run_cells(
        config, RewardSpec.radial(0.0), np.full(len(c_grid), int(k)),
        np.full(len(c_grid), float(T)), factors,
        n_outer, n_inner, mode, seed, threads, n_datasets,
    )
    meta["T"] = float(T)
    meta["k"] = int(k)
    return SweepResult(
        axis="c", grid=c_grid, mean=mean, stderr=stderr, per_x=per_x,
        n_outer=per_x.shape[0], n_inner=n_inner, mode=mode, seed=seed, meta=meta,
    )


def classify_k_monotonicity(result: SweepResult, z: float = 3.0) -> str:
    """Label a delta(k) curve ``monotone`` or ``non_monotone``.

    The curve is non-monotone when some interior grid point sits at least z
    paired standard errors below both of the next two points toward larger
    k; paired errors use the shared draws, so the gate is immune to the
    common Monte Carlo offset along the curve.
    """
    if result.axis != "k":
        raise ValueError("classification applies to k-sweeps")
    mean = result.mean
    n = len(mean)
    for i in range(1, n - 2):
        up1 = mean[i + 1] - mean[i]
        up2 = mean[i + 2] - mean[i]
        if up1 > z * result.paired_stderr(i, i + 1) and up2 > z * result.paired_stderr(
            i, i + 2
        ):
            return "non_monotone"
    return "monotone"
