"""Experiment runner: sweeps and solvers behind one command-line tool.

Every subcommand resolves its model configuration from an optional key=value
file plus flag overrides, runs deterministically from a master seed, and
writes a CSV whose bytes are fully determined by (flags, seed) at any thread
count, accompanied by exactly one JSON manifest (<out>.manifest.json).

Exit codes: 0 success, 2 flag/usage errors, 1 runtime errors.
The ITSLAB_OUT_DIR environment variable supplies the default directory for
relative output paths.
"""

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .judge import judge_sweep, load_records
from .mc import delta_c_curve, delta_k_curve, delta_t_curve
from .model import ModelConfig, RewardSpec, resolve_reward, sample_teacher
from .evt import weibull_norming
from .ridge import noise_variance_check, solve_for_config
from .rngstreams import stream
from .theory import (
    SeriesAccuracyWarning,
    SeriesTerms,
    dlogn_flat_prior,
    high_t_delta_x,
    optimal_temperature,
    refined_best_of_k_delta,
    scaling_derivatives,
)

SWEEP_SCHEMA = [
    "mode", "d", "n", "S", "sigma", "gamma", "k", "T", "c", "theta",
    "delta", "stderr", "n_outer", "n_inner", "seed",
]

_MODE_ALIASES = {"exact": "exact_posterior", "de": "det_equiv"}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows):
    """Write rows (dicts) under a fixed header, verifying the schema on write."""
    for i, row in enumerate(rows):
        if set(row) != set(header):
            missing = set(header) - set(row)
            extra = set(row) - set(header)
            raise RuntimeError(
                f"row {i} does not match the declared schema "
                f"(missing {sorted(missing)}, extra {sorted(extra)})"
            )
    text = ",".join(header) + "\n"
    for row in rows:
        text += ",".join(_fmt(row[col]) for col in header) + "\n"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    first = path.read_text().splitlines()[0]
    if first != ",".join(header):
        raise RuntimeError("written CSV header does not match the declared schema")
    return path


def _write_manifest(path, subcommand, config, args, seed, wall_time):
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "flags": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "seed": seed,
        "version": __version__,
        "output": str(path),
        "wall_time_s": wall_time,
    }
    Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _resolve_out(args, default_name):
    out = args.out if args.out else default_name
    out = Path(out)
    if not out.is_absolute():
        base = os.environ.get("ITSLAB_OUT_DIR", "")
        if base:
            out = Path(base) / out
    return out


def parse_grid(text: str) -> np.ndarray:
    """Comma list ('1,2,5'), 'log:lo,hi,n' or 'lin:lo,hi,n'."""
    text = text.strip()
    try:
        if text.startswith("log:"):
            lo, hi, n = text[4:].split(",")
            return np.geomspace(float(lo), float(hi), int(n))
        if text.startswith("lin:"):
            lo, hi, n = text[4:].split(",")
            return np.linspace(float(lo), float(hi), int(n))
        return np.array([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"cannot parse grid {text!r}: {exc}") from exc


def parse_int_grid(text: str) -> np.ndarray:
    values = parse_grid(text)
    ints = np.array(sorted({int(round(v)) for v in values}))
    if np.any(ints < 1):
        raise argparse.ArgumentTypeError("k grid entries must be >= 1")
    return ints


def _add_model_flags(p):
    p.add_argument("--config", help="key=value model configuration file")
    p.add_argument("--d", type=int, help="input dimension")
    p.add_argument("--n", type=int, help="training set size")
    p.add_argument("--S", type=float, help="input scale (covariance S^2 I)")
    p.add_argument("--sigma", type=float, help="label noise std")
    p.add_argument("--gamma", type=float, help="prior std")
    p.add_argument("--tau", type=float, help="teacher sampling std")
    p.add_argument("--teacher-mode", choices=["sampled", "normalized"], dest="teacher_mode")


def _add_common(p, default_out):
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", help=f"output CSV path (default {default_out})")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(default_out=default_out)


def _add_mc_flags(p):
    p.add_argument("--n-outer", type=int, default=2000, dest="n_outer")
    p.add_argument("--n-inner", type=int, default=200, dest="n_inner")
    p.add_argument("--mode", choices=["exact", "de"], default="de")
    p.add_argument("--n-datasets", type=int, default=1, dest="n_datasets",
                   help="training sets to average over (exact mode)")


def build_config(args, parser) -> ModelConfig:
    overrides = {
        key: getattr(args, key)
        for key in ("d", "n", "S", "sigma", "gamma", "tau", "teacher_mode")
        if getattr(args, key, None) is not None
    }
    try:
        if args.config:
            return ModelConfig.from_file(args.config, **overrides)
        defaults = dict(d=10, n=10_000, S=1.0, sigma=1e-4, gamma=1e-3, tau=2.0)
        defaults.update(overrides)
        return ModelConfig(**defaults)
    except (OSError, ValueError) as exc:
        parser.error(str(exc))


def _temperature(args, config, parser) -> float:
    if args.T is not None and args.T_sigma2 is not None:
        parser.error("--T and --T-sigma2 are mutually exclusive")
    if args.T is not None:
        return args.T
    mult = args.T_sigma2 if args.T_sigma2 is not None else 20.0
    return mult * config.sigma**2


def _config_dict(config: ModelConfig) -> dict:
    return {
        "d": config.d, "n": config.n, "S": config.S, "sigma": config.sigma,
        "gamma": config.gamma, "tau": config.tau, "teacher_mode": config.teacher_mode,
    }


def _base_row(config, mode, seed):
    return {
        "mode": mode, "d": config.d, "n": config.n, "S": config.S,
        "sigma": config.sigma, "gamma": config.gamma, "seed": seed,
        "c": "", "theta": "",
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_ridge(args, parser):
    config = build_config(args, parser)
    de = solve_for_config(config)
    nv = noise_variance_check(de, config.sigma)
    header = ["R", "A", "B", "m1", "m2", "var_z", "sigma_c"]
    row = {
        "R": de.R, "A": de.A, "B": de.B, "m1": de.m1, "m2": de.m2,
        "var_z": nv.var_z, "sigma_c": nv.sigma_c,
    }
    if args.out:
        t0 = time.perf_counter()
        out = _resolve_out(args, args.default_out)
        write_csv(out, header, [row])
        _write_manifest(out, "ridge", _config_dict(config), args, args.seed, time.perf_counter() - t0)
    else:
        sys.stdout.write(",".join(header) + "\n")
        sys.stdout.write(",".join(_fmt(row[c]) for c in header) + "\n")
    return 0


def _series_value(config, de, w_T, w_R, T, k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SeriesAccuracyWarning)
        st = SeriesTerms.from_radial_average(config, de, w_T, w_R, T)
        return high_t_delta_x(st, int(k))


def cmd_sweep_k(args, parser):
    t0 = time.perf_counter()
    config = build_config(args, parser)
    mode = _MODE_ALIASES[args.mode]
    T = _temperature(args, config, parser)
    k_grid = args.k_grid
    de = solve_for_config(config)
    w_T = sample_teacher(config, stream(args.seed, "teacher"))
    rows = []
    for c in args.c_grid:
        res = delta_k_curve(
            config, RewardSpec.radial(float(c)), T, k_grid,
            n_outer=args.n_outer, n_inner=args.n_inner, mode=mode,
            seed=args.seed, threads=args.threads, n_datasets=args.n_datasets,
        )
        w_R = resolve_reward(RewardSpec.radial(float(c)), w_T, de.R, config.S)
        for g, k in enumerate(k_grid):
            series = _series_value(config, de, w_T, w_R, T, k)
            row = _base_row(config, mode, args.seed)
            row.update(
                c=float(c), k=int(k), T=T, delta=res.mean[g], stderr=res.stderr[g],
                n_outer=res.n_outer, n_inner=args.n_inner, theory_highT=series,
            )
            rows.append(row)
            theory = _base_row(config, "theory_highT", args.seed)
            theory.update(
                c=float(c), k=int(k), T=T, delta=series, stderr=0.0,
                n_outer=0, n_inner=0, theory_highT=series,
            )
            rows.append(theory)
    out = _resolve_out(args, args.default_out)
    write_csv(out, SWEEP_SCHEMA + ["theory_highT"], rows)
    _write_manifest(out, "sweep-k", _config_dict(config), args, args.seed, time.perf_counter() - t0)
    return 0


def cmd_sweep_t(args, parser):
    t0 = time.perf_counter()
    config = build_config(args, parser)
    mode = _MODE_ALIASES[args.mode]
    if args.t_grid is not None and args.t_grid_sigma2 is not None:
        parser.error("--t-grid and --t-grid-sigma2 are mutually exclusive")
    if args.t_grid is not None:
        T_grid = np.asarray(args.t_grid, dtype=float)
    else:
        mult = args.t_grid_sigma2 if args.t_grid_sigma2 is not None else parse_grid("log:2,200,30")
        T_grid = np.asarray(mult, dtype=float) * config.sigma**2
    res = delta_t_curve(
        config, RewardSpec.radial(args.c), args.k, T_grid,
        n_outer=args.n_outer, n_inner=args.n_inner, mode=mode,
        seed=args.seed, threads=args.threads, n_datasets=args.n_datasets,
    )
    de = solve_for_config(config)
    w_T = sample_teacher(config, stream(args.seed, "teacher"))
    w_R = resolve_reward(RewardSpec.radial(args.c), w_T, de.R, config.S)
    try:
        st = SeriesTerms.from_radial_average(config, de, w_T, w_R, 1.0)
        t_opt = optimal_temperature(st.delta_T, st.delta_R, st.s2, args.k)
    except ValueError:
        t_opt = None
    rows = []
    for g, T in enumerate(T_grid):
        row = _base_row(config, mode, args.seed)
        row.update(
            c=args.c, k=args.k, T=float(T), delta=res.mean[g], stderr=res.stderr[g],
            n_outer=res.n_outer, n_inner=args.n_inner, theory_T_opt=t_opt,
        )
        rows.append(row)
    out = _resolve_out(args, args.default_out)
    write_csv(out, SWEEP_SCHEMA + ["theory_T_opt"], rows)
    _write_manifest(out, "sweep-t", _config_dict(config), args, args.seed, time.perf_counter() - t0)
    return 0


def cmd_sweep_c(args, parser):
    t0 = time.perf_counter()
    config = build_config(args, parser)
    mode = _MODE_ALIASES[args.mode]
    T = _temperature(args, config, parser)
    res = delta_c_curve(
        config, args.c_grid, T, args.k,
        n_outer=args.n_outer, n_inner=args.n_inner, mode=mode,
        seed=args.seed, threads=args.threads, n_datasets=args.n_datasets,
    )
    rows = []
    for g, c in enumerate(args.c_grid):
        row = _base_row(config, mode, args.seed)
        row.update(
            c=float(c), k=args.k, T=T, delta=res.mean[g], stderr=res.stderr[g],
            n_outer=res.n_outer, n_inner=args.n_inner,
        )
        rows.append(row)
    out = _resolve_out(args, args.default_out)
    write_csv(out, SWEEP_SCHEMA, rows)
    _write_manifest(out, "sweep-c", _config_dict(config), args, args.seed, time.perf_counter() - t0)
    return 0


def cmd_polar_map(args, parser):
    t0 = time.perf_counter()
    config = build_config(args, parser)
    if config.d != 2:
        parser.error("polar-map requires d = 2")
    mode = _MODE_ALIASES[args.mode]
    T = _temperature(args, config, parser)
    from .mc import classify_k_monotonicity

    rows = []
    for c in args.c_grid:
        for theta in args.theta_grid:
            res = delta_k_curve(
                config, RewardSpec.polar(float(c), float(theta)), T, args.k_grid,
                n_outer=args.n_outer, n_inner=args.n_inner, mode=mode,
                seed=args.seed, threads=args.threads,
            )
            rows.append(
                {
                    "mode": mode, "d": config.d, "n": config.n, "S": config.S,
                    "sigma": config.sigma, "gamma": config.gamma,
                    "c": float(c), "theta": float(theta), "T": T,
                    "label": classify_k_monotonicity(res, z=args.z_gate),
                    "n_outer": res.n_outer, "n_inner": args.n_inner, "seed": args.seed,
                }
            )
    header = ["mode", "d", "n", "S", "sigma", "gamma", "c", "theta", "T",
              "label", "n_outer", "n_inner", "seed"]
    out = _resolve_out(args, args.default_out)
    write_csv(out, header, rows)
    _write_manifest(out, "polar-map", _config_dict(config), args, args.seed, time.perf_counter() - t0)
    return 0


def cmd_tradeoff(args, parser):
    t0 = time.perf_counter()
    base = build_config(args, parser)
    mode = _MODE_ALIASES[args.mode]
    T_high = args.t_high_sigma2 * base.sigma**2
    rows = []
    for n in args.n_grid:
        config = ModelConfig(
            d=base.d, n=int(n), S=base.S, sigma=base.sigma, gamma=base.gamma,
            tau=base.tau, teacher_mode=base.teacher_mode,
        )
        de = solve_for_config(config)
        w_T = sample_teacher(config, stream(args.seed, "teacher"))
        sd = scaling_derivatives(config, de, w_T)
        closed = dlogn_flat_prior(config, w_T)
        for T in (0.0, T_high):
            res = delta_k_curve(
                config, RewardSpec.radial(0.0), T, args.k_grid,
                n_outer=args.n_outer, n_inner=args.n_inner, mode=mode,
                seed=args.seed, threads=args.threads, n_datasets=args.n_datasets,
            )
            for g, k in enumerate(args.k_grid):
                row = _base_row(config, mode, args.seed)
                row.update(
                    c=0.0, k=int(k), T=T, delta=res.mean[g], stderr=res.stderr[g],
                    n_outer=res.n_outer, n_inner=args.n_inner,
                    dlogk=sd.dlogk, dlogn=sd.dlogn, dlogn_closed_form=closed,
                )
                rows.append(row)
    out = _resolve_out(args, args.default_out)
    write_csv(out, SWEEP_SCHEMA + ["dlogk", "dlogn", "dlogn_closed_form"], rows)
    _write_manifest(out, "tradeoff", _config_dict(base), args, args.seed, time.perf_counter() - t0)
    return 0


def cmd_bestofk_check(args, parser):
    t0 = time.perf_counter()
    config = build_config(args, parser)
    mode = _MODE_ALIASES[args.mode]
    de = solve_for_config(config)
    w_T = sample_teacher(config, stream(args.seed, "teacher"))
    res = delta_k_curve(
        config, RewardSpec.radial(0.0), 0.0, args.k_grid,
        n_outer=args.n_outer, n_inner=args.n_inner, mode=mode,
        seed=args.seed, threads=args.threads, n_datasets=args.n_datasets,
    )
    # aligned reward: the series terms reduce to the teacher deviation alone
    st = SeriesTerms.from_radial_average(config, de, w_T, w_T, 1.0)
    lam_rms = st.delta_T**2 / st.s2
    rows = []
    for g, k in enumerate(args.k_grid):
        refined = refined_best_of_k_delta(config, de, w_T, int(k)).value
        # extreme-value route: mean of the scaled minimum is 2 c_k
        evt_value = st.s2 * 2.0 * weibull_norming(lam_rms, int(k))
        row = _base_row(config, mode, args.seed)
        row.update(
            c=0.0, k=int(k), T=0.0, delta=res.mean[g], stderr=res.stderr[g],
            n_outer=res.n_outer, n_inner=args.n_inner,
            k2_delta=float(k) ** 2 * res.mean[g], asymptote=refined,
        )
        rows.append(row)
        for label, value in (("theory_refined", refined), ("theory_bestofk", evt_value)):
            theory = _base_row(config, label, args.seed)
            theory.update(
                c=0.0, k=int(k), T=0.0, delta=value, stderr=0.0,
                n_outer=0, n_inner=0,
                k2_delta=float(k) ** 2 * value, asymptote=refined,
            )
            rows.append(theory)
    out = _resolve_out(args, args.default_out)
    write_csv(out, SWEEP_SCHEMA + ["k2_delta", "asymptote"], rows)
    _write_manifest(out, "bestofk-check", _config_dict(config), args, args.seed, time.perf_counter() - t0)
    return 0


def cmd_judge(args, parser):
    t0 = time.perf_counter()
    if not args.records:
        parser.error("at least one --records file is required")
    header = ["source", "k", "T", "delta", "stderr", "n_questions_used", "n_resample", "seed"]
    if args.accuracy:
        header.append("accuracy")
    rows = []
    for path in args.records:
        ds = load_records(path)
        sweep = judge_sweep(
            ds, args.k_grid, np.asarray(args.t_grid, dtype=float),
            n_resample=args.n_resample, rng=stream(args.seed, "judge", Path(path).name),
        )
        for r in sweep:
            row = {"source": Path(path).name, "seed": args.seed, **r}
            if args.accuracy:
                row["accuracy"] = -r["delta"]
            rows.append(row)
    out = _resolve_out(args, args.default_out)
    write_csv(out, header, rows)
    _write_manifest(out, "judge", {}, args, args.seed, time.perf_counter() - t0)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="itslab",
        description="Inference-time scaling experiments at desk scale: "
                    "Monte Carlo sweeps cross-validated against closed forms.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ridge", help="solve the renormalized ridge and print its scalars")
    _add_model_flags(p)
    _add_common(p, "ridge.csv")
    p.set_defaults(func=cmd_ridge)

    p = sub.add_parser("sweep-k", help="delta vs k for a grid of radial reward offsets")
    _add_model_flags(p)
    _add_common(p, "sweep_k.csv")
    _add_mc_flags(p)
    p.add_argument("--k-grid", type=parse_int_grid, default=parse_int_grid("1,2,5,10,20,50,100"), dest="k_grid")
    p.add_argument("--c-grid", type=parse_grid, default=parse_grid("0"), dest="c_grid")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--T-sigma2", type=float, default=None, dest="T_sigma2",
                   help="temperature as a multiple of sigma^2 (default 20)")
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("sweep-t", help="delta vs T at fixed k, with the stationary-T column")
    _add_model_flags(p)
    _add_common(p, "sweep_t.csv")
    _add_mc_flags(p)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--t-grid", type=parse_grid, default=None, dest="t_grid")
    p.add_argument("--t-grid-sigma2", type=parse_grid, default=None, dest="t_grid_sigma2",
                   help="temperature grid in units of sigma^2 (default log:2,200,30)")
    p.set_defaults(func=cmd_sweep_t)

    p = sub.add_parser("sweep-c", help="delta vs radial reward offset c at fixed (k, T)")
    _add_model_flags(p)
    _add_common(p, "sweep_c.csv")
    _add_mc_flags(p)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--c-grid", type=parse_grid, default=parse_grid("log:1,100,12"), dest="c_grid")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--T-sigma2", type=float, default=None, dest="T_sigma2")
    p.set_defaults(func=cmd_sweep_c)

    p = sub.add_parser("polar-map", help="monotone/non-monotone region of delta(k) over (c, theta), d = 2")
    _add_model_flags(p)
    _add_common(p, "polar_map.csv")
    _add_mc_flags(p)
    p.add_argument("--k-grid", type=parse_int_grid, default=parse_int_grid("1,2,3,4,6,8,12,16,24,32"), dest="k_grid")
    p.add_argument("--c-grid", type=parse_grid, default=parse_grid("log:5e-5,5e-3,8"), dest="c_grid")
    p.add_argument("--theta-grid", type=parse_grid, default=parse_grid("lin:0,5.497787143782138,8"),
                   dest="theta_grid", help="angle grid in radians (default 8 points over [0, 2 pi))")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--T-sigma2", type=float, default=None, dest="T_sigma2")
    p.add_argument("--z-gate", type=float, default=3.0, dest="z_gate",
                   help="paired-stderr multiple for the non-monotonicity gate")
    p.set_defaults(func=cmd_polar_map)

    p = sub.add_parser("tradeoff", help="delta over an (n, k) grid with compute trade-off derivatives")
    _add_model_flags(p)
    _add_common(p, "tradeoff.csv")
    _add_mc_flags(p)
    p.add_argument("--n-grid", type=parse_grid, default=parse_grid("10000,31623,100000"), dest="n_grid")
    p.add_argument("--k-grid", type=parse_int_grid, default=parse_int_grid("100,1000,10000"), dest="k_grid")
    p.add_argument("--t-high-sigma2", type=float, default=20.0, dest="t_high_sigma2")
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("bestofk-check", help="k^2-scaled delta at T = 0 against the tail-law asymptote")
    _add_model_flags(p)
    _add_common(p, "bestofk_check.csv")
    _add_mc_flags(p)
    p.add_argument("--k-grid", type=parse_int_grid, default=parse_int_grid("100,1000,10000"), dest="k_grid")
    p.set_defaults(func=cmd_bestofk_check)

    p = sub.add_parser("judge", help="reward-weighted accuracy sweeps on judge-scored record files")
    _add_common(p, "judge.csv")
    p.add_argument("--records", action="append", default=[],
                   help="newline-delimited record file (repeatable for overlays)")
    p.add_argument("--k-grid", type=parse_int_grid, default=parse_int_grid("1,2,4,8,16,32"), dest="k_grid")
    p.add_argument("--t-grid", type=parse_grid, default=parse_grid("log:0.25,32,8"), dest="t_grid")
    p.add_argument("--n-resample", type=int, default=16, dest="n_resample")
    p.add_argument("--accuracy", action="store_true", help="also emit -delta as an accuracy column")
    p.set_defaults(func=cmd_judge)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"itslab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
