"""Command line front-end.

Subcommands: ``solve``, ``simulate``, ``estimate-n``, ``detect-inliers``,
``embed``, ``oracle``. Every command prints a one-line summary and, with
``--out``, writes a versioned JSON result file. Exit codes: 0 success,
1 usage or input error, 2 numeric failure.
"""

import argparse
import os
import sys
import time

import numpy as np

from . import bench, dataio, select
from .core import (
    COORDINATE,
    DESCRIPTOR,
    FeatureSet,
    PartialPermutation,
    RomlConfig,
    emphasize_first,
    normalize_features,
    solve_roml,
)
from .embed import build_affinity, laplacian_embed
from .exceptions import NumericalError

KAPPA_R_DEFAULT = 0.08
KAPPA_N_DEFAULT = 0.015


def _ppms_as_lists(ppms):
    return [[int(s) for s in p.target_to_source] for p in ppms]


def _parse_lambda(text):
    if text == "auto":
        return None
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected 'auto' or a positive number, got %r" % text
        ) from None
    if not value > 0:
        raise argparse.ArgumentTypeError("lambda must be positive")
    return value


def _add_solver_flags(sub):
    sub.add_argument("--lambda", dest="lam", type=_parse_lambda, default=None,
                     help="trade-off weight; 'auto' = 5/sqrt(d*n) "
                          "(descriptor) or 5/sqrt(2K) (coordinate)")
    sub.add_argument("--rho0", type=float, default=None,
                     help="initial penalty (default 1e-4 / 1e-6 by mode)")
    sub.add_argument("--rho-factor", type=float, default=None,
                     help="per-iteration penalty growth "
                          "(default 1.001 / 1.0001 by mode)")
    sub.add_argument("--max-iters", type=int, default=5000)
    sub.add_argument("--tol", type=float, default=1e-7,
                     help="relative primal residual tolerance")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--parallel", type=int, default=1,
                     help="worker threads for the per-image subproblems")


def _config_from_args(args, n, mode, fixed_first=None):
    return RomlConfig(
        n=n,
        lam=args.lam,
        rho0=args.rho0,
        rho_factor=args.rho_factor,
        max_iters=args.max_iters,
        primal_tol=args.tol,
        mode=mode,
        seed=args.seed,
        fixed_first=fixed_first,
        emphasis_factor=getattr(args, "emphasis", 2.0),
        parallel=args.parallel,
    )


def _config_echo(config, sets):
    d = sets[0].dim
    lam, rho0, factor = config.resolved(d, len(sets))
    return {
        "mode": config.mode,
        "n": config.n,
        "lambda": lam,
        "rho0": rho0,
        "rho_factor": factor,
        "max_iters": config.max_iters,
        "primal_tol": config.primal_tol,
        "seed": config.seed,
        "parallel": config.parallel,
    }


def _prepare_sets(sets, mode, normalize):
    if mode == DESCRIPTOR and normalize > 0:
        return [normalize_features(fs, normalize) for fs in sets]
    return sets


def _augment_box_features(sets, aspects, scores, kappa_r, kappa_n, seed):
    """Stack kappa_r * aspect-ratio under each descriptor and perturb by
    per-box noise of std (1 - objectness score), scaled by kappa_n."""
    rng = np.random.default_rng(seed)
    out = []
    for fs, aspect, score in zip(sets, aspects, scores):
        if aspect.size != fs.size or score.size != fs.size:
            raise ValueError(
                "image %r: box metadata length does not match the %d "
                "feature columns" % (fs.image_id, fs.size)
            )
        f = np.vstack([fs.features, kappa_r * aspect[None, :]])
        std = np.clip(1.0 - score, 0.0, None)
        noise = rng.standard_normal(f.shape) * std[None, :]
        out.append(FeatureSet(f + kappa_n * noise, image_id=fs.image_id))
    return out


def _solve_metrics(report, truth):
    if truth is None:
        return {}
    match, ident = bench.match_identification_ratios(report.ppms, truth)
    return {
        "recovery_rate": bench.recovery_rate(report.ppms, truth),
        "match_ratio": match,
        "identification_ratio": ident,
    }


def _finish(args, payload, summary):
    if getattr(args, "out", None):
        dataio.save_report(args.out, payload)
        summary += " -> %s" % args.out
    print(summary)
    return 0


def _cmd_solve(args):
    started = time.perf_counter()
    sets, truth, mode = dataio.load_dataset(args.manifest)

    fixed_first = None
    extra_echo = {}
    if args.col:
        if args.n not in (None, 1):
            raise ValueError("--col solves a single-slot problem; drop --n")
        aspects, scores = dataio.load_box_metadata(args.manifest)
        sets = _augment_box_features(
            sets, aspects, scores, args.kappa_r, args.kappa_n, args.seed
        )
        n = 1
        extra_echo = {"kappa_r": args.kappa_r, "kappa_n": args.kappa_n}
    else:
        if args.n is None:
            raise ValueError("--n is required (or use --col)")
        n = args.n

    sets = _prepare_sets(sets, mode, args.normalize)
    if args.fix_first is not None:
        t2s = [int(s) for s in args.fix_first.split(",")]
        fixed_first = PartialPermutation(sets[0].size, t2s)
        if len(t2s) != n:
            raise ValueError(
                "--fix-first lists %d slots but n=%d" % (len(t2s), n)
            )
        if mode == DESCRIPTOR:
            sets = emphasize_first(sets, args.emphasis,
                                   base_norm=args.normalize or 1.0)
        extra_echo["emphasis_factor"] = args.emphasis

    config = _config_from_args(args, n, mode, fixed_first)
    report = solve_roml(sets, config)
    metrics = _solve_metrics(report, truth)
    wall = time.perf_counter() - started

    payload = {
        "command": "solve",
        "config": dict(_config_echo(config, sets), **extra_echo),
        "ppms": _ppms_as_lists(report.ppms),
        "converged": report.converged,
        "iterations": report.iterations_used,
        "objective": report.objective_history[-1],
        "residual_history": [list(r) for r in report.residual_history],
        "objective_history": report.objective_history,
        "metrics": metrics,
        "wall_time_s": wall,
    }
    summary = "solve: converged=%s iters=%d objective=%.6g" % (
        report.converged, report.iterations_used,
        report.objective_history[-1],
    )
    if metrics:
        summary += " recovery=%.3f" % metrics["recovery_rate"]
    return _finish(args, payload, summary)


def _cmd_simulate(args):
    started = time.perf_counter()
    spec = bench.SyntheticSpec(
        K=args.K, n=args.n, n_k=args.n + args.outliers, d=args.d,
        sparse_error_ratio=args.err, missing_inlier_ratio=args.missing,
        seed=args.seed,
    )

    def make_config(seed):
        return RomlConfig(
            n=args.n, lam=args.lam, rho0=args.rho0,
            rho_factor=args.rho_factor, max_iters=args.max_iters,
            primal_tol=args.tol, seed=seed, parallel=args.parallel,
        )

    results = bench.simulate_trials(spec, make_config, trials=args.trials)
    rates = [rate for _, _, rate in results]
    wall = time.perf_counter() - started

    payload = {
        "command": "simulate",
        "spec": {
            "K": spec.K, "n": spec.n, "n_k": spec.n_k, "d": spec.d,
            "sparse_error_ratio": spec.sparse_error_ratio,
            "missing_inlier_ratio": spec.missing_inlier_ratio,
            "seed": spec.seed, "trials": args.trials,
        },
        "config": _config_echo(make_config(spec.seed),
                               [FeatureSet(np.ones((spec.d, 1)))]),
        "trials": [
            {
                "recovery_rate": rate,
                "converged": report.converged,
                "iterations": report.iterations_used,
                "objective": report.objective_history[-1],
            }
            for report, _, rate in results
        ],
        "mean_recovery_rate": float(np.mean(rates)),
        "wall_time_s": wall,
    }
    summary = "simulate: mean recovery %.4f over %d trials" % (
        float(np.mean(rates)), args.trials,
    )
    return _finish(args, payload, summary)


def _cmd_estimate_n(args):
    started = time.perf_counter()
    sets, _, mode = dataio.load_dataset(args.manifest)
    sets = _prepare_sets(sets, mode, args.normalize)
    base = _config_from_args(args, 1, mode)
    estimate = select.estimate_inlier_count(
        sets, base, delta=args.delta, n_max=args.n_max
    )
    wall = time.perf_counter() - started
    payload = {
        "command": "estimate-n",
        "config": dict(_config_echo(base, sets), delta=args.delta),
        "n_hat": estimate.n_hat,
        "found": estimate.found,
        "gamma_series": estimate.gamma_series,
        "wall_time_s": wall,
    }
    summary = "estimate-n: n_hat=%d%s (gamma series length %d)" % (
        estimate.n_hat,
        "" if estimate.found else " (no step found; upper bound)",
        len(estimate.gamma_series),
    )
    return _finish(args, payload, summary)


def _cmd_detect_inliers(args):
    started = time.perf_counter()
    sets, truth, mode = dataio.load_dataset(args.manifest)
    if mode != DESCRIPTOR:
        raise ValueError("detect-inliers needs a descriptor-mode dataset")
    sets = _prepare_sets(sets, mode, args.normalize)
    config = _config_from_args(args, args.n, mode)
    report = solve_roml(sets, config)
    d = sets[0].dim
    mask = select.detect_true_inliers(report.D, d, args.n, xi=args.xi)
    wall = time.perf_counter() - started

    metrics = {}
    if truth is not None:
        precision, recall = bench.detection_precision_recall(
            mask, truth, report.ppms
        )
        metrics = {"precision": precision, "recall": recall}
    payload = {
        "command": "detect-inliers",
        "config": dict(
            _config_echo(config, sets),
            xi=args.xi,
            lambda_rpca=1.0 / np.sqrt(d * args.n),
        ),
        "ppms": _ppms_as_lists(report.ppms),
        "detected": mask.detected.tolist(),
        "error_l1": mask.error_l1.tolist(),
        "rpca_converged": mask.rpca_converged,
        "metrics": metrics,
        "wall_time_s": wall,
    }
    summary = "detect-inliers: %d of %d features kept" % (
        int(mask.detected.sum()), mask.detected.size,
    )
    if metrics:
        summary += " precision=%.2f recall=%.2f" % (
            metrics["precision"], metrics["recall"],
        )
    return _finish(args, payload, summary)


def _cmd_embed(args):
    started = time.perf_counter()
    point_sets = dataio.load_point_sets(args.manifest)
    affinity = build_affinity(point_sets, args.sigma_spa, args.sigma_des)
    embedded = laplacian_embed(
        affinity, args.dim, image_ids=[ps.image_id for ps in point_sets]
    )
    os.makedirs(args.out_dir, exist_ok=True)
    written = []
    for fs in embedded:
        out_path = os.path.join(args.out_dir, "embedded_%s.csv" % fs.image_id)
        dataio.save_matrix(out_path, fs.features)
        written.append(out_path)
    wall = time.perf_counter() - started
    payload = {
        "command": "embed",
        "config": {
            "dim": args.dim,
            "sigma_spa": args.sigma_spa,
            "sigma_des": args.sigma_des,
        },
        "files": written,
        "wall_time_s": wall,
    }
    summary = "embed: wrote %d feature files of dimension %d" % (
        len(written), args.dim,
    )
    return _finish(args, payload, summary)


def _cmd_oracle(args):
    started = time.perf_counter()
    sets, truth, mode = dataio.load_dataset(args.manifest)
    sets = _prepare_sets(sets, mode, args.normalize)
    ppms, best = bench.brute_force_miap(sets, args.n, mode=mode)
    wall = time.perf_counter() - started
    metrics = {}
    if truth is not None:
        metrics = {"recovery_rate": bench.recovery_rate(ppms, truth)}
    payload = {
        "command": "oracle",
        "config": {"mode": mode, "n": args.n},
        "ppms": _ppms_as_lists(ppms),
        "optimal_nuclear_norm": best,
        "metrics": metrics,
        "wall_time_s": wall,
    }
    summary = "oracle: optimal nuclear norm %.6g" % best
    return _finish(args, payload, summary)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="roml",
        description="Joint inlier selection and matching across feature sets",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="match a dataset manifest")
    solve.add_argument("--manifest", required=True)
    solve.add_argument("--n", type=int, default=None,
                       help="number of shared features to select")
    solve.add_argument("--normalize", type=float, default=1.0,
                       help="per-column norm applied in descriptor mode "
                            "(0 disables)")
    solve.add_argument("--fix-first", default=None,
                       help="comma-separated source indices pinning the "
                            "first image's slots (tracking)")
    solve.add_argument("--emphasis", type=float, default=2.0,
                       help="norm boost of the pinned first image")
    solve.add_argument("--col", action="store_true",
                       help="augment box descriptors with aspect ratio and "
                            "objectness noise, then select one box per "
                            "image")
    solve.add_argument("--kappa-r", type=float, default=KAPPA_R_DEFAULT)
    solve.add_argument("--kappa-n", type=float, default=KAPPA_N_DEFAULT)
    solve.add_argument("--out", default=None)
    _add_solver_flags(solve)
    solve.set_defaults(func=_cmd_solve)

    simulate = commands.add_parser(
        "simulate", help="run seeded synthetic matching trials"
    )
    simulate.add_argument("--K", type=int, required=True)
    simulate.add_argument("--d", type=int, required=True)
    simulate.add_argument("--n", type=int, required=True)
    simulate.add_argument("--outliers", type=int, default=0)
    simulate.add_argument("--err", type=float, default=0.0,
                          help="sparse error ratio per column")
    simulate.add_argument("--missing", type=float, default=0.0,
                          help="missing inlier ratio per set")
    simulate.add_argument("--trials", type=int, default=5)
    simulate.add_argument("--out", default=None)
    _add_solver_flags(simulate)
    simulate.set_defaults(func=_cmd_simulate)

    estimate = commands.add_parser(
        "estimate-n", help="estimate the shared-feature count"
    )
    estimate.add_argument("--manifest", required=True)
    estimate.add_argument("--delta", type=float, default=select.DELTA_DEFAULT)
    estimate.add_argument("--n-max", type=int, default=None)
    estimate.add_argument("--normalize", type=float, default=1.0)
    estimate.add_argument("--out", default=None)
    _add_solver_flags(estimate)
    estimate.set_defaults(func=_cmd_estimate_n)

    detect = commands.add_parser(
        "detect-inliers", help="solve, then flag true inliers"
    )
    detect.add_argument("--manifest", required=True)
    detect.add_argument("--n", type=int, required=True)
    detect.add_argument("--xi", type=float, default=select.XI_DEFAULT,
                        help="l1 threshold on per-feature error blocks")
    detect.add_argument("--normalize", type=float, default=1.0)
    detect.add_argument("--out", default=None)
    _add_solver_flags(detect)
    detect.set_defaults(func=_cmd_detect_inliers)

    embed = commands.add_parser(
        "embed", help="learn embedded features from coords + descriptors"
    )
    embed.add_argument("--manifest", required=True)
    embed.add_argument("--dim", type=int, required=True)
    embed.add_argument("--sigma-spa", type=float, default=10.0)
    embed.add_argument("--sigma-des", type=float, default=0.2)
    embed.add_argument("--out-dir", required=True)
    embed.add_argument("--out", default=None)
    embed.set_defaults(func=_cmd_embed)

    oracle = commands.add_parser(
        "oracle", help="exact enumeration on a small dataset"
    )
    oracle.add_argument("--manifest", required=True)
    oracle.add_argument("--n", type=int, required=True)
    oracle.add_argument("--normalize", type=float, default=1.0)
    oracle.add_argument("--out", default=None)
    oracle.set_defaults(func=_cmd_oracle)

    return parser


def run(argv=None):
    """Parse and execute; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except NumericalError as exc:
        print("roml: numeric failure: %s" % exc, file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print("roml: numeric failure: %s" % exc, file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print("roml: error: %s" % exc, file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
