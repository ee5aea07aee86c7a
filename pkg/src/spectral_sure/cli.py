"""Command-line interface.

Exit codes: 0 success, 1 validation failure, 2 usage or parse error,
3 estimator precondition violated.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from . import df as dfm
from . import penalty as pen
from . import regression as reg
from . import simlab, validation
from .density import plugin_density_provider
from .errors import InvalidSpecError, ShapeMismatchError, SpectralSureError
from .oracle import McResult, true_df_mc, true_mse_mc
from .penalty import PenaltySpec
from .spectral import apply_spectral, svd, truncate_rank

EXIT_OK, EXIT_VALIDATION, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# I/O helpers
# ---------------------------------------------------------------------------

def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_matrix(path) -> np.ndarray:
    """Dense CSV matrix; a first row with no numeric field is treated as a header."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise UsageError(f"{path} is empty")
    if not any(_is_number(v) for v in rows[0].split(",")):
        rows = rows[1:]
    try:
        data = [[float(v) for v in line.split(",")] for line in rows]
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    if not data or len({len(r) for r in data}) != 1:
        raise UsageError(f"{path}: rows have different lengths")
    arr = np.array(data, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{path}: non-finite entries")
    return arr


def format_matrix(A) -> str:
    return "".join(",".join(f"{v:.17g}" for v in row) + "\n" for row in np.atleast_2d(A))


def write_output(path: Path, text: str, args: argparse.Namespace, argv: Sequence[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    write_manifest(path, args, argv)


def write_manifest(path: Path, args: argparse.Namespace, argv: Sequence[str]) -> None:
    manifest = {
        "command": args.command,
        "arguments": {k: v for k, v in vars(args).items() if k not in ("func",)},
        "argv": list(argv),
        "seed": getattr(args, "seed", None),
        "artifact_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _add_penalty_flags(p: argparse.ArgumentParser, theta: bool = True) -> None:
    p.add_argument("--penalty", help="nuclear, scad, mcplus, log, firm, bridge or rank")
    if theta:
        p.add_argument("--theta", type=float, default=None)
    p.add_argument("--a", type=float, default=None, help="SCAD shape (default 3.7)")
    p.add_argument("--gamma", type=float, default=None, help="MC+/Log/Firm shape")
    p.add_argument("--q", type=float, default=None, help="Bridge exponent in [0, 1)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)


def _spec_from_args(args, theta: float) -> PenaltySpec:
    try:
        return PenaltySpec.from_dict({"penalty": args.penalty, "theta": theta, "a": args.a,
                                      "gamma": args.gamma, "q": args.q})
    except InvalidSpecError as exc:
        raise UsageError(str(exc)) from None


def _density_for(spec: PenaltySpec, fit, args):
    if pen.discontinuity(spec) is None:
        return None
    return plugin_density_provider(fit, args.tau, reps=args.density_reps, seed=args.seed,
                                   threads=args.threads)


def _load_design(args):
    if getattr(args, "design", None) is None:
        return None
    return reg.DesignFactorization.from_design(read_matrix(args.design))


def _fit_once(Y, spec: Optional[PenaltySpec], K: Optional[int], args, fact=None):
    """(fitted, DfEstimate) for one penalty level or one rank."""
    if fact is not None:
        if K is not None:
            res = reg.reduced_rank_regression(fact, Y, K)
            return res.fitted, res.df
        reduced = apply_spectral(svd(fact.project(Y)), lambda s: pen.prox(spec, s))
        density = _density_for(spec, reduced, args)
        res = reg.spectral_regression(fact, Y, spec, density)
        return res.fitted, res.df
    dec = svd(Y)
    if K is not None:
        if not 0 <= K <= dec.n:
            raise UsageError(f"--rank must lie in [0, {dec.n}]")
        return truncate_rank(dec, K), dfm.df_reduced_rank(dec, K)
    fitted = apply_spectral(dec, lambda s: pen.prox(spec, s))
    return fitted, dfm.df_estimate(dec, spec, _density_for(spec, fitted, args))


SUMMARY_HEADER = "theta,df,df_without_density,sure,residual_sq"


def _summary_row(theta, Y, fitted, est: dfm.DfEstimate, tau) -> str:
    resid = float(np.sum((fitted - Y) ** 2))
    risk = dfm.sure_risk(Y, fitted, est.value, tau)
    return f"{theta:.17g},{est.value:.17g},{est.value_without_density:.17g},{risk:.17g},{resid:.17g}"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fit(args, argv) -> int:
    if (args.penalty is None) == (args.rank is None):
        raise UsageError("give exactly one of --penalty or --rank")
    Y = read_matrix(args.input)
    fact = _load_design(args)
    if fact is not None and fact.m != Y.shape[0]:
        raise UsageError("design and response have different numbers of rows")
    spec = None
    theta = float("nan")
    if args.penalty is not None:
        if args.theta is None:
            raise UsageError("--theta is required with --penalty")
        spec = _spec_from_args(args, args.theta)
        theta = args.theta
    fitted, est = _fit_once(Y, spec, args.rank, args, fact)
    summary = SUMMARY_HEADER + "\n" + _summary_row(theta, Y, fitted, est, args.tau) + "\n"
    if args.output:
        out = Path(args.output)
        write_output(out, format_matrix(fitted), args, argv)
        write_output(Path(str(out) + ".summary.csv"), summary, args, argv)
    else:
        sys.stdout.write(format_matrix(fitted))
    sys.stdout.write(summary)
    return EXIT_OK


def _parse_theta_grid(args) -> List[float]:
    if args.thetas is not None:
        grid = [float(t) for t in args.thetas.split(",") if t.strip()]
    elif args.theta_max is not None:
        if args.theta_count < 1:
            raise UsageError("--theta-count must be >= 1")
        grid = list(np.linspace(args.theta_min, args.theta_max, args.theta_count))
    else:
        grid = []
    if not grid:
        raise UsageError("theta grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise UsageError("theta grid must be strictly increasing")
    return grid


def cmd_sure_path(args, argv) -> int:
    if args.penalty is None:
        raise UsageError("--penalty is required")
    grid = _parse_theta_grid(args)
    Y = read_matrix(args.input)
    fact = _load_design(args)
    lines = [SUMMARY_HEADER]
    for theta in grid:
        spec = _spec_from_args(args, theta)
        try:
            fitted, est = _fit_once(Y, spec, None, args, fact)
        except SpectralSureError as exc:
            raise type(exc)(f"theta={theta:g}: {exc}") from None
        lines.append(_summary_row(theta, Y, fitted, est, args.tau))
    text = "\n".join(lines) + "\n"
    if args.output:
        write_output(Path(args.output), text, args, argv)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_truth(args, argv) -> int:
    if (args.penalty is None) == (args.rank is None):
        raise UsageError("give exactly one of --penalty or --rank")
    M = read_matrix(args.input)
    if args.rank is not None:
        K = args.rank
        est = lambda Y: truncate_rank(svd(Y), K)  # noqa: E731
    else:
        if args.theta is None:
            raise UsageError("--theta is required with --penalty")
        spec = _spec_from_args(args, args.theta)
        est = lambda Y: apply_spectral(svd(Y), lambda s: pen.prox(spec, s))  # noqa: E731
    try:
        df = true_df_mc(est, M, args.tau, args.reps, args.seed, args.threads)
        mse = true_mse_mc(est, M, args.tau, args.reps, args.seed, args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = "quantity," + McResult.CSV_HEADER + "\n"
    text += "df," + df.to_csv_row() + "\n" + "mse," + mse.to_csv_row() + "\n"
    if args.output:
        write_output(Path(args.output), text, args, argv)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_experiment(args, argv) -> int:
    if args.config:
        try:
            cfg = simlab.ExperimentConfig.from_text(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"bad config: {exc}") from None
    elif args.preset in simlab.PRESETS:
        cfg = simlab.PRESETS[args.preset]()
    else:
        raise UsageError(f"unknown preset {args.preset!r}; choose from {sorted(simlab.PRESETS)}")
    changes = {"threads": args.threads}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reps_truth is not None:
        changes["reps_truth"] = args.reps_truth
    if args.reps_estimate is not None:
        changes["reps_estimate"] = args.reps_estimate
    cfg = cfg.replace(**changes)
    out_dir = Path(args.output)
    results = simlab.run_df_curve(cfg)
    args.seed = cfg.seed
    for res in results:
        path = out_dir / f"{cfg.name}_{res.label}.csv"
        write_output(path, res.to_csv(), args, argv)
        print(path)
    (out_dir / f"{cfg.name}.config").write_text(cfg.to_text())
    return EXIT_OK


def cmd_validate(args, argv) -> int:
    results = validation.run_all(args.scale, threads=args.threads,
                                 experiments=not args.skip_experiments)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("ALL PASS" if ok else "FAILURES PRESENT")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_replay(args, argv) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        old = list(manifest["argv"])
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"bad manifest: {exc}") from None
    if args.output:
        flag = "--output"
        if flag in old:
            old[old.index(flag) + 1] = args.output
        else:
            old += [flag, args.output]
    return main(old)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectral-sure",
                                     description="Spectral shrinkage with unbiased df and SURE.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one estimator and report df and SURE")
    p.add_argument("--input", required=True, help="response matrix CSV")
    p.add_argument("--design", help="design matrix CSV (regression fit)")
    _add_penalty_flags(p)
    p.add_argument("--rank", type=int, default=None, help="reduced-rank estimator with this K")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--density-reps", type=int, default=1000)
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sure-path", help="df and SURE along a theta grid")
    p.add_argument("--input", required=True)
    p.add_argument("--design")
    _add_penalty_flags(p, theta=False)
    p.add_argument("--thetas", help="comma-separated increasing theta values")
    p.add_argument("--theta-min", type=float, default=0.0)
    p.add_argument("--theta-max", type=float, default=None)
    p.add_argument("--theta-count", type=int, default=21)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--density-reps", type=int, default=1000)
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(func=cmd_sure_path)

    p = sub.add_parser("truth", help="Monte Carlo df and MSE at a known signal")
    p.add_argument("--input", required=True, help="signal matrix CSV")
    _add_penalty_flags(p)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--output")
    _add_common(p)
    p.set_defaults(func=cmd_truth)

    p = sub.add_parser("experiment", help="run a preset or config-file experiment")
    p.add_argument("preset", nargs="?", default=None, help=f"one of {sorted(simlab.PRESETS)}")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--reps-truth", type=int, default=None)
    p.add_argument("--reps-estimate", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("validate", help="run the property suites")
    p.add_argument("--scale", choices=validation.SCALES, default="default")
    p.add_argument("--skip-experiments", action="store_true",
                   help="skip the long simulation suites")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--output", help="write to this path instead of the recorded one")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if getattr(args, "tau", 1.0) is not None and getattr(args, "tau", 1.0) <= 0:
        print("error: --tau must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, argv)
    except (UsageError, ShapeMismatchError, InvalidSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpectralSureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
