"""Command-line interface.

Subcommands: fit, influence, sensitivity, bounds, scenario, consistency,
report.  Single-object results are written as JSON, grids and sweeps as
CSV; the report subcommand additionally renders matplotlib figures next
to the delimited output.  Flags override values from an optional JSON
config file (``--config``); unknown config keys are rejected.  Exit
codes: 0 success, 1 computational failure, 2 usage error.

Environment: ``KBR_SEED`` supplies the default seed, ``KBR_THREADS``
caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as kio
from . import robustness as rb
from .errors import KbrError, UsageError
from .experiments import (
    SCENARIO_NAMES,
    ScenarioSpec,
    consistency_study,
    fig1_comparison,
    generate,
    parse_schedule,
)
from .kernels import parse_domain_box, parse_kernel
from .losses import parse_loss
from .solver import FitOptions, fit


def _env_int(name: str, fallback: int) -> int:
    raw = os.environ.get(name)
    if raw is None:
        return fallback
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"environment variable {name} must be an integer, got {raw!r}")


def _parse_grid(text: str, field: str) -> np.ndarray:
    """Grid spec: "lo:hi:count" (inclusive linspace) or "v1,v2,...";"""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            return np.linspace(float(lo), float(hi), int(count))
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"{field}: cannot parse grid spec {text!r}") from None


def _parse_z(text: str) -> tuple[np.ndarray, float]:
    """Contamination point: "x=-2,y=100"; multi-d x uses colons: "x=1:2,y=0"."""
    parts = dict()
    try:
        for chunk in text.split(","):
            key, _, val = chunk.partition("=")
            parts[key.strip()] = val.strip()
        zx = np.array([float(v) for v in parts["x"].split(":")], dtype=float)
        zy = float(parts["y"])
    except (KeyError, ValueError):
        raise UsageError(f"--z: cannot parse {text!r}; expected like 'x=-2,y=100'") from None
    return zx, zy


def _require(args, *names):
    for name in names:
        if getattr(args, name.replace("-", "_"), None) is None:
            raise UsageError(f"--{name} is required")


def _positive_lambda(args) -> float:
    if args.lam is None:
        raise UsageError("--lambda is required")
    if not args.lam > 0:
        raise UsageError(f"lambda must be > 0, got {args.lam:g}")
    return float(args.lam)


def _fit_options(args) -> FitOptions:
    if args.tol is not None and not args.tol > 0:
        raise UsageError(f"tol must be > 0, got {args.tol:g}")
    return FitOptions(tol=args.tol) if args.tol is not None else FitOptions()


def _loss_kernel(args):
    _require(args, "loss", "kernel")
    box = parse_domain_box(args.domain_box) if args.domain_box else None
    try:
        loss = parse_loss(args.loss)
        kernel = parse_kernel(args.kernel, domain_box=box)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return loss, kernel


# -- subcommand bodies ---------------------------------------------------


def _cmd_fit(args) -> int:
    _require(args, "data", "out")
    loss, kernel = _loss_kernel(args)
    lam = _positive_lambda(args)
    dataset = kio.read_data_csv(args.data)
    result = fit(loss, kernel, dataset, lam, opts=_fit_options(args))
    kio.dump_json(args.out, kio.fit_to_dict(result, loss.spec, kernel.spec))
    print(
        f"fit: n={dataset.n} objective={result.objective:.6g} "
        f"norm_h={result.norm_h:.6g} residual={result.stationarity_residual:.3g} "
        f"-> {args.out}"
    )
    return 0


def _cmd_influence(args) -> int:
    _require(args, "data", "z", "out")
    loss, kernel = _loss_kernel(args)
    lam = _positive_lambda(args)
    dataset = kio.read_data_csv(args.data)
    zx, zy = _parse_z(args.z)
    p = rb.DiscreteDistribution.from_dataset(dataset)
    result = rb.influence_function(loss, kernel, p, lam, (zx, zy),
                                   opts=_fit_options(args))
    payload = {
        "kind": "influence",
        "loss": loss.spec,
        "kernel": kernel.spec,
        "lambda": lam,
        "z": {"x": zx, "y": zy},
        "if_norm": result.if_norm,
        "first_term_identity_gap": result.first_term_identity_gap,
        "fit_norm_h": result.fit_result.norm_h,
        "if_function": {
            "centers": result.if_function.centers,
            "coefficients": result.if_function.coefficients,
        },
        "first_term": {
            "centers": result.first_term.centers,
            "coefficients": result.first_term.coefficients,
        },
        "second_term": {
            "centers": result.second_term.centers,
            "coefficients": result.second_term.coefficients,
        },
    }
    kio.dump_json(args.out, payload)
    print(f"influence: |IF|_H={result.if_norm:.6g} "
          f"identity_gap={result.first_term_identity_gap:.3g} -> {args.out}")
    return 0


def _cmd_sensitivity(args) -> int:
    _require(args, "data", "grid_x", "grid_y", "out")
    loss, kernel = _loss_kernel(args)
    lam = _positive_lambda(args)
    dataset = kio.read_data_csv(args.data)
    if dataset.dim != 1:
        raise UsageError("sensitivity grids require 1-dimensional inputs")
    opts = _fit_options(args)
    grid_x = _parse_grid(args.grid_x, "--grid-x")
    grid_y = _parse_grid(args.grid_y, "--grid-y")
    base = fit(loss, kernel, dataset, lam, opts=opts)

    bound = None
    if loss.lipschitz_constant is not None and kernel.sup_norm is not None:
        bound = 2.0 * loss.lipschitz_constant * kernel.sup_norm / lam

    cells = [(zx, zy) for zx in grid_x for zy in grid_y]

    def one(cell):
        zx, zy = cell
        sc = rb.sensitivity_curve(loss, kernel, dataset, lam, (zx, zy),
                                  opts=opts, base=base)
        return sc.norm_h()

    threads = args.threads
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            norms = list(pool.map(one, cells))
    else:
        norms = [one(cell) for cell in cells]

    rows = []
    violations = 0
    for (zx, zy), norm in zip(cells, norms):
        if bound is None:
            violated = ""
        else:
            violated = "true" if norm > bound else "false"
            violations += norm > bound
        rows.append([float(zx), float(zy), float(norm),
                     "" if bound is None else float(bound), violated])
    kio.write_csv(args.out, ["z_x", "z_y", "sc_norm", "bound", "violated"], rows)
    bound_text = "n/a" if bound is None else f"{bound:.6g}"
    print(f"sensitivity: {len(rows)} cells max|SC|_H="
          f"{max(norms):.6g} bound={bound_text} violations={violations} -> {args.out}")
    return 0


def _cmd_bounds(args) -> int:
    _require(args, "data", "eps", "out")
    loss, kernel = _loss_kernel(args)
    lam = _positive_lambda(args)
    dataset = kio.read_data_csv(args.data)
    opts = _fit_options(args)
    p = rb.DiscreteDistribution.from_dataset(dataset)
    if args.z is None and args.ptilde is None:
        raise UsageError("--z or --ptilde is required")
    if args.ptilde is not None:
        contaminant = rb.DiscreteDistribution.from_dataset(kio.read_data_csv(args.ptilde))
    else:
        zx, zy = _parse_z(args.z)
        contaminant = rb.DiscreteDistribution.point_mass(zx, zy, dim=p.dim)

    eps_values = _parse_grid(args.eps, "--eps")
    base = rb.fit_distribution(loss, kernel, p, lam, opts=opts)
    reports = [
        rb.bounds_report(loss, kernel, p, contaminant, lam, float(eps),
                         opts=opts, base=base)
        for eps in eps_values
    ]
    payload = {
        "kind": "bounds",
        "loss": loss.spec,
        "kernel": kernel.spec,
        "lambda": lam,
        "reports": [report.to_dict() for report in reports],
    }
    kio.dump_json(args.out, payload)
    total = sum(len(r.violations) for r in reports)
    print(f"bounds: {len(reports)} eps values, violations={total} -> {args.out}")
    return 1 if total else 0


def _cmd_scenario(args) -> int:
    _require(args, "name", "out")
    if args.name not in SCENARIO_NAMES:
        raise UsageError(f"--name must be one of {', '.join(SCENARIO_NAMES)}")
    overrides = {}
    if args.extreme_copies is not None:
        overrides["extreme_copies"] = args.extreme_copies
    if args.caption_variant:
        overrides["caption_variant"] = True
    if args.n is not None:
        overrides["n"] = args.n
    data = generate(ScenarioSpec(args.name, args.seed, overrides))
    kio.write_data_csv(args.out, data.dataset)
    outliers = ",".join(str(i) for i in data.outlier_indices) or "none"
    print(f"scenario {args.name}: n={data.dataset.n} outlier_indices={outliers} "
          f"-> {args.out}")
    return 0


def _cmd_consistency(args) -> int:
    _require(args, "ns", "schedule", "out")
    loss, kernel = _loss_kernel(args)
    try:
        schedule = parse_schedule(args.schedule)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ns = [int(v) for v in str(args.ns).split(",")]
    result = consistency_study(
        loss, kernel, schedule, ns, args.seeds, base_seed=args.seed,
        test_size=args.test_size, sigma=args.sigma,
        opts=_fit_options(args), threads=args.threads,
    )
    rows = []
    for i, n in enumerate(result.n_values):
        for j in range(args.seeds):
            rows.append([n, j, result.lambda_values[i],
                         result.empirical_risks[i, j], result.wall_times[i, j]])
    kio.write_csv(args.out, ["n", "seed", "lambda_n", "risk", "wall_time"], rows)
    gaps = " ".join(f"{g:.4f}" for g in result.median_gaps)
    print(
        f"consistency: bayes={result.bayes_risk:.6g} median_gaps=[{gaps}] "
        f"non_increasing={str(result.decreasing_trend).lower()} "
        f"final/initial={result.final_initial_gap_ratio:.3f} -> {args.out}"
    )
    return 0


def _cmd_report(args) -> int:
    from . import report as kreport

    _require(args, "name", "outdir")
    os.makedirs(args.outdir, exist_ok=True)
    if args.name == "consistency":
        loss, kernel = _loss_kernel(args)
        try:
            schedule = parse_schedule(args.schedule)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        ns = [int(v) for v in str(args.ns).split(",")]
        result = consistency_study(loss, kernel, schedule, ns, args.seeds,
                                   base_seed=args.seed, test_size=args.test_size,
                                   sigma=args.sigma, opts=_fit_options(args),
                                   threads=args.threads)
        paths = kreport.render_consistency(result, args.outdir)
    elif args.name in ("fig1b", "fig1c", "fig1d"):
        overrides = {}
        if args.extreme_copies is not None:
            overrides["extreme_copies"] = args.extreme_copies
        if args.caption_variant:
            overrides["caption_variant"] = True
        spec = ScenarioSpec(args.name, args.seed, overrides)
        paths = kreport.render_scenario(spec, args.outdir, opts=_fit_options(args))
    elif args.name == "fig1a":
        paths = kreport.render_clean(ScenarioSpec("fig1a", args.seed), args.outdir,
                                     opts=_fit_options(args))
    else:
        raise UsageError(f"--name must be one of fig1a, fig1b, fig1c, fig1d, consistency")
    print(f"report {args.name}: wrote {', '.join(paths)}")
    return 0


# -- parser wiring --------------------------------------------------------


def _add_common(sub, *, data=False, model=False, seeded=False):
    sub.add_argument("--config", help="JSON config file; flags override its values")
    sub.add_argument("--out", help="output path")
    if data:
        sub.add_argument("--data", help="input data CSV (header x1,...,xd,y)")
    if model:
        sub.add_argument("--loss", help="loss spec: ls | eps:E | huber:C | logistic | pinball:T")
        sub.add_argument("--kernel", help="kernel spec: rbf:G | linear | poly:C,M")
        sub.add_argument("--lambda", dest="lam", type=float, help="regularization > 0")
        sub.add_argument("--domain-box", dest="domain_box",
                         help="compact input box lo1,hi1[,lo2,hi2,...]")
        sub.add_argument("--tol", type=float, help="solver stationarity tolerance")
    if seeded:
        sub.add_argument("--seed", type=int, default=None, help="RNG seed (default KBR_SEED or 0)")
    sub.add_argument("--threads", type=int, default=None,
                     help="sweep parallelism (default KBR_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbreg",
        description="Kernel-based regression with convex losses, influence "
                    "functions and robustness bounds.",
    )
    subparsers = parser.add_subparsers(dest="command")

    sub = subparsers.add_parser("fit", help="fit a regularized kernel regression")
    _add_common(sub, data=True, model=True)

    sub = subparsers.add_parser("influence", help="influence function at a point")
    _add_common(sub, data=True, model=True)
    sub.add_argument("--z", help="contamination point, e.g. 'x=-2,y=100'")

    sub = subparsers.add_parser("sensitivity", help="sensitivity-curve grid sweep")
    _add_common(sub, data=True, model=True)
    sub.add_argument("--grid-x", dest="grid_x", help="x grid: lo:hi:count or v1,v2,...")
    sub.add_argument("--grid-y", dest="grid_y", help="y grid: lo:hi:count or v1,v2,...")

    sub = subparsers.add_parser("bounds", help="stability bound report")
    _add_common(sub, data=True, model=True)
    sub.add_argument("--eps", help="contamination sizes, e.g. 0.01,0.05,0.1")
    sub.add_argument("--z", help="point-mass contamination, e.g. 'x=-2,y=100'")
    sub.add_argument("--ptilde", help="contaminating distribution CSV")

    sub = subparsers.add_parser("scenario", help="generate a named data scenario")
    _add_common(sub, seeded=True)
    sub.add_argument("--name", help=f"one of {', '.join(SCENARIO_NAMES)}")
    sub.add_argument("--extreme-copies", dest="extreme_copies", type=int,
                     help="fig1c leverage-point copies (1..3)")
    sub.add_argument("--caption-variant", dest="caption_variant", action="store_true",
                     help="fig1d: use the (100,0),(100,100) point pair")
    sub.add_argument("--n", type=int, help="consistency scenario sample size")

    sub = subparsers.add_parser("consistency", help="risk-consistency trend study")
    _add_common(sub, model=True, seeded=True)
    sub.add_argument("--schedule", help="regularization schedule, e.g. lambda=n^-0.25")
    sub.add_argument("--ns", help="sample sizes, e.g. 25,50,100,200,400,800")
    sub.add_argument("--seeds", type=int, default=11, help="seeds per n (default 11)")
    sub.add_argument("--test-size", dest="test_size", type=int, default=100_000,
                     help="held-out test sample size")
    sub.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation")

    sub = subparsers.add_parser("report", help="render figures + CSV for a scenario")
    _add_common(sub, model=True, seeded=True)
    sub.add_argument("--name", help="fig1a, fig1b, fig1c, fig1d, or consistency")
    sub.add_argument("--outdir", help="directory for figures and CSVs")
    sub.add_argument("--extreme-copies", dest="extreme_copies", type=int)
    sub.add_argument("--caption-variant", dest="caption_variant", action="store_true")
    sub.add_argument("--schedule", default="lambda=n^-0.25")
    sub.add_argument("--ns", default="25,50,100,200,400,800")
    sub.add_argument("--seeds", type=int, default=11)
    sub.add_argument("--test-size", dest="test_size", type=int, default=100_000)
    sub.add_argument("--sigma", type=float, default=1.0)

    return parser


_COMMANDS = {
    "fit": _cmd_fit,
    "influence": _cmd_influence,
    "sensitivity": _cmd_sensitivity,
    "bounds": _cmd_bounds,
    "scenario": _cmd_scenario,
    "consistency": _cmd_consistency,
    "report": _cmd_report,
}


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Load --config JSON (if any) and bake it into subparser defaults."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise UsageError("--config needs a file path")
    path = argv[idx + 1]
    try:
        with open(path, "r", encoding="utf-8") as handle:
            config = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--config {path}: {exc}")
    if not isinstance(config, dict):
        raise UsageError(f"--config {path}: top level must be an object")

    command = argv[0] if argv and not argv[0].startswith("-") else None
    sub = None
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction) and command:
            sub = action.choices.get(command)
    if sub is None:
        raise UsageError("--config requires a subcommand")
    known = {a.dest for a in sub._actions}
    defaults = {}
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest == "lambda":
            dest = "lam"
        if dest not in known:
            raise UsageError(f"--config {path}: unknown key {key!r}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        if getattr(args, "seed", None) is None:
            args.seed = _env_int("KBR_SEED", 0)
        if getattr(args, "threads", None) is None:
            args.threads = _env_int("KBR_THREADS", 1)
        if args.threads < 1:
            raise UsageError(f"--threads must be >= 1, got {args.threads}")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KbrError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
