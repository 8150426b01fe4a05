"""Command line entry point: ``kmstab <command> [options]``.

Exit status: 0 when every verdict passes or is skipped, 1 when any fails,
2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from ..geometry import TOL_GEO, Codebook
from ..measures import DiscreteMeasure, from_samples, grid_discretize, load, sample, two_segments, uniform_rectangle
from ..quantize import LloydConfig, enumerable, solve
from ..stability import MarginWarning, certified_margin, margin_profile, stability_report
from .counterexamples import RECTANGLE_EPS, run_counterexample_rectangle, run_counterexample_segments
from .report import FORMATS, Report, Table, emit_report, format_report, render_text
from .suites import (
    FAIL,
    MARGINS,
    ExperimentSpec,
    default_t_grid,
    verify_comparison_suite,
    verify_epsilon_minimizer,
    verify_geometry_suite,
    verify_theorem_bound,
)

NAMED = {"rectangle": uniform_rectangle, "segments": two_segments}
DEFAULT_RESOLUTION = 100
DEFAULT_LAMBDAS = (0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0)
SEGMENT_LAMBDAS = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0)
CLI_RESTARTS = 20


class UsageError(ValueError):
    pass


# -- argument parsing ---------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _codebook(text: str) -> Codebook:
    """``"x,y;x,y"``: centers separated by ';', coordinates by ','."""
    try:
        rows = [[float(v) for v in part.split(",")] for part in text.split(";") if part.strip()]
        return Codebook(rows)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad codebook {text!r}: {exc}") from None


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _common(p: argparse.ArgumentParser, measure_required: bool = False) -> None:
    p.add_argument("--measure", required=measure_required, help="CSV/JSON measure file, or 'rectangle' / 'segments'")
    p.add_argument("--resolution", type=_positive, help="grid cells for a named measure (rectangle: r x r/2)")
    p.add_argument("--samples", type=_positive, help="draw this many samples from a named measure instead of a grid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=_positive)
    p.add_argument("--probes", type=_positive, default=200)
    p.add_argument("--out", type=Path, help="report path; side tables go next to it as <stem>.<table>.csv")
    p.add_argument("--format", choices=FORMATS, default="csv")
    p.add_argument("--tol", type=float, default=TOL_GEO, help="slack allowed on every checked inequality")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kmstab", description="k-means stability toolkit and verification harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimal", help="optimal codebook, risk and uniqueness flag")
    _common(p, measure_required=True)

    p = sub.add_parser("stability", help="F1, F2, F and Hausdorff distance between two codebooks")
    _common(p, measure_required=True)
    p.add_argument("--q", type=_codebook, required=True, help='codebook, e.g. "0,1;0,-1"')
    p.add_argument("--cstar", type=_codebook, help="reference codebook (default: solve for the optimum)")

    p = sub.add_parser("margin", help="lambda_n and the p, p*, P(A(lambda)) curves")
    _common(p, measure_required=True)
    p.add_argument("--cstar", type=_codebook, help="reference codebook (default: solve for the optimum)")
    p.add_argument("--t-grid", type=_floats)
    p.add_argument("--lambda-grid", type=_floats)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", choices=("theorem", "geometry", "comparison", "epsilon"))
    _common(p)
    p.add_argument("--instances", type=_positive, default=100, help="random instances when no --measure is given")
    p.add_argument("--trials", type=_positive, default=10_000, help="geometry suite trials")
    p.add_argument("--margin", choices=MARGINS, default="lambda_n")
    p.add_argument("--eps-grid", type=_floats, default=(1e-3, 1e-2, 1e-1))
    p.add_argument("--t-grid", type=_floats)
    p.add_argument("--lambda-grid", type=_floats)

    p = sub.add_parser("counterexample", help="reproduce a counterexample distribution")
    p.add_argument("which", choices=("rectangle", "segments"))
    _common(p)
    p.add_argument("--eps-grid", type=_floats, default=RECTANGLE_EPS)
    p.add_argument("--lambda-grid", type=_floats, default=SEGMENT_LAMBDAS)
    return parser


# -- commands -----------------------------------------------------------------


def _measure(args) -> DiscreteMeasure:
    name = args.measure
    if name in NAMED:
        dist = NAMED[name]()
        if args.samples:
            return from_samples(sample(dist, args.samples, args.seed))
        return grid_discretize(dist, args.resolution or DEFAULT_RESOLUTION)
    path = Path(name)
    if not path.exists():
        raise UsageError(f"--measure: no such file {name!r} and not one of {sorted(NAMED)}")
    return load(path)


def _need_k(args) -> int:
    if args.k is None:
        raise UsageError("--k is required")
    return args.k


def _lloyd(args) -> LloydConfig:
    return LloydConfig(restarts=CLI_RESTARTS, seed=args.seed)


def _codebook_table(name: str, c: Codebook) -> Table:
    cols = ["center"] + [f"x_{i + 1}" for i in range(c.dim)]
    return Table(name, cols, [[j, *row] for j, row in enumerate(c.tolist())])


def _reference(args, P: DiscreteMeasure):
    if args.cstar is not None:
        return args.cstar, None
    res = solve(P, _need_k(args), _lloyd(args))
    return res.codebook, res


def cmd_optimal(args) -> Report:
    P = _measure(args)
    res = solve(P, _need_k(args), _lloyd(args))
    meas = {
        "codebook": res.codebook.tolist(),
        "risk": res.risk,
        "unique_flag": res.unique_flag,
        "iterations": res.iterations,
        "converged": res.converged,
        "atoms": P.n,
    }
    if res.witness is not None:
        meas["second_optimum"] = res.witness.tolist()
    return Report("optimal", {}, [], meas, [_codebook_table("codebook", res.codebook)])


def cmd_stability(args) -> Report:
    P = _measure(args)
    cstar, _ = _reference(args, P)
    if args.q.k != cstar.k or args.q.dim != cstar.dim:
        raise UsageError(f"--q has shape ({args.q.k}, {args.q.dim}), reference has ({cstar.k}, {cstar.dim})")
    if cstar.dim != P.dim:
        raise UsageError(f"codebook dimension {cstar.dim} does not match measure dimension {P.dim}")
    rep = stability_report(P, cstar, args.q)
    meas = {**rep.as_dict(), "cstar": cstar.tolist(), "q": args.q.tolist()}
    return Report("stability", {}, [], meas, [])


def cmd_margin(args) -> Report:
    P = _measure(args)
    cstar, res = _reference(args, P)
    if cstar.dim != P.dim:
        raise UsageError(f"codebook dimension {cstar.dim} does not match measure dimension {P.dim}")
    if args.t_grid:
        t_grid = args.t_grid
    else:
        t_grid = tuple(default_t_grid(cstar)) if cstar.k > 1 else ()
    lam_grid = args.lambda_grid or DEFAULT_LAMBDAS
    certified = res is not None and res.certified_unique
    prof = margin_profile(P, cstar, t_grid, lam_grid, certified=certified)
    meas = {"lambda_n": prof.lambda_n, "p_is_lower_bound": prof.p_is_lower_bound, "cstar": cstar.tolist()}
    if enumerable(P, cstar.k):
        meas["certified_margin"] = certified_margin(P, cstar)
    tables = [
        Table("p", ["t", "p"], [list(r) for r in prof.p_curve]),
        Table("p_star", ["t", "p_star"], [list(r) for r in prof.p_star_curve]),
        Table("a_mass", ["lambda", "a_mass"], [list(r) for r in prof.a_mass_curve]),
    ]
    return Report("margin", {}, [], meas, tables)


def cmd_verify(args) -> Report:
    if args.suite == "geometry":
        return Report("verify geometry", {}, verify_geometry_suite(args.seed, args.trials, args.tol), {}, [])
    kw = dict(
        instances=args.instances,
        probes=args.probes,
        seed=args.seed,
        lloyd=_lloyd(args),
        t_grid=args.t_grid or (),
        lam_grid=args.lambda_grid or (),
        eps_grid=args.eps_grid,
        margin=args.margin,
        tol=args.tol,
        k=args.k,
    )
    if args.measure is not None:
        if args.suite == "epsilon" and args.measure in NAMED and not args.samples:
            kw["sample_dist"] = NAMED[args.measure]()
        else:
            kw["measure"] = _measure(args)
            _need_k(args)
    spec = ExperimentSpec(**kw)
    run = {"theorem": verify_theorem_bound, "comparison": verify_comparison_suite, "epsilon": verify_epsilon_minimizer}
    return Report(f"verify {args.suite}", {}, run[args.suite](spec), {}, [])


def cmd_counterexample(args) -> Report:
    if args.which == "rectangle":
        out = run_counterexample_rectangle(args.eps_grid, args.resolution or 400, seed=args.seed)
    else:
        out = run_counterexample_segments(
            args.resolution or 200, lam_grid=args.lambda_grid, probes=args.probes, seed=args.seed
        )
    return Report(f"counterexample {args.which}", {}, out.verdicts, out.info, out.tables)


COMMANDS = {
    "optimal": cmd_optimal,
    "stability": cmd_stability,
    "margin": cmd_margin,
    "verify": cmd_verify,
    "counterexample": cmd_counterexample,
}


def _params(args) -> dict:
    skip = {"out", "format"}
    out = {}
    for key, val in sorted(vars(args).items()):
        if key in skip or val is None:
            continue
        if isinstance(val, Codebook):
            val = val.tolist()
        elif isinstance(val, Path):
            val = str(val)
        out[key] = val
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MarginWarning)
            with np.errstate(all="ignore"):
                report = COMMANDS[args.command](args)
        report.params = _params(args)
        if args.out is not None:
            emit_report(report, args.out, args.format)
            print(render_text(report))
        else:
            sys.stdout.write(format_report(report, args.format))
    except (ValueError, OSError) as exc:
        print(f"kmstab: error: {exc}", file=sys.stderr)
        return 2
    return 1 if report.status == FAIL else 0


if __name__ == "__main__":
    sys.exit(main())
