"""Command-line interface: solve, polish, verify, render, export, bench.

Exit codes: 0 success (or feasible), 1 infeasible or nothing found,
2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..models.base import FAMILIES, SYMMETRY_MODES, VARIANTS, EllipseOptions, Instance
from ..polish import PolishRejectedError, polish
from ..solver import MODES, SolverConfig, multistart
from ..verify import StructuralError, verify
from .bench import parse_grid, run_bench
from .export import write_model
from .render import render
from .solution_file import SolutionFileError, read_solution, write_solution

EXIT_OK, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _family(text: str) -> str:
    name = text.replace("-", "_")
    if name not in FAMILIES:
        raise argparse.ArgumentTypeError(f"unknown family {text!r} (choose from {', '.join(FAMILIES)})")
    return name


def _mode(text: str) -> str:
    name = text.replace("-", "_")
    if name not in MODES:
        raise argparse.ArgumentTypeError(f"unknown mode {text!r}")
    return name


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", type=_family, required=True, help="one of " + ", ".join(FAMILIES))
    p.add_argument("--outer", "-l", help="container shape (polygon order or solid name)")
    p.add_argument("--inner", "-m", help="packed shape (polygon order or solid name)")
    p.add_argument("--count", "-n", type=int, required=True, help="number of packed items")
    p.add_argument("--variant", choices=VARIANTS, default="dist")
    p.add_argument("--epsilon", type=float, default=1e-8, help="safety margin built into the model")
    p.add_argument("--symmetry", choices=SYMMETRY_MODES, default="none", help="ellipse symmetry breaking")
    p.add_argument("--no-strengthening", action="store_true", help="drop the ellipse strengthening cuts")


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--time", type=float, default=60.0, help="wall-clock budget in seconds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", type=_mode, default="faithful", help="faithful or sat-penalty")
    p.add_argument("--workers", type=int, default=None, help="parallel restarts (default from PACKNLP_THREADS)")


def _shape(value, family):
    if value is None:
        return None
    return int(value) if family == "polygon" and str(value).isdigit() else value


def _instance(args) -> Instance:
    if args.family in ("polygon", "platonic") and (args.outer is None or args.inner is None):
        raise UsageError(f"--outer and --inner are required for {args.family}")
    return Instance(
        family=args.family,
        n=args.count,
        m=_shape(args.inner, args.family),
        l=_shape(args.outer, args.family),
        variant=args.variant,
        epsilon=args.epsilon,
        ellipse=EllipseOptions(strengthening=not args.no_strengthening, symmetry=args.symmetry),
    )


def _config(args, **extra) -> SolverConfig:
    return SolverConfig(
        restarts=args.restarts,
        time_budget=args.time,
        seed=args.seed,
        mode=args.mode,
        workers=args.workers,
        **extra,
    )


def cmd_solve(args) -> int:
    inst = _instance(args)
    report = multistart(inst, _config(args, target=args.target))
    if report.best is None:
        print(f"{inst.key}: no feasible solution ({report.restarts_completed} restarts, {report.reason})")
        return EXIT_INFEASIBLE
    sol = report.best
    if args.polish:
        sol, _ = polish(inst, sol)
    write_solution(sol, args.out)
    print(
        f"{inst.key}: objective {sol.objective!r} after {report.restarts_completed} restarts "
        f"({report.feasible_restarts} feasible, {report.elapsed:.1f} s, stop: {report.reason}) -> {args.out}"
    )
    return EXIT_OK


def cmd_polish(args) -> int:
    sol = read_solution(args.file)
    try:
        out, rep = polish(sol.instance, sol)
    except PolishRejectedError as exc:
        print(f"polish rejected: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    write_solution(out, args.out or args.file)
    print(f"objective {rep.objective_before!r} -> {rep.objective_after!r}; verified: {rep.feasible}")
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_verify(args) -> int:
    sol = read_solution(args.file)
    report = verify(sol.instance, sol, tolerance=args.tolerance)
    print(report.summary())
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_render(args) -> int:
    sol = read_solution(args.file)
    text, ext = render(sol)
    out = Path(args.out) if args.out else Path(args.file).with_suffix("." + ext)
    if out.suffix.lower() != "." + ext:
        raise UsageError(f"{sol.instance.family} renders to .{ext}, not {out.suffix or 'no extension'}")
    out.write_text(text)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_export(args) -> int:
    inst = _instance(args)
    model = write_model(inst, args.out)
    print(f"wrote {args.out}: {len(model['variables'])} variables, {len(model['constraints'])} constraints")
    return EXIT_OK


def cmd_bench(args) -> int:
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    grid = parse_grid(args.grid)

    def progress(v, inst, value):
        if not args.quiet:
            shown = "not found" if value is None else f"{value:.8f}"
            print(f"  {v:>7} {inst.key.rsplit('-', 1)[0]}: {shown}", file=sys.stderr, flush=True)

    result = run_bench(args.family, grid, variants, _config(args), progress)
    print(result.table())
    if args.out:
        Path(args.out).write_text(json.dumps(result.to_dict(), indent=1) + "\n")
    return EXIT_OK if any(v is not None for v in result.objectives["dist"]) else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="packnlp", description="Nonlinear packing models and solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="multistart local solve of one instance")
    _add_instance_args(p)
    _add_solver_args(p)
    p.add_argument("--target", type=float, default=None, help="stop once this objective is reached")
    p.add_argument("--polish", action="store_true", help="polish before writing")
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("polish", help="make a solution exactly feasible in double precision")
    p.add_argument("file")
    p.add_argument("--out", "-o", help="output file (default: overwrite the input)")
    p.set_defaults(func=cmd_polish)

    p = sub.add_parser("verify", help="check a solution geometrically")
    p.add_argument("file")
    p.add_argument("--tolerance", type=float, default=0.0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("render", help="draw a solution as SVG (planar) or OBJ (solids)")
    p.add_argument("file")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("export", help="write the model as JSON expression trees")
    _add_instance_args(p)
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("bench", help="compare formulation variants over an instance grid")
    p.add_argument("--family", type=_family, required=True)
    p.add_argument("--variants", default=",".join(VARIANTS))
    p.add_argument("--grid", required=True, help='e.g. "l=3..5 m=3..5 n=2..6"')
    _add_solver_args(p)
    p.add_argument("--out", "-o", help="also write raw results as JSON")
    p.add_argument("--quiet", "-q", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SolutionFileError, StructuralError, ValueError, OSError) as exc:
        print(f"packnlp {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
