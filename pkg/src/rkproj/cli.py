"""Command-line entry point: ``rkproj {evolve,sweep,converge,compare,list}``.

Exit status is 0 on success, 1 on a usage error and 2 when a run fails
numerically. Any flag can also come from ``--config FILE``, a flat
``key = value`` file using the long flag names; the command line wins.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import bench
from .problems import PROBLEMS, get_problem
from .projection import ProjectionConfig
from .tableaux import get_tableau, tableau_names

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _choice(options):
    def conv(text):
        if text not in options:
            raise argparse.ArgumentTypeError(f"invalid choice {text!r}; choose from {', '.join(options)}")
        return text
    conv.__name__ = "name"
    return conv


def _csv_list(options):
    def conv(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in options]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"invalid entries {', '.join(bad) or '(empty)'}; "
                                             f"choose from {', '.join(options)}")
        return items
    conv.__name__ = "list"
    return conv


TARGET_CHOICES = ("conservative", "dissipative", "dissipative-unweighted")

EVOLVE_EPILOG = """columns, in order:
  step, t_nominal, t_effective,
  G_<inv>, drift_<inv>          for every invariant,
  then each requested channel in the order given:
    state -> q0..q{m-1}; linear -> L<j>, drift_L<j>;
    angle_deg / line_angle_deg / lambda -> one column (or one per invariant);
    projection_length, dt_ratio, rank, skipped, newton_iters -> one column.
  A failed step appends a row: FAILED, t, t, reason."""

SWEEP_EPILOG = "columns: dt, method, solvable, ratio, dG, reason (rows ordered by method, then dt)"
CONVERGE_EPILOG = "columns: tableau, method, order, dt, error, failed, in_fit, slope"
COMPARE_EPILOG = "columns: step, time, method, invariant, value"


def _common(p: argparse.ArgumentParser, problem_default=None):
    g = p.add_argument_group("problem and method")
    g.add_argument("--problem", type=_choice(tuple(PROBLEMS)), help=f"one of {', '.join(PROBLEMS)}"
                   + (f" (default {problem_default})" if problem_default else ""))
    g.add_argument("--n", type=int, help="Burgers grid size (default 50)")
    g.add_argument("--tableau", type=_choice(tableau_names()), help=f"one of {', '.join(tableau_names())}")
    g.add_argument("--target", type=_choice(TARGET_CHOICES), help="projection target (default conservative)")
    g.add_argument("--dissipative-weighted", type=_bool, help="weight the dissipation estimate by b (default true)")
    g.add_argument("--embedded", help="directional embedded weights: euler (default) or a tableau name")
    g.add_argument("--tf", type=float, help="final time")
    step = g.add_mutually_exclusive_group()
    step.add_argument("--dt", type=float, help="time step")
    step.add_argument("--cfl", type=float, help="time step as a multiple of the grid spacing")
    o = p.add_argument_group("output")
    o.add_argument("--out", help="output path (default stdout)")
    o.add_argument("--format", type=_choice(("csv", "json")), help="csv (default) or json")
    o.add_argument("--seed", type=int, help="random seed (recorded; all current subcommands are deterministic)")
    o.add_argument("--config", help="flat key = value file supplying default flag values")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rkproj", description="Invariant-preserving projection for explicit RK methods.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="command")
    fmt = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("evolve", help="integrate one problem and write a trajectory table",
                       epilog=EVOLVE_EPILOG, formatter_class=fmt)
    _common(p, "oscillator")
    p.add_argument("--method", type=_choice(bench.STEPPERS), help="plain (default) or a projection method")
    p.add_argument("--channels", type=_csv_list(bench.CHANNELS), help=f"comma list of {', '.join(bench.CHANNELS)}")

    p = sub.add_parser("sweep", help="one-step solvability sweep on the dissipative linear problem",
                       epilog=SWEEP_EPILOG, formatter_class=fmt)
    _common(p, "lindiss")
    p.add_argument("--methods", type=_csv_list(bench.STEPPERS), help="default relaxation,quasi-orthogonal")
    p.add_argument("--dt-min", type=float, help="smallest dt (default 0.05)")
    p.add_argument("--dt-max", type=float, help="largest dt (default 1.3)")
    p.add_argument("--points", type=int, help="number of dt values (default 40)")

    p = sub.add_parser("converge", help="convergence study: final-time errors and fitted slopes",
                       epilog=CONVERGE_EPILOG, formatter_class=fmt)
    _common(p, "oscillator")
    p.add_argument("--tableaux", type=_csv_list(tableau_names()), help="comma list (default all)")
    p.add_argument("--methods", type=_csv_list(bench.STEPPERS), help="default plain,quasi-orthogonal")
    p.add_argument("--levels", type=int, help="ladder length; the step halves per level (default 6)")
    p.add_argument("--ref-dt", type=float, help="reference step when no exact solution exists")

    p = sub.add_parser("compare", help="one diagnostic channel for several methods on identical inputs",
                       epilog=COMPARE_EPILOG, formatter_class=fmt)
    _common(p, "oscillator")
    p.add_argument("--methods", type=_csv_list(bench.METHODS),
                   help="default relaxation,directional,quasi-orthogonal")
    p.add_argument("--channel", type=_choice(bench.COMPARISON_CHANNELS), help="default projection_length")

    sub.add_parser("list", help="list problems, tableaux and steppers")
    return parser


def _apply_config(parser, args):
    path = getattr(args, "config", None)
    if not path:
        return
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    actions = {a.dest: a for a in sub._actions}  # noqa: SLF001
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{num}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        dest = key.lstrip("-").replace("-", "_")
        if dest not in actions or dest in ("help", "config"):
            raise UsageError(f"{path}:{num}: unknown key {key!r}")
        if getattr(args, dest) is not None:
            continue
        conv = actions[dest].type or str
        try:
            setattr(args, dest, conv(value))
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"{path}:{num}: {key}: {exc}") from exc
    if args.dt is not None and args.cfl is not None:
        raise UsageError("give only one of dt and cfl")


def _config(args, tab_name) -> ProjectionConfig:
    target = args.target or "conservative"
    weighted = target != "dissipative-unweighted"
    if args.dissipative_weighted is not None:
        weighted = args.dissipative_weighted
    embedded = None
    if args.embedded and args.embedded != "euler":
        if args.embedded not in tableau_names():
            raise UsageError(f"unknown embedded weights {args.embedded!r}; use euler or one of "
                             f"{', '.join(tableau_names())}")
        src, tab = get_tableau(args.embedded), get_tableau(tab_name)
        if src.embedded is None or src.stages != tab.stages:
            with_pairs = [n for n in tableau_names() if get_tableau(n).embedded is not None]
            raise UsageError(f"{args.embedded} has no embedded weights usable with {tab_name}; "
                             f"tableaux with embedded pairs: {', '.join(with_pairs)}")
        embedded = tuple(src.embedded.weights)
    return ProjectionConfig(target="dissipative" if target.startswith("dissipative") else "conservative",
                            weighted=weighted, embedded=embedded)


def _params(args, problem):
    if args.n is None:
        return {}
    if problem != "burgers":
        raise UsageError("--n only applies to the burgers problem")
    return {"n": args.n}


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _cell(text):
    if text == "":
        return None
    for conv in (int, float):
        try:
            v = conv(text)
        except ValueError:
            continue
        return v if not isinstance(v, float) or math.isfinite(v) else None
    return text


def _cmd_evolve(args):
    problem = args.problem or "oscillator"
    tab = args.tableau or "rk44"
    if args.dt is None and args.cfl is None:
        raise UsageError("evolve needs --dt or --cfl")
    if args.tf is None:
        raise UsageError("evolve needs --tf")
    try:
        spec = bench.ExperimentSpec(problem, tab, args.method or "plain", _config(args, tab), args.dt, args.cfl,
                                    args.tf, _params(args, problem), tuple(args.channels or ()))
        buf = io.StringIO()
        result = bench.run_evolution(spec, buf)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with _output(args.out) as out:
        if args.format == "json":
            rows = list(csv.reader(io.StringIO(buf.getvalue())))
            body = rows[1:-1] if result.failure is not None else rows[1:]
            json.dump({"columns": rows[0], "rows": [[_cell(c) for c in r] for r in body],
                       "failure": None if result.ok else str(result.failure)}, out, indent=1)
            out.write("\n")
        else:
            out.write(buf.getvalue())
    if not result.ok:
        print(f"rkproj: {result.failure}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_sweep(args):
    lo = 0.05 if args.dt_min is None else args.dt_min
    hi = 1.3 if args.dt_max is None else args.dt_max
    points = 40 if args.points is None else args.points
    if points < 1 or not 0 < lo <= hi or (points > 1 and lo == hi):
        raise UsageError("need 0 < dt-min < dt-max and points >= 1")
    grid = np.linspace(lo, hi, points)
    tab = args.tableau or "rk44"
    cfg = _config(args, tab)
    if args.target is None:
        cfg = cfg.with_(target="dissipative")
    try:
        rows = bench.run_solvability_sweep(grid, args.methods or ("relaxation", "quasi-orthogonal"),
                                           get_problem(args.problem or "lindiss", **_params(args, args.problem)),
                                           tab, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with _output(args.out) as out:
        bench.write_sweep(rows, out, args.format or "csv")
    return EXIT_OK


def _cmd_converge(args):
    problem = args.problem or "oscillator"
    levels = 6 if args.levels is None else args.levels
    if levels < 4:
        raise UsageError("a convergence ladder needs at least 4 levels")
    params = _params(args, problem)
    if args.cfl is not None:
        dx = get_problem(problem, **params).params.get("dx")
        if dx is None:
            raise UsageError(f"{problem} has no grid spacing; use --dt")
        coarse = args.cfl * dx
    else:
        coarse = 0.1 if args.dt is None else args.dt
    if args.tf is None:
        raise UsageError("converge needs --tf")
    dts = coarse * 0.5 ** np.arange(levels)
    cfg = _config(args, (args.tableaux or tableau_names())[0])
    try:
        report = bench.run_convergence(problem, args.tableaux or tableau_names(),
                                       args.methods or ("plain", "quasi-orthogonal"), dts, args.tf, cfg,
                                       ref_dt=args.ref_dt, params=params)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with _output(args.out) as out:
        if args.format == "json":
            report.to_json(out)
        else:
            report.to_csv(out)
    failures = [r for s in report.series for r in s.reasons]
    for r in failures:
        print(f"rkproj: failed run {r}", file=sys.stderr)
    return EXIT_NUMERIC if failures else EXIT_OK


def _cmd_compare(args):
    problem = args.problem or "oscillator"
    tab = args.tableau or "rk44"
    if args.tf is None:
        raise UsageError("compare needs --tf")
    params = _params(args, problem)
    if args.cfl is not None:
        dx = get_problem(problem, **params).params.get("dx")
        if dx is None:
            raise UsageError(f"{problem} has no grid spacing; use --dt")
        dt = args.cfl * dx
    elif args.dt is not None:
        dt = args.dt
    else:
        raise UsageError("compare needs --dt or --cfl")
    try:
        res = bench.run_comparison(problem, tab, args.methods or ("relaxation", "directional", "quasi-orthogonal"),
                                   dt, args.tf, args.channel or "projection_length", _config(args, tab), params)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with _output(args.out) as out:
        res.write(out, args.format or "csv")
    for m, msg in res.failures.items():
        print(f"rkproj: {m} failed: {msg}", file=sys.stderr)
    return EXIT_NUMERIC if res.failures else EXIT_OK


def _cmd_list(args):
    out = sys.stdout
    out.write("problems:\n")
    for name in PROBLEMS:
        out.write(f"  {name}\n")
    out.write("tableaux:\n")
    for name in tableau_names():
        t = get_tableau(name)
        out.write(f"  {name:8s} {t.label} (stages {t.stages}, order {t.order})\n")
    out.write("steppers:\n")
    for name in bench.STEPPERS:
        out.write(f"  {name}\n")
    return EXIT_OK


COMMANDS = {"evolve": _cmd_evolve, "sweep": _cmd_sweep, "converge": _cmd_converge, "compare": _cmd_compare,
            "list": _cmd_list}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("rkproj: a command is required (evolve, sweep, converge, compare, list)")
        if args.command != "list":
            _apply_config(parser, args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except BrokenPipeError:
        # reader closed early (e.g. ``| head``); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
