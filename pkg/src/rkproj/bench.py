"""Experiment harness: evolution runs, solvability sweeps, convergence
studies and side-by-side method comparisons, written as CSV or JSON.

Floats are written with ``repr`` (shortest round-trip form, at most 17
significant digits), so identical inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .core import OdeProblem, integrate, march, rk_step
from .errors import IntegrationError, RKProjError
from .problems import PROBLEMS, get_problem
from .projection import METHODS, ProjectionConfig, line_angle_deg, project_step
from .tableaux import get_tableau, tableau_names

__all__ = [
    "STEPPERS",
    "CHANNELS",
    "ExperimentSpec",
    "EvolutionResult",
    "evolution_columns",
    "run_evolution",
    "SweepRow",
    "run_solvability_sweep",
    "write_sweep",
    "ConvergenceSeries",
    "ConvergenceReport",
    "fit_slope",
    "run_convergence",
    "ComparisonResult",
    "run_comparison",
    "fmt",
]

STEPPERS = ("plain",) + METHODS

# Optional evolution channels; the invariant values and drifts are always written.
CHANNELS = ("state", "linear", "projection_length", "angle_deg", "line_angle_deg", "dt_ratio", "lambda", "rank",
            "skipped", "newton_iters")
_PROJECTION_CHANNELS = frozenset(CHANNELS[2:])
COMPARISON_CHANNELS = ("projection_length", "angle_deg", "line_angle_deg")


def fmt(x) -> str:
    """Deterministic text form of a table cell."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _writer(stream):
    return csv.writer(stream, lineterminator="\n")


def _resolve_problem(problem, params=None) -> OdeProblem:
    if isinstance(problem, OdeProblem):
        return problem
    return get_problem(problem, **(params or {}))


# -- evolution --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    """One evolution run.

    Give exactly one of ``dt`` and ``cfl``; ``cfl`` means ``dt = cfl * dx``
    and needs a problem with a grid spacing (Burgers). ``t_final = 0``
    produces only the initial row.
    """

    problem: str = "oscillator"
    tableau: str = "rk44"
    method: str = "plain"
    config: ProjectionConfig = field(default_factory=ProjectionConfig)
    dt: float | None = None
    cfl: float | None = None
    t_final: float = 1.0
    params: dict = field(default_factory=dict)
    channels: tuple = ()

    def __post_init__(self):
        if self.problem.lower() not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {', '.join(PROBLEMS)}")
        if self.tableau not in tableau_names():
            raise ValueError(f"unknown tableau {self.tableau!r}; choose from {', '.join(tableau_names())}")
        if self.method not in STEPPERS:
            raise ValueError(f"unknown stepper {self.method!r}; choose from {', '.join(STEPPERS)}")
        if (self.dt is None) == (self.cfl is None):
            raise ValueError("give exactly one of dt and cfl")
        step = self.dt if self.dt is not None else self.cfl
        if not step > 0:
            raise ValueError("dt (or cfl) must be positive")
        if not self.t_final >= 0:
            raise ValueError("t_final must be non-negative")
        object.__setattr__(self, "channels", tuple(self.channels))
        bad = [c for c in self.channels if c not in CHANNELS]
        if bad:
            raise ValueError(f"unknown channel(s) {', '.join(bad)}; choose from {', '.join(CHANNELS)}")
        if self.method == "plain":
            needs = sorted(set(self.channels) & _PROJECTION_CHANNELS)
            if needs:
                raise ValueError(f"channel(s) {', '.join(needs)} need a projection stepper")
        if self.method != "plain" and self.config.method != self.method:
            object.__setattr__(self, "config", self.config.with_(method=self.method))

    def build(self):
        """``(problem, tableau, dt, config_or_None)`` ready for :func:`~rkproj.core.integrate`."""
        problem = get_problem(self.problem, **self.params)
        if self.cfl is not None:
            if "dx" not in problem.params:
                raise ValueError(f"{problem.name} has no grid spacing; use dt instead of cfl")
            dt = self.cfl * problem.params["dx"]
        else:
            dt = float(self.dt)
        return problem, get_tableau(self.tableau), dt, None if self.method == "plain" else self.config


def evolution_columns(problem: OdeProblem, channels: Sequence[str]) -> list[str]:
    labels = [inv.label for inv in problem.invariants]
    cols = ["step", "t_nominal", "t_effective"]
    for lab in labels:
        cols += [f"G_{lab}", f"drift_{lab}"]
    for ch in channels:
        if ch == "state":
            cols += [f"q{i}" for i in range(problem.m)]
        elif ch == "linear":
            for j in range(len(problem.linear_invariants)):
                cols += [f"L{j}", f"drift_L{j}"]
        elif ch in ("angle_deg", "line_angle_deg", "lambda"):
            cols += [f"{ch}_{lab}" for lab in labels] if len(labels) > 1 else [ch]
        else:
            cols.append(ch)
    return cols


@dataclass
class EvolutionResult:
    columns: list
    rows: int
    failure: IntegrationError | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


def _diagnostics(ch, ps, n_inv):
    if ps is None:
        return [None] * (n_inv if ch in ("angle_deg", "line_angle_deg", "lambda") and n_inv > 1 else 1)
    if ch == "projection_length":
        return [ps.projection_length]
    if ch == "angle_deg":
        return list(ps.angle_deg)
    if ch == "line_angle_deg":
        return list(line_angle_deg(ps.angle_deg))
    if ch == "lambda":
        return list(ps.lambdas)
    if ch == "dt_ratio":
        return [ps.dt_ratio]
    if ch == "rank":
        return [ps.rank]
    if ch == "skipped":
        return [ps.skipped]
    return [ps.newton_iters]


def run_evolution(spec: ExperimentSpec, stream: TextIO) -> EvolutionResult:
    """Write one CSV row per accepted step (plus the initial row).

    A failed step ends the table with a trailer row whose ``step`` cell is
    ``FAILED``, followed by the failure time and the reason.
    """
    problem, tab, dt, config = spec.build()
    cols = evolution_columns(problem, spec.channels)
    w = _writer(stream)
    w.writerow(cols)
    q0 = problem.q0
    g0 = problem.invariant_values(q0)
    lin = problem.linear_invariants
    l0 = np.array([d @ q0 for d in lin])
    n_inv = len(problem.invariants)

    def row(n, t_nom, t_eff, q, ps):
        g = problem.invariant_values(q)
        cells = [n, t_nom, t_eff]
        for gj, g0j in zip(g, g0):
            cells += [gj, gj - g0j]
        for ch in spec.channels:
            if ch == "state":
                cells += list(q)
            elif ch == "linear":
                for d, l0j in zip(lin, l0):
                    lj = float(d @ q)
                    cells += [lj, lj - l0j]
            else:
                cells += _diagnostics(ch, ps, n_inv)
        w.writerow([fmt(c) for c in cells])

    row(0, 0.0, 0.0, q0, None)
    count = 1
    if spec.t_final == 0:
        return EvolutionResult(cols, count)
    try:
        for n, t_nom, t_eff, q, ps in march(problem, tab, dt, spec.t_final, config):
            row(n, t_nom, t_eff, q, ps)
            count += 1
    except IntegrationError as exc:
        trailer = ["FAILED", fmt(exc.time), fmt(exc.time), str(exc)]
        w.writerow(trailer + [""] * (len(cols) - len(trailer)))
        return EvolutionResult(cols, count, exc)
    return EvolutionResult(cols, count)


# -- solvability sweep -------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    dt: float
    method: str
    solvable: bool
    ratio: float
    dG: float
    reason: str = ""

    COLUMNS = ("dt", "method", "solvable", "ratio", "dG", "reason")

    def cells(self):
        return [fmt(self.dt), self.method, fmt(self.solvable), fmt(self.ratio), fmt(self.dG), self.reason]


def run_solvability_sweep(dt_grid, methods: Sequence[str] = ("relaxation", "quasi-orthogonal"),
                          problem="lindiss", tableau: str = "rk44",
                          config: ProjectionConfig | None = None) -> list[SweepRow]:
    """One step from ``q0`` per (method, dt) with the dissipative target.

    A failed solve is recorded as ``solvable = False`` with ``nan`` ratio and
    energy change. Rows are ordered by method, then dt.
    """
    grid = np.asarray(dt_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("dt grid must be positive and strictly ascending")
    for m in methods:
        if m not in STEPPERS:
            raise ValueError(f"unknown stepper {m!r}; choose from {', '.join(STEPPERS)}")
    prob = _resolve_problem(problem)
    tab = get_tableau(tableau)
    base = config if config is not None else ProjectionConfig(target="dissipative")
    g0 = prob.invariant_values(prob.q0)
    rows = []
    for m in methods:
        for dt in grid:
            dt = float(dt)
            try:
                rec = rk_step(prob, tab, 0.0, prob.q0, dt)
                if m == "plain":
                    q1, ratio = rec.q_next, 1.0
                else:
                    ps = project_step(rec, prob, base.with_(method=m))
                    q1, ratio = ps.q_hat, ps.dt_ratio
                dG = float(prob.invariant_values(q1)[0] - g0[0])
                rows.append(SweepRow(dt, m, True, ratio, dG))
            except RKProjError as exc:
                rows.append(SweepRow(dt, m, False, math.nan, math.nan, str(exc)))
    return rows


def write_sweep(rows: Sequence[SweepRow], stream: TextIO, format: str = "csv"):
    if format == "json":
        json.dump([{"dt": r.dt, "method": r.method, "solvable": r.solvable, "ratio": _json_num(r.ratio),
                    "dG": _json_num(r.dG), "reason": r.reason} for r in rows], stream, indent=1)
        stream.write("\n")
        return
    w = _writer(stream)
    w.writerow(SweepRow.COLUMNS)
    for r in rows:
        w.writerow(r.cells())


def _json_num(x):
    x = float(x)
    return x if math.isfinite(x) else None


# -- convergence --------------------------------------------------------------------

def fit_slope(dts, errors, mask=None) -> float:
    """Least-squares slope of ``log2(error)`` against ``log2(dt)``; ``nan`` with fewer than two points."""
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if mask is None:
        mask = np.isfinite(errors) & (errors > 0)
    if np.count_nonzero(mask) < 2:
        return math.nan
    return float(np.polyfit(np.log2(dts[mask]), np.log2(errors[mask]), 1)[0])


@dataclass
class ConvergenceSeries:
    tableau: str
    method: str
    order: int
    dts: np.ndarray
    errors: np.ndarray
    failed: np.ndarray
    in_fit: np.ndarray
    slope: float
    reasons: list = field(default_factory=list)

    @property
    def window(self) -> tuple:
        """``(dt_min, dt_max)`` of the fitted points, or ``None``."""
        d = self.dts[self.in_fit]
        return (float(d.min()), float(d.max())) if d.size else None

    def slope_without_coarsest(self) -> float:
        mask = self.in_fit.copy()
        mask[int(np.argmax(np.where(mask, self.dts, -np.inf)))] = False
        return fit_slope(self.dts, self.errors, mask)


@dataclass
class ConvergenceReport:
    """Errors and fitted slopes per (tableau, method).

    Only points with ``error > floor = floor_factor * uncertainty`` enter
    the fit, where ``uncertainty`` bounds the error of the reference.
    """

    problem: str
    t_final: float
    reference: str
    uncertainty: float
    floor: float
    series: list

    def get(self, tableau: str, method: str) -> ConvergenceSeries:
        for s in self.series:
            if s.tableau == tableau and s.method == method:
                return s
        raise KeyError((tableau, method))

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "t_final": self.t_final,
            "reference": self.reference,
            "uncertainty": self.uncertainty,
            "floor": self.floor,
            "series": [{
                "tableau": s.tableau,
                "method": s.method,
                "order": s.order,
                "slope": _json_num(s.slope),
                "window": s.window,
                "points": [{"dt": float(d), "error": _json_num(e), "failed": bool(f), "in_fit": bool(i)}
                           for d, e, f, i in zip(s.dts, s.errors, s.failed, s.in_fit)],
                "failures": s.reasons,
            } for s in self.series],
        }

    def to_json(self, stream: TextIO):
        json.dump(self.to_dict(), stream, indent=1)
        stream.write("\n")

    COLUMNS = ("tableau", "method", "order", "dt", "error", "failed", "in_fit", "slope")

    def to_csv(self, stream: TextIO):
        w = _writer(stream)
        w.writerow(self.COLUMNS)
        for s in self.series:
            for d, e, f, i in zip(s.dts, s.errors, s.failed, s.in_fit):
                w.writerow([s.tableau, s.method, fmt(s.order), fmt(d), fmt(e), fmt(f), fmt(i), fmt(s.slope)])


def _reference(prob, t_final, dts, ref_tableau, ref_dt, config):
    eps = np.finfo(float).eps
    if prob.exact is not None:
        ref = np.asarray(prob.exact(t_final), dtype=float)
        # accumulated rounding of the finest run, which no exact reference can beat
        n_steps = math.ceil(t_final / min(dts))
        return ref, eps * max(1.0, float(np.linalg.norm(ref))) * math.sqrt(n_steps), "exact"
    tab = get_tableau(ref_tableau)
    h = ref_dt if ref_dt is not None else min(dts) / 16.0
    ref = integrate(prob, tab, h, t_final).final
    coarse = integrate(prob, tab, 2.0 * h, t_final).final
    unc = max(float(np.linalg.norm(ref - coarse)), eps * max(1.0, float(np.linalg.norm(ref))))
    return ref, unc, f"{ref_tableau} dt={float(h)!r}"


def run_convergence(problem, tableaus: Sequence[str], methods: Sequence[str], dts, t_final: float,
                    config: ProjectionConfig | None = None, ref_tableau: str = "dp75",
                    ref_dt: float | None = None, floor_factor: float = 100.0, params=None) -> ConvergenceReport:
    """Final-time error for every (tableau, method, dt); failed runs are flagged and left out of the fit."""
    dts = np.asarray(dts, dtype=float)
    if dts.size < 4:
        raise ValueError("a convergence ladder needs at least 4 points")
    if np.any(dts <= 0):
        raise ValueError("dt ladder must be positive")
    for m in methods:
        if m not in STEPPERS:
            raise ValueError(f"unknown stepper {m!r}; choose from {', '.join(STEPPERS)}")
    prob = _resolve_problem(problem, params)
    base = config if config is not None else ProjectionConfig()
    ref, unc, kind = _reference(prob, t_final, dts, ref_tableau, ref_dt, base)
    floor = floor_factor * unc
    series = []
    for tname in tableaus:
        tab = get_tableau(tname)
        for m in methods:
            cfg = None if m == "plain" else base.with_(method=m)
            errs = np.full(dts.size, math.nan)
            failed = np.zeros(dts.size, dtype=bool)
            reasons = []
            for i, dt in enumerate(dts):
                try:
                    q = integrate(prob, tab, float(dt), t_final, cfg).final
                    errs[i] = float(np.linalg.norm(q - ref))
                except IntegrationError as exc:
                    failed[i] = True
                    reasons.append(f"dt={float(dt)!r}: {exc}")
            in_fit = ~failed & (errs > floor)
            series.append(ConvergenceSeries(tname, m, tab.order, dts.copy(), errs, failed, in_fit,
                                            fit_slope(dts, errs, in_fit), reasons))
    return ConvergenceReport(prob.name, float(t_final), kind, unc, floor, series)


# -- comparison ------------------------------------------------------------------------

@dataclass
class ComparisonResult:
    """Long-format rows ``(step, time, method, invariant, value)`` plus per-method failures."""

    channel: str
    rows: list
    failures: dict

    COLUMNS = ("step", "time", "method", "invariant", "value")

    def series(self, method: str, invariant: str | None = None) -> np.ndarray:
        return np.array([r[4] for r in self.rows if r[2] == method and (invariant is None or r[3] == invariant)])

    def write(self, stream: TextIO, format: str = "csv"):
        if format == "json":
            json.dump({"channel": self.channel,
                       "rows": [dict(zip(self.COLUMNS, (r[0], r[1], r[2], r[3], _json_num(r[4]))))
                                for r in self.rows],
                       "failures": self.failures}, stream, indent=1)
            stream.write("\n")
            return
        w = _writer(stream)
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([fmt(c) for c in r])


def run_comparison(problem, tableau: str, methods: Sequence[str], dt: float, t_final: float,
                   channel: str = "projection_length", config: ProjectionConfig | None = None,
                   params=None) -> ComparisonResult:
    """Run each projection method from the same initial state and collect one diagnostic channel."""
    if channel not in COMPARISON_CHANNELS:
        raise ValueError(f"unknown comparison channel {channel!r}; choose from {', '.join(COMPARISON_CHANNELS)}")
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"comparison needs projection methods; {m!r} is not one of {', '.join(METHODS)}")
    prob = _resolve_problem(problem, params)
    tab = get_tableau(tableau)
    base = config if config is not None else ProjectionConfig()
    labels = [inv.label for inv in prob.invariants]
    rows, failures = [], {}
    for m in methods:
        try:
            for n, _, t_eff, _, ps in march(prob, tab, dt, t_final, base.with_(method=m)):
                if channel == "projection_length":
                    rows.append((n, t_eff, m, "", ps.projection_length))
                    continue
                vals = ps.angle_deg if channel == "angle_deg" else line_angle_deg(ps.angle_deg)
                for lab, v in zip(labels, vals):
                    rows.append((n, t_eff, m, lab, float(v)))
        except IntegrationError as exc:
            failures[m] = str(exc)
    return ComparisonResult(channel, rows, failures)

