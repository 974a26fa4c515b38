"""ODE problems, invariant functionals and the explicit RK step.

:func:`rk_step` keeps every stage state and stage derivative so the
projection layer can build search directions from them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import IntegrationError, RKProjError, StepFailure
from .tableaux import ButcherTableau

__all__ = [
    "Invariant",
    "OdeProblem",
    "StepRecord",
    "Trajectory",
    "rk_step",
    "integrate",
    "march",
]


@dataclass(frozen=True, eq=False)
class Invariant:
    """Scalar functional ``G`` with its gradient.

    A quadratic-form invariant ``G(q) = q^T S q`` carries ``matrix=S``; the
    projection solver then uses the closed-form root.
    """

    label: str
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    matrix: np.ndarray | None = None

    @classmethod
    def quadratic(cls, label: str, S) -> "Invariant":
        S = np.array(S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or not np.allclose(S, S.T, rtol=0, atol=0):
            raise ValueError("quadratic invariant needs a symmetric square matrix")
        S.flags.writeable = False
        return cls(label, lambda q: float(q @ S @ q), lambda q: 2.0 * (S @ q), S)

    @property
    def kind(self) -> str:
        return "quadratic" if self.matrix is not None else "general"

    def __call__(self, q) -> float:
        return float(self.value(np.asarray(q, dtype=float)))


@dataclass(frozen=True, eq=False)
class OdeProblem:
    """Autonomous or non-autonomous system ``dq/dt = rhs(t, q)``.

    Construction checks that every invariant is conserved (or dissipated,
    when ``dissipative``) at ``q0`` and that declared linear invariants are
    annihilated by the right-hand side there.
    """

    name: str
    rhs: Callable[[float, np.ndarray], np.ndarray]
    q0: np.ndarray
    invariants: tuple[Invariant, ...] = ()
    dissipative: bool = False
    exact: Callable[[float], np.ndarray] | None = None
    linear_invariants: tuple[np.ndarray, ...] = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        q0 = np.array(self.q0, dtype=float)
        q0.flags.writeable = False
        object.__setattr__(self, "q0", q0)
        object.__setattr__(self, "invariants", tuple(self.invariants))
        object.__setattr__(self, "linear_invariants",
                           tuple(np.asarray(d, dtype=float) for d in self.linear_invariants))
        self.check_state(q0)

    @property
    def m(self) -> int:
        return self.q0.size

    def check_state(self, q, t=0.0):
        """Raise ``ValueError`` if the invariant structure does not hold at ``q``."""
        r = np.asarray(self.rhs(t, q), dtype=float)
        rn = np.linalg.norm(r)
        for inv in self.invariants:
            g = inv.gradient(q)
            rate = float(g @ r)
            if self.dissipative:
                if not rate < 0.0:
                    raise ValueError(f"{self.name}: invariant {inv.label} is not dissipated (dG/dt = {rate})")
            elif abs(rate) > 1e-10 * np.linalg.norm(g) * rn:
                raise ValueError(f"{self.name}: invariant {inv.label} not conserved (dG/dt = {rate})")
        for d in self.linear_invariants:
            if abs(d @ r) > 1e-12 * np.linalg.norm(d) * rn:
                raise ValueError(f"{self.name}: declared linear invariant has d^T R = {d @ r}")

    def invariant_values(self, q) -> np.ndarray:
        return np.array([inv(q) for inv in self.invariants])


@dataclass(frozen=True, eq=False)
class StepRecord:
    t: float
    dt: float
    q_n: np.ndarray
    stage_states: np.ndarray
    stage_derivs: np.ndarray
    q_next: np.ndarray
    tableau: ButcherTableau

    @property
    def increment(self) -> np.ndarray:
        return self.q_next - self.q_n


def _eval_rhs(problem, t, q, stage):
    try:
        r = np.asarray(problem.rhs(t, q), dtype=float)
    except (ArithmeticError, ValueError) as exc:
        raise StepFailure(f"rhs failed at stage {stage}: {exc}", stage) from exc
    if r.shape != q.shape:
        raise StepFailure(f"rhs returned shape {r.shape}, expected {q.shape}", stage)
    if not np.all(np.isfinite(r)):
        raise StepFailure(f"non-finite rhs at stage {stage}", stage)
    return r


def rk_step(problem: OdeProblem, tab: ButcherTableau, time: float, q, dt: float) -> StepRecord:
    """One explicit RK step from ``(time, q)`` retaining all stage data."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    q = np.asarray(q, dtype=float)
    if q.shape != problem.q0.shape:
        raise ValueError(f"state has shape {q.shape}, problem expects {problem.q0.shape}")
    s = tab.stages
    Q = np.empty((s, q.size))
    R = np.empty((s, q.size))
    for i in range(s):
        Q[i] = q + dt * (tab.a[i, :i] @ R[:i]) if i else q
        R[i] = _eval_rhs(problem, time + tab.c[i] * dt, Q[i], i)
    q_next = q + dt * (tab.b @ R)
    return StepRecord(time, dt, q.copy(), Q, R, q_next, tab)


@dataclass
class Trajectory:
    """Output of :func:`integrate`.

    ``times`` is the nominal grid (sum of input steps); ``eff_times`` the
    physical time each state approximates. They differ only for relaxation.
    """

    times: np.ndarray
    eff_times: np.ndarray
    states: np.ndarray
    invariant_values: np.ndarray
    steps: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def drift(self) -> np.ndarray:
        return self.invariant_values - self.invariant_values[0]


# Tolerance (relative to the step) under which the remaining time is treated as zero.
_LANDING_TOL = 1e-12


def march(problem: OdeProblem, tab: ButcherTableau, dt: float, t_final: float,
          config=None, q0=None, t0: float = 0.0):
    """Generator behind :func:`integrate`.

    Yields ``(step, t_nominal, t_effective, state, projected_step)`` after
    every accepted step; failures surface as :class:`IntegrationError`.
    """
    if not dt > 0 or not t_final > t0:
        raise ValueError("need dt > 0 and t_final > t0")
    from .projection import project_step  # circular: projection builds on core

    q = np.array(problem.q0 if q0 is None else q0, dtype=float)
    relax = config is not None and config.method == "relaxation"
    t_nom = t_eff = t0
    n = 0

    def advance(h):
        rec = rk_step(problem, tab, t_eff, q, h)
        if config is None:
            return rec.q_next, h, None
        ps = project_step(rec, problem, config)
        return ps.q_hat, ps.effective_dt, ps

    while True:
        remaining = t_final - t_eff
        if remaining <= 0.0:
            return
        landing = remaining <= (1.5 if relax else 1.0) * dt
        h = remaining if landing else dt
        try:
            q_new, h_eff, ps = advance(h)
            if relax and landing:
                q_new, h_eff, ps, h = _land_relaxation(advance, remaining, h, (q_new, h_eff, ps), dt)
        except RKProjError as exc:
            raise IntegrationError(str(exc), n, t_eff, exc) from exc
        n += 1
        t_nom += h
        t_eff = t_final if landing else t_eff + h_eff
        if abs(t_final - t_eff) <= _LANDING_TOL * max(dt, abs(t_final)):
            t_eff = t_final
            if not relax:
                t_nom = t_final
        q = q_new
        yield n, t_nom, t_eff, q.copy(), ps


def integrate(problem: OdeProblem, tab: ButcherTableau, dt: float, t_final: float,
              config=None, q0=None, t0: float = 0.0) -> Trajectory:
    """Advance ``problem`` to ``t_final`` with fixed input step ``dt``.

    ``config`` is ``None`` for the plain RK method or a
    :class:`~rkproj.projection.ProjectionConfig`. The last step is shortened
    so the run lands exactly on ``t_final``. Relaxation advances time by
    ``gamma * dt``; once less than ``1.5 * dt`` remains, the final input
    step is chosen by a secant iteration so that ``gamma * h`` hits the
    endpoint.
    """
    q = np.array(problem.q0 if q0 is None else q0, dtype=float)
    times, eff_times, states, values, steps = [t0], [t0], [q], [problem.invariant_values(q)], []
    for _, t_nom, t_eff, q, ps in march(problem, tab, dt, t_final, config, q0, t0):
        times.append(t_nom)
        eff_times.append(t_eff)
        states.append(q)
        values.append(problem.invariant_values(q))
        steps.append(ps)
    return Trajectory(np.array(times), np.array(eff_times), np.array(states),
                      np.array(values).reshape(len(states), -1), steps)


def _land_relaxation(advance, remaining, h, first, dt):
    """Secant iteration on the input step ``h`` so that ``gamma(h) * h == remaining``."""
    q_new, h_eff, ps = first
    h0, f0 = h, h_eff - remaining
    best = (abs(f0), q_new, h_eff, ps, h)
    h1 = h * remaining / h_eff if h_eff > 0 else 0.5 * h
    for _ in range(20):
        if best[0] <= _LANDING_TOL * dt or not (math.isfinite(h1) and h1 > 0):
            break
        q1, e1, ps1 = advance(h1)
        f1 = e1 - remaining
        if abs(f1) < best[0]:
            best = (abs(f1), q1, e1, ps1, h1)
        if f1 == f0:
            break
        h0, h1, f0 = h1, h1 - f1 * (h1 - h0) / (f1 - f0), f1
    _, q_new, h_eff, ps, h = best
    return q_new, h_eff, ps, h
