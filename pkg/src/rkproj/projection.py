"""Projection of an RK update back onto an invariant (or dissipation) manifold.

Four search directions are available:

``orthogonal``
    the normalized invariant gradient at the RK update;
``relaxation``
    the RK increment ``q_next - q_n``, with the step reinterpreted as ``gamma * dt``;
``directional``
    the difference between the base and an embedded RK update;
``quasi-orthogonal``
    the gradient's orthogonal projection onto the span of the stage derivatives.

All but ``orthogonal`` stay in that span, so linear invariants survive the
correction.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .core import Invariant, OdeProblem, StepRecord
from .errors import DegenerateDirectionError, UnsolvableProjectionError
from .subspace import DROP_TOL, StageBasis, decompose, orthonormalize

__all__ = [
    "METHODS",
    "TARGETS",
    "ProjectionConfig",
    "ProjectedStep",
    "direction_orthogonal",
    "direction_relaxation",
    "direction_directional",
    "direction_quasi_orthogonal",
    "conservative_target",
    "dissipative_target",
    "solve_scalar",
    "solve_relaxation",
    "project_step",
    "project_multi",
    "ms_matrix",
    "angle_deg",
    "line_angle_deg",
]

METHODS = ("orthogonal", "relaxation", "directional", "quasi-orthogonal")
TARGETS = ("conservative", "dissipative")

# Jacobian condition number beyond which the multi-invariant solve is refused.
SINGULAR_COND = 1e12


@dataclass(frozen=True)
class ProjectionConfig:
    """How to build the search direction and solve for the correction.

    ``embedded`` only matters for ``directional`` (and for the extra
    directions of multi-invariant relaxation). For one invariant it is a
    single weight vector; for several it is a sequence of weight vectors.
    ``None`` selects forward Euler ``(1, 0, ..., 0)`` and, for additional
    directions, the unit weights ``e_2, e_3, ...``.
    """

    method: str = "quasi-orthogonal"
    target: str = "conservative"
    weighted: bool = True
    embedded: tuple | None = None
    newton_tol: float = 1e-13
    max_iter: int = 50
    bracket_scale: float = 2.0
    degenerate_tol: float = 1e-12
    drop_tol: float = DROP_TOL

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown projection method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.target not in TARGETS:
            raise ValueError(f"unknown target {self.target!r}; choose from {', '.join(TARGETS)}")
        if not self.newton_tol > 0 or self.max_iter < 1:
            raise ValueError("need newton_tol > 0 and max_iter >= 1")
        if not 0 < self.degenerate_tol < 1:
            raise ValueError("degenerate_tol must lie in (0, 1)")
        if self.embedded is not None:
            emb = np.asarray(self.embedded, dtype=float)
            object.__setattr__(self, "embedded", tuple(map(tuple, np.atleast_2d(emb))) if emb.ndim == 2
                               else tuple(emb))

    def with_(self, **changes) -> "ProjectionConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class ProjectedStep:
    q_hat: np.ndarray
    lambdas: np.ndarray
    effective_dt: float
    projection_length: float
    angle_deg: np.ndarray
    rank: int
    skipped: bool = False
    newton_iters: int = 0
    targets: np.ndarray = field(default_factory=lambda: np.zeros(0))
    input_dt: float = math.nan

    @property
    def dt_ratio(self) -> float:
        """Effective over input step: ``gamma`` for relaxation, 1 otherwise."""
        return self.effective_dt / self.input_dt


def _unit(v, what, invariant=None):
    nrm = np.linalg.norm(v)
    if not nrm > 0 or not math.isfinite(nrm):
        raise DegenerateDirectionError(f"{what} search direction has zero length", invariant)
    return v / nrm


def angle_deg(gradient, direction) -> float:
    """Angle in degrees, in [0, 180], between a gradient and a search direction."""
    gn = np.linalg.norm(gradient) * np.linalg.norm(direction)
    if gn == 0:
        return math.nan
    return math.degrees(math.acos(min(1.0, max(-1.0, float(gradient @ direction) / gn))))


def line_angle_deg(angle):
    """Angle in [0, 90] between the gradient and the line spanned by the direction.

    The sign of a search direction is arbitrary (``lam`` absorbs it), so
    ``alpha`` and ``180 - alpha`` describe the same correction line.
    """
    a = np.asarray(angle, dtype=float)
    return np.minimum(a, 180.0 - a)


# -- search directions ------------------------------------------------------

def direction_orthogonal(rec: StepRecord, inv: Invariant) -> np.ndarray:
    return _unit(inv.gradient(rec.q_next), "orthogonal", inv.label)


def direction_relaxation(rec: StepRecord) -> np.ndarray:
    """Unnormalized RK increment ``dt * sum_j b_j R_j``."""
    d = rec.q_next - rec.q_n
    if not np.any(d):
        raise DegenerateDirectionError("relaxation direction vanishes (stationary step)")
    return d


def _check_embedded(b, b_emb):
    b_emb = np.asarray(b_emb, dtype=float)
    if b_emb.shape != b.shape:
        raise ValueError(f"embedded weights need {b.size} entries, got {b_emb.size}")
    if abs(b_emb.sum() - 1.0) > 1e-14:
        raise ValueError("embedded weights must sum to one")
    return b_emb


def direction_directional(rec: StepRecord, b_embedded) -> np.ndarray:
    b = rec.tableau.b
    b_emb = _check_embedded(b, b_embedded)
    return _unit((b - b_emb) @ rec.stage_derivs, "directional")


def direction_quasi_orthogonal(rec: StepRecord, inv: Invariant, drop_tol: float = DROP_TOL,
                               degenerate_tol: float = 1e-12, basis: StageBasis | None = None):
    """Normalized component of ``grad G(q_next)`` inside the stage-derivative span.

    Returns ``(direction, rank)``, or ``(None, rank)`` when the step should
    be skipped: an empty span (stationary step) or a gradient component
    below ``degenerate_tol`` relative to the full gradient.
    """
    if basis is None:
        basis = orthonormalize(rec.stage_derivs, drop_tol)
    if basis.rank == 0:
        return None, 0
    g = inv.gradient(rec.q_next)
    split = decompose(g, basis)
    if split.g_s_norm <= degenerate_tol * np.linalg.norm(g):
        return None, basis.rank
    return split.g_s / split.g_s_norm, basis.rank


# -- targets ------------------------------------------------------------------

def conservative_target(inv: Invariant, q_n) -> float:
    return inv(q_n)


def _dissipated(rec, inv, weighted):
    rates = np.array([inv.gradient(qi) @ ri for qi, ri in zip(rec.stage_states, rec.stage_derivs)])
    w = rec.tableau.b if weighted else np.ones_like(rates)
    return rec.dt * float(w @ rates)


def dissipative_target(rec: StepRecord, inv: Invariant, weighted: bool = True) -> float:
    """``G(q_n) + dt * sum_i w_i grad G(q_i)^T R_i`` with ``w = b`` (or all ones if not ``weighted``)."""
    return inv(rec.q_n) + _dissipated(rec, inv, weighted)


def _target_change(rec, inv, config) -> float:
    """``target - G(q_n)``, formed without cancellation."""
    return 0.0 if config.target == "conservative" else _dissipated(rec, inv, config.weighted)


def _excess(inv, q_n, delta, change) -> float:
    """``G(q_n + delta) - G(q_n) - change``; exact expansion for quadratic forms."""
    if inv.matrix is not None:
        return float((2.0 * q_n + delta) @ (inv.matrix @ delta)) - change
    return inv(q_n + delta) - inv(q_n) - change


# -- scalar solves -------------------------------------------------------------

def _quadratic_root(a, b, c):
    """Real root of ``a x^2 + b x + c`` of smallest magnitude, or raise."""
    if a == 0.0:
        if b == 0.0:
            if c == 0.0:
                return 0.0
            raise UnsolvableProjectionError("projection equation is constant and nonzero", residuals=[c])
        return -c / b
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        raise UnsolvableProjectionError(f"negative discriminant {disc:.6g}", discriminant=disc)
    qq = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    roots = [qq / a]
    if qq != 0.0:
        roots.append(c / qq)
    return min(roots, key=abs)


def _newton(f, df, x0, tol, max_iter):
    """Newton iteration; returns (root, iterations, history) or (None, iterations, history)."""
    x = x0
    hist = []
    for it in range(max_iter):
        fx = f(x)
        hist.append(fx)
        if not math.isfinite(fx):
            return None, it, hist
        if abs(fx) <= tol:
            # one polishing step; keep it only if it helps
            d = df(x)
            if d != 0.0 and math.isfinite(d):
                x1 = x - fx / d
                if abs(f(x1)) < abs(fx):
                    x = x1
            return x, it + 1, hist
        d = df(x)
        if d == 0.0 or not math.isfinite(d):
            return None, it, hist
        if len(hist) >= 4 and abs(fx) >= 0.9 * abs(hist[-4]):
            return None, it, hist
        x = x - fx / d
    return None, max_iter, hist


def solve_scalar(inv: Invariant, q_next, phi, target: float, config: ProjectionConfig = ProjectionConfig(),
                 scale: float | None = None, full_output: bool = False, q_n=None, increment=None,
                 change: float | None = None):
    """Find ``lam`` with ``G(q_next + lam * phi) = target``.

    Quadratic forms are solved in closed form (root of smallest magnitude);
    other invariants by Newton from zero, falling back to Brent's method on
    ``[-h, h]`` with ``h = bracket_scale * scale`` (``scale`` is normally
    ``||q_next - q_n||``). With ``full_output`` returns ``(lam, iterations)``.

    Passing the step origin ``q_n`` and the unrounded ``increment`` lets a
    quadratic residual be expanded about ``q_n``, which keeps ``lam``
    accurate far below ``eps * G``; ``change`` optionally supplies
    ``target - G(q_n)`` directly.
    """
    q_next = np.asarray(q_next, dtype=float)
    phi = np.asarray(phi, dtype=float)
    tol = config.newton_tol * max(1.0, abs(target))
    f = lambda lam: inv(q_next + lam * phi) - target  # noqa: E731
    df = lambda lam: float(inv.gradient(q_next + lam * phi) @ phi)  # noqa: E731
    if inv.matrix is not None:
        S = inv.matrix
        Sphi = S @ phi
        if q_n is not None and increment is not None:
            q_n = np.asarray(q_n, dtype=float)
            delta = np.asarray(increment, dtype=float)
            if change is None:
                change = target - inv(q_n)
            f = lambda lam: _excess(inv, q_n, delta + lam * phi, change)  # noqa: E731
            c = f(0.0)
        else:
            c = float(q_next @ S @ q_next) - target
        lam = _quadratic_root(float(phi @ Sphi), 2.0 * float(q_next @ Sphi), c)
        # Newton polish of the closed-form root
        for _ in range(2):
            d = df(lam)
            if d == 0.0:
                break
            cand = lam - f(lam) / d
            if abs(f(cand)) >= abs(f(lam)):
                break
            lam = cand
        return (lam, 0) if full_output else lam

    lam, iters, hist = _newton(f, df, 0.0, tol, config.max_iter)
    if lam is None:
        lam = _bracketed(f, scale, config, hist)
    return (lam, iters) if full_output else lam


def _bracketed(f, scale, config, hist):
    h = config.bracket_scale * (scale if scale else 1.0)
    f0 = f(0.0)
    roots = []
    for lo, hi in ((-h, 0.0), (0.0, h)):
        flo, fhi = f(lo), f(hi)
        if flo == 0.0 or fhi == 0.0 or np.sign(flo) != np.sign(fhi):
            roots.append(brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))
    if not roots:
        raise UnsolvableProjectionError(
            f"Newton failed and no sign change on [{-h:.3g}, {h:.3g}] (f(0) = {f0:.3g})", residuals=hist)
    return min(roots, key=abs)


def solve_relaxation(rec: StepRecord, inv: Invariant, target: float,
                     config: ProjectionConfig = ProjectionConfig(), full_output: bool = False,
                     change: float | None = None):
    """Relaxation parameter ``gamma`` for the increment ``d = q_next - q_n``.

    Solves ``G(q_n + gamma d) = G(q_n) + gamma (target - G(q_n))``: the
    change predicted for the full step is scaled with the relaxed step, so
    a conservative target reduces to ``G(q_n + gamma d) = G(q_n)``. The
    trivial root ``gamma = 0`` is excluded; a non-positive ``gamma`` means
    the step size is beyond the method's solvability region. ``change`` is
    ``target - G(q_n)`` when known more accurately than the difference.
    """
    d = direction_relaxation(rec)
    q_n = rec.q_n
    g0 = inv(q_n)
    est = target - g0 if change is None else change
    if inv.matrix is not None:
        S = inv.matrix
        Sd = S @ d
        dSd = float(d @ Sd)
        if dSd == 0.0:
            raise UnsolvableProjectionError("relaxation equation degenerates (d^T S d = 0)")
        gamma, iters = (est - 2.0 * float(q_n @ Sd)) / dSd, 0
    else:
        # divide out the trivial root
        k = lambda g: (inv(q_n + g * d) - g0) / g - est  # noqa: E731
        dk = lambda g: (float(inv.gradient(q_n + g * d) @ d) - est - k(g)) / g  # noqa: E731
        tol = config.newton_tol * max(1.0, abs(target))
        gamma, iters, hist = _newton(k, dk, 1.0, tol, config.max_iter)
        if gamma is None:
            lo, hi = 1e-8, 1.0 + config.bracket_scale
            klo, khi = k(lo), k(hi)
            if np.sign(klo) == np.sign(khi):
                raise UnsolvableProjectionError("relaxation: Newton failed and no sign change", residuals=hist)
            gamma = brentq(k, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)
    if not gamma > 0 or not math.isfinite(gamma):
        raise UnsolvableProjectionError(f"relaxation parameter gamma = {gamma:.6g} is not positive",
                                        residuals=[gamma])
    return (gamma, iters) if full_output else gamma


# -- drivers --------------------------------------------------------------------

def project_step(rec: StepRecord, problem: OdeProblem, config: ProjectionConfig) -> ProjectedStep:
    """Correct one RK update so that the problem's invariant(s) hit their target."""
    invs = problem.invariants
    if not invs:
        raise ValueError(f"{problem.name} declares no invariants to project onto")
    if len(invs) > 1:
        return project_multi(rec, invs, config)
    inv = invs[0]
    change = _target_change(rec, inv, config)
    target = inv(rec.q_n) + change
    g_next = inv.gradient(rec.q_next)
    scale = float(np.linalg.norm(rec.q_next - rec.q_n))
    rank = 0
    if config.method == "relaxation":
        gamma, iters = solve_relaxation(rec, inv, target, config, full_output=True, change=change)
        d = rec.q_next - rec.q_n
        q_hat = rec.q_n + gamma * d
        return ProjectedStep(q_hat, np.array([gamma]), gamma * rec.dt, float(np.linalg.norm(q_hat - rec.q_next)),
                             np.array([angle_deg(g_next, d)]), rank, False, iters, np.array([target]), rec.dt)
    if config.method == "orthogonal":
        phi = direction_orthogonal(rec, inv)
    elif config.method == "directional":
        emb = rec.tableau.euler_weights() if config.embedded is None else config.embedded
        phi = direction_directional(rec, emb)
    else:
        phi, rank = direction_quasi_orthogonal(rec, inv, config.drop_tol, config.degenerate_tol)
        if phi is None:
            return ProjectedStep(rec.q_next.copy(), np.zeros(1), rec.dt, 0.0, np.array([math.nan]), rank,
                                 True, 0, np.array([target]), rec.dt)
    lam, iters = solve_scalar(inv, rec.q_next, phi, target, config, scale=scale, full_output=True,
                              q_n=rec.q_n, increment=rec.dt * (rec.tableau.b @ rec.stage_derivs), change=change)
    q_hat = rec.q_next + lam * phi
    return ProjectedStep(q_hat, np.array([lam]), rec.dt, float(np.linalg.norm(q_hat - rec.q_next)),
                         np.array([angle_deg(g_next, phi)]), rank, False, iters, np.array([target]), rec.dt)


def _embedded_family(tab, config, count, offset=0):
    if config.embedded is None:
        fam = []
        for j in range(offset, offset + count):
            w = np.zeros(tab.stages)
            w[min(j, tab.stages - 1)] = 1.0
            fam.append(w)
        return fam
    emb = np.atleast_2d(np.asarray(config.embedded, dtype=float))
    if emb.shape[0] < count:
        raise ValueError(f"need {count} embedded weight vectors, got {emb.shape[0]}")
    return [_check_embedded(tab.b, w) for w in emb[:count]]


def ms_matrix(rec: StepRecord, directions: Sequence, gradients: Sequence):
    """Matrix of ``grad G_j(q_next)^T Phi_k`` and its 2-norm condition number."""
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    G = np.atleast_2d(np.asarray(gradients, dtype=float))
    if D.shape[1] != rec.q_next.size or G.shape[1] != rec.q_next.size:
        raise ValueError("directions and gradients must live in the state space")
    M = G @ D.T
    sv = np.linalg.svd(M, compute_uv=False)
    cond = math.inf if sv[-1] == 0 else float(sv[0] / sv[-1])
    return M, cond


def project_multi(rec: StepRecord, invariants: Sequence[Invariant], config: ProjectionConfig) -> ProjectedStep:
    """Simultaneous correction for several invariants by Newton on the coupled system."""
    ell = len(invariants)
    tab = rec.tableau
    if ell < 2:
        raise ValueError("project_multi needs at least two invariants")
    if config.method in ("quasi-orthogonal", "directional") and tab.stages < ell + 1:
        warnings.warn(f"{tab.name} has {tab.stages} stages; {ell} invariants need at least {ell + 1}",
                      RuntimeWarning, stacklevel=2)
    grads = [inv.gradient(rec.q_next) for inv in invariants]
    changes = np.array([_target_change(rec, inv, config) for inv in invariants])
    targets = np.array([inv(rec.q_n) for inv in invariants]) + changes
    rank = 0
    relax = config.method == "relaxation"
    if config.method == "quasi-orthogonal":
        basis = orthonormalize(rec.stage_derivs, config.drop_tol)
        rank = basis.rank
        dirs = []
        for inv, g in zip(invariants, grads):
            split = decompose(g, basis)
            if split.g_s_norm <= config.degenerate_tol * np.linalg.norm(g):
                raise DegenerateDirectionError(
                    f"invariant {inv.label} has no usable component in the stage span", inv.label)
            dirs.append(split.g_s / split.g_s_norm)
    elif config.method == "orthogonal":
        dirs = [_unit(g, "orthogonal", inv.label) for inv, g in zip(invariants, grads)]
    elif config.method == "directional":
        dirs = [_unit((tab.b - w) @ rec.stage_derivs, "directional")
                for w in _embedded_family(tab, config, ell)]
    else:
        dirs = [direction_relaxation(rec)] + [_unit((tab.b - w) @ rec.stage_derivs, "directional")
                                              for w in _embedded_family(tab, config, ell - 1)]
    D = np.array(dirs)
    increment = rec.dt * (tab.b @ rec.stage_derivs)
    lam = np.zeros(ell)
    if relax:
        lam[0] = 1.0
    tols = config.newton_tol * np.maximum(1.0, np.abs(targets))

    def residual(x):
        # expand about q_n so small residuals are not lost to cancellation
        delta = x @ D if relax else increment + x @ D
        res = np.array([_excess(inv, rec.q_n, delta, ch) for inv, ch in zip(invariants, changes)])
        return res, rec.q_n + delta if relax else rec.q_next + x @ D

    F, q_hat = residual(lam)
    iters = 0
    while np.any(np.abs(F) > tols):
        if iters >= config.max_iter or not np.all(np.isfinite(F)):
            raise UnsolvableProjectionError(f"multi-invariant Newton did not converge in {iters} iterations",
                                            residuals=F)
        J = np.array([inv.gradient(q_hat) for inv in invariants]) @ D.T
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] == 0 or sv[0] / sv[-1] > SINGULAR_COND:
            M, cond = ms_matrix(rec, D, grads)
            raise UnsolvableProjectionError(f"singular projection Jacobian (condition {cond:.3g})",
                                            residuals=F, matrix=M)
        lam = lam - np.linalg.solve(J, F)
        F, q_hat = residual(lam)
        iters += 1
    # polish once
    J = np.array([inv.gradient(q_hat) for inv in invariants]) @ D.T
    try:
        cand = lam - np.linalg.solve(J, F)
        F2, q2 = residual(cand)
        if np.max(np.abs(F2)) < np.max(np.abs(F)):
            lam, q_hat = cand, q2
    except np.linalg.LinAlgError:
        pass
    eff = lam[0] * rec.dt if relax else rec.dt
    angles = np.array([angle_deg(g, d) for g, d in zip(grads, D)])
    return ProjectedStep(q_hat, lam, eff, float(np.linalg.norm(q_hat - rec.q_next)), angles, rank, False, iters,
                         targets, rec.dt)
