"""Explicit Runge-Kutta Butcher tableaux and order-condition checks.

The six builtin methods are stored as exact rationals and converted to
double precision on load.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction as Fr
from typing import NamedTuple

import numpy as np

__all__ = [
    "ButcherTableau",
    "EmbeddedWeights",
    "OrderCondition",
    "OrderReport",
    "builtin_tableaux",
    "get_tableau",
    "tableau_names",
    "verify_order_conditions",
]

ORDER_TOL = 1e-12


class EmbeddedWeights(NamedTuple):
    weights: np.ndarray
    order: int


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """Explicit RK coefficients ``a`` (strictly lower triangular), ``b``, ``c``.

    ``embedded`` holds the native lower-order weights of a pair when the
    source publishes them. The first-order Euler weights used by the
    directional projection are always available through :meth:`euler_weights`.
    """

    name: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    label: str = ""
    embedded: EmbeddedWeights | None = None

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        c = np.array(self.c, dtype=float)
        s = b.size
        if a.shape != (s, s) or c.shape != (s,):
            raise ValueError(f"{self.name}: inconsistent tableau shapes {a.shape}, {b.shape}, {c.shape}")
        if np.any(np.triu(a) != 0.0):
            raise ValueError(f"{self.name}: tableau is not explicit")
        if self.order < 1:
            raise ValueError(f"{self.name}: order must be >= 1")
        for arr in (a, b, c):
            arr.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        if self.embedded is not None:
            w = np.array(self.embedded.weights, dtype=float)
            w.flags.writeable = False
            object.__setattr__(self, "embedded", EmbeddedWeights(w, int(self.embedded.order)))

    @property
    def stages(self) -> int:
        return self.b.size

    def euler_weights(self) -> np.ndarray:
        """Weights ``(1, 0, ..., 0)`` of forward Euler embedded in this tableau."""
        w = np.zeros(self.stages)
        w[0] = 1.0
        return w

    def row_sum_defect(self) -> float:
        return float(np.max(np.abs(self.a.sum(axis=1) - self.c)))

    def weight_sum_defect(self) -> float:
        return float(abs(self.b.sum() - 1.0))

    def __repr__(self):
        return f"ButcherTableau({self.name!r}, s={self.stages}, p={self.order})"


class OrderCondition(NamedTuple):
    id: str
    order: int
    residual: float


@dataclass
class OrderReport:
    tableau: str
    up_to: int
    conditions: list[OrderCondition] = field(default_factory=list)
    tol: float = ORDER_TOL

    @property
    def failures(self) -> list[OrderCondition]:
        return [cond for cond in self.conditions if cond.residual > self.tol]

    @property
    def ok(self) -> bool:
        return not self.failures

    def max_residual(self, order: int | None = None) -> float:
        res = [cond.residual for cond in self.conditions if order is None or cond.order == order]
        return max(res, default=0.0)


def _conditions(A, b, c):
    # (id, order, lhs, 1/gamma) for every rooted tree through order five
    Ac = A @ c
    Ac2 = A @ c**2
    AAc = A @ Ac
    yield "b", 1, b.sum(), 1.0
    yield "bc", 2, b @ c, 1 / 2
    yield "bc2", 3, b @ c**2, 1 / 3
    yield "bAc", 3, b @ Ac, 1 / 6
    yield "bc3", 4, b @ c**3, 1 / 4
    yield "bcAc", 4, b @ (c * Ac), 1 / 8
    yield "bAc2", 4, b @ Ac2, 1 / 12
    yield "bAAc", 4, b @ AAc, 1 / 24
    yield "bc4", 5, b @ c**4, 1 / 5
    yield "bc2Ac", 5, b @ (c**2 * Ac), 1 / 10
    yield "bcAc2", 5, b @ (c * Ac2), 1 / 15
    yield "bcAAc", 5, b @ (c * AAc), 1 / 30
    yield "b(Ac)2", 5, b @ Ac**2, 1 / 20
    yield "bAc3", 5, b @ (A @ c**3), 1 / 20
    yield "bAcAc", 5, b @ (A @ (c * Ac)), 1 / 40
    yield "bAAc2", 5, b @ (A @ Ac2), 1 / 60
    yield "bAAAc", 5, b @ (A @ AAc), 1 / 120


def verify_order_conditions(t: ButcherTableau, up_to: int, weights=None) -> OrderReport:
    """Evaluate the rooted-tree order conditions of ``t`` through order ``up_to``.

    ``weights`` replaces ``b`` (e.g. to check an embedded method). Residuals
    are ``|lhs - 1/gamma(tree)|``; the report flags residuals above 1e-12.
    """
    if not 1 <= up_to <= 5:
        raise ValueError(f"order conditions are enumerated only for orders 1..5, got {up_to}")
    b = t.b if weights is None else np.asarray(weights, dtype=float)
    report = OrderReport(t.name, up_to)
    for cid, order, lhs, rhs in _conditions(t.a, b, t.c):
        if order <= up_to:
            report.conditions.append(OrderCondition(cid, order, abs(float(lhs) - rhs)))
    return report


def _build(name, label, rows, b, order, bhat=None, qhat=None):
    s = len(b)
    a = np.zeros((s, s))
    for i, row in enumerate(rows):
        a[i, : len(row)] = [float(x) for x in row]
    c = [float(sum(row, Fr(0))) for row in rows]
    emb = None if bhat is None else EmbeddedWeights(np.array([float(x) for x in bhat]), qhat)
    return ButcherTableau(name, a, np.array([float(x) for x in b]), np.array(c), order, label, emb)


def _ssprk22():
    return _build("ssprk22", "SSPRK(2,2)", [[], [Fr(1)]], [Fr(1, 2), Fr(1, 2)], 2)


def _rk33():
    # Kutta's third-order method
    rows = [[], [Fr(1, 2)], [Fr(-1), Fr(2)]]
    return _build("rk33", "RK(3,3)", rows, [Fr(1, 6), Fr(2, 3), Fr(1, 6)], 3)


def _heun33():
    rows = [[], [Fr(1, 3)], [Fr(0), Fr(2, 3)]]
    return _build("heun33", "Heun(3,3)", rows, [Fr(1, 4), Fr(0), Fr(3, 4)], 3)


def _rk44():
    rows = [[], [Fr(1, 2)], [Fr(0), Fr(1, 2)], [Fr(0), Fr(0), Fr(1)]]
    return _build("rk44", "RK(4,4)", rows, [Fr(1, 6), Fr(1, 3), Fr(1, 3), Fr(1, 6)], 4)


def _dp75():
    rows = [
        [],
        [Fr(1, 5)],
        [Fr(3, 40), Fr(9, 40)],
        [Fr(44, 45), Fr(-56, 15), Fr(32, 9)],
        [Fr(19372, 6561), Fr(-25360, 2187), Fr(64448, 6561), Fr(-212, 729)],
        [Fr(9017, 3168), Fr(-355, 33), Fr(46732, 5247), Fr(49, 176), Fr(-5103, 18656)],
        [Fr(35, 384), Fr(0), Fr(500, 1113), Fr(125, 192), Fr(-2187, 6784), Fr(11, 84)],
    ]
    b = rows[-1] + [Fr(0)]
    bhat = [Fr(5179, 57600), Fr(0), Fr(7571, 16695), Fr(393, 640), Fr(-92097, 339200), Fr(187, 2100), Fr(1, 40)]
    return _build("dp75", "DP(7,5)", rows, b, 5, bhat, 4)


def _bsrk85():
    rows = [
        [],
        [Fr(1, 6)],
        [Fr(2, 27), Fr(4, 27)],
        [Fr(183, 1372), Fr(-162, 343), Fr(1053, 1372)],
        [Fr(68, 297), Fr(-4, 11), Fr(42, 143), Fr(1960, 3861)],
        [Fr(597, 22528), Fr(81, 352), Fr(63099, 585728), Fr(58653, 366080), Fr(4617, 20480)],
        [Fr(174197, 959244), Fr(-30942, 79937), Fr(8152137, 19744439), Fr(666106, 1039181),
         Fr(-29421, 29068), Fr(482048, 414219)],
        [Fr(587, 8064), Fr(0), Fr(4440339, 15491840), Fr(24353, 124800), Fr(387, 44800),
         Fr(2152, 5985), Fr(7267, 94080)],
    ]
    b = rows[-1] + [Fr(0)]
    bhat = [Fr(2479, 34992), Fr(0), Fr(123, 416), Fr(612941, 3411720), Fr(43, 1440),
            Fr(2272, 6561), Fr(79937, 1113912), Fr(3293, 556956)]
    return _build("bsrk85", "BSRK(8,5)", rows, b, 5, bhat, 4)


_FACTORIES = {
    "ssprk22": _ssprk22,
    "rk33": _rk33,
    "heun33": _heun33,
    "rk44": _rk44,
    "dp75": _dp75,
    "bsrk85": _bsrk85,
}
_CACHE: dict[str, ButcherTableau] = {}


def tableau_names() -> list[str]:
    return list(_FACTORIES)


def get_tableau(name: str) -> ButcherTableau:
    key = name.lower()
    if key not in _FACTORIES:
        raise KeyError(f"unknown tableau {name!r}; choose from {', '.join(_FACTORIES)}")
    if key not in _CACHE:
        _CACHE[key] = _FACTORIES[key]()
    return _CACHE[key]


def builtin_tableaux() -> list[ButcherTableau]:
    """The six methods compared in the benchmarks, ordered by stage count."""
    return [get_tableau(name) for name in _FACTORIES]
