"""Benchmark problems: linear dissipative system, nonlinear oscillator,
periodic Burgers with the energy-conservative flux, and free rigid body.
"""
from __future__ import annotations

import math

import numpy as np

from .core import Invariant, OdeProblem

__all__ = [
    "PROBLEMS",
    "get_problem",
    "make_linear_dissipative",
    "make_nonlinear_oscillator",
    "make_burgers",
    "make_rigid_body",
    "stability_polynomial_rk44",
    "jacobi_eigh",
    "dominant_right_singular_vector",
    "expm_taylor",
    "burgers_flux",
    "RIGID_ALPHA",
    "RIGID_BETA",
]

LINEAR_DISSIPATIVE_L = np.array([[-1.0, -2.0, -2.0],
                                 [0.0, -1.0, -2.0],
                                 [0.0, 0.0, -1.0]])

RIGID_ALPHA = 1.0 + 1.0 / math.sqrt(1.51)
RIGID_BETA = 1.0 - 0.51 / math.sqrt(1.51)


def stability_polynomial_rk44(z):
    """``1 + z + z^2/2 + z^3/6 + z^4/24`` for a scalar or a square matrix (Horner form)."""
    coeffs = (1.0, 1.0, 1 / 2, 1 / 6, 1 / 24)
    if np.ndim(z) == 2:
        Z = np.asarray(z)
        eye = np.eye(Z.shape[0], dtype=np.result_type(Z, float))
        P = coeffs[-1] * eye
        for c in reversed(coeffs[:-1]):
            P = Z @ P + c * eye
        return P
    p = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        p = z * p + c
    return p


def jacobi_eigh(A, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the matching eigenvectors as columns.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = math.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) <= 1e-3 * np.finfo(float).eps * scale:
                    # below rounding of the diagonal; rotating would overflow theta
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                G = np.eye(n)
                G[p, p] = G[q, q] = c
                G[p, q] = s
                G[q, p] = -s
                A = G.T @ A @ G
                V = V @ G
    w = np.diag(A).copy()
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]


def dominant_right_singular_vector(M):
    """Unit right singular vector of the largest singular value, first nonzero entry positive."""
    _, V = jacobi_eigh(M.T @ M)
    v = V[:, 0] / np.linalg.norm(V[:, 0])
    nz = np.flatnonzero(np.abs(v) > 1e-14)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return v


def expm_taylor(A, tol: float = 1e-15):
    """Matrix exponential by scaling and squaring of a truncated Taylor series."""
    A = np.asarray(A, dtype=float)
    nrm = np.linalg.norm(A, 1)
    k = max(0, int(math.ceil(math.log2(nrm))) + 1) if nrm > 0.5 else 0
    B = A / 2.0**k
    eye = np.eye(A.shape[0])
    term = eye.copy()
    E = eye.copy()
    for j in range(1, 60):
        term = term @ B / j
        E = E + term
        if np.linalg.norm(term, 1) <= tol * np.linalg.norm(E, 1):
            break
    for _ in range(k):
        E = E @ E
    return E


def make_linear_dissipative() -> OdeProblem:
    """``dq/dt = L q`` with energy ``||q||^2`` decaying; start on the worst-case RK4 singular vector."""
    L = LINEAR_DISSIPATIVE_L.copy()
    L.flags.writeable = False
    q0 = dominant_right_singular_vector(stability_polynomial_rk44(0.5 * L))
    energy = Invariant.quadratic("energy", np.eye(3))
    return OdeProblem(
        "lindiss",
        lambda t, q: L @ q,
        q0,
        (energy,),
        dissipative=True,
        exact=lambda t: expm_taylor(t * L) @ q0,
        params={"L": L},
    )


def _oscillator_rhs(t, q):
    r2 = q[0] * q[0] + q[1] * q[1]
    if r2 == 0.0:
        raise ValueError("nonlinear oscillator is singular at the origin")
    return np.array([-q[1], q[0]]) / r2


def make_nonlinear_oscillator() -> OdeProblem:
    return OdeProblem(
        "oscillator",
        _oscillator_rhs,
        np.array([1.0, 0.0]),
        (Invariant.quadratic("energy", np.eye(2)),),
        exact=lambda t: np.array([math.cos(t), math.sin(t)]),
    )


def burgers_flux(q):
    """Interface fluxes ``F_{i+1/2} = (q_i^2 + q_i q_{i+1} + q_{i+1}^2) / 6`` on a periodic grid."""
    qp = np.roll(q, -1)
    return (q * q + q * qp + qp * qp) / 6.0


def make_burgers(n: int = 50) -> OdeProblem:
    """Inviscid Burgers on the periodic interval [-1, 1) with ``n`` cells, ``q0 = exp(-30 x^2)``.

    Grid points are ``x_i = -1 + i * dx``. Energy ``sum q_i^2`` is a
    general (Newton-solved) invariant; the total ``sum q_i`` is a declared
    linear invariant.
    """
    if n < 4:
        raise ValueError("Burgers grid needs at least 4 points")
    dx = 2.0 / n
    x = -1.0 + dx * np.arange(n)

    def rhs(t, q):
        F = burgers_flux(q)
        return -(F - np.roll(F, 1)) / dx

    energy = Invariant("energy", lambda q: float(q @ q), lambda q: 2.0 * q)
    return OdeProblem(
        "burgers",
        rhs,
        np.exp(-30.0 * x**2),
        (energy,),
        linear_invariants=(np.ones(n),),
        params={"n": n, "dx": dx, "x": x},
    )


def make_rigid_body() -> OdeProblem:
    """Euler equations of a free rigid body with both quadratic Casimirs as invariants."""
    a, b = RIGID_ALPHA, RIGID_BETA

    def rhs(t, q):
        return np.array([(a - b) * q[1] * q[2], (1.0 - a) * q[2] * q[0], (b - 1.0) * q[0] * q[1]])

    return OdeProblem(
        "rigidbody",
        rhs,
        np.array([0.0, 1.0, 1.0]),
        (Invariant.quadratic("G1", np.eye(3)), Invariant.quadratic("G2", np.diag([1.0, b, a]))),
        params={"alpha": a, "beta": b},
    )


PROBLEMS = {
    "lindiss": make_linear_dissipative,
    "oscillator": make_nonlinear_oscillator,
    "burgers": make_burgers,
    "rigidbody": make_rigid_body,
}


def get_problem(name: str, **params) -> OdeProblem:
    key = name.lower()
    if key not in PROBLEMS:
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
    return PROBLEMS[key](**params)
