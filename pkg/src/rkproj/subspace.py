"""Orthonormal basis of the stage-derivative span and gradient splitting.

Every basis vector is kept together with its coefficients in terms of the
original stage derivatives, so a component found in the span can be
rewritten as a combination ``sum_j alpha_j R_j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["StageBasis", "GradientSplit", "orthonormalize", "decompose", "DROP_TOL"]

DROP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StageBasis:
    """``vectors[i] = coeffs[i] @ R`` for the stage-derivative matrix ``R`` (s x m)."""

    vectors: np.ndarray  # (k, m)
    coeffs: np.ndarray  # (k, s)
    source_norm_scale: float

    @property
    def rank(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def project(self, v) -> np.ndarray:
        """Orthogonal projection of ``v`` onto the span."""
        return self.vectors.T @ (self.vectors @ v)


@dataclass(frozen=True, eq=False)
class GradientSplit:
    g_s: np.ndarray
    g_n: np.ndarray
    g_s_norm: float
    combo: np.ndarray


def orthonormalize(stage_derivs, drop_tol: float = DROP_TOL) -> StageBasis:
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    A candidate is dropped when its residual norm is at most
    ``drop_tol * max_j ||R_j||``; survivors are normalized. Stage
    derivatives that are all zero (or subnormal) give an empty basis.
    """
    R = np.atleast_2d(np.asarray(stage_derivs, dtype=float))
    s, m = R.shape
    big = float(np.max(np.abs(R))) if R.size else 0.0
    if big < np.finfo(float).tiny:  # zero or subnormal: no usable span
        return StageBasis(np.zeros((0, m)), np.zeros((0, s)), 0.0)
    # unit-size entries keep squared norms clear of underflow and overflow
    R = R / big
    scale = float(np.max(np.linalg.norm(R, axis=1)))
    vecs: list[np.ndarray] = []
    coefs: list[np.ndarray] = []
    for j in range(s):
        v = R[j].copy()
        c = np.zeros(s)
        c[j] = 1.0
        for _ in range(2):
            for n_i, c_i in zip(vecs, coefs):
                h = n_i @ v
                v -= h * n_i
                c -= h * c_i
        nrm = np.linalg.norm(v)
        if nrm <= drop_tol * scale:
            continue
        vecs.append(v / nrm)
        coefs.append(c / nrm)
        if len(vecs) == m:
            break
    return StageBasis(np.array(vecs).reshape(-1, m), np.array(coefs).reshape(-1, s) / big, scale * big)


def decompose(gradient, basis: StageBasis) -> GradientSplit:
    """Split ``gradient`` into its component in the span and the normal remainder."""
    g = np.asarray(gradient, dtype=float)
    if g.shape != (basis.dim,):
        raise ValueError(f"gradient has shape {g.shape}, basis lives in R^{basis.dim}")
    w = basis.vectors @ g
    g_s = basis.vectors.T @ w
    return GradientSplit(g_s, g - g_s, float(np.linalg.norm(g_s)), basis.coeffs.T @ w)
