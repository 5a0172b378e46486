"""Small dense linear algebra: numerical rank, least squares and the
closed-form inverse of ``V - eps*I`` where every row of ``V`` equals ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShiftSingularError


@dataclass(frozen=True)
class TolerancePolicy:
    """Numerical cutoffs used throughout the pipeline.

    rank_rel_tol
        Singular values below ``rank_rel_tol * s_max`` count as zero.
    residual_tol
        Normalized CEQ residual separating a solution from noise.
    contact_tol
        Relative band for contact classification and near-singular shifts.
    """

    rank_rel_tol: float = 1e-10
    residual_tol: float = 1e-6
    contact_tol: float = 1e-9

    def __post_init__(self):
        for name in ("rank_rel_tol", "residual_tol", "contact_tol"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value!r}")


DEFAULT_TOL = TolerancePolicy()


def rank(m, tol: TolerancePolicy = DEFAULT_TOL) -> int:
    """Numerical rank of ``m`` from its singular values."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol.rank_rel_tol * s[0]))


def solve_least_squares(a, b):
    """Minimum-norm least-squares solution of ``a @ x = b``.

    Returns ``(x, residual_norm)`` with ``residual_norm = ||a @ x - b||_2``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float)
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.linalg.norm(a @ x - b))
    return x, residual


def is_shift_regular(v, eps, tol: TolerancePolicy = DEFAULT_TOL) -> bool:
    """True iff ``V - eps*I`` is safely invertible.

    ``V - eps*I`` is singular exactly for eps in {0, sum(v)}; a band of width
    ``contact_tol * (1 + |sum(v)|)`` around both values is also rejected.
    """
    v = np.asarray(v, dtype=float)
    vt = float(v.sum())
    band = tol.contact_tol * (1.0 + abs(vt))
    return abs(eps) > band and abs(eps - vt) > band


def shift_matrix(v, eps):
    """Assemble ``V - eps*I`` (row l is ``v - eps*e_l``)."""
    v = np.asarray(v, dtype=float)
    n = v.size
    return np.tile(v, (n, 1)) - eps * np.eye(n)


def shift_inverse(v, eps, tol: TolerancePolicy = DEFAULT_TOL):
    """Closed-form inverse of ``V - eps*I``.

    Uses ``V @ V = sum(v) * V``, which gives
    ``(V - eps*I)^-1 = (V - (sum(v) - eps)*I) / ((sum(v) - eps) * eps)``.
    """
    v = np.asarray(v, dtype=float)
    if not is_shift_regular(v, eps, tol):
        raise ShiftSingularError(
            f"V - eps*I is singular for eps={eps!r} (sum(v)={float(v.sum())!r})"
        )
    vt = float(v.sum())
    n = v.size
    return (np.tile(v, (n, 1)) - (vt - eps) * np.eye(n)) / ((vt - eps) * eps)
