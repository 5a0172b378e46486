"""The f_ij coefficient field, contact classification and span checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import linalg
from .diff import PointJet
from .errors import RankAnomalyError
from .linalg import DEFAULT_TOL, TolerancePolicy


@dataclass(frozen=True)
class FMatrix:
    """Antisymmetric f_ij = y^i G_j - y^j G_i at one tangent vector.

    Row i (equivalently minus column i) is the vector f_i. ``threshold`` is
    the vertical contact cutoff computed from the jet that produced it.
    """

    entries: np.ndarray
    y: np.ndarray
    g_vec: np.ndarray
    threshold: float

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.entries)))


@dataclass(frozen=True)
class ContactClass:
    vertical: bool
    horizontal: bool


@dataclass(frozen=True)
class PivotChoice:
    i: int
    j: int
    magnitude: float


def vertical_threshold(jet: PointJet, tol: TolerancePolicy = DEFAULT_TOL) -> float:
    return tol.contact_tol * (1.0 + float(np.linalg.norm(jet.y)) * float(np.linalg.norm(jet.g_vec)))


def horizontal_threshold(jet: PointJet, tol: TolerancePolicy = DEFAULT_TOL) -> float:
    return tol.contact_tol * (1.0 + jet.f_value)


def f_matrix(jet: PointJet, tol: TolerancePolicy = DEFAULT_TOL) -> FMatrix:
    y, g = jet.y, jet.g_vec
    n = y.size
    f = np.zeros((n, n))
    # fill the upper triangle once and mirror it so antisymmetry is exact
    for i in range(n):
        for j in range(i + 1, n):
            f[i, j] = y[i] * g[j] - y[j] * g[i]
            f[j, i] = -f[i, j]
    return FMatrix(entries=f, y=y.copy(), g_vec=g.copy(), threshold=vertical_threshold(jet, tol))


def f_vector(fm: FMatrix, i: int) -> np.ndarray:
    """f_i = [f_i1, ..., f_in], which equals y^i * G - G_i * y."""
    if not 0 <= i < fm.dim:
        raise IndexError(f"index {i} out of range for n={fm.dim}")
    return fm.entries[i].copy()


def classify(jet: PointJet, tol: TolerancePolicy = DEFAULT_TOL) -> ContactClass:
    fm = f_matrix(jet, tol)
    vertical = fm.max_abs <= fm.threshold
    horizontal = float(np.max(np.abs(jet.h_vec))) <= horizontal_threshold(jet, tol)
    return ContactClass(vertical=bool(vertical), horizontal=bool(horizontal))


def pick_pivot(fm: FMatrix) -> Optional[PivotChoice]:
    """The pair i < j maximizing |f_ij|, first in lexicographic order on ties.

    Returns None when the maximum is within the vertical contact threshold.
    """
    best = None
    n = fm.dim
    for i in range(n):
        for j in range(i + 1, n):
            mag = abs(fm.entries[i, j])
            if best is None or mag > best.magnitude:
                best = PivotChoice(i, j, float(mag))
    if best is None or best.magnitude <= fm.threshold:
        return None
    return best


def reconstruct_check(fm: FMatrix, pivot: PivotChoice) -> float:
    """Max over k of |f_k - (f_kj/f_ij) f_i - (f_ik/f_ij) f_j|_inf."""
    if pivot.magnitude <= fm.threshold:
        raise ValueError("pivot magnitude is below the vertical contact threshold")
    f = fm.entries
    i, j = pivot.i, pivot.j
    worst = 0.0
    for k in range(fm.dim):
        if k in (i, j):
            continue
        rebuilt = (f[k, j] / f[i, j]) * f[i] + (f[i, k] / f[i, j]) * f[j]
        worst = max(worst, float(np.max(np.abs(f[k] - rebuilt))))
    return worst


def span_rank(fm: FMatrix, tol: TolerancePolicy = DEFAULT_TOL) -> int:
    """Rank of span(f_1, ..., f_n); anything other than 0 or 2 raises.

    Entries within the vertical contact threshold are treated as zero.
    """
    if fm.max_abs <= fm.threshold:
        return 0
    r = linalg.rank(fm.entries, tol)
    if r not in (0, 2):
        raise RankAnomalyError(f"span of f_i has rank {r}, expected 0 or 2", rank=r)
    return r
