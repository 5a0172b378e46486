"""Compatibility equations for a semi-symmetric torsion at one point.

For a tangent vector v the system reads ``a @ rho = b`` where row i of
``a`` is f_i(v) and ``b_i = -dF/dx^i(v)``. The closed-form route eliminates
the system down to ``<y, rho> = f^h_ji / f_ji`` (with f^h_ji = y^j H_i -
y^i H_j), evaluates this at the n shifted vectors ``w_l = v - eps*e_l`` and
inverts ``V - eps*I`` explicitly.
"""

from __future__ import annotations

import enum
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from . import contact, linalg
from .diff import PointJet, jet_at
from .errors import PivotLostError, ShiftSingularError, VerticalContactError
from .linalg import DEFAULT_TOL, TolerancePolicy
from .metrics import LinearFrameMetric

# |f_ij(w_l)| must keep this fraction of |f_ij(v)| for w_l to count as
# staying in the neighbourhood where the pivot pair is a basis
PIVOT_KEEP_FRACTION = 0.1
# reject eps closer than eps/2 to the eigenvalue sum(v) of V
SHIFT_MARGIN = 0.5
_TINY = 1e-300


class Status(str, enum.Enum):
    UNIQUE = "UNIQUE"
    RIEMANNIAN_INDETERMINATE = "RIEMANNIAN_INDETERMINATE"
    INSOLVABLE = "INSOLVABLE"
    DEGENERATE_SAMPLING = "DEGENERATE_SAMPLING"


@dataclass(frozen=True)
class SolverConfig:
    n_sphere_samples: int = 96
    seed: int = 0
    tol: TolerancePolicy = DEFAULT_TOL
    eps_fraction: float = 0.25
    max_eps_retries: int = 6
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.eps_fraction < 1.0:
            raise ValueError(f"eps_fraction must lie in (0, 1), got {self.eps_fraction}")
        if self.max_eps_retries < 0:
            raise ValueError("max_eps_retries must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def check_dim(self, n):
        if self.n_sphere_samples < 2 * n:
            raise ValueError(f"n_sphere_samples={self.n_sphere_samples} must be >= 2n = {2 * n}")


@dataclass(frozen=True)
class VCeqSystem:
    a: np.ndarray
    b: np.ndarray
    v: np.ndarray
    x: np.ndarray
    g_vec: np.ndarray
    f_value: float
    threshold: float

    @property
    def h_vec(self):
        return -self.b


@dataclass(frozen=True)
class IntrinsicReport:
    pivot: Optional[contact.PivotChoice]
    worst_triple: Optional[tuple]
    worst_residual: float
    n_checked: int
    v: Optional[np.ndarray] = None
    skipped_vertical: int = 0


@dataclass
class SolveOutcome:
    status: Status
    rho: Optional[np.ndarray]
    max_ceq_residual: float
    intrinsic: Optional[IntrinsicReport]
    nullspace_dim: int
    samples_used: int
    epsilon_used: Optional[float] = None
    base_v: Optional[np.ndarray] = None
    pivot: Optional[contact.PivotChoice] = None
    diagnostics: dict = field(default_factory=dict)


def _map(func, items, threads=1):
    if threads <= 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def sphere_samples(n: int, count: int, seed: int) -> np.ndarray:
    """The 2n signed axis directions followed by ``count - 2n`` scrambled
    Halton directions mapped to the unit sphere through the normal quantile."""
    if count < 2 * n:
        raise ValueError(f"need at least 2n = {2 * n} samples, got {count}")
    eye = np.eye(n)
    axes = np.concatenate([eye, -eye])
    m = count - 2 * n
    if m == 0:
        return axes
    u = qmc.Halton(d=n, scramble=True, seed=seed).random(m)
    z = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    z = z / np.where(norms == 0, 1.0, norms)
    return np.concatenate([axes, z])


def system_from_jet(jet: PointJet, tol: TolerancePolicy = DEFAULT_TOL) -> VCeqSystem:
    fm = contact.f_matrix(jet, tol)
    return VCeqSystem(a=fm.entries, b=-jet.h_vec, v=jet.y, x=jet.x, g_vec=jet.g_vec,
                      f_value=jet.f_value, threshold=fm.threshold)


def assemble(metric, x, v, tol: TolerancePolicy = DEFAULT_TOL) -> VCeqSystem:
    """The n x n system ``a @ rho = b`` at tangent vector ``v`` over ``x``."""
    return system_from_jet(jet_at(metric, x, v), tol)


def ceq_residual(system: VCeqSystem, rho) -> float:
    """|a rho - b|_inf / (1 + |b|_inf + |a|_max |rho|_inf)."""
    rho = np.asarray(rho, dtype=float)
    r = np.max(np.abs(system.a @ rho - system.b))
    scale = 1.0 + np.max(np.abs(system.b)) + np.max(np.abs(system.a)) * np.max(np.abs(rho))
    return float(r / scale)


def _intrinsic_from_jet(jet: PointJet, tol: TolerancePolicy) -> IntrinsicReport:
    fm = contact.f_matrix(jet, tol)
    pivot = contact.pick_pivot(fm)
    if pivot is None:
        raise VerticalContactError(f"v={jet.y} is vertically contact; cyclic conditions are vacuous")
    f, h = fm.entries, jet.h_vec
    scale = fm.max_abs * float(np.max(np.abs(h))) + _TINY
    worst, worst_triple, count = 0.0, None, 0
    for i, j, k in itertools.combinations(range(fm.dim), 3):
        s = abs(f[i, j] * h[k] + f[j, k] * h[i] + f[k, i] * h[j]) / scale
        count += 1
        if worst_triple is None or s > worst:
            worst, worst_triple = s, (i, j, k)
    return IntrinsicReport(pivot=pivot, worst_triple=worst_triple, worst_residual=float(worst),
                           n_checked=count, v=jet.y.copy())


def intrinsic_check(metric, x, v, tol: TolerancePolicy = DEFAULT_TOL) -> IntrinsicReport:
    """Worst normalized cyclic sum f_ij H_k + f_jk H_i + f_ki H_j over all
    triples of distinct indices at ``v``."""
    return _intrinsic_from_jet(jet_at(metric, x, v), tol)


def eliminated_solve(system: VCeqSystem, pivot: contact.PivotChoice):
    """Solve the two pivot rows for (<G, rho>, <y, rho>)."""
    i, j = pivot.i, pivot.j
    y, g, h = system.v, system.g_vec, system.h_vec
    f_ji = y[j] * g[i] - y[i] * g[j]
    if abs(f_ji) <= system.threshold:
        raise PivotLostError(f"|f_{i}{j}| = {abs(f_ji):.3g} is below the contact threshold at v={y}")
    g_dot_rho = (h[i] * g[j] - g[i] * h[j]) / f_ji
    c_dot_rho = (y[j] * h[i] - y[i] * h[j]) / f_ji
    return float(g_dot_rho), float(c_dot_rho)


def shifted_ratios(metric, x, v, pivot: contact.PivotChoice, eps,
                   tol: TolerancePolicy = DEFAULT_TOL, threads=1):
    """f^h_ji / f_ji evaluated at each w_l = v - eps*e_l.

    Returns ``(ratios, pivot_magnitudes)``; raises PivotLostError naming the
    first shifted vector whose pivot coefficient vanished.
    """
    v = np.asarray(v, dtype=float)
    ws = [v - eps * e for e in np.eye(v.size)]
    systems = _map(lambda w: assemble(metric, x, w, tol), ws, threads)
    ratios = np.empty(v.size)
    mags = np.empty(v.size)
    for l, sysl in enumerate(systems):
        mags[l] = abs(sysl.a[pivot.i, pivot.j])
        try:
            ratios[l] = eliminated_solve(sysl, pivot)[1]
        except PivotLostError as exc:
            raise PivotLostError(f"shifted vector w_{l}: {exc}", index=l) from None
    return ratios, mags


def rho_from_ratios(v, eps, ratios, tol: TolerancePolicy = DEFAULT_TOL):
    """Matrix route: rho = (V - eps*I)^-1 @ ratios via the closed-form inverse."""
    return linalg.shift_inverse(v, eps, tol) @ np.asarray(ratios, dtype=float)


def rho_from_ratios_summed(v, eps, ratios):
    """Expanded route: rho_k = (sum_l v^l r_l / (sum(v) - eps) - r_k) / eps."""
    v = np.asarray(v, dtype=float)
    r = np.asarray(ratios, dtype=float)
    vt = float(v.sum())
    return (float(v @ r) / (vt - eps) - r) / eps


def closed_form_rho(metric, x, v, pivot: contact.PivotChoice, eps,
                    tol: TolerancePolicy = DEFAULT_TOL, threads=1):
    v = np.asarray(v, dtype=float)
    if not linalg.is_shift_regular(v, eps, tol):
        raise ShiftSingularError(f"eps={eps!r} is an eigenvalue of V for v={v}")
    ratios, _ = shifted_ratios(metric, x, v, pivot, eps, tol, threads)
    return rho_from_ratios(v, eps, ratios, tol)


def select_epsilon(metric, x, v, pivot: contact.PivotChoice, config: SolverConfig):
    """Halving schedule for eps starting at eps_fraction * |v|_inf.

    Returns ``(eps, ratios, retries)`` or None when every attempt failed.
    """
    v = np.asarray(v, dtype=float)
    vt = float(v.sum())
    eps = config.eps_fraction * float(np.max(np.abs(v)))
    for attempt in range(config.max_eps_retries + 1):
        ok = (linalg.is_shift_regular(v, eps, config.tol)
              and abs(vt - eps) >= SHIFT_MARGIN * eps)
        if ok:
            try:
                ratios, mags = shifted_ratios(metric, x, v, pivot, eps, config.tol, config.threads)
            except PivotLostError:
                ok = False
            else:
                ok = bool(np.min(mags) >= PIVOT_KEEP_FRACTION * pivot.magnitude)
        if ok:
            return eps, ratios, attempt
        eps *= 0.5
    return None


def _sample_jets(metric, x, config: SolverConfig):
    n = metric.dim
    config.check_dim(n)
    dirs = sphere_samples(n, config.n_sphere_samples, config.seed)
    x = np.asarray(x, dtype=float)
    return _map(lambda d: jet_at(metric, x, d), list(dirs), config.threads)


def base_candidates(jets, tol: TolerancePolicy = DEFAULT_TOL):
    """Non-vertical samples as ``(index, pivot)`` sorted by decreasing pivot
    magnitude, ties kept in sample order."""
    found = []
    for idx, jet in enumerate(jets):
        pivot = contact.pick_pivot(contact.f_matrix(jet, tol))
        if pivot is not None:
            found.append((idx, pivot))
    found.sort(key=lambda t: -t[1].magnitude)
    return found


def ls_oracle(metric, x, config: SolverConfig = SolverConfig()):
    """Jointly solve the stacked systems over all sphere samples.

    Returns the minimum-norm least-squares rho and the stacked residual
    normalized by ``1 + |b|_2``.
    """
    jets = _sample_jets(metric, x, config)
    return _ls_from_jets(jets, config.tol)


def _ls_from_jets(jets, tol):
    systems = [system_from_jet(j, tol) for j in jets]
    a = np.concatenate([s.a for s in systems])
    b = np.concatenate([s.b for s in systems])
    rho, res = linalg.solve_least_squares(a, b)
    return rho, res / (1.0 + float(np.linalg.norm(b)))


def _nullspace_from_jets(jets, n, tol):
    rows = []
    for jet in jets:
        fm = contact.f_matrix(jet, tol)
        if fm.max_abs > fm.threshold:
            rows.append(fm.entries)
    if not rows:
        return n
    return n - linalg.rank(np.concatenate(rows), tol)


def homogeneous_nullspace_dim(metric, x, config: SolverConfig = SolverConfig()) -> int:
    """Dimension of the common solution space of the homogeneous systems over
    all sphere samples. Vertically contact samples contribute no rows."""
    jets = _sample_jets(metric, x, config)
    return _nullspace_from_jets(jets, metric.dim, config.tol)


def quadratic_frame(metric, x, jets, tol: TolerancePolicy = DEFAULT_TOL):
    """If F(x, .)^2 is a quadratic form y^T g y on all sampled directions,
    return the frame g^-1/2 that turns it into the Euclidean norm, else None."""
    g = jet_at(metric, x, jets[0].y, want_hessian=True).hess
    for jet in jets:
        y = jet.y
        f2 = jet.f_value ** 2
        if abs(f2 - y @ g @ y) > tol.contact_tol * (1.0 + f2):
            return None
    w, q = np.linalg.eigh(g)
    if w[0] <= 0:
        return None
    return q @ np.diag(w ** -0.5) @ q.T


def _aggregate_intrinsic(jets, tol):
    worst = None
    skipped = 0
    for jet in jets:
        try:
            rep = _intrinsic_from_jet(jet, tol)
        except VerticalContactError:
            skipped += 1
            continue
        if worst is None or rep.worst_residual > worst.worst_residual:
            worst = rep
    if worst is None:
        return None
    return IntrinsicReport(pivot=worst.pivot, worst_triple=worst.worst_triple,
                           worst_residual=worst.worst_residual, n_checked=worst.n_checked,
                           v=worst.v, skipped_vertical=skipped)


def solve_at_point(metric, p, config: SolverConfig = SolverConfig()) -> SolveOutcome:
    """Full pipeline at chart point ``p`` (assumed normal for the averaged metric).

    1. sample the unit sphere and classify every sample;
    2. quadratic indicatrix or all samples vertical: Riemannian branch,
       gated on horizontality;
    3. otherwise take the best-conditioned sample as base, choose eps and
       evaluate the closed form;
    4. validate rho against the system at every sample.
    """
    p = np.asarray(p, dtype=float)
    n = metric.dim
    tol = config.tol
    jets = _sample_jets(metric, p, config)
    classes = [contact.classify(j, tol) for j in jets]
    n_vert = sum(c.vertical for c in classes)
    n_horiz = sum(c.horizontal for c in classes)
    diagnostics = {"vertical_samples": n_vert, "horizontal_samples": n_horiz,
                   "vertical_not_horizontal": sum(c.vertical and not c.horizontal for c in classes)}
    common = dict(samples_used=len(jets), diagnostics=diagnostics)

    frame = quadratic_frame(metric, p, jets, tol)
    diagnostics["quadratic_indicatrix"] = frame is not None
    if frame is not None or n_vert == len(jets):
        if frame is not None:
            normal_jets = _map(lambda j: jet_at(LinearFrameMetric(metric, frame), p, j.y),
                               jets, config.threads)
        else:
            normal_jets = jets
        null_dim = _nullspace_from_jets(normal_jets, n, tol)
        all_horizontal = n_horiz == len(jets)
        max_res = max(float(np.max(np.abs(j.h_vec))) / (1.0 + j.f_value) for j in jets)
        status = Status.RIEMANNIAN_INDETERMINATE if all_horizontal else Status.INSOLVABLE
        if not all_horizontal:
            diagnostics["reason"] = "vertical contact vectors that are not horizontal contact"
        return SolveOutcome(status=status, rho=None, max_ceq_residual=max_res, intrinsic=None,
                            nullspace_dim=null_dim, **common)

    null_dim = _nullspace_from_jets(jets, n, tol)
    intrinsic = _aggregate_intrinsic(jets, tol) if n >= 3 else None
    candidates = base_candidates(jets, tol)
    selection = None
    for idx, pivot in candidates:
        selection = select_epsilon(metric, p, jets[idx].y, pivot, config)
        if selection is not None:
            break
        diagnostics.setdefault("rejected_bases", []).append(int(idx))
    if selection is None:
        diagnostics["reason"] = "no admissible eps for any base vector"
        return SolveOutcome(status=Status.DEGENERATE_SAMPLING, rho=None, max_ceq_residual=float("nan"),
                            intrinsic=intrinsic, nullspace_dim=null_dim, **common)
    eps, ratios, retries = selection
    base_v = jets[idx].y.copy()
    rho = rho_from_ratios(base_v, eps, ratios, tol)
    diagnostics["eps_retries"] = retries
    diagnostics["base_index"] = int(idx)

    residuals = [ceq_residual(system_from_jet(j, tol), rho) for j in jets]
    max_res = float(max(residuals))
    worst_idx = int(np.argmax(residuals))
    diagnostics["worst_residual_v"] = jets[worst_idx].y.tolist()
    solved = max_res <= tol.residual_tol
    if solved and intrinsic is not None:
        diagnostics["necessity_ok"] = intrinsic.worst_residual <= tol.residual_tol
    status = Status.UNIQUE if solved else Status.INSOLVABLE
    return SolveOutcome(status=status, rho=rho if solved else None, max_ceq_residual=max_res,
                        intrinsic=intrinsic, nullspace_dim=null_dim, epsilon_used=float(eps),
                        base_v=base_v, pivot=pivot, **common)
