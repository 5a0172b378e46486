"""Finsler metric contract and the shipped metrics.

Every metric implements ``evaluate(x, y)`` with generic arithmetic so that
:mod:`finsler_ceq.diff` can push jets through it. Position-independent
norms also provide ``grad_y``, their analytic vertical gradient, which the
synthetic germ needs in order to stay first-order jet compatible.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import diff
from .errors import SpecInvalidError


class FinslerMetric(abc.ABC):
    """A positively 1-homogeneous function F(x, y) on a chart of TM.

    Implementations must be deterministic and free of mutable state, since
    evaluations may run concurrently.
    """

    dim: int
    description: str = ""
    position_independent: bool = False

    @abc.abstractmethod
    def evaluate(self, x, y):
        """F(x, y) for sequences of floats or jets."""

    def grad_y(self, x, y):
        """Vertical gradient written in generic arithmetic (optional)."""
        raise NotImplementedError(f"{type(self).__name__} has no analytic grad_y")

    def __call__(self, x, y) -> float:
        x = [float(c) for c in np.asarray(x, dtype=float)]
        y = [float(c) for c in np.asarray(y, dtype=float)]
        return float(self.evaluate(x, y))

    def __repr__(self):
        return f"<{type(self).__name__} n={self.dim}: {self.description}>"


def _spd(a, what):
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
        raise SpecInvalidError(f"{what}: expected a square matrix of size >= 2, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SpecInvalidError(f"{what}: entries must be finite")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * (1 + np.abs(a).max())):
        raise SpecInvalidError(f"{what}: matrix is not symmetric")
    a = 0.5 * (a + a.T)
    if np.linalg.eigvalsh(a)[0] <= 0:
        raise SpecInvalidError(f"{what}: matrix is not positive definite")
    return a


def _monomial(xs, powers):
    out = 1.0
    for xi, k in zip(xs, powers):
        for _ in range(k):
            out = out * xi
    return out


class RiemannianMetric(FinslerMetric):
    """F = sqrt(y^T a(x) y) with a(x) = a + sum_t x^alpha_t * M_t.

    ``terms`` is a sequence of ``(powers, matrix)`` pairs; each adds the
    monomial ``prod_i x_i**powers[i]`` times the symmetric ``matrix``.
    """

    def __init__(self, a, terms: Sequence = ()):
        self.a = _spd(a, "riemannian.a")
        self.dim = self.a.shape[0]
        parsed = []
        for t, (powers, m) in enumerate(terms):
            powers = tuple(int(k) for k in powers)
            m = np.array(m, dtype=float)
            if len(powers) != self.dim or min(powers) < 0:
                raise SpecInvalidError(f"riemannian.terms[{t}].powers: need {self.dim} non-negative ints")
            if m.shape != self.a.shape or not np.allclose(m, m.T):
                raise SpecInvalidError(f"riemannian.terms[{t}].matrix: need a symmetric {self.dim}x{self.dim} matrix")
            parsed.append((powers, m))
        self.terms = tuple(parsed)
        self.position_independent = not self.terms
        self.description = "riemannian" + (" (polynomial in x)" if self.terms else "")

    def evaluate(self, x, y):
        q = diff.quad_form(self.a, y)
        for powers, m in self.terms:
            q = q + _monomial(x, powers) * diff.quad_form(m, y)
        return diff.sqrt(q)

    def grad_y(self, x, y):
        if self.terms:
            return super().grad_y(x, y)
        alpha = diff.sqrt(diff.quad_form(self.a, y))
        return [diff.dot(row, y) / alpha for row in self.a]


class RandersMetric(FinslerMetric):
    """F = sqrt(y^T a y) + b . y with constant a, b and |b|_a < 1."""

    position_independent = True

    def __init__(self, a, b):
        self.a = _spd(a, "randers.a")
        self.dim = self.a.shape[0]
        self.b = np.array(b, dtype=float)
        if self.b.shape != (self.dim,) or not np.all(np.isfinite(self.b)):
            raise SpecInvalidError(f"randers.b: need {self.dim} finite entries")
        self.b_norm = float(np.sqrt(self.b @ np.linalg.solve(self.a, self.b)))
        if self.b_norm >= 1.0:
            raise SpecInvalidError(f"randers.b: |b|_a = {self.b_norm:.6g} must be < 1")
        self.description = f"randers |b|_a={self.b_norm:.6g}"

    def evaluate(self, x, y):
        return diff.sqrt(diff.quad_form(self.a, y)) + diff.dot(self.b, y)

    def grad_y(self, x, y):
        alpha = diff.sqrt(diff.quad_form(self.a, y))
        return [diff.dot(row, y) / alpha + bk for row, bk in zip(self.a, self.b)]


class WobblyNorm(FinslerMetric):
    """F = |y| * (1 + amplitude * sin(lobes * atan2(y2, y1))) in n = 2.

    1-homogeneous but not convex for amplitude * (lobes**2 - 1) > 1; shipped
    as the counterexample for the strong convexity probe.
    """

    position_independent = True
    dim = 2

    def __init__(self, amplitude=0.5, lobes=3):
        self.amplitude = float(amplitude)
        self.lobes = int(lobes)
        self.description = f"wobbly norm amplitude={self.amplitude} lobes={self.lobes}"

    def evaluate(self, x, y):
        r = diff.sqrt(y[0] * y[0] + y[1] * y[1])
        return r * (1.0 + self.amplitude * diff.sin(self.lobes * diff.atan2(y[1], y[0])))


class GermMetric(FinslerMetric):
    """First-order germ at ``p`` whose compatibility system has solution ``rho_star``.

    F(x, y) = phi(y) - sum_i (x^i - p^i) * (<f_i(y), rho_star> + perturbation_i * phi(y))

    where f_i(y) = y^i * grad(phi) - d_i phi * y. With no perturbation,
    dF/dx^i at p equals -<f_i, rho_star> for every y, so the system at p is
    solved exactly by rho_star. A non-zero perturbation adds a horizontal
    term generically outside span(f_1, ..., f_n) and breaks solvability.
    """

    def __init__(self, base: FinslerMetric, rho_star, p, perturbation=None):
        if not base.position_independent:
            raise SpecInvalidError("synthetic_germ.base_norm must be position independent")
        self.base = base
        self.dim = base.dim
        self.rho_star = np.array(rho_star, dtype=float)
        self.p = np.array(p, dtype=float)
        for name, arr in (("rho_star", self.rho_star), ("base_point", self.p)):
            if arr.shape != (self.dim,) or not np.all(np.isfinite(arr)):
                raise SpecInvalidError(f"synthetic_germ.{name}: need {self.dim} finite entries")
        self.perturbation = None
        if perturbation is not None:
            self.perturbation = np.array(perturbation, dtype=float)
            if self.perturbation.shape != (self.dim,):
                raise SpecInvalidError(f"synthetic_germ.perturbation: need {self.dim} entries")
        self.description = f"germ over {base.description}"

    def evaluate(self, x, y):
        phi = self.base.evaluate(x, y)
        grad = self.base.grad_y(x, y)
        g_rho = diff.dot(self.rho_star, grad)
        c_rho = diff.dot(self.rho_star, y)
        lin = 0.0
        for i in range(self.dim):
            q = y[i] * g_rho - grad[i] * c_rho
            if self.perturbation is not None and self.perturbation[i] != 0.0:
                q = q + self.perturbation[i] * phi
            lin = lin + (x[i] - self.p[i]) * q
        return phi - lin


class LinearFrameMetric(FinslerMetric):
    """F(x, L @ y): the same metric read in the tangent frame given by the
    columns of ``frame``."""

    def __init__(self, metric: FinslerMetric, frame):
        self.metric = metric
        self.frame = np.array(frame, dtype=float)
        self.dim = metric.dim
        self.position_independent = metric.position_independent
        self.description = f"{metric.description} in linear frame"

    def evaluate(self, x, y):
        return self.metric.evaluate(x, [diff.dot(row, y) for row in self.frame])


def make_germ(base_norm: FinslerMetric, rho_star, p, perturbation=None) -> GermMetric:
    return GermMetric(base_norm, rho_star, p, perturbation)


@dataclass
class MetricSpec:
    """Serializable description of a shipped metric.

    kind ``riemannian`` uses ``a`` and ``terms``; ``randers`` uses ``a`` and
    ``b``; ``synthetic_germ`` uses ``base_norm``, ``rho_star``,
    ``base_point`` and optionally ``perturbation``.
    """

    kind: str
    a: Optional[list] = None
    b: Optional[list] = None
    terms: list = field(default_factory=list)
    base_norm: Optional["MetricSpec"] = None
    rho_star: Optional[list] = None
    base_point: Optional[list] = None
    perturbation: Optional[list] = None

    KINDS = ("riemannian", "randers", "synthetic_germ")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "riemannian":
            out["a"] = _tolist(self.a)
            if self.terms:
                out["terms"] = [{"powers": list(map(int, pw)), "matrix": _tolist(m)} for pw, m in self.terms]
        elif self.kind == "randers":
            out["a"] = _tolist(self.a)
            out["b"] = _tolist(self.b)
        else:
            out["base_norm"] = self.base_norm.to_dict()
            out["rho_star"] = _tolist(self.rho_star)
            out["base_point"] = _tolist(self.base_point)
            if self.perturbation is not None:
                out["perturbation"] = _tolist(self.perturbation)
        return out

    @classmethod
    def from_dict(cls, d: dict, path: str = "metric") -> "MetricSpec":
        if not isinstance(d, dict):
            raise SpecInvalidError(f"{path}: expected a mapping")
        kind = d.get("kind")
        if kind not in cls.KINDS:
            raise SpecInvalidError(f"{path}.kind: must be one of {cls.KINDS}, got {kind!r}")
        allowed = {
            "riemannian": {"kind", "a", "terms"},
            "randers": {"kind", "a", "b"},
            "synthetic_germ": {"kind", "base_norm", "rho_star", "base_point", "perturbation"},
        }[kind]
        extra = set(d) - allowed
        if extra:
            raise SpecInvalidError(f"{path}: unknown fields {sorted(extra)} for kind {kind!r}")
        if kind == "synthetic_germ":
            for key in ("base_norm", "rho_star", "base_point"):
                if key not in d:
                    raise SpecInvalidError(f"{path}.{key}: required for synthetic_germ")
            return cls(
                kind=kind,
                base_norm=cls.from_dict(d["base_norm"], f"{path}.base_norm"),
                rho_star=list(d["rho_star"]),
                base_point=list(d["base_point"]),
                perturbation=None if d.get("perturbation") is None else list(d["perturbation"]),
            )
        if "a" not in d:
            raise SpecInvalidError(f"{path}.a: required for {kind}")
        if kind == "randers":
            if "b" not in d:
                raise SpecInvalidError(f"{path}.b: required for randers")
            return cls(kind=kind, a=d["a"], b=d["b"])
        terms = []
        for t, term in enumerate(d.get("terms") or []):
            try:
                terms.append((term["powers"], term["matrix"]))
            except (KeyError, TypeError):
                raise SpecInvalidError(f"{path}.terms[{t}]: need 'powers' and 'matrix'") from None
        return cls(kind=kind, a=d["a"], terms=terms)


def _tolist(v):
    return np.asarray(v, dtype=float).tolist()


def build(spec: MetricSpec) -> FinslerMetric:
    """Instantiate the metric described by ``spec``; raises SpecInvalidError."""
    try:
        if spec.kind == "riemannian":
            return RiemannianMetric(spec.a, spec.terms)
        if spec.kind == "randers":
            return RandersMetric(spec.a, spec.b)
        if spec.kind == "synthetic_germ":
            if spec.base_norm is None:
                raise SpecInvalidError("synthetic_germ.base_norm: missing")
            base = build(spec.base_norm)
            return make_germ(base, spec.rho_star, spec.base_point, spec.perturbation)
    except (TypeError, ValueError) as exc:
        raise SpecInvalidError(f"{spec.kind}: {exc}") from exc
    raise SpecInvalidError(f"unknown metric kind {spec.kind!r}")


def random_directions(n, count, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, n))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def strong_convexity_probe(metric: FinslerMetric, x, n_samples: int, seed: int) -> bool:
    """True iff the energy Hessian is positive definite at ``n_samples``
    seeded random unit directions."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    for y in random_directions(metric.dim, n_samples, seed):
        jet = diff.jet_at(metric, x, y, want_hessian=True)
        if np.linalg.eigvalsh(jet.hess)[0] <= 0.0:
            return False
    return True
