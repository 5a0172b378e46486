"""Averaged Riemannian metric at a point, as a normal-coordinate diagnostic.

The indicatrix I_p = {F(p, .) = 1} is parametrized radially over unit
directions t, y = t / F(p, t). Its induced Euclidean area element is
|G(t)| / F(p, t)^n times the sphere element, and g_ij is constant along
rays, so

    gamma_ij = sum_k w_k g_ij(t_k) |G(t_k)| F(t_k)^-n / sum_k w_k |G(t_k)| F(t_k)^-n

for a quadrature rule (t_k, w_k) on the unit sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diff import jet_at
from .errors import NotConvexError

SCHEMES = ("angular", "product_sphere", "monte_carlo")


@dataclass(frozen=True)
class QuadratureSpec:
    scheme: str = "angular"
    n_nodes: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.n_nodes < 8:
            raise ValueError(f"n_nodes must be >= 8, got {self.n_nodes}")


@dataclass(frozen=True)
class AveragedMetric:
    gamma: np.ndarray
    error_estimate: float
    n_nodes: int


def sphere_rule(n, quad: QuadratureSpec):
    """Nodes on the unit sphere and weights proportional to the area element.

    ``product_sphere`` uses round(sqrt(n_nodes)) Gauss-Legendre nodes in the
    polar cosine times as many equispaced azimuths.
    """
    if quad.scheme == "angular":
        if n != 2:
            raise ValueError("angular quadrature needs n = 2")
        theta = 2.0 * np.pi * np.arange(quad.n_nodes) / quad.n_nodes
        nodes = np.column_stack([np.cos(theta), np.sin(theta)])
        return nodes, np.full(quad.n_nodes, 2.0 * np.pi / quad.n_nodes)
    if quad.scheme == "product_sphere":
        if n != 3:
            raise ValueError("product_sphere quadrature needs n = 3")
        m = max(2, int(round(math.sqrt(quad.n_nodes))))
        z, wz = np.polynomial.legendre.leggauss(m)
        phi = 2.0 * np.pi * (np.arange(m) + 0.5) / m
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        s = np.sqrt(1.0 - zz ** 2)
        nodes = np.column_stack([(s * np.cos(pp)).ravel(), (s * np.sin(pp)).ravel(), zz.ravel()])
        weights = np.outer(wz, np.full(m, 2.0 * np.pi / m)).ravel()
        return nodes, weights
    rng = np.random.default_rng(quad.seed)
    z = rng.standard_normal((quad.n_nodes, n))
    nodes = z / np.linalg.norm(z, axis=1, keepdims=True)
    return nodes, np.full(quad.n_nodes, 1.0 / quad.n_nodes)


def _average(metric, p, quad):
    n = metric.dim
    nodes, weights = sphere_rule(n, quad)
    num = np.zeros((n, n))
    den = 0.0
    for t, w in zip(nodes, weights):
        jet = jet_at(metric, p, t, want_hessian=True)
        if np.linalg.eigvalsh(jet.hess)[0] <= 0.0:
            raise NotConvexError(f"energy Hessian not positive definite at direction {t}")
        mu = w * float(np.linalg.norm(jet.g_vec)) / jet.f_value ** n
        num += mu * jet.hess
        den += mu
    gamma = num / den
    return 0.5 * (gamma + gamma.T)


def averaged_metric_at(metric, p, quad: QuadratureSpec = QuadratureSpec()) -> AveragedMetric:
    """Average the energy Hessian over the indicatrix at ``p``.

    ``error_estimate`` is the max-norm difference to the same rule with half
    as many nodes.
    """
    p = np.asarray(p, dtype=float)
    gamma = _average(metric, p, quad)
    coarse_nodes = max(8, quad.n_nodes // 4 if quad.scheme == "product_sphere" else quad.n_nodes // 2)
    coarse = _average(metric, p, QuadratureSpec(quad.scheme, coarse_nodes, quad.seed))
    err = float(np.max(np.abs(gamma - coarse)))
    return AveragedMetric(gamma=gamma, error_estimate=err, n_nodes=quad.n_nodes)


def normal_deviation(avg) -> float:
    """|gamma - I|_max; zero when the chart is orthonormal for gamma at p."""
    gamma = avg.gamma if isinstance(avg, AveragedMetric) else np.asarray(avg, dtype=float)
    return float(np.max(np.abs(gamma - np.eye(gamma.shape[0]))))
