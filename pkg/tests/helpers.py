"""Random metric factories shared by the test modules."""

import numpy as np

from finsler_ceq import metrics


def random_spd(n, rng, spread=0.5):
    q = rng.standard_normal((n, n))
    return q @ q.T * (spread / n) + np.eye(n)


def random_randers(n, rng, b_range=(0.1, 0.8), a=None):
    a = random_spd(n, rng) if a is None else np.asarray(a, dtype=float)
    b = rng.standard_normal(n)
    b *= rng.uniform(*b_range) / np.sqrt(b @ np.linalg.solve(a, b))
    return metrics.RandersMetric(a, b)


def random_germ(n, rng, perturbation=0.0):
    """Random Randers base, rho* in [-1, 1]^n, base point in [-1, 1]^n."""
    base = random_randers(n, rng)
    rho = rng.uniform(-1.0, 1.0, n)
    p = rng.uniform(-1.0, 1.0, n)
    pert = None
    if perturbation:
        c = rng.standard_normal(n)
        pert = perturbation * c / np.max(np.abs(c))
    return metrics.make_germ(base, rho, p, pert), rho, p


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def polynomial_riemannian(n, rng):
    """Constant SPD part plus small linear and quadratic terms in x."""
    terms = []
    for i in range(n):
        m = rng.standard_normal((n, n)) * 0.05
        powers = [0] * n
        powers[i] = 1
        terms.append((powers, m + m.T))
    m = rng.standard_normal((n, n)) * 0.02
    terms.append(([2] + [0] * (n - 1), m + m.T))
    return metrics.RiemannianMetric(random_spd(n, rng), terms)


def shipped_metrics(n, seed=0):
    """(name, metric, chart point) for every shipped metric family in dimension n."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.3, 0.3, n)
    germ, _, p = random_germ(n, rng)
    bad, _, pb = random_germ(n, rng, perturbation=1e-2)
    out = [
        ("euclidean", metrics.RiemannianMetric(np.eye(n)), x),
        ("riemannian_spd", metrics.RiemannianMetric(random_spd(n, rng)), x),
        ("riemannian_poly", polynomial_riemannian(n, rng), x),
        ("randers", random_randers(n, rng), x),
        ("germ", germ, p),
        ("germ_off_point", germ, p + 0.1),
        ("germ_perturbed", bad, pb),
    ]
    if n == 2:
        out.append(("wobbly", metrics.WobblyNorm(), x))
    return out
