"""Forward-mode jet arithmetic and the point-jet of a Finsler metric.

A :class:`Jet` carries a value, its gradient with respect to a fixed set of
seed variables and, optionally, the Hessian. Metric evaluation code is
written against plain arithmetic plus the helpers in this module
(:func:`sqrt`, :func:`dot`, :func:`quad_form`, ...), so the same code runs on
floats and on jets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EvalDomainError


class Jet:
    """Truncated Taylor jet: value, gradient and optional Hessian."""

    __slots__ = ("val", "grad", "hess")
    # make numpy scalars defer to the reflected jet operators
    __array_ufunc__ = None

    def __init__(self, val, grad, hess=None):
        self.val = float(val)
        self.grad = grad
        self.hess = hess

    def __repr__(self):
        order = 1 if self.hess is None else 2
        return f"Jet(val={self.val!r}, order={order}, nvars={self.grad.size})"

    # construction of derived jets
    def _chain(self, f0, f1, f2):
        grad = f1 * self.grad
        hess = None
        if self.hess is not None:
            hess = f1 * self.hess + f2 * np.outer(self.grad, self.grad)
        return Jet(f0, grad, hess)

    def __neg__(self):
        return Jet(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            hess = None if self.hess is None else self.hess + other.hess
            return Jet(self.val + other.val, self.grad + other.grad, hess)
        return Jet(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            hess = None if self.hess is None else self.hess - other.hess
            return Jet(self.val - other.val, self.grad - other.grad, hess)
        return Jet(self.val - other, self.grad, self.hess)

    def __rsub__(self, other):
        return Jet(other - self.val, -self.grad, None if self.hess is None else -self.hess)

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            grad = a.val * b.grad + b.val * a.grad
            hess = None
            if a.hess is not None:
                cross = np.outer(a.grad, b.grad)
                hess = a.val * b.hess + b.val * a.hess + cross + cross.T
            return Jet(a.val * b.val, grad, hess)
        other = float(other)
        return Jet(self.val * other, self.grad * other,
                   None if self.hess is None else self.hess * other)

    __rmul__ = __mul__

    def reciprocal(self):
        u = self.val
        if u == 0.0:
            raise ZeroDivisionError("jet division by zero value")
        return self._chain(1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u))

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / float(other))

    def __rtruediv__(self, other):
        return self.reciprocal() * float(other)

    def __pow__(self, p):
        if isinstance(p, Jet):
            raise TypeError("jet exponents are not supported")
        p = float(p)
        u = self.val
        if p == 2.0:
            return self * self
        if u <= 0.0 and not p.is_integer():
            raise EvalDomainError(f"non-integer power {p} of non-positive value {u}")
        return self._chain(u ** p, p * u ** (p - 1), p * (p - 1) * u ** (p - 2))


def value(u) -> float:
    return u.val if isinstance(u, Jet) else float(u)


def sqrt(u):
    if value(u) <= 0.0:
        raise EvalDomainError(f"sqrt of non-positive value {value(u)!r}")
    if isinstance(u, Jet):
        r = math.sqrt(u.val)
        return u._chain(r, 0.5 / r, -0.25 / (r * u.val))
    return math.sqrt(u)


def sin(u):
    if isinstance(u, Jet):
        s, c = math.sin(u.val), math.cos(u.val)
        return u._chain(s, c, -s)
    return math.sin(u)


def cos(u):
    if isinstance(u, Jet):
        s, c = math.sin(u.val), math.cos(u.val)
        return u._chain(c, -s, -c)
    return math.cos(u)


def exp(u):
    if isinstance(u, Jet):
        e = math.exp(u.val)
        return u._chain(e, e, e)
    return math.exp(u)


def log(u):
    if value(u) <= 0.0:
        raise EvalDomainError(f"log of non-positive value {value(u)!r}")
    if isinstance(u, Jet):
        return u._chain(math.log(u.val), 1.0 / u.val, -1.0 / (u.val * u.val))
    return math.log(u)


def atan2(y, x):
    """Two-argument arctangent; differentiable away from the origin."""
    if not isinstance(y, Jet) and not isinstance(x, Jet):
        return math.atan2(y, x)
    y0, x0 = value(y), value(x)
    r2 = x0 * x0 + y0 * y0
    if r2 == 0.0:
        raise EvalDomainError("atan2 is not differentiable at the origin")
    fy, fx = x0 / r2, -y0 / r2
    fyy = -2.0 * x0 * y0 / (r2 * r2)
    fxx = -fyy
    fxy = (y0 * y0 - x0 * x0) / (r2 * r2)
    ref = y if isinstance(y, Jet) else x
    m = ref.grad.size
    zero_g = np.zeros(m)
    gy = y.grad if isinstance(y, Jet) else zero_g
    gx = x.grad if isinstance(x, Jet) else zero_g
    grad = fy * gy + fx * gx
    hess = None
    if ref.hess is not None:
        zero_h = np.zeros((m, m))
        hy = y.hess if isinstance(y, Jet) else zero_h
        hx = x.hess if isinstance(x, Jet) else zero_h
        cross = np.outer(gx, gy)
        hess = (fy * hy + fx * hx + fyy * np.outer(gy, gy) + fxx * np.outer(gx, gx)
                + fxy * (cross + cross.T))
    return Jet(math.atan2(y0, x0), grad, hess)


def _split(us):
    """Stack values, gradients and Hessians of a sequence of floats/jets."""
    ref = next((u for u in us if isinstance(u, Jet)), None)
    vals = np.array([value(u) for u in us])
    if ref is None:
        return vals, None, None
    m = ref.grad.size
    grads = np.zeros((len(us), m))
    hesses = None if ref.hess is None else np.zeros((len(us), m, m))
    for k, u in enumerate(us):
        if isinstance(u, Jet):
            grads[k] = u.grad
            if hesses is not None:
                hesses[k] = u.hess
    return vals, grads, hesses


def dot(coeffs, us):
    """Linear combination ``sum_k coeffs[k] * us[k]`` with constant coefficients."""
    c = np.asarray(coeffs, dtype=float)
    vals, grads, hesses = _split(us)
    v = float(c @ vals)
    if grads is None:
        return v
    hess = None if hesses is None else np.tensordot(c, hesses, axes=1)
    return Jet(v, c @ grads, hess)


def quad_form(a, us):
    """Quadratic form ``sum_kl a[k, l] * us[k] * us[l]``."""
    a = np.asarray(a, dtype=float)
    a = 0.5 * (a + a.T)
    vals, grads, hesses = _split(us)
    av = a @ vals
    q = float(vals @ av)
    if grads is None:
        return q
    grad = 2.0 * (av @ grads)
    hess = None
    if hesses is not None:
        hess = 2.0 * (grads.T @ a @ grads) + 2.0 * np.tensordot(av, hesses, axes=1)
    return Jet(q, grad, hess)


def seed(x, y, order=1):
    """Independent jets for chart position ``x`` (slots 0..n-1) and direction
    ``y`` (slots n..2n-1)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    m = 2 * n
    eye = np.eye(m)
    hz = None
    out = []
    for k, c in enumerate(np.concatenate([x, y])):
        if order >= 2:
            hz = np.zeros((m, m))
        out.append(Jet(c, eye[k].copy(), hz))
    return out[:n], out[n:]


@dataclass(frozen=True)
class PointJet:
    """Metric value and first derivatives at one tangent vector.

    ``g_vec`` is the vertical gradient (d/dy), ``h_vec`` the horizontal
    derivative (d/dx) and ``hess`` the energy Hessian d^2(F^2/2)/dy dy.
    """

    x: np.ndarray
    y: np.ndarray
    f_value: float
    g_vec: np.ndarray
    h_vec: np.ndarray
    hess: Optional[np.ndarray] = None

    @property
    def dim(self):
        return self.y.size


def _check_direction(y):
    y = np.asarray(y, dtype=float)
    if not np.any(y):
        raise ValueError("tangent direction must be non-zero")
    return y


def jet_at(metric, x, y, want_hessian=False) -> PointJet:
    """Evaluate F, dF/dy, dF/dx (and the energy Hessian) at ``(x, y)``."""
    x = np.asarray(x, dtype=float)
    y = _check_direction(y)
    n = y.size
    xs, ys = seed(x, y, order=2 if want_hessian else 1)
    try:
        f = metric.evaluate(xs, ys)
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise EvalDomainError(f"metric evaluation failed at x={x}, y={y}: {exc}") from exc
    if not isinstance(f, Jet):
        # constant metric code path never touched the seeds
        f = Jet(f, np.zeros(2 * n), np.zeros((2 * n, 2 * n)) if want_hessian else None)
    if not np.isfinite(f.val) or not np.all(np.isfinite(f.grad)):
        raise EvalDomainError(f"non-finite metric jet at x={x}, y={y}")
    h_vec = f.grad[:n].copy()
    g_vec = f.grad[n:].copy()
    hess = None
    if want_hessian:
        fyy = f.hess[n:, n:]
        hess = f.val * fyy + np.outer(g_vec, g_vec)
        hess = 0.5 * (hess + hess.T)
    return PointJet(x=x, y=y, f_value=f.val, g_vec=g_vec, h_vec=h_vec, hess=hess)


def fd_crosscheck(metric, x, y, step=None) -> float:
    """Largest deviation between jet derivatives and central differences.

    The step defaults to ``1e-5 * (1 + |y|)``. Deviations are measured
    relative to ``1 + max(|G|_inf, |H|_inf)``.
    """
    x = np.asarray(x, dtype=float)
    y = _check_direction(y)
    if step is None:
        step = 1e-5 * (1.0 + float(np.linalg.norm(y)))
    if step <= 0:
        raise ValueError("step must be positive")
    jet = jet_at(metric, x, y)
    n = y.size

    def f(xx, yy):
        try:
            return float(metric.evaluate(list(xx), list(yy)))
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise EvalDomainError(str(exc)) from exc

    fd_h = np.empty(n)
    fd_g = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        fd_h[i] = (f(x + e, y) - f(x - e, y)) / (2 * step)
        fd_g[i] = (f(x, y + e) - f(x, y - e)) / (2 * step)
    scale = 1.0 + max(np.max(np.abs(jet.g_vec)), np.max(np.abs(jet.h_vec)))
    dev = max(np.max(np.abs(fd_h - jet.h_vec)), np.max(np.abs(fd_g - jet.g_vec)))
    return float(dev / scale)
