"""Reference solutions and the error functional of the ``v1`` approximation.

``torsion_rectangle`` and ``torsion_ellipse`` work in centred coordinates:
the rectangle is ``[-N/2, N/2] x [0, 1]`` and the ellipse is centred at the
origin with semi-axes ``N/2`` and ``1/2``.  ``v1`` and ``error_budget`` take
points in the coordinates of a :class:`~torsionlab.geometry.ConvexDomain`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import DomainRangeError, HypothesisError
from .geometry import ConvexDomain, dist_to_ends, height

N_MAX_CAP = 100_000
SUP_POINTS_PER_UNIT = 1024


@dataclass(frozen=True)
class SeriesTruncation:
    n_max: int
    tail_bound: float


@dataclass(frozen=True)
class ErrorBudget:
    x_tilde: float
    term_exp: float
    term_osc: float
    total: float
    c1: float
    C1: float


def _rect_tail(n_max: int, decay: np.ndarray) -> np.ndarray:
    """Bound on the dropped terms ``n > n_max`` of the rectangle series.

    Uses ``cosh(n pi x) / cosh(n pi N/2) <= 2 exp(-n pi d)``, so every odd term
    is at most ``8 / (pi^3 n^3) r^n`` with ``r = exp(-pi d)``.
    """
    r = np.exp(-math.pi * decay)
    k = n_max + 1
    with np.errstate(divide="ignore", invalid="ignore"):
        geometric = np.where(r < 1, 8 / (math.pi**3 * k**3) * r**k / (1 - r), np.inf)
    # comparison with an integral, valid for any r <= 1
    integral = 8 / (math.pi**3 * 2 * n_max**2) * np.ones_like(r)
    return np.minimum(geometric, integral)


def torsion_rectangle_series(N: float, x, y, tol: float = 1e-12):
    """Rectangle torsion function and its :class:`SeriesTruncation`.

    ``n_max`` is the least (odd) cutoff whose tail bound is below ``tol`` at
    every requested point, capped at ``100000``.  Points on the short sides
    return 0 exactly.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    half = 0.5 * N
    slack = 1e-12 * max(1.0, half)
    if np.any(np.abs(x) > half + slack) or np.any(y < -1e-12) or np.any(y > 1 + 1e-12):
        raise DomainRangeError("point outside the rectangle")
    ax = np.minimum(np.abs(x), half)
    d = half - ax
    main = 0.5 * y * (1.0 - y)

    active = d > 0
    total = np.zeros_like(main)
    n_max = 1
    if np.any(active):
        da = d[active]
        xa, ya = ax[active], y[active]
        acc = np.zeros_like(da)
        n = 1
        while True:
            ratio = np.exp(n * math.pi * (xa - half)) * (1 + np.exp(-2 * n * math.pi * xa)) \
                / (1 + np.exp(-n * math.pi * N))
            acc += 2.0 / (n**3) * np.sin(n * math.pi * ya) * ratio
            n_max = n
            if np.all(_rect_tail(n, da) < tol) or n >= N_MAX_CAP:
                break
            n += 2
        total[active] = acc
    value = main - 2.0 / math.pi**3 * total
    value = np.where(active, value, 0.0)
    tail = float(np.max(_rect_tail(n_max, d[active]))) if np.any(active) else 0.0
    if value.ndim == 0:
        value = float(value)
    return value, SeriesTruncation(n_max=n_max, tail_bound=tail)


def torsion_rectangle(N: float, x, y, tol: float = 1e-12):
    """Torsion function of ``[-N/2, N/2] x [0, 1]`` by its Fourier series."""
    return torsion_rectangle_series(N, x, y, tol)[0]


def torsion_ellipse(N: float, x, y):
    """Closed form ``(1/8) (1/N^2 + 1)^-1 (1 - 4x^2/N^2 - 4y^2)``, centred coordinates."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    q = 4 * x * x / N**2 + 4 * y * y
    if np.any(q > 1 + 1e-12):
        raise DomainRangeError("point outside the ellipse")
    out = np.maximum(0.125 / (1 / N**2 + 1) * (1 - q), 0.0)
    return float(out) if out.ndim == 0 else out


def torsion_ellipse_hessian(N: float) -> np.ndarray:
    """Constant Hessian of the ellipse torsion function."""
    k = 0.125 / (1 / N**2 + 1)
    return np.array([[-8 * k / N**2, 0.0], [0.0, -8 * k]])


def v1(domain: ConvexDomain, x, y):
    """Cross-sectional parabola ``(y - f1)(f2 - y) / 2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(domain.contains(x, y)):
        raise DomainRangeError("point outside the closure of the domain")
    xc = np.clip(x, domain.a, domain.b)
    lo, hi = domain.f1(xc), domain.f2(xc)
    out = np.maximum(0.5 * (y - lo) * (hi - y), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def v1_hessian(domain: ConvexDomain, x: float, y: float, step: float = 1e-4) -> np.ndarray:
    """Hessian of ``v1`` at an interior point.

    Exact when the domain carries profile derivatives; otherwise the ``x``
    derivatives of ``f1``/``f2`` come from central differences, switching to
    a one-sided stencil (with a warning) when a breakpoint falls inside it.
    """
    if not domain.contains(x, y):
        raise DomainRangeError("point outside the domain")
    f1, f2 = float(domain.f1(x)), float(domain.f2(x))
    if domain.df1 is not None and domain.d2f1 is not None:
        d1, d2 = float(domain.df1(x)), float(domain.df2(x))
        dd1, dd2 = float(domain.d2f1(x)), float(domain.d2f2(x))
    else:
        xs = np.array([x - 2 * step, x - step, x, x + step, x + 2 * step])
        kinks = [p for p in domain.breakpoints if abs(p - x) <= step]
        if kinks or x - step < domain.a or x + step > domain.b:
            warnings.warn(f"breakpoint or end within stencil at x={x}; one-sided differences",
                          stacklevel=2)
            sgn = 1.0 if (x + 2 * step <= domain.b and not any(p > x for p in kinks)) else -1.0
            xs = x + sgn * step * np.arange(4)
            g1, g2 = domain.f1(xs), domain.f2(xs)

            def first(g):
                return sgn * (-1.5 * g[0] + 2 * g[1] - 0.5 * g[2]) / step

            def second(g):
                return (2 * g[0] - 5 * g[1] + 4 * g[2] - g[3]) / step**2
        else:
            g1, g2 = domain.f1(xs[1:4]), domain.f2(xs[1:4])

            def first(g):
                return (g[2] - g[0]) / (2 * step)

            def second(g):
                return (g[2] - 2 * g[1] + g[0]) / step**2
        d1, d2 = first(g1), first(g2)
        dd1, dd2 = second(g1), second(g2)
    vxx = 0.5 * (y * dd2 - dd1 * f2 - 2 * d1 * d2 - f1 * dd2 + dd1 * y)
    vxy = 0.5 * (d1 + d2)
    return np.array([[vxx, vxy], [vxy, -1.0]])


def _osc(domain, xt, ht, c1, x):
    return np.exp(-c1 * np.abs(x - xt)) * np.abs(height(domain, x) - ht)


def error_budget(domain: ConvexDomain, x_tilde: float, c1: float = 1.0, C1: float = 1.0) -> ErrorBudget:
    """Right-hand side of the ``|v - v1|`` bound at ``x_tilde``.

    ``C1 exp(-c1 d) + C1 sup_{|x - x~| <= 3d/4} exp(-c1 |x - x~|) |h(x) - h(x~)|``.
    The supremum is sampled at 1024 points per unit length and then polished by
    a bounded scalar search on each side of ``x_tilde`` around the best sample.
    """
    if c1 <= 0 or C1 <= 0:
        raise ValueError("c1 and C1 must be positive")
    ht = height(domain, x_tilde)
    if ht < 0.5 - 1e-12:
        raise HypothesisError(f"h({x_tilde}) = {ht} < 1/2")
    d = dist_to_ends(domain, x_tilde)
    term_exp = C1 * math.exp(-c1 * d)
    sup = 0.0
    r = 0.75 * d
    if r > 0:
        n = max(int(math.ceil(2 * r * SUP_POINTS_PER_UNIT)), 2) + 1
        xs = np.linspace(x_tilde - r, x_tilde + r, n)
        vals = _osc(domain, x_tilde, ht, c1, xs)
        k = int(np.argmax(vals))
        sup = float(vals[k])
        lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, n - 1)]
        # the weighted oscillation is unimodal on each side of x_tilde
        for a, b in ((lo, min(hi, x_tilde)), (max(lo, x_tilde), hi)):
            if b - a > 1e-12:
                res = minimize_scalar(lambda t: -_osc(domain, x_tilde, ht, c1, t),
                                      bounds=(a, b), method="bounded",
                                      options={"xatol": 1e-12})
                sup = max(sup, -float(res.fun))
    term_osc = C1 * sup
    return ErrorBudget(x_tilde=float(x_tilde), term_exp=term_exp, term_osc=term_osc,
                       total=term_exp + term_osc, c1=float(c1), C1=float(C1))
