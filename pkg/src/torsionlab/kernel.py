"""Rectangle Green's function, its Poisson-summed form and the warped kernel.

Kernel formulas use translated coordinates in which the slice
``|x - x_tilde| <= d/2`` becomes ``[0, d]`` (``d = d(x_tilde)``).  The public
functions taking a domain accept ordinary domain coordinates and translate
internally; :func:`f_n` works in translated coordinates directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .closed_forms import v1 as _v1
from .exceptions import HypothesisError, QuadratureError, SingularityError
from .geometry import ConvexDomain, dist_to_ends, height

SINGULAR_RADIUS = 1e-6
# exp(-LOG_EPS) is below double precision relative to the leading term
LOG_EPS = 40.0


@dataclass(frozen=True)
class KernelContext:
    x_tilde: float
    h_tilde: float
    d_tilde: float
    n_cutoff: int = 64
    m_cutoff: int = 16

    def __post_init__(self):
        if not 0.5 - 1e-12 <= self.h_tilde <= 1 + 1e-12:
            raise HypothesisError(f"h(x_tilde) = {self.h_tilde} not in [1/2, 1]")
        if self.d_tilde < 1:
            raise HypothesisError(f"d(x_tilde) = {self.d_tilde} < 1")
        if self.n_cutoff < 1 or self.m_cutoff < 1:
            raise ValueError("cutoffs must be positive")

    @classmethod
    def at(cls, domain: ConvexDomain, x_tilde: float, **kw) -> "KernelContext":
        return cls(x_tilde=float(x_tilde), h_tilde=height(domain, x_tilde),
                   d_tilde=dist_to_ends(domain, x_tilde), **kw)

    def translate(self, x):
        """Domain coordinate to the ``[0, d]`` slice coordinate."""
        return np.asarray(x, dtype=float) - self.x_tilde + 0.5 * self.d_tilde

    @property
    def slice_bounds(self) -> tuple[float, float]:
        return self.x_tilde - 0.5 * self.d_tilde, self.x_tilde + 0.5 * self.d_tilde


def warp(domain: ConvexDomain, ctx: KernelContext, x, y):
    """Vertical warp ``e(x, y) = (y - f1(x)) h_tilde / h(x)``."""
    x = np.asarray(x, dtype=float)
    return (np.asarray(y, dtype=float) - domain.f1(x)) * ctx.h_tilde / height(domain, x)


# --------------------------------------------------------------------------
# rectangle Green's function
# --------------------------------------------------------------------------

def rect_green_double_series(c: float, d: float, p, q, n_cutoff: int = 2000) -> float:
    """Green's function of the Laplacian on ``[0, d] x [0, c]`` by its eigenfunction series.

    Slow reference evaluation over ``n1, n2 <= n_cutoff``; use it as an oracle only.
    """
    (x, y), (xp, yp) = p, q
    if x == xp and y == yp:
        raise SingularityError("p == q")
    n = np.arange(1, n_cutoff + 1, dtype=float)
    sx = np.sin(n * math.pi * x / d) * np.sin(n * math.pi * xp / d)
    sy = np.sin(n * math.pi * y / c) * np.sin(n * math.pi * yp / c)
    total = 0.0
    # accumulate row by row to keep memory at O(n_cutoff)
    for k in range(n_cutoff):
        denom = (n[k] / d) ** 2 + (n / c) ** 2
        total += sx[k] * float(np.sum(sy / denom))
    return -4.0 / (math.pi**2 * c * d) * total


def lattice_tail_bound(ctx: KernelContext, n: int) -> float:
    """Bound on the lattice terms with ``|m| > m_cutoff`` in :func:`f_n`."""
    a = 2 * math.pi * ctx.d_tilde / ctx.h_tilde * n
    # |xi + m| >= |m| - 1 for xi in [-1, 1]; four geometric tails
    return 4.0 / (math.pi * n) * math.exp(-a * ctx.m_cutoff) / (1 - math.exp(-a))


def f_n(ctx: KernelContext, n: int, x, x_prime):
    """Poisson-summed 1-D kernel in ``x`` on ``[0, d]`` (translated coordinates).

    ``f_n = (2/h) g`` where ``g`` is the Green's function of
    ``d^2/dx^2 - (n pi / h)^2`` with zero end values; the factor ``2/h`` is the
    squared norm of the vertical sine mode, so ``sum f_n g_n g_n`` is the full
    kernel.
    """
    x = np.asarray(x, dtype=float)
    xp = np.asarray(x_prime, dtype=float)
    a = 2 * math.pi * ctx.d_tilde / ctx.h_tilde * n
    xi_plus = (x + xp) / (2 * ctx.d_tilde)
    xi_minus = (x - xp) / (2 * ctx.d_tilde)
    # terms with a * |xi + m| > LOG_EPS + a are negligible; |xi| <= 1 on the slice
    m_hi = min(ctx.m_cutoff, int(math.ceil(LOG_EPS / a)) + 2)
    total = np.zeros(np.broadcast(x, xp).shape)
    for m in range(-m_hi, m_hi + 1):
        total += np.exp(-a * np.abs(xi_plus + m)) - np.exp(-a * np.abs(xi_minus + m))
    out = total / (math.pi * n)
    return float(out) if out.ndim == 0 else out


def df_n_dx(ctx: KernelContext, n: int, x, x_prime, side: int = 1):
    """Analytic ``x`` derivative of :func:`f_n`; ``side`` picks the one-sided limit at ``x = x'``."""
    if side not in (-1, 1):
        raise ValueError("side must be -1 or +1")
    x = np.asarray(x, dtype=float)
    xp = np.asarray(x_prime, dtype=float)
    a = 2 * math.pi * ctx.d_tilde / ctx.h_tilde * n
    xi_plus = (x + xp) / (2 * ctx.d_tilde)
    xi_minus = (x - xp) / (2 * ctx.d_tilde)
    m_hi = min(ctx.m_cutoff, int(math.ceil(LOG_EPS / a)) + 2)
    total = np.zeros(np.broadcast(x, xp).shape)
    for m in range(-m_hi, m_hi + 1):
        up, um = xi_plus + m, xi_minus + m
        su = np.where(up == 0, side, np.sign(up))
        sm = np.where(um == 0, side, np.sign(um))
        total += -su * np.exp(-a * np.abs(up)) + sm * np.exp(-a * np.abs(um))
    out = total * a / (2 * ctx.d_tilde * math.pi * n)
    return float(out) if out.ndim == 0 else out


def g_n(domain: ConvexDomain, n: int, x, y):
    """``sin(n pi (y - f1(x)) / h(x))``."""
    x = np.asarray(x, dtype=float)
    hx = height(domain, x)
    if np.any(np.asarray(hx) <= 0):
        raise SingularityError("degenerate slice h(x) = 0")
    out = np.sin(n * math.pi * (np.asarray(y, dtype=float) - domain.f1(x)) / hx)
    return float(out) if np.ndim(out) == 0 else out


def _n_cutoff(ctx: KernelContext, dx: float) -> int:
    return max(ctx.n_cutoff, int(math.ceil(LOG_EPS * ctx.h_tilde / (math.pi * dx))))


def approx_green(domain: ConvexDomain, ctx: KernelContext, p, q) -> float:
    """Warped rectangle Green's function ``G(x, e(x, y); x', e(x', y'))``.

    Evaluated as ``sum_n f_n(x; x') g_n(x, y) g_n(x', y')``.  The ``n`` terms
    decay like ``exp(-pi n |x - x'| / h_tilde)`` and the sum is cut where that
    factor drops below ``exp(-40)``; this is never fewer terms than
    ``ceil(40 h_tilde / |x - x'|)``.
    """
    (x, y), (xp, yp) = p, q
    lo, hi = ctx.slice_bounds
    for t in (x, xp):
        if t < lo - 1e-12 or t > hi + 1e-12:
            raise HypothesisError(f"x = {t} outside the slice [{lo}, {hi}]")
    dx = abs(x - xp)
    if dx < SINGULAR_RADIUS:
        raise SingularityError(f"|x - x'| = {dx} below {SINGULAR_RADIUS}")
    nmax = _n_cutoff(ctx, dx)
    n = np.arange(1, nmax + 1, dtype=float)
    ex = float(warp(domain, ctx, x, y)) / ctx.h_tilde
    exp_ = float(warp(domain, ctx, xp, yp)) / ctx.h_tilde
    fx = np.array([f_n(ctx, int(k), ctx.translate(x), ctx.translate(xp)) for k in n]) \
        if nmax <= 64 else _f_n_many(ctx, n, float(ctx.translate(x)), float(ctx.translate(xp)))
    return float(np.sum(fx * np.sin(n * math.pi * ex) * np.sin(n * math.pi * exp_)))


def _f_n_many(ctx: KernelContext, n: np.ndarray, x: float, xp: float) -> np.ndarray:
    """:func:`f_n` for many ``n`` at one pair of points."""
    a = 2 * math.pi * ctx.d_tilde / ctx.h_tilde * n
    xi_plus = (x + xp) / (2 * ctx.d_tilde)
    xi_minus = (x - xp) / (2 * ctx.d_tilde)
    total = np.zeros_like(n)
    m_hi = min(ctx.m_cutoff, int(math.ceil(LOG_EPS / a.min())) + 2)
    for m in range(-m_hi, m_hi + 1):
        total += np.exp(-a * abs(xi_plus + m)) - np.exp(-a * abs(xi_minus + m))
    return total / (math.pi * n)


# --------------------------------------------------------------------------
# Poisson summation identity
# --------------------------------------------------------------------------

def poisson_lhs(a: float, xi: float, m_cutoff: int, accelerate: bool = False) -> float:
    """Truncated ``sum_m exp(2 pi i m xi) / (a^2 + 4 pi^2 m^2)`` (real part).

    The tail decays like ``1/M``; ``accelerate`` applies one Richardson step
    combining cutoffs ``M`` and ``2M``.
    """
    def partial(M):
        m = np.arange(1, M + 1, dtype=float)
        body = np.cos(2 * math.pi * m * xi) / (a * a + 4 * math.pi**2 * m * m)
        return 1.0 / (a * a) + 2.0 * math.fsum(body)

    if not accelerate:
        return partial(m_cutoff)
    return 2.0 * partial(2 * m_cutoff) - partial(m_cutoff)


def poisson_lhs_tail_bound(m_cutoff: int) -> float:
    """``sum_{|m| > M} 1 / (4 pi^2 m^2) <= 2 / (4 pi^2 M)``."""
    return 2.0 / (4 * math.pi**2 * m_cutoff)


def poisson_rhs_cutoff(a: float) -> int:
    """Least cutoff that pushes every dropped term below ``exp(-40)``."""
    return int(math.ceil(LOG_EPS / a)) + 2


def poisson_rhs_tail_bound(a: float, m_cutoff: int) -> float:
    """Bound on ``sum_{|m| > M} exp(-a |xi + m|) / (2a)`` for ``|xi| <= 1``."""
    return 2 * math.exp(-a * (m_cutoff - 1)) / (2 * a * (1 - math.exp(-a)))


def poisson_rhs(a: float, xi: float, m_cutoff=None) -> float:
    """Truncated ``sum_m exp(-a |xi + m|) / (2a)`` (exponentially convergent).

    ``m_cutoff=None`` picks :func:`poisson_rhs_cutoff`; small ``a`` needs
    many more terms than the kernel default of 16.
    """
    if m_cutoff is None:
        m_cutoff = poisson_rhs_cutoff(a)
    m = np.arange(-m_cutoff, m_cutoff + 1, dtype=float)
    return math.fsum(np.exp(-a * np.abs(xi + m))) / (2 * a)


def poisson_closed_form(a: float) -> float:
    """Both sides at ``xi = 0``: ``coth(a/2) / (2a)``."""
    return 1.0 / (2 * a * math.tanh(a / 2))


def poisson_identity_residual(a: float, xi: float, m_cutoff: int) -> float:
    """``|LHS - RHS|`` with both sides truncated at ``|m| <= m_cutoff``."""
    if a <= 0:
        raise ValueError("a must be positive")
    return abs(poisson_lhs(a, xi, m_cutoff) - poisson_rhs(a, xi, m_cutoff))


# --------------------------------------------------------------------------
# reconstruction of v1 by kernel integration
# --------------------------------------------------------------------------

def _slice_nodes(lo: float, hi: float, xq: float, per_unit: int, levels: int):
    """Midpoint nodes/weights on ``[lo, hi]`` with the cell holding ``xq`` refined dyadically."""
    n = max(int(math.ceil((hi - lo) * per_unit)), 1)
    edges = np.linspace(lo, hi, n + 1)
    k = int(np.clip(np.searchsorted(edges, xq) - 1, 0, n - 1))
    keep = np.ones(n, dtype=bool)
    keep[k] = False
    mids = 0.5 * (edges[:-1] + edges[1:])
    w = np.diff(edges)
    sub = np.linspace(edges[k], edges[k + 1], 2**levels + 1)
    # split the refined cell at xq so the kink sits on a cell edge
    sub = np.union1d(sub, [xq]) if edges[k] < xq < edges[k + 1] else sub
    nodes = np.concatenate([mids[keep], 0.5 * (sub[:-1] + sub[1:])])
    weights = np.concatenate([w[keep], np.diff(sub)])
    return nodes, weights


def _reconstruct(domain, ctx, xq, yq, per_unit, levels, n_max):
    lo, hi = ctx.slice_bounds
    nodes, weights = _slice_nodes(lo, hi, xq, per_unit, levels)
    hx = height(domain, nodes)
    t_nodes = ctx.translate(nodes)
    t_q = float(ctx.translate(xq))
    eq = float(warp(domain, ctx, xq, yq)) / ctx.h_tilde
    dist = np.abs(nodes - xq)
    total = 0.0
    for n in range(1, n_max + 1, 2):  # even modes integrate to zero in y
        # f_n is below exp(-LOG_EPS) times its peak beyond this distance
        near = dist <= LOG_EPS * ctx.h_tilde / (math.pi * n)
        if not np.any(near):
            break
        fn = f_n(ctx, n, t_nodes[near], t_q)
        col = 2.0 * hx[near] / (n * math.pi)  # exact integral of g_n over the column
        total += math.sin(n * math.pi * eq) * float(np.sum(fn * col * weights[near]))
    return -total


def reconstruct_v1(domain: ConvexDomain, ctx: KernelContext, q, per_unit: int = 1024,
                   levels: int = 8, n_max: int = 4001, check: bool = True) -> float:
    """``-integral of G over the slice`` at ``q = (x', y')``; approximates ``v1(q)``.

    The ``y`` integral of each term is done exactly (the warped sine integrates
    to ``2 h(x) / (n pi)`` over a column for odd ``n``); the ``x`` integral is a
    midpoint rule with ``per_unit`` cells per unit length and the cell holding
    ``x'`` refined dyadically ``levels`` times.  With ``check`` the result is
    compared against the rule at half resolution.
    """
    xq, yq = map(float, q)
    lo, hi = ctx.slice_bounds
    if not lo <= xq <= hi:
        raise HypothesisError(f"x' = {xq} outside the slice [{lo}, {hi}]")
    value = _reconstruct(domain, ctx, xq, yq, per_unit, levels, n_max)
    if check:
        coarse = _reconstruct(domain, ctx, xq, yq, per_unit // 2, levels, n_max)
        if abs(coarse - value) > 1e-4:
            raise QuadratureError(f"refinements disagree: {coarse} vs {value}")
    return value


def reconstruction_gap(domain: ConvexDomain, ctx: KernelContext, q, **kw) -> float:
    """``|reconstruct_v1 - v1|`` at ``q``."""
    return abs(reconstruct_v1(domain, ctx, q, **kw) - _v1(domain, *q))


def fit_decay_rate(domain: ConvexDomain, ctx: KernelContext, p, separations) -> tuple[float, float]:
    """Least-squares ``(rate, log C)`` of ``log |G|`` against ``|x - x'|`` from ``p``."""
    x0, y0 = p
    sep = np.asarray(separations, dtype=float)
    vals = np.array([abs(approx_green(domain, ctx, (x0, y0), (x0 + s, y0))) for s in sep])
    slope, icpt = np.polyfit(sep, np.log(vals), 1)
    return float(-slope), float(icpt)


def boundary_rounding_bound(ctx: KernelContext, n: int) -> float:
    """Floating-point floor for ``|f_n|`` at the slice ends.

    Each lattice term ``exp(-t)`` carries an absolute error of at most a few
    ulps times ``max(1, t exp(-t))``, so the kept terms add up to at most
    ``16 eps (2 m + 1) / (pi n)``.
    """
    a = 2 * math.pi * ctx.d_tilde / ctx.h_tilde * n
    m_hi = min(ctx.m_cutoff, int(math.ceil(LOG_EPS / a)) + 2)
    return 16 * np.finfo(float).eps * (2 * m_hi + 1) / (math.pi * n)


def check_structure(n_samples: int = 100, seed: int = 0, d_range=(2.0, 20.0),
                    h_range=(0.5, 1.0), n_range=(1, 8), step: float = 1e-4) -> dict:
    """Worst-case structural defects of ``f_n`` over random ``(n, x, x')``.

    Returns the largest relative ODE residual (centred second difference),
    the largest ``|h/2 * jump - 1|`` of the one-sided derivatives at
    ``x = x'``, the largest asymmetry, and the largest ratio of boundary value
    to its allowance (lattice tail plus rounding floor).
    """
    rng = np.random.default_rng(seed)
    ode = jump = sym = bnd = 0.0
    done = 0
    while done < n_samples:
        d = rng.uniform(*d_range)
        h = rng.uniform(*h_range)
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        ctx = KernelContext(x_tilde=0.0, h_tilde=h, d_tilde=d)
        k = n * math.pi / h
        x, xp = rng.uniform(0.05 * d, 0.95 * d, size=2)
        if abs(x - xp) < 10 * step or k * abs(x - xp) > 30:
            continue
        done += 1
        f0 = f_n(ctx, n, x, xp)
        lap = (f_n(ctx, n, x + step, xp) - 2 * f0 + f_n(ctx, n, x - step, xp)) / step**2
        ode = max(ode, abs(lap - k * k * f0) / abs(k * k * f0))
        j = df_n_dx(ctx, n, xp, xp, +1) - df_n_dx(ctx, n, xp, xp, -1)
        jump = max(jump, abs(0.5 * h * j - 1.0))
        sym = max(sym, abs(f0 - f_n(ctx, n, xp, x)))
        allow = lattice_tail_bound(ctx, n) + boundary_rounding_bound(ctx, n)
        edge = max(abs(f_n(ctx, n, 0.0, xp)), abs(f_n(ctx, n, d, xp)))
        bnd = max(bnd, edge / allow)
    return {"ode_residual": ode, "jump_defect": jump, "asymmetry": sym, "boundary_ratio": bnd,
            "samples": n_samples}
