"""Normalized convex planar domains described by height functions.

A domain is ``{(x, y): a <= x <= b, f1(x) <= y <= f2(x)}`` with ``f1`` convex,
``f2`` concave and ``max (f2 - f1) = 1``.  The built-in families are the
rectangle, the ellipse, the two model families ``omega1``/``omega2`` and
convex polygons.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import DomainRangeError, GeometryError

Profile = Callable[[np.ndarray], np.ndarray]

# uniform samples used by every invariant check (breakpoints are added on top)
N_SAMPLES = 4096
BISECT_XTOL = 1e-10
DELTA_GRID = np.logspace(-6, math.log10(0.25), 64)

_RANGE_SLACK = 1e-12


@dataclass(frozen=True)
class ConvexDomain:
    """Domain between a convex lower profile ``f1`` and a concave upper ``f2``.

    ``kind`` is one of ``rectangle``, ``ellipse``, ``omega1``, ``omega2``,
    ``piecewise_linear`` or ``custom_height``.  Derivative callables are
    optional; when present they are used for exact Hessians of ``v1``.
    """

    a: float
    b: float
    f1: Profile
    f2: Profile
    kind: str
    params: dict = field(default_factory=dict)
    breakpoints: tuple = ()
    x_bar: Optional[float] = None
    df1: Optional[Profile] = None
    df2: Optional[Profile] = None
    d2f1: Optional[Profile] = None
    d2f2: Optional[Profile] = None

    def __post_init__(self):
        if not self.b > self.a:
            raise GeometryError(f"need b > a, got a={self.a}, b={self.b}")

    @property
    def N(self) -> float:
        return self.b - self.a

    @property
    def thickest_point(self) -> float:
        """The point ``x_bar`` where ``h`` attains its maximum."""
        if self.x_bar is not None:
            return self.x_bar
        return _argmax_height(self)

    def height(self, x):
        return height(self, x)

    def sample_x(self, n: int = N_SAMPLES) -> np.ndarray:
        xs = np.linspace(self.a, self.b, n)
        extra = list(self.breakpoints)
        if self.x_bar is not None:
            extra.append(self.x_bar)
        if extra:
            xs = np.union1d(xs, np.asarray(extra, dtype=float))
        return xs

    def contains(self, x, y, tol: float = 1e-12):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside_x = (x >= self.a - tol) & (x <= self.b + tol)
        xc = np.clip(x, self.a, self.b)
        return inside_x & (y >= self.f1(xc) - tol) & (y <= self.f2(xc) + tol)

    def describe(self) -> dict:
        out = {"kind": self.kind, "a": self.a, "b": self.b, "N": self.N}
        out.update(self.params)
        return out


def _check_x(domain: ConvexDomain, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < domain.a - _RANGE_SLACK) or np.any(x > domain.b + _RANGE_SLACK):
        raise DomainRangeError(
            f"x outside [{domain.a}, {domain.b}]: {np.ravel(x)[:4]}")
    return np.clip(x, domain.a, domain.b)


def height(domain: ConvexDomain, x):
    """Vertical thickness ``h(x) = f2(x) - f1(x)``."""
    xc = _check_x(domain, x)
    out = domain.f2(xc) - domain.f1(xc)
    return float(out) if np.ndim(out) == 0 else out


def dist_to_ends(domain: ConvexDomain, x):
    """``d(x) = min(x - a, b - x)``."""
    xc = _check_x(domain, x)
    out = np.minimum(xc - domain.a, domain.b - xc)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# families
# --------------------------------------------------------------------------

def _const(value):
    return lambda x: np.full(np.shape(x), value, dtype=float) if np.ndim(x) else float(value)


def _wrap(fn):
    """Return scalars for scalar input, arrays otherwise."""
    def inner(x):
        arr = np.asarray(x, dtype=float)
        out = fn(arr)
        return float(out) if arr.ndim == 0 else out
    return inner


def rectangle(N: float) -> ConvexDomain:
    """``[-N/2, N/2] x [0, 1]``."""
    N = float(N)
    return ConvexDomain(
        a=-N / 2, b=N / 2, f1=_const(0.0), f2=_const(1.0), kind="rectangle",
        params={"N": N}, x_bar=0.0,
        df1=_const(0.0), df2=_const(0.0), d2f1=_const(0.0), d2f2=_const(0.0))


def ellipse(N: float) -> ConvexDomain:
    """Ellipse with horizontal axis ``N`` and vertical axis 1, center ``(0, 1/2)``.

    The closed-form torsion function uses coordinates centred at the origin;
    shift ``y -> y - 1/2`` to map points of this domain there.
    """
    N = float(N)

    def s(x):
        return np.sqrt(np.maximum(0.25 - x * x / N**2, 0.0))

    def ds(x):
        sx = s(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(sx > 0, -x / (N**2 * sx), 0.0)

    def d2s(x):
        sx = s(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(sx > 0, -0.25 / (N**2 * sx**3), 0.0)

    return ConvexDomain(
        a=-N / 2, b=N / 2,
        f1=_wrap(lambda x: 0.5 - s(x)), f2=_wrap(lambda x: 0.5 + s(x)),
        kind="ellipse", params={"N": N}, x_bar=0.0,
        df1=_wrap(lambda x: -ds(x)), df2=_wrap(ds),
        d2f1=_wrap(lambda x: -d2s(x)), d2f2=_wrap(d2s))


def omega1(N: float) -> ConvexDomain:
    """Steep ramp up to ``x = N**0.5`` then an almost flat top on ``[0, N]``."""
    N = float(N)
    r = math.sqrt(N)

    def h(x):
        return np.where(x <= r, x / r, 1.0 - (x - r) / N**3)

    def dh(x):
        return np.where(x <= r, 1.0 / r, -1.0 / N**3)

    return ConvexDomain(
        a=0.0, b=N, f1=_const(0.0), f2=_wrap(h), kind="omega1",
        params={"N": N}, breakpoints=(r,), x_bar=r,
        df1=_const(0.0), df2=_wrap(dh), d2f1=_const(0.0), d2f2=_const(0.0))


def omega2(N: float) -> ConvexDomain:
    """Parabolic cap ``1 - x^2/N^2`` on ``|x| <= N**0.25`` with linear flanks."""
    N = float(N)
    q = N**0.25
    top = 1.0 - N**-1.5
    run = 0.5 * N - q

    def h(x):
        ax = np.abs(x)
        return np.where(ax <= q, 1.0 - ax * ax / N**2,
                        np.maximum(top * (1.0 - (ax - q) / run), 0.0))

    def dh(x):
        ax = np.abs(x)
        return np.sign(x) * np.where(ax <= q, -2.0 * ax / N**2, -top / run)

    def d2h(x):
        return np.where(np.abs(x) <= q, -2.0 / N**2, 0.0)

    return ConvexDomain(
        a=-N / 2, b=N / 2, f1=_const(0.0), f2=_wrap(h), kind="omega2",
        params={"N": N}, breakpoints=(-q, q), x_bar=0.0,
        df1=_const(0.0), df2=_wrap(dh), d2f1=_const(0.0), d2f2=_wrap(d2h))


def _chain(points: np.ndarray, upper: bool) -> np.ndarray:
    pts = points[np.lexsort((points[:, 1], points[:, 0]))]
    xs, idx = np.unique(pts[:, 0], return_index=True)
    out = []
    for k, x in enumerate(xs):
        ys = pts[pts[:, 0] == x, 1]
        out.append((x, ys.max() if upper else ys.min()))
    return np.array(out)


def _split_chains(vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a closed vertex loop into lower and upper x-monotone chains."""
    n = len(vertices)
    i_left = int(np.lexsort((vertices[:, 1], vertices[:, 0]))[0])
    i_right = int(np.lexsort((-vertices[:, 1], -vertices[:, 0]))[0])
    loop = np.roll(vertices, -i_left, axis=0)
    k = (i_right - i_left) % n
    path_a = loop[: k + 1]
    path_b = np.vstack([loop[k:], loop[:1]])
    xm = 0.5 * (vertices[:, 0].min() + vertices[:, 0].max())
    ya = np.interp(xm, *_chain(path_a, False).T)
    yb = np.interp(xm, *_chain(path_b, False).T)
    lower, upper = (path_a, path_b) if ya <= yb else (path_b, path_a)
    return _chain(lower, upper=False), _chain(upper, upper=True)


def piecewise_linear(vertices: Sequence[Sequence[float]], normalize: bool = False) -> ConvexDomain:
    """Polygon given by its vertex loop.

    With ``normalize=True`` the polygon is first turned so that its minimal
    width is vertical and scaled so that ``max h = 1``.  Without it the
    vertices are used as given, so that ``validate`` can report problems.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
        raise GeometryError("need at least three (x, y) vertices")
    if normalize:
        verts = normalize_polygon(verts)
    lower, upper = _split_chains(verts)
    a = max(lower[0, 0], upper[0, 0])
    b = min(lower[-1, 0], upper[-1, 0])
    f1 = _wrap(lambda x: np.interp(x, lower[:, 0], lower[:, 1]))
    f2 = _wrap(lambda x: np.interp(x, upper[:, 0], upper[:, 1]))
    bps = tuple(sorted(set(lower[:, 0]) | set(upper[:, 0])))
    return ConvexDomain(a=a, b=b, f1=f1, f2=f2, kind="piecewise_linear",
                        params={"vertices": verts.tolist()}, breakpoints=bps)


def custom_height(a: float, b: float, f1: Profile, f2: Profile, x_bar=None) -> ConvexDomain:
    """Domain from user callables (code only, not loadable from config)."""
    return ConvexDomain(a=float(a), b=float(b), f1=_wrap(f1), f2=_wrap(f2),
                        kind="custom_height", x_bar=x_bar)


def _convex_hull(points: np.ndarray) -> np.ndarray:
    pts = sorted(map(tuple, points))

    def cross(o, p, q):
        return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def minimal_width(vertices) -> tuple[float, float]:
    """Rotating calipers: ``(width, angle)`` of the narrowest strip.

    ``angle`` is the direction of the supporting edge; the width is measured
    along its normal.
    """
    hull = _convex_hull(np.asarray(vertices, dtype=float))
    best = (math.inf, 0.0)
    m = len(hull)
    j = 1
    for i in range(m):
        p, q = hull[i], hull[(i + 1) % m]
        edge = q - p
        length = math.hypot(*edge)
        if length == 0:
            continue

        def dist(k):
            r = hull[k % m] - p
            return abs(edge[0] * r[1] - edge[1] * r[0]) / length

        while dist(j + 1) > dist(j) + 1e-15:
            j += 1
        w = dist(j)
        if w < best[0]:
            best = (w, math.atan2(edge[1], edge[0]))
    return best


def normalize_polygon(vertices) -> np.ndarray:
    """Rotate to minimal-width orientation, translate to ``y >= 0``, scale to ``max h = 1``."""
    verts = np.asarray(vertices, dtype=float)
    hull = _convex_hull(verts)
    _, angle = minimal_width(hull)
    c, s = math.cos(-angle), math.sin(-angle)
    rot = hull @ np.array([[c, s], [-s, c]])
    rot -= rot.min(axis=0)
    lower, upper = _split_chains(rot)
    xs = np.union1d(lower[:, 0], upper[:, 0])
    hmax = np.max(np.interp(xs, *upper.T) - np.interp(xs, *lower.T))
    return rot / hmax


# --------------------------------------------------------------------------
# geometric functionals
# --------------------------------------------------------------------------

def _argmax_height(domain: ConvexDomain) -> float:
    xs = domain.sample_x(4 * N_SAMPLES)
    hs = domain.f2(xs) - domain.f1(xs)
    top = hs.max()
    plateau = xs[hs >= top - 1e-13]
    if plateau[-1] - plateau[0] > 1e-9:
        return 0.5 * (plateau[0] + plateau[-1])
    k = int(np.argmax(hs))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
    # golden section on a concave function
    g = (math.sqrt(5) - 1) / 2
    for _ in range(200):
        if hi - lo < BISECT_XTOL:
            break
        m1, m2 = hi - g * (hi - lo), lo + g * (hi - lo)
        if domain.f2(m1) - domain.f1(m1) < domain.f2(m2) - domain.f1(m2):
            lo = m1
        else:
            hi = m2
    return 0.5 * (lo + hi)


def level_crossing(domain: ConvexDomain, level: float, side: int, start=None, limit=None) -> float:
    """Point on ``side`` (-1 left, +1 right) of ``x_bar`` where ``h`` drops to ``level``.

    Returns the far end of the search interval when ``h`` stays above ``level``.
    """
    x0 = domain.thickest_point if start is None else start
    end = (domain.a if side < 0 else domain.b) if limit is None else limit
    if height(domain, end) >= level:
        return float(end)
    lo, hi = x0, end
    while abs(hi - lo) > BISECT_XTOL:
        mid = 0.5 * (lo + hi)
        if height(domain, mid) >= level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class LengthScaleReport:
    L: float
    I: tuple
    I_prime: tuple


def length_scale(domain: ConvexDomain) -> LengthScaleReport:
    """Largest ``L`` with ``h >= 1 - L**-2`` on some interval of length ``L``.

    ``h`` is concave, so the superlevel set of ``1 - L**-2`` is an interval
    and ``L`` is feasible iff that interval is at least ``L`` long.
    """

    def window(L):
        level = 1.0 - L**-2
        return level_crossing(domain, level, -1), level_crossing(domain, level, +1)

    def feasible(L):
        lo, hi = window(L)
        return hi - lo >= L

    N = domain.N
    if feasible(N):
        L = N
    else:
        lo, hi = min(1.0, N), N
        while hi - lo > 1e-12 * max(1.0, N):
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                lo = mid
            else:
                hi = mid
        L = lo
    p, q = window(L)
    # place a window of length L inside [p, q], centred
    c = 0.5 * (p + q)
    left, right = max(domain.a, c - L / 2), min(domain.b, c + L / 2)
    return LengthScaleReport(L=L, I=(left, right),
                             I_prime=(c - L / 4, c + L / 4))


@dataclass(frozen=True)
class PropertyMaxCertificate:
    M: float
    delta: float
    x_minus: float
    x_plus: float
    error_at_worst: float
    c1: float
    C1: float


def error_profile(domain: ConvexDomain, xs, c1: float, C1: float) -> np.ndarray:
    from .closed_forms import error_budget
    return np.array([error_budget(domain, float(x), c1, C1).total for x in xs])


def find_property_max(domain: ConvexDomain, M: float, c1: float, C1: float,
                      deltas=DELTA_GRID, points_per_unit: int = 32
                      ) -> Optional[PropertyMaxCertificate]:
    """Largest ``delta`` on the search grid for which the flatness property holds.

    For each candidate ``delta`` the points ``x-`` and ``x+`` with
    ``h = 1 - 2 delta`` are located by bisection on either side of ``x_bar``
    and the error functional is checked against ``delta / 100`` on a uniform
    grid covering ``[x-, x+]``.  Returns ``None`` when no grid value works.
    """
    if not M > 2:
        raise ValueError("M must exceed 2")
    xb = domain.thickest_point
    if xb - M < domain.a or xb + M > domain.b:
        raise GeometryError(f"x_bar +/- M = [{xb - M}, {xb + M}] leaves [{domain.a}, {domain.b}]")

    n = int(math.ceil(2 * M * points_per_unit)) + 1
    grid = np.linspace(xb - M, xb + M, n)
    # the hypothesis h >= 1/2 of the error bound restricts where it is defined
    usable = height(domain, grid) >= 0.5
    errs = np.full(n, np.inf)
    errs[usable] = error_profile(domain, grid[usable], c1, C1)

    for delta in sorted(np.asarray(deltas, dtype=float), reverse=True):
        level = 1.0 - 2.0 * delta
        if height(domain, xb - M) > level or height(domain, xb + M) > level:
            continue  # x-/x+ would lie outside [x_bar - M, x_bar + M]
        xm = level_crossing(domain, level, -1, limit=xb - M)
        xp = level_crossing(domain, level, +1, limit=xb + M)
        if level < 0.5:
            continue
        inside = (grid >= xm) & (grid <= xp)
        worst = max(errs[inside].max(initial=0.0),
                    *error_profile(domain, [xm, xp], c1, C1))
        if worst <= delta / 100:
            return PropertyMaxCertificate(M=M, delta=float(delta), x_minus=xm, x_plus=xp,
                                          error_at_worst=float(worst), c1=c1, C1=C1)
    return None


@dataclass
class ValidationReport:
    valid: bool
    violations: list

    def __bool__(self):
        return self.valid


def validate(domain: ConvexDomain, tol: float = 1e-9) -> ValidationReport:
    """Check ordering, convexity/concavity and normalization by sampling."""
    xs = domain.sample_x()
    f1, f2 = domain.f1(xs), domain.f2(xs)
    problems = []

    def report(name, mask):
        if np.any(mask):
            problems.append({"invariant": name, "x": xs[mask][:10].tolist()})

    report("f1 >= 0", f1 < -tol)
    report("f1 <= f2", f1 > f2 + tol)
    report("f2 <= 1", f2 > 1 + tol)
    # second differences on the uniform part only; breakpoints break uniformity
    u = np.linspace(domain.a, domain.b, N_SAMPLES)
    g1, g2 = domain.f1(u), domain.f2(u)
    scale = max(1.0, np.abs(g2).max())
    d1 = g1[:-2] - 2 * g1[1:-1] + g1[2:]
    d2 = g2[:-2] - 2 * g2[1:-1] + g2[2:]
    mid = u[1:-1]
    if np.any(d1 < -tol * scale):
        problems.append({"invariant": "f1 convex", "x": mid[d1 < -tol * scale][:10].tolist()})
    if np.any(d2 > tol * scale):
        problems.append({"invariant": "f2 concave", "x": mid[d2 > tol * scale][:10].tolist()})
    xb = domain.thickest_point
    hmax = max(float(np.max(f2 - f1)), float(domain.f2(xb) - domain.f1(xb)))
    if abs(hmax - 1.0) > tol:
        problems.append({"invariant": "max h = 1", "x": [], "max_h": hmax})
    return ValidationReport(valid=not problems, violations=problems)


def from_config(cfg: dict) -> ConvexDomain:
    """Build a domain from the JSON configuration mapping."""
    kind = str(cfg.get("kind", "")).lower()
    builders = {"rectangle": rectangle, "ellipse": ellipse, "omega1": omega1, "omega2": omega2}
    if kind in builders:
        if "N" not in cfg:
            raise GeometryError(f"domain kind {kind!r} needs N")
        return builders[kind](float(cfg["N"]))
    if kind == "piecewise_linear":
        if "vertices" not in cfg:
            raise GeometryError("piecewise_linear needs vertices")
        return piecewise_linear(cfg["vertices"], normalize=cfg.get("normalize", True))
    if kind == "custom_height":
        raise GeometryError("custom_height domains can only be built in code")
    raise GeometryError(f"unknown domain kind {kind!r}")
