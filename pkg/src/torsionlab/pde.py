"""Cut-cell finite differences for the torsion and principal eigenvalue problems.

Nodes of a uniform grid inside the domain are unknowns.  A link from an
unknown to a node outside the domain is shortened to the boundary intercept
at fraction ``theta`` of the spacing (Shortley-Weller).  The assembled matrix
is kept symmetric: each axis contributes ``(u_i - u_nb) / h^2`` for interior
neighbours and ``u_i / (theta h^2)`` for a cut link, and the right-hand side
(or mass matrix) carries the dual-cell weight
``((theta_- + theta_+) / 2)`` per axis.  On cells cut along one axis this is
the Shortley-Weller row up to a term proportional to the second derivative
along the other axis, so parabolic cross-sections are reproduced exactly.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import ConvexHull, QhullError

from . import io as tio
from .exceptions import GeometryError, LevelError, ResolutionError
from .geometry import ConvexDomain
from .linalg import inverse_power_iteration, lowest_eigenpair, pcg

log = logging.getLogger(__name__)

_EDGE_EPS = 1e-9  # nodes closer than this (in cells) to the boundary are boundary nodes
N_DIRECTIONS = 16


@dataclass
class Grid:
    """Uniform node grid with cut-link fractions.

    ``theta`` has shape ``(4, nx, ny)`` for the links towards ``-x, +x, -y,
    +y``; entries are 1 for regular links and in ``(0, 1]`` for cut ones.
    ``inside`` flags the unknowns.
    """

    domain: ConvexDomain
    x0: float
    y0: float
    dx: float
    dy: float
    nx: int
    ny: int
    inside: np.ndarray
    theta: np.ndarray
    index: np.ndarray = field(repr=False)

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    @property
    def n_unknowns(self) -> int:
        return int(self.inside.sum())

    @property
    def cut(self) -> np.ndarray:
        """Unknowns with at least one shortened link."""
        return self.inside & np.any(self.theta < 1, axis=0)

    def weights(self) -> np.ndarray:
        """Dual-cell weights of the unknowns (1 on regular cells)."""
        th = self.theta
        w = 0.25 * (th[0] + th[1]) * (th[2] + th[3])
        return w[self.inside]


def _signed_gap(domain: ConvexDomain, x, y):
    """Concave along lines: positive inside, non-positive outside."""
    xc = np.clip(x, domain.a, domain.b)
    return np.minimum.reduce([x - domain.a, domain.b - x, y - domain.f1(xc), domain.f2(xc) - y])


def build_grid(domain: ConvexDomain, target_h: float, x_stretch: float = 1.0) -> Grid:
    """Node grid with spacing at most ``target_h`` (``x_stretch * target_h`` along ``x``).

    ``x_stretch`` up to 4 is accepted for ``N >= 64`` only.
    """
    if not 0 < target_h <= 1 / 16:
        raise ValueError(f"target_h must lie in (0, 1/16], got {target_h}")
    if x_stretch != 1.0 and (domain.N < 64 or not 1.0 <= x_stretch <= 4.0):
        raise ValueError("x_stretch in [1, 4] is only allowed for N >= 64")
    xs_dense = domain.sample_x()
    lo = float(np.min(domain.f1(xs_dense)))
    hi = float(np.max(domain.f2(xs_dense)))
    nx = int(math.ceil(domain.N / (target_h * x_stretch) - 1e-9)) + 1
    ny = int(math.ceil((hi - lo) / target_h - 1e-9)) + 1
    dx = domain.N / (nx - 1)
    dy = (hi - lo) / (ny - 1)

    hs = domain.f2(xs_dense) - domain.f1(xs_dense)
    thick = hs > 0.1
    if np.any(hs[thick] < 4 * dy):
        raise ResolutionError(f"domain thinner than 4 cells (dy={dy}) where h > 0.1")

    xs = domain.a + dx * np.arange(nx)
    ys = lo + dy * np.arange(ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    f1 = domain.f1(xs)[:, None]
    f2 = domain.f2(xs)[:, None]
    ex, ey = _EDGE_EPS * dx, _EDGE_EPS * dy
    inside = (X > domain.a + ex) & (X < domain.b - ex) & (Y > f1 + ey) & (Y < f2 - ey)

    theta = np.ones((4, nx, ny))
    # vertical links: intercept with f1/f2 at fixed x is explicit
    down = np.zeros_like(inside)
    down[:, 1:] = ~inside[:, :-1]
    up = np.zeros_like(inside)
    up[:, :-1] = ~inside[:, 1:]
    up[:, -1] = True
    down[:, 0] = True
    theta[2] = np.where(inside & down, np.clip((Y - f1) / dy, 0, 1), 1.0)
    theta[3] = np.where(inside & up, np.clip((f2 - Y) / dy, 0, 1), 1.0)
    # horizontal links: bisection on the concave gap function
    for side, k in ((-1, 0), (+1, 1)):
        nb_out = np.ones_like(inside)
        if side < 0:
            nb_out[1:, :] = ~inside[:-1, :]
        else:
            nb_out[:-1, :] = ~inside[1:, :]
        cutm = inside & nb_out
        if not np.any(cutm):
            continue
        xi, yj = X[cutm], Y[cutm]
        lo_s = np.zeros_like(xi)
        hi_s = np.ones_like(xi)
        g_end = _signed_gap(domain, xi + side * dx, yj)
        done = g_end > 0  # boundary sits on the neighbour node itself
        for _ in range(60):
            mid = 0.5 * (lo_s + hi_s)
            ok = _signed_gap(domain, xi + side * mid * dx, yj) > 0
            lo_s = np.where(ok, mid, lo_s)
            hi_s = np.where(ok, hi_s, mid)
        s = np.where(done, 1.0, 0.5 * (lo_s + hi_s))
        theta[k][cutm] = np.clip(s, 1e-12, 1.0)
    theta[:, ~inside] = 1.0

    index = -np.ones((nx, ny), dtype=np.int64)
    index[inside] = np.arange(int(inside.sum()))
    return Grid(domain=domain, x0=domain.a, y0=lo, dx=dx, dy=dy, nx=nx, ny=ny,
                inside=inside, theta=theta, index=index)


def assemble(grid: Grid) -> sp.csr_matrix:
    """Symmetric positive definite matrix of the negative Laplacian."""
    n = grid.n_unknowns
    inside, th, idx = grid.inside, grid.theta, grid.index
    hx2, hy2 = grid.dx**2, grid.dy**2
    diag = np.zeros((grid.nx, grid.ny))
    rows, cols, vals = [], [], []
    for k, (di, dj, h2) in enumerate(((-1, 0, hx2), (1, 0, hx2), (0, -1, hy2), (0, 1, hy2))):
        nb = np.full_like(idx, -1)
        src = (slice(max(-di, 0), grid.nx - max(di, 0)), slice(max(-dj, 0), grid.ny - max(dj, 0)))
        dst = (slice(max(di, 0), grid.nx - max(-di, 0)), slice(max(dj, 0), grid.ny - max(-dj, 0)))
        nb[src] = idx[dst]
        regular = inside & (nb >= 0) & (th[k] >= 1.0)
        diag += np.where(inside, 1.0 / (th[k] * h2), 0.0)
        rows.append(idx[regular])
        cols.append(nb[regular])
        vals.append(np.full(int(regular.sum()), -1.0 / h2))
    rows.append(idx[inside])
    cols.append(idx[inside])
    vals.append(diag[inside])
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    return A.tocsr()


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray  # shape (nx, ny), zero off the unknowns
    kind: str  # "torsion" or "eigenfunction"
    meta: dict = field(default_factory=dict)

    def interpolator(self):
        return RegularGridInterpolator((self.grid.xs, self.grid.ys), self.values,
                                       bounds_error=False, fill_value=0.0)

    def at(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        out = self.interpolator()(np.stack([x.ravel(), y.ravel()], axis=-1))
        return float(out[0]) if x.ndim == 0 else out.reshape(x.shape)

    def node(self, x: float, y: float) -> tuple[int, int]:
        g = self.grid
        i = int(round((x - g.x0) / g.dx))
        j = int(round((y - g.y0) / g.dy))
        return min(max(i, 0), g.nx - 1), min(max(j, 0), g.ny - 1)

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.inside]


@dataclass(frozen=True)
class EigenReport:
    lam: float
    x1: float
    y1: float


@dataclass(frozen=True)
class MaxReport:
    x_star: float
    y_star: float
    v_star: float
    hessian: np.ndarray
    directional: tuple  # ((angle, second derivative), ...)

    def to_dict(self) -> dict:
        return {"x_star": self.x_star, "y_star": self.y_star, "v_star": self.v_star,
                "hessian": np.asarray(self.hessian).tolist(),
                "directional": [list(t) for t in self.directional]}


def solve_torsion(domain: ConvexDomain, target_h: float, tol: float = 1e-10,
                  x_stretch: float = 1.0, grid: Optional[Grid] = None) -> ScalarField:
    """Discrete solution of ``-Lap v = 1`` with ``v = 0`` on the boundary."""
    grid = grid or build_grid(domain, target_h, x_stretch)
    A = assemble(grid)
    rhs = grid.weights()
    sol, info = pcg(A, rhs, tol=tol)
    values = np.zeros((grid.nx, grid.ny))
    values[grid.inside] = sol
    values.flags.writeable = False
    log.info("torsion %s: %d unknowns, %d CG iterations", domain.kind, len(sol), info.iterations)
    return ScalarField(grid=grid, values=values, kind="torsion",
                       meta={"iterations": info.iterations, "residual": info.residual,
                             "unknowns": len(sol), "target_h": target_h})


def solve_ground_state(domain: ConvexDomain, target_h: float, method: str = "lanczos",
                       x_stretch: float = 1.0, grid: Optional[Grid] = None
                       ) -> tuple[ScalarField, EigenReport]:
    """Principal Dirichlet eigenpair, eigenvector scaled to ``max = 1``.

    ``method="lanczos"`` uses shift-invert Lanczos about zero; ``"inverse"``
    runs plain inverse power iteration with CG inner solves, which is only
    practical when the spectral gap is not tiny.
    """
    grid = grid or build_grid(domain, target_h, x_stretch)
    A = assemble(grid)
    w = grid.weights()
    if method == "lanczos":
        lam, vec = lowest_eigenpair(A, sp.diags(w))
        iters = None
    elif method == "inverse":
        lam, vec, iters = inverse_power_iteration(A, w)
    else:
        raise ValueError(f"unknown method {method!r}")
    if vec.sum() < 0:
        vec = -vec
    vec = vec / vec.max()
    values = np.zeros((grid.nx, grid.ny))
    values[grid.inside] = vec
    values.flags.writeable = False
    fld = ScalarField(grid=grid, values=values, kind="eigenfunction",
                      meta={"lambda": lam, "outer_iterations": iters, "unknowns": len(vec),
                            "target_h": target_h})
    i, j = np.unravel_index(int(np.argmax(values)), values.shape)
    return fld, EigenReport(lam=lam, x1=float(grid.xs[i]), y1=float(grid.ys[j]))


# --------------------------------------------------------------------------
# probing
# --------------------------------------------------------------------------

def _design(dx, dy, r=2):
    off = np.arange(-r, r + 1)
    X, Y = np.meshgrid(off * dx, off * dy, indexing="ij")
    X, Y = X.ravel(), Y.ravel()
    return X, Y, np.column_stack([np.ones_like(X), X, Y, X * X, X * Y, Y * Y])


def quadratic_fit(fld: ScalarField, i: int, j: int, r: int = 2):
    """Least-squares quadratic on the ``(2r+1)^2`` patch around node ``(i, j)``.

    Returns ``(value, gradient, hessian)`` at the node.  Raises
    :class:`GeometryError` if the patch leaves the unknowns.
    """
    g = fld.grid
    if i - r < 0 or j - r < 0 or i + r >= g.nx or j + r >= g.ny or \
            not np.all(g.inside[i - r:i + r + 1, j - r:j + r + 1]):
        raise GeometryError(f"fit patch at node ({i}, {j}) touches the boundary")
    _, _, D = _design(g.dx, g.dy, r)
    z = fld.values[i - r:i + r + 1, j - r:j + r + 1].ravel()
    c, *_ = np.linalg.lstsq(D, z, rcond=None)
    grad = np.array([c[1], c[2]])
    hess = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
    return float(c[0]), grad, hess


def directional_second(hess: np.ndarray, n_dir: int = N_DIRECTIONS) -> tuple:
    angles = np.pi * np.arange(n_dir) / n_dir
    out = []
    for t in angles:
        v = np.array([math.cos(t), math.sin(t)])
        out.append((float(t), float(v @ hess @ v)))
    return tuple(out)


def _argmax_node(fld: ScalarField) -> tuple[int, int]:
    vals = np.where(fld.grid.inside, fld.values, -np.inf)
    # C-order argmax: smallest x index first, then smallest y
    return np.unravel_index(int(np.argmax(vals)), vals.shape)


def locate_max(fld: ScalarField) -> MaxReport:
    """Sub-grid maximum and Hessian from a 5x5 least-squares quadratic."""
    i, j = _argmax_node(fld)
    v0, grad, hess = quadratic_fit(fld, i, j)
    try:
        step = -np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        step = np.zeros(2)
    g = fld.grid
    # keep the refined point within the fitted patch
    step = np.clip(step, [-g.dx, -g.dy], [g.dx, g.dy])
    v_star = v0 + grad @ step + 0.5 * step @ hess @ step
    return MaxReport(x_star=float(g.xs[i] + step[0]), y_star=float(g.ys[j] + step[1]),
                     v_star=float(v_star), hessian=hess, directional=directional_second(hess))


def fit_patch_nodes(fld: ScalarField, r: int = 2) -> np.ndarray:
    """Nodes whose whole ``(2r+1)^2`` patch consists of unknowns."""
    ins = fld.grid.inside
    ok = ins.copy()
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            ok &= np.roll(np.roll(ins, -di, axis=0), -dj, axis=1)
    ok[:r, :] = ok[-r:, :] = False
    ok[:, :r] = ok[:, -r:] = False
    return np.argwhere(ok)


def hessian_probes(fld: ScalarField, n_probes: int = 20, seed: int = 0):
    """Fitted Hessians at ``n_probes`` random nodes with interior patches."""
    cand = fit_patch_nodes(fld)
    rng = np.random.default_rng(seed)
    pick = cand[rng.choice(len(cand), size=min(n_probes, len(cand)), replace=False)]
    return [(int(i), int(j), quadratic_fit(fld, int(i), int(j))[2]) for i, j in pick]


def _crossings(values: np.ndarray, coords: np.ndarray, level: float):
    """Linear-interpolated positions where a 1-D profile crosses ``level``."""
    above = values >= level
    k = np.flatnonzero(above[:-1] != above[1:])
    v0, v1 = values[k], values[k + 1]
    t = (level - v0) / (v1 - v0)
    return coords[k] + t * (coords[k + 1] - coords[k])


def superlevel_points(fld: ScalarField, level: float) -> np.ndarray:
    """Boundary points of ``{value >= level}`` from row and column scans, plus member nodes."""
    g = fld.grid
    vals = np.where(g.inside, fld.values, 0.0)
    if vals.max() < level:
        raise LevelError(f"superlevel set at {level} is empty (max {vals.max()})")
    xs, ys = g.xs, g.ys
    pts = []
    for j in range(g.ny):
        for x in _crossings(vals[:, j], xs, level):
            pts.append((x, ys[j]))
    for i in range(g.nx):
        for y in _crossings(vals[i, :], ys, level):
            pts.append((xs[i], y))
    members = np.argwhere(vals >= level)
    pts.extend(zip(xs[members[:, 0]], ys[members[:, 1]]))
    return np.unique(np.array(pts, dtype=float), axis=0)


def _diameter(pts: np.ndarray) -> float:
    if len(pts) < 2:
        return 0.0
    try:
        pts = pts[ConvexHull(pts).vertices]
    except (QhullError, ValueError):
        pass
    diff = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


def superlevel_projection(fld: ScalarField, level: float) -> tuple[float, float, float]:
    """``(x extent, y extent, diameter)`` of ``{value >= level}``."""
    pts = superlevel_points(fld, level)
    return (float(np.ptp(pts[:, 0])), float(np.ptp(pts[:, 1])), _diameter(pts))


def superlevel_columns(fld: ScalarField, level: float) -> np.ndarray:
    """Per-column ``(x, y_low, y_high)`` of the superlevel set (interpolated ends)."""
    g = fld.grid
    vals = np.where(g.inside, fld.values, 0.0)
    out = []
    for i in range(g.nx):
        c = _crossings(vals[i, :], g.ys, level)
        if len(c) >= 2:
            out.append((g.xs[i], c.min(), c.max()))
    return np.array(out)


def check_fm_inequality(v_field: ScalarField, u_field: ScalarField, lam: float) -> float:
    """``max (u - lam v)`` over the unknowns, with ``u`` scaled to ``max |u| = 1``."""
    if v_field.values.shape != u_field.values.shape:
        raise ValueError("fields live on different grids")
    ins = v_field.grid.inside
    u = u_field.values[ins]
    u = u / np.abs(u).max()
    return float(np.max(u - lam * v_field.values[ins]))


def central_derivatives(fld: ScalarField):
    """Gradient and Hessian by central differences at nodes with interior 3x3 patches."""
    g = fld.grid
    v = fld.values
    ok = fit_patch_nodes(fld, r=1)
    i, j = ok[:, 0], ok[:, 1]
    vx = (v[i + 1, j] - v[i - 1, j]) / (2 * g.dx)
    vy = (v[i, j + 1] - v[i, j - 1]) / (2 * g.dy)
    vxx = (v[i + 1, j] - 2 * v[i, j] + v[i - 1, j]) / g.dx**2
    vyy = (v[i, j + 1] - 2 * v[i, j] + v[i, j - 1]) / g.dy**2
    vxy = (v[i + 1, j + 1] - v[i + 1, j - 1] - v[i - 1, j + 1] + v[i - 1, j - 1]) / (4 * g.dx * g.dy)
    return ok, v[i, j], np.stack([vx, vy], 1), np.stack([vxx, vxy, vyy], 1)


def sqrt_concavity_defect(fld: ScalarField, n_dir: int = 8):
    """Per-node ``max_n [v d_n^2 v - (d_n v)^2 / 2]`` over ``n_dir`` directions."""
    nodes, v, grad, hess = central_derivatives(fld)
    worst = np.full(len(v), -np.inf)
    for t in np.pi * np.arange(n_dir) / n_dir:
        c, s = math.cos(t), math.sin(t)
        dn = grad[:, 0] * c + grad[:, 1] * s
        dnn = hess[:, 0] * c * c + 2 * hess[:, 1] * c * s + hess[:, 2] * s * s
        worst = np.maximum(worst, v * dnn - 0.5 * dn * dn)
    return nodes, worst


def sqrt_concavity_check(fld: ScalarField, n_dir: int = 8) -> float:
    """Largest violation of ``v d_n^2 v - (d_n v)^2 / 2 <= 0`` (concavity of sqrt v)."""
    return float(sqrt_concavity_defect(fld, n_dir)[1].max())


# --------------------------------------------------------------------------
# dumps
# --------------------------------------------------------------------------

def field_table(fld: ScalarField) -> np.ndarray:
    g = fld.grid
    X, Y = np.meshgrid(g.xs, g.ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel(), fld.values.ravel(), g.inside.ravel().astype(float)])


def write_field_csv(fld: ScalarField, path) -> None:
    """CSV with header ``x,y,value,is_interior`` (x-major node order)."""
    buf = io.StringIO()
    tab = field_table(fld)
    np.savetxt(buf, tab[:, :3], fmt="%.17g", delimiter=",")
    rows = buf.getvalue().splitlines()
    flags = tab[:, 3].astype(int)
    tio.write_text(path, "x,y,value,is_interior\n"
                   + "".join(f"{r},{f}\n" for r, f in zip(rows, flags)))


def write_field_binary(fld: ScalarField, path) -> None:
    """Little-endian: int64 ``nx``, int64 ``ny``, then ``nx*ny`` float64 values, row-major in ``(x, y)``."""
    head = np.array([fld.grid.nx, fld.grid.ny], dtype="<i8").tobytes()
    tio.write_bytes(path, head + np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def read_field_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    nx, ny = np.frombuffer(raw[:16], dtype="<i8")
    return np.frombuffer(raw[16:], dtype="<f8").reshape(int(nx), int(ny))
