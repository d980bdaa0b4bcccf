"""Jacobi-preconditioned conjugate gradients and inverse power iteration."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import NumericalError

log = logging.getLogger(__name__)


@dataclass
class SolveInfo:
    iterations: int
    residual: float


def pcg(A, b, tol: float = 1e-10, maxiter: int = 100_000, x0=None):
    """Solve ``A x = b`` for SPD ``A`` with a diagonal preconditioner.

    Stops when ``||b - A x|| <= tol ||b||``.  Every reduction is a plain
    ``np.dot`` in fixed order, so repeated runs give identical bits.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    dinv = 1.0 / A.diagonal()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = float(np.sqrt(np.dot(b, b))) or 1.0
    z = dinv * r
    p = z.copy()
    rz = float(np.dot(r, z))
    res = float(np.sqrt(np.dot(r, r))) / bnorm
    k = 0
    while res > tol:
        if k >= maxiter:
            raise NumericalError(f"CG did not converge in {maxiter} iterations (residual {res:.3e})",
                                 residual=res, iterations=k)
        q = A @ p
        alpha = rz / float(np.dot(p, q))
        x += alpha * p
        r -= alpha * q
        k += 1
        res = float(np.sqrt(np.dot(r, r))) / bnorm
        z = dinv * r
        rz_new = float(np.dot(r, z))
        p *= rz_new / rz
        p += z
        rz = rz_new
    # guard against drift of the recursive residual
    res = float(np.linalg.norm(b - A @ x)) / bnorm
    return x, SolveInfo(iterations=k, residual=res)


def inverse_power_iteration(A, M, tol: float = 1e-10, max_outer: int = 500,
                            inner_tol: float = 1e-12):
    """Smallest eigenpair of ``A u = lam M u`` (``M`` diagonal, positive).

    Inner solves use :func:`pcg`; convergence is declared when the Rayleigh
    quotient changes by less than ``tol`` (relative).
    """
    A = sp.csr_matrix(A)
    m = np.asarray(M.diagonal() if sp.issparse(M) else M, dtype=float)
    u = np.ones(A.shape[0])
    lam_old = np.inf
    for k in range(1, max_outer + 1):
        w, _ = pcg(A, m * u, tol=inner_tol, x0=u / (lam_old if np.isfinite(lam_old) else 1.0))
        u = w / np.sqrt(np.dot(w, m * w))
        lam = float(np.dot(u, A @ u))
        if abs(lam - lam_old) <= tol * abs(lam):
            return lam, u, k
        lam_old = lam
    raise NumericalError(f"inverse iteration stagnated after {max_outer} iterations",
                         residual=abs(lam - lam_old), iterations=max_outer)


def lowest_eigenpair(A, M, tol: float = 1e-12):
    """Smallest eigenpair by shift-invert Lanczos about 0 (sparse LU inside)."""
    vals, vecs = spla.eigsh(sp.csc_matrix(A), k=1, M=sp.csc_matrix(M), sigma=0.0,
                            which="LM", tol=tol, v0=np.ones(A.shape[0]))
    return float(vals[0]), vecs[:, 0]
