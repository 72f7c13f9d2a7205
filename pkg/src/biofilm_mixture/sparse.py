"""Sparse assembly and linear solvers.

Direct solves use SuperLU through :func:`scipy.sparse.linalg.splu`.  The
iterative path is a Jacobi-preconditioned BiCGSTAB written out below so the
reduction order is fixed and results are reproducible bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import BiofilmError

log = logging.getLogger(__name__)

DIRECT_LIMIT = 20000


class SolverError(BiofilmError):
    """Linear solver breakdown or non-convergence."""


@dataclass(frozen=True, eq=False)
class SparseSystem:
    """Square CSR operator with its right-hand side."""

    matrix: sp.csr_matrix
    rhs: np.ndarray

    def __post_init__(self) -> None:
        A = sp.csr_matrix(self.matrix)
        A.sum_duplicates()
        A.sort_indices()
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"system matrix must be square, got {A.shape}")
        b = np.asarray(self.rhs, dtype=float).reshape(-1)
        if b.size != A.shape[0]:
            raise ValueError(f"rhs has {b.size} entries for a system of size {A.shape[0]}")
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "rhs", b)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    def residual(self, x: np.ndarray) -> float:
        """Relative residual ``|Ax - b| / |b|`` (absolute when ``b = 0``)."""
        r = self.matrix @ x - self.rhs
        nb = np.linalg.norm(self.rhs)
        return float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))

    def dump(self, path) -> None:
        """Write the matrix in MatrixMarket coordinate format."""
        scipy.io.mmwrite(str(path), self.matrix)


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    method: str

    def __post_init__(self) -> None:
        if not self.residual >= 0.0:
            raise ValueError("residual norm must be non-negative")


def assemble(
    triplets: Iterable[tuple[int, int, float]], n: int, rhs: Optional[np.ndarray] = None
) -> SparseSystem:
    """Build a CSR system from ``(row, col, value)`` triplets, summing duplicates."""
    t = list(triplets)
    if t:
        rows, cols, vals = (np.asarray(a) for a in zip(*t))
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    rows = rows.astype(np.int64)
    cols = cols.astype(np.int64)
    bad = (rows < 0) | (rows >= n) | (cols < 0) | (cols >= n)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise IndexError(f"triplet ({rows[k]}, {cols[k]}) out of range for n={n}")
    A = sp.coo_matrix((vals.astype(float), (rows, cols)), shape=(n, n)).tocsr()
    return SparseSystem(A, np.zeros(n) if rhs is None else rhs)


def bicgstab(A, b, x0=None, tol=1e-10, max_iter=1000, M_diag=None):
    """Jacobi-preconditioned BiCGSTAB.

    Parameters
    ----------
    A : sparse matrix
    b : ndarray
    x0 : ndarray, optional
        Initial guess, zero by default.
    tol : float
        Target relative residual ``|b - Ax| / |b|``.
    max_iter : int
    M_diag : ndarray, optional
        Diagonal of the preconditioner; the diagonal of ``A`` by default.

    Returns
    -------
    x : ndarray
    iterations : int
    converged : bool
    """
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    d = A.diagonal() if M_diag is None else np.asarray(M_diag, dtype=float)
    if np.any(d == 0.0):
        raise SolverError("zero diagonal entry, Jacobi preconditioner undefined")
    dinv = 1.0 / d
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros(n), 0, True
    r = b - A @ x
    r_hat = r.copy()
    rho_old = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    restart = True
    for it in range(1, max_iter + 1):
        rho = float(np.dot(r_hat, r))
        if abs(rho) <= 1e-30 * nb * nb:
            # shadow residual became orthogonal: restart from the current residual
            r_hat = r.copy()
            rho = float(np.dot(r, r))
            restart = True
        if restart:
            p = r.copy()
            restart = False
        else:
            beta = (rho / rho_old) * (alpha / omega)
            p = r + beta * (p - omega * v)
        p_hat = dinv * p
        v = A @ p_hat
        denom = float(np.dot(r_hat, v))
        if denom == 0.0:
            raise SolverError(f"BiCGSTAB breakdown (r_hat . v = 0) at iteration {it}")
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) / nb <= tol:
            x = x + alpha * p_hat
            return x, it, True
        s_hat = dinv * s
        t = A @ s_hat
        tt = float(np.dot(t, t))
        if tt == 0.0:
            raise SolverError(f"BiCGSTAB breakdown (t = 0) at iteration {it}")
        omega = float(np.dot(t, s)) / tt
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        if np.linalg.norm(r) / nb <= tol:
            return x, it, True
        if omega == 0.0:
            raise SolverError(f"BiCGSTAB breakdown (omega = 0) at iteration {it}")
        rho_old = rho
    return x, max_iter, False


def solve(system: SparseSystem, tol: float = 1e-10, max_iter: int = 5000, method: str = "auto"):
    """Solve ``system`` and report the recomputed relative residual.

    ``method`` is ``"direct"``, ``"krylov"`` or ``"auto"`` (direct up to
    ``DIRECT_LIMIT`` unknowns).
    """
    A, b = system.matrix, system.rhs
    if method == "auto":
        method = "direct" if system.n <= DIRECT_LIMIT else "krylov"
    if method == "direct":
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"singular factorization: {exc}") from exc
        x = lu.solve(b)
        iters = 1
        # iterative refinement with the same factors
        while system.residual(x) > tol and iters < 4:
            x = x + lu.solve(b - A @ x)
            iters += 1
    elif method == "krylov":
        x, iters, ok = bicgstab(A, b, tol=tol, max_iter=max_iter)
        if not ok:
            raise SolverError(
                f"BiCGSTAB did not converge in {max_iter} iterations "
                f"(relative residual {system.residual(x):.3e})"
            )
    else:
        raise ValueError(f"unknown solve method {method!r}")
    if not np.all(np.isfinite(x)):
        raise SolverError("solution contains non-finite values")
    res = system.residual(x)
    if res > tol:
        raise SolverError(f"{method} solve residual {res:.3e} exceeds tolerance {tol:.1e}")
    log.debug("solve n=%d method=%s iters=%d residual=%.3e", system.n, method, iters, res)
    return x, SolveReport(iterations=iters, residual=res, method=method)
