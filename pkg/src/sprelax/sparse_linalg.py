"""Sparse matrices and the Krylov solvers used by the scheme.

Matrices are canonical ``scipy.sparse.csr_matrix`` objects (sorted, duplicate
free column indices).  The solvers are written out here rather than taken from
``scipy.sparse.linalg`` so the stopping rule is always the true relative
residual ``||b - A x|| / ||b||`` and every solve returns a report.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

SparseMatrix = sp.csr_matrix

_TINY = 1e-300


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    method: str = "cg"


class SolverError(RuntimeError):
    """A linear solve failed to reach its tolerance."""

    def __init__(self, message: str, report: SolveReport | None = None, stage: str | None = None):
        self.report = report
        self.stage = stage
        prefix = f"[{stage}] " if stage else ""
        tail = ""
        if report is not None:
            tail = (f" ({report.method}: {report.iterations} iterations, "
                    f"relative residual {report.residual:.3e})")
        super().__init__(prefix + message + tail)


def as_csr(A) -> SparseMatrix:
    """Return ``A`` as a canonical CSR matrix."""
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def check_csr(A: SparseMatrix) -> None:
    """Assert the CSR invariants: monotone offsets, strictly increasing columns, finite values."""
    indptr, indices = A.indptr, A.indices
    if indptr[0] != 0 or np.any(np.diff(indptr) < 0) or indptr[-1] != len(indices):
        raise ValueError("row offsets are not monotone")
    if len(indices) and (indices.min() < 0 or indices.max() >= A.shape[1]):
        raise ValueError("column index out of range")
    row_of = np.repeat(np.arange(A.shape[0]), np.diff(indptr))
    same_row = row_of[1:] == row_of[:-1]
    if np.any(np.diff(indices)[same_row] <= 0):
        raise ValueError("column indices not strictly increasing within a row")
    if not np.all(np.isfinite(A.data)):
        raise ValueError("non-finite matrix values")


def _default_max_iter(n: int) -> int:
    return 10 * n + 100


def cg_solve(A: SparseMatrix, b: np.ndarray, tol: float = 1e-13, max_iter: int | None = None,
             x0: np.ndarray | None = None, precondition: bool = True
             ) -> tuple[np.ndarray, SolveReport]:
    """Jacobi-preconditioned conjugate gradients for a symmetric positive-definite ``A``.

    Converges when the true relative residual ``||b - Ax|| / ||b||`` is at most
    ``tol``.  A ``b`` of zero returns the zero vector after zero iterations.
    Non-convergence is reported through ``SolveReport.converged``; callers
    decide whether to raise.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    max_iter = _default_max_iter(n) if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True, "cg")

    if precondition:
        d = A.diagonal()
        dinv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)
    else:
        dinv = np.ones(n)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    it = 0
    # restart from the true residual if the recursive one drifted below it
    for _restart in range(4):
        if np.linalg.norm(r) <= tol * bnorm or it >= max_iter:
            break
        z = dinv * r
        p = z.copy()
        rz = r @ z
        while it < max_iter:
            Ap = A @ p
            pAp = p @ Ap
            if pAp <= 0:
                break
            a = rz / pAp
            x += a * p
            r -= a * Ap
            it += 1
            if np.linalg.norm(r) <= tol * bnorm:
                break
            z = dinv * r
            rz_new = r @ z
            p *= rz_new / rz
            p += z
            rz = rz_new
        r = b - A @ x
    res = float(np.linalg.norm(r) / bnorm)
    return x, SolveReport(it, res, res <= tol, "cg")


def cg_solve_meanzero(L: SparseMatrix, b: np.ndarray, M: SparseMatrix, tol: float = 1e-12,
                      max_iter: int | None = None, x0: np.ndarray | None = None
                      ) -> tuple[np.ndarray, SolveReport]:
    """Solve the singular periodic system ``L x = b_proj`` with ``1^T M x = 0``.

    ``b_proj = b - (1^T b / 1^T M 1) M 1`` removes the component of ``b`` that
    is incompatible with the constant null space of ``L``.  The residual in the
    report is measured against ``b_proj``.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    m1 = M @ np.ones(n)
    total = m1.sum()
    b_proj = b - (b.sum() / total) * m1
    if np.linalg.norm(b_proj) <= 1e-15 * max(np.linalg.norm(b), _TINY):
        return np.zeros(n), SolveReport(0, 0.0, True, "cg")
    if x0 is not None:
        x0 = x0 - (m1 @ x0) / total
    x, rep = cg_solve(L, b_proj, tol=tol, max_iter=max_iter, x0=x0)
    x -= (m1 @ x) / total
    res = float(np.linalg.norm(b_proj - L @ x) / np.linalg.norm(b_proj))
    return x, SolveReport(rep.iterations, res, res <= tol, "cg")


def complex_cn_solve(M: SparseMatrix, S: SparseMatrix, rhs: np.ndarray, tol: float = 1e-12,
                     max_iter: int | None = None, x0: np.ndarray | None = None
                     ) -> tuple[np.ndarray, SolveReport]:
    """Solve ``(M + iS) x = rhs`` for real symmetric ``M`` (SPD) and ``S``.

    The operator is complex symmetric but not Hermitian, so CG does not apply.
    Jacobi-preconditioned BiCGStab is used, falling back to restarted GMRES on
    breakdown or stagnation.  Equivalent to the real 2x2 block system
    ``[[M, -S], [S, M]] [xr; xi] = [rr; ri]``.
    """
    if _same_pattern(M, S):
        A = sp.csr_matrix((M.data + 1j * S.data, M.indices, M.indptr), shape=M.shape)
    else:
        A = as_csr(M + 1j * S)
    return complex_solve(A, rhs, tol=tol, max_iter=max_iter, x0=x0)


def _same_pattern(A: SparseMatrix, B: SparseMatrix) -> bool:
    return (A.shape == B.shape and A.indices.shape == B.indices.shape
            and np.array_equal(A.indptr, B.indptr) and np.array_equal(A.indices, B.indices))


def complex_solve(A: SparseMatrix, rhs: np.ndarray, tol: float = 1e-12, max_iter: int | None = None,
                  x0: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
    """BiCGStab on an already formed complex CSR operator (see ``complex_cn_solve``)."""
    rhs = np.asarray(rhs, dtype=complex)
    n = rhs.shape[0]
    max_iter = _default_max_iter(n) if max_iter is None else max_iter
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n, dtype=complex), SolveReport(0, 0.0, True, "bicgstab")
    d = A.diagonal()
    dinv = 1.0 / np.where(np.abs(d) > 0, d, 1.0)

    x, it, ok = _bicgstab(A, rhs, dinv, tol, max_iter, x0)
    res = np.linalg.norm(rhs - A @ x) / bnorm
    if res <= tol:
        return x, SolveReport(it, float(res), True, "bicgstab")

    log.info("bicgstab stopped at residual %.3e after %d iterations; falling back to gmres", res, it)
    Pinv = spla.LinearOperator(A.shape, matvec=lambda v: dinv * v, dtype=complex)
    x2, _ = spla.gmres(A, rhs, x0=x, rtol=tol * 0.5, atol=0.0, restart=60,
                       maxiter=max(1, max_iter // 60), M=Pinv)
    res2 = np.linalg.norm(rhs - A @ x2) / bnorm
    if res2 < res:
        x, res = x2, res2
    return x, SolveReport(it, float(res), bool(res <= tol), "bicgstab+gmres")


def _bicgstab(A, b, dinv, tol, max_iter, x0):
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    r = b - A @ x if x0 is not None else b.copy()
    it = 0
    for _restart in range(4):
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it, True
        r_hat = r.copy()
        rho = alpha = omega = 1.0 + 0j
        v = np.zeros_like(b)
        p = np.zeros_like(b)
        broke = False
        while it < max_iter:
            rho_new = np.vdot(r_hat, r)
            if abs(rho_new) < _TINY or abs(omega) < _TINY:
                broke = True
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            phat = dinv * p
            v = A @ phat
            denom = np.vdot(r_hat, v)
            if abs(denom) < _TINY:
                broke = True
                break
            alpha = rho / denom
            s = r - alpha * v
            it += 1
            if np.linalg.norm(s) <= tol * bnorm:
                x += alpha * phat
                r = s
                break
            shat = dinv * s
            t = A @ shat
            tt = np.vdot(t, t).real
            if tt < _TINY:
                x += alpha * phat
                r = s
                broke = True
                break
            omega = np.vdot(t, s) / tt
            x += alpha * phat + omega * shat
            r = s - omega * t
            if np.linalg.norm(r) <= tol * bnorm:
                break
        # confirm on the true residual; restart the recursion if it drifted
        r = b - A @ x
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it, True
        if it >= max_iter:
            break
        if broke:
            log.debug("bicgstab breakdown at iteration %d; restarting", it)
    return x, it, False
