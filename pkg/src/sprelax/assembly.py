"""Finite element assembly on uniform tensor-product grids.

Every cell of a uniform grid is an affine copy of the same rectangle, so the
reference tables (basis values and gradients at the quadrature points) are
shared by all cells and assembly is a handful of dense matrix products
followed by one ordered scatter into a fixed CSR pattern.  The scatter uses
``np.bincount`` over a precomputed map, which sums contributions in cell order
and is therefore deterministic: the same grid always yields bitwise identical
CSR arrays, and symmetric local matrices give bitwise symmetric globals.
"""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .grid import Grid
from .sparse_linalg import SolverError, SparseMatrix, cg_solve

import scipy.sparse as sp

#: projection / discrete-Laplacian solves (mass matrix is SPD and well conditioned)
MASS_TOL = 1e-13


# ---------------------------------------------------------------------------
# one-dimensional building blocks

def lagrange_basis_1d(nodes: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the Lagrange polynomials on ``nodes`` at ``pts``.

    Returns two arrays of shape ``(len(nodes), len(pts))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    pts = np.atleast_1d(np.asarray(pts, dtype=float))
    n = len(nodes)
    vals = np.ones((n, len(pts)))
    ders = np.zeros((n, len(pts)))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        denom = np.prod([nodes[i] - nodes[j] for j in others])
        factors = np.array([pts - nodes[j] for j in others])  # (n-1, npts)
        vals[i] = np.prod(factors, axis=0) / denom
        d = np.zeros(len(pts))
        for m in range(len(others)):
            d += np.prod(np.delete(factors, m, axis=0), axis=0)
        ders[i] = d / denom
    return vals, ders


@dataclass(frozen=True)
class Quadrature:
    """Tensor Gauss-Legendre rule on the reference cell [-1, 1]^2."""

    order: int
    points: np.ndarray   # 1D points, shape (order,)
    weights: np.ndarray  # 1D weights, shape (order,)

    @property
    def weights_2d(self) -> np.ndarray:
        """x-fastest tensor weights, shape (order**2,); they sum to 4."""
        return np.outer(self.weights, self.weights).ravel()

    @property
    def points_2d(self) -> tuple[np.ndarray, np.ndarray]:
        X, Y = np.meshgrid(self.points, self.points, indexing="xy")
        return X.ravel(), Y.ravel()


def gauss_quadrature(order: int) -> Quadrature:
    pts, wts = np.polynomial.legendre.leggauss(order)
    return Quadrature(order, pts, wts)


def quadrature_order(r: int) -> int:
    """Points per axis: exact for the degree-3r integrands of P and the |U|^2 loads."""
    return max(r + 2, math.ceil((3 * r + 2) / 2))


# ---------------------------------------------------------------------------
# fields

@dataclass
class FeField:
    """Coefficient vector of a (real or complex) finite element function."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs)
        if self.coeffs.shape != (self.grid.n_dofs,):
            raise ValueError(f"expected {self.grid.n_dofs} coefficients, got {self.coeffs.shape}")

    @property
    def kind(self) -> str:
        return "complex" if np.iscomplexobj(self.coeffs) else "real"

    @property
    def real(self) -> "FeField":
        return FeField(self.grid, self.coeffs.real.copy())

    @property
    def imag(self) -> "FeField":
        return FeField(self.grid, self.coeffs.imag.copy() if self.kind == "complex"
                       else np.zeros(self.grid.n_dofs))

    @classmethod
    def zeros(cls, grid: Grid, complex_: bool = False) -> "FeField":
        return cls(grid, np.zeros(grid.n_dofs, dtype=complex if complex_ else float))


# pointwise function f(x, y) -> values, an FeField, or values already at quadrature points
Source = Union[Callable[[np.ndarray, np.ndarray], np.ndarray], FeField, np.ndarray]


# ---------------------------------------------------------------------------
# per-grid assembly context

class Assembler:
    """Reference tables, quadrature points and the CSR scatter map of one grid."""

    def __init__(self, grid: Grid, quad_order: int | None = None):
        self.grid = grid
        r = grid.r
        self.quad = gauss_quadrature(quad_order or quadrature_order(r))
        q = self.quad.points
        v1, d1 = lagrange_basis_1d(grid.ref_nodes, q)
        # tensor tables (n_local, nq), local node index = b*(r+1) + a, point index = qy*nq1 + qx
        self.B = np.einsum("bj,ai->baji", v1, v1).reshape(grid.n_local, -1)
        sx, sy = 2.0 / grid.hx, 2.0 / grid.hy
        self.Bx = np.einsum("bj,ai->baji", v1, d1).reshape(grid.n_local, -1) * sx
        self.By = np.einsum("bj,ai->baji", d1, v1).reshape(grid.n_local, -1) * sy
        self.jxw = self.quad.weights_2d * (0.25 * grid.hx * grid.hy)
        self.n_q = self.B.shape[1]

        # physical quadrature points, (n_cells, nq)
        qx, qy = self.quad.points_2d
        org = grid.cell_origins
        self.qx = org[:, :1] + 0.5 * (qx[None, :] + 1.0) * grid.hx
        self.qy = org[:, 1:] + 0.5 * (qy[None, :] + 1.0) * grid.hy

        self._build_pattern()
        # B_i B_j products per point, used by weighted mass assembly: (nq, n_local**2)
        nl = grid.n_local
        self._BB = (self.B[:, None, :] * self.B[None, :, :]).reshape(nl * nl, -1).T.copy()

    def _build_pattern(self):
        conn = self.grid.conn
        n = self.grid.n_dofs
        nl = self.grid.n_local
        rows = np.broadcast_to(conn[:, :, None], (conn.shape[0], nl, nl)).ravel()
        cols = np.broadcast_to(conn[:, None, :], (conn.shape[0], nl, nl)).ravel()
        self._mat_mask = (rows >= 0) & (cols >= 0)
        keys = rows[self._mat_mask] * n + cols[self._mat_mask]
        uniq, inv = np.unique(keys, return_inverse=True)
        self._mat_inv = inv.ravel()
        self._indices = (uniq % n).astype(np.int32)
        counts = np.bincount(uniq // n, minlength=n)
        self._indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int32)
        self._nnz = len(uniq)
        flat = conn.ravel()
        self._vec_mask = flat >= 0
        self._vec_idx = flat[self._vec_mask]

    # -- scatter ----------------------------------------------------------------
    def scatter_matrix(self, local: np.ndarray) -> SparseMatrix:
        """Sum local matrices ``(n_cells, nl, nl)`` (or one shared ``(nl, nl)``) into CSR."""
        nc, nl = self.grid.n_cells, self.grid.n_local
        if local.ndim == 2:
            local = np.broadcast_to(local, (nc, nl, nl))
        data = np.bincount(self._mat_inv, weights=local.ravel()[self._mat_mask],
                           minlength=self._nnz)
        n = self.grid.n_dofs
        return sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(n, n))

    def scatter_vector(self, local: np.ndarray) -> np.ndarray:
        """Sum local vectors ``(n_cells, nl)`` into a global vector (real or complex)."""
        n = self.grid.n_dofs
        flat = local.ravel()[self._vec_mask]
        if np.iscomplexobj(flat):
            return (np.bincount(self._vec_idx, weights=flat.real, minlength=n)
                    + 1j * np.bincount(self._vec_idx, weights=flat.imag, minlength=n))
        return np.bincount(self._vec_idx, weights=flat, minlength=n)

    # -- evaluation ---------------------------------------------------------------
    def local_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        ext = np.concatenate((coeffs, np.zeros(1, dtype=coeffs.dtype)))
        return ext[self.grid.conn]  # -1 picks the appended zero

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        """Field values at the quadrature points, shape (n_cells, nq)."""
        return self.local_coeffs(np.asarray(coeffs)) @ self.B

    def gradients(self, coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = self.local_coeffs(np.asarray(coeffs))
        return c @ self.Bx, c @ self.By

    def integrate(self, qvals: np.ndarray):
        """Quadrature of values given at the quadrature points."""
        return (qvals @ self.jxw).sum()

    def qp_values(self, f: Source) -> np.ndarray:
        if isinstance(f, FeField):
            return self.values(f.coeffs)
        if callable(f):
            vals = np.asarray(f(self.qx, self.qy))
            return np.broadcast_to(vals, self.qx.shape)
        f = np.asarray(f)
        if f.shape != self.qx.shape:
            raise ValueError(f"quadrature values must have shape {self.qx.shape}")
        return f

    # -- element matrices ------------------------------------------------------------
    @property
    def local_mass(self) -> np.ndarray:
        m = (self.B * self.jxw) @ self.B.T
        return 0.5 * (m + m.T)

    @property
    def local_laplace(self) -> np.ndarray:
        k = (self.Bx * self.jxw) @ self.Bx.T + (self.By * self.jxw) @ self.By.T
        return 0.5 * (k + k.T)

    def local_weighted_mass(self, wq: np.ndarray) -> np.ndarray:
        nl = self.grid.n_local
        loc = ((wq * self.jxw) @ self._BB).reshape(-1, nl, nl)
        return 0.5 * (loc + loc.transpose(0, 2, 1))

    def local_load(self, fq: np.ndarray) -> np.ndarray:
        return (fq * self.jxw) @ self.B.T


_ASSEMBLERS: "weakref.WeakKeyDictionary[Grid, Assembler]" = weakref.WeakKeyDictionary()


def assembler_for(grid: Grid) -> Assembler:
    asm = _ASSEMBLERS.get(grid)
    if asm is None:
        asm = Assembler(grid)
        _ASSEMBLERS[grid] = asm
    return asm


# ---------------------------------------------------------------------------
# public assembly operations

def assemble_mass(grid: Grid) -> SparseMatrix:
    asm = assembler_for(grid)
    return asm.scatter_matrix(asm.local_mass)


def assemble_laplace(grid: Grid) -> SparseMatrix:
    asm = assembler_for(grid)
    return asm.scatter_matrix(asm.local_laplace)


def assemble_weighted_mass(grid: Grid, w: FeField | np.ndarray) -> SparseMatrix:
    """``P_ij = int w phi_i phi_j`` for a real weight field ``w``."""
    if isinstance(w, FeField):
        if w.grid is not grid:
            raise ValueError("weight field lives on a different grid")
        coeffs = w.coeffs
    else:
        coeffs = np.asarray(w)
    if np.iscomplexobj(coeffs):
        raise TypeError("weight must be real-valued")
    asm = assembler_for(grid)
    return asm.scatter_matrix(asm.local_weighted_mass(asm.values(coeffs)))


def assemble_load(grid: Grid, f: Source) -> np.ndarray:
    """``b_j = int f phi_j`` by the grid quadrature (pointwise ``f`` is not interpolated)."""
    asm = assembler_for(grid)
    return asm.scatter_vector(asm.local_load(asm.qp_values(f)))


def mass_solve(M: SparseMatrix, b: np.ndarray, tol: float = MASS_TOL, stage: str = "mass solve",
               x0: np.ndarray | None = None) -> np.ndarray:
    """``M^{-1} b`` for real or complex ``b``; raises ``SolverError`` on failure."""
    if np.iscomplexobj(b):
        x0r = None if x0 is None else np.real(x0)
        x0i = None if x0 is None else np.imag(x0)
        return (mass_solve(M, b.real, tol, stage, x0r)
                + 1j * mass_solve(M, b.imag, tol, stage, x0i))
    x, rep = cg_solve(M, b, tol=tol, x0=x0)
    if not rep.converged:
        raise SolverError("mass-matrix solve did not converge", rep, stage)
    return x


def l2_project(grid: Grid, M: SparseMatrix, f: Source, tol: float = MASS_TOL) -> FeField:
    """L2 projection onto the finite element space: ``M x = <f, phi>``."""
    if isinstance(f, FeField):
        b = M @ f.coeffs
    else:
        b = assemble_load(grid, f)
    return FeField(grid, mass_solve(M, b, tol, stage="l2 projection"))


def discrete_laplacian_apply(grid: Grid, M: SparseMatrix, L: SparseMatrix, v: FeField,
                             tol: float = MASS_TOL) -> FeField:
    """``w = Delta_h v``, i.e. ``M w = -L v``."""
    return FeField(grid, mass_solve(M, -(L @ v.coeffs), tol, stage="discrete laplacian"))
