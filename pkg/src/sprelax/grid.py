"""Uniform tensor-product quadrilateral meshes with degree-r Lagrange DOFs.

Local nodes sit at Gauss-Lobatto points mapped affinely onto each cell.
Global DOFs are numbered lexicographically, x fastest then y.  Homogeneous
Dirichlet boundaries are handled by dropping the boundary nodes from the
global space; periodic boundaries identify the last node line with the first.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre


class ConfigurationError(ValueError):
    """Invalid mesh, parameter or run configuration."""


class BcKind(str, enum.Enum):
    DIRICHLET = "dirichlet"
    PERIODIC = "periodic"

    @classmethod
    def parse(cls, value: "BcKind | str") -> "BcKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigurationError(f"unknown boundary condition {value!r}") from None


@dataclass(frozen=True)
class Domain:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ConfigurationError(f"degenerate domain {self}")

    @property
    def area(self) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)


def gauss_lobatto_points(r: int) -> np.ndarray:
    """The r+1 Gauss-Lobatto points on [-1, 1], ascending."""
    if r < 1:
        raise ConfigurationError(f"polynomial degree must be >= 1, got {r}")
    if r == 1:
        return np.array([-1.0, 1.0])
    interior = legendre.Legendre.basis(r).deriv().roots()
    # a couple of Newton steps on P'_r to polish the companion-matrix roots
    dp = legendre.Legendre.basis(r).deriv()
    ddp = dp.deriv()
    for _ in range(3):
        interior = interior - dp(interior) / ddp(interior)
    interior = np.sort(interior.real)
    # symmetrise so mirrored nodes are bitwise opposite
    interior = 0.5 * (interior - interior[::-1])
    return np.concatenate(([-1.0], interior, [1.0]))


class Grid:
    """Immutable uniform mesh of ``nx * ny`` rectangular cells.

    Attributes
    ----------
    conn : (n_cells, (r+1)**2) int array
        Global DOF of every local node, ``-1`` for eliminated Dirichlet nodes.
        Local nodes are ordered x fastest.
    x, y : (n_dofs,) float arrays
        Physical node coordinates of each global DOF.
    """

    def __init__(self, domain: Domain, nx: int, ny: int, r: int, bc: BcKind | str):
        bc = BcKind.parse(bc)
        if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
            raise ConfigurationError(f"cell counts must be positive integers, got {nx}x{ny}")
        if int(r) != r or r < 1:
            raise ConfigurationError(f"polynomial degree must be an integer >= 1, got {r}")
        if bc is BcKind.PERIODIC and (nx < 2 or ny < 2):
            raise ConfigurationError("periodic grids need at least 2 cells per axis")
        self.domain = domain
        self.nx, self.ny, self.r = int(nx), int(ny), int(r)
        self.bc = bc
        self.hx = (domain.xmax - domain.xmin) / nx
        self.hy = (domain.ymax - domain.ymin) / ny
        self.ref_nodes = gauss_lobatto_points(self.r)

        # 1D global node lines (nx*r + 1 of them, boundary included)
        self.x_lines = self._node_lines(domain.xmin, self.hx, self.nx)
        self.y_lines = self._node_lines(domain.ymin, self.hy, self.ny)

        gx_map = self._axis_map(self.nx)
        gy_map = self._axis_map(self.ny)
        self.n_x_dofs = int(gx_map.max()) + 1
        self.n_y_dofs = int(gy_map.max()) + 1

        r1 = self.r + 1
        cx, cy = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        a, b = np.meshgrid(np.arange(r1), np.arange(r1), indexing="xy")
        gx = (cx.reshape(-1, 1) * self.r + a.reshape(1, -1))
        gy = (cy.reshape(-1, 1) * self.r + b.reshape(1, -1))
        ix, iy = gx_map[gx], gy_map[gy]
        conn = np.where((ix >= 0) & (iy >= 0), iy * self.n_x_dofs + ix, -1)
        self.conn = conn.astype(np.int64)
        self.conn.setflags(write=False)

        # coordinates of each global dof; periodic dof 0 sits at xmin / ymin
        if self.bc is BcKind.PERIODIC:
            x_of, y_of = self.x_lines[:-1], self.y_lines[:-1]
        else:
            x_of, y_of = self.x_lines[1:-1], self.y_lines[1:-1]
        X, Y = np.meshgrid(x_of, y_of, indexing="xy")
        self.x = X.ravel()
        self.y = Y.ravel()
        self.x.setflags(write=False)
        self.y.setflags(write=False)

    def _node_lines(self, lo: float, h: float, n: int) -> np.ndarray:
        local = 0.5 * (self.ref_nodes[:-1] + 1.0) * h
        cells = lo + h * np.arange(n)
        lines = (cells[:, None] + local[None, :]).ravel()
        # exact end point, so periodic and boundary checks see the true bound
        return np.concatenate((lines, [lo + h * n]))

    def _axis_map(self, n_cells: int) -> np.ndarray:
        n_lines = n_cells * self.r + 1
        idx = np.arange(n_lines)
        if self.bc is BcKind.PERIODIC:
            return idx % (n_lines - 1)
        out = idx - 1
        out[0] = -1
        out[-1] = -1
        return out

    @property
    def n_dofs(self) -> int:
        return self.n_x_dofs * self.n_y_dofs

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_local(self) -> int:
        return (self.r + 1) ** 2

    @cached_property
    def cell_origins(self) -> np.ndarray:
        """Lower-left corner of every cell, shape (n_cells, 2)."""
        cx, cy = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        ox = self.domain.xmin + cx.ravel() * self.hx
        oy = self.domain.ymin + cy.ravel() * self.hy
        return np.stack((ox, oy), axis=1)

    def __repr__(self) -> str:
        return (f"Grid({self.nx}x{self.ny}, r={self.r}, bc={self.bc.value}, "
                f"n_dofs={self.n_dofs})")


def build_grid(domain: Domain, nx: int, ny: int, r: int, bc: BcKind | str) -> Grid:
    return Grid(domain, nx, ny, r, bc)


def dof_coordinates(grid: Grid, dof: int) -> tuple[float, float]:
    if not 0 <= dof < grid.n_dofs:
        raise IndexError(f"dof {dof} out of range for {grid!r}")
    return float(grid.x[dof]), float(grid.y[dof])


def expected_dof_count(nx: int, ny: int, r: int, bc: BcKind | str) -> int:
    if BcKind.parse(bc) is BcKind.PERIODIC:
        return (nx * r) * (ny * r)
    return (nx * r - 1) * (ny * r - 1)


def vertex_lattice(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates of the element-vertex sample lattice.

    Periodic grids give nx by ny points (the duplicate end line is dropped);
    Dirichlet grids give (nx+1) by (ny+1) points including the boundary.
    """
    xs, ys = grid.x_lines[::grid.r], grid.y_lines[::grid.r]
    if grid.bc is BcKind.PERIODIC:
        xs, ys = xs[:-1], ys[:-1]
    return xs.copy(), ys.copy()


def vertex_values(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Nodal values at the vertex lattice, shape (ny_samples, nx_samples).

    Element vertices are nodes of the Lobatto basis, so this is a gather, not
    an interpolation.  Eliminated Dirichlet nodes read as zero.
    """
    coeffs = np.asarray(coeffs)
    r = grid.r
    lines = coeffs.reshape(grid.n_y_dofs, grid.n_x_dofs)
    if grid.bc is BcKind.PERIODIC:
        return lines[::r, ::r].copy()
    out = np.zeros((grid.ny + 1, grid.nx + 1), dtype=coeffs.dtype)
    # interior vertex line j*r sits at dof line j*r - 1
    out[1:-1, 1:-1] = lines[r - 1::r, r - 1::r]
    return out
