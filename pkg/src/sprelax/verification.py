"""Manufactured solutions, convergence studies, conservation runs and a dense oracle.

The manufactured pair on (-1, 1)^2 is

    v(x, y, t) = exp(-t) sin(pi (x^2 - 1)(y^2 - 1)),    u = (1 + i) v,

which vanishes on the boundary.  Forcing terms make it an exact solution of

    u_t - (i eps / 2 alpha^2) Lap u + (i / eps) v u = f_u,
    Lap v = (beta / alpha) |u|^2 + f_v.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assembly import assembler_for, lagrange_basis_1d
from .grid import BcKind, Domain, Grid, build_grid
from .invariants import InvariantRecord, record
from .stepper import (PhysParams, SchemeState, SolverSettings, SourceTerms, TimeGrid,
                      initialize, step)

MMS_DOMAIN = Domain(-1.0, 1.0, -1.0, 1.0)
MMS_PARAMS = PhysParams(1.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# manufactured solution

def _g(x, y):
    return (x * x - 1.0) * (y * y - 1.0)


def mms_v(x, y, t):
    return np.exp(-t) * np.sin(np.pi * _g(x, y))


def mms_u(x, y, t):
    return (1.0 + 1.0j) * mms_v(x, y, t)


def mms_lap_v(x, y, t):
    g = _g(x, y)
    gx = 2.0 * x * (y * y - 1.0)
    gy = 2.0 * y * (x * x - 1.0)
    lap_g = 2.0 * (y * y - 1.0) + 2.0 * (x * x - 1.0)
    return np.exp(-t) * (np.pi * np.cos(np.pi * g) * lap_g
                         - np.pi ** 2 * np.sin(np.pi * g) * (gx * gx + gy * gy))


def mms_forcing(x, y, t, params: PhysParams = MMS_PARAMS):
    """Residuals (f_u, f_v) of the manufactured pair, written out analytically."""
    a, b, e = params.alpha, params.beta, params.epsilon
    v = mms_v(x, y, t)
    lap_v = mms_lap_v(x, y, t)
    # u_t = -u, Lap u = (1+i) Lap v, v u = (1+i) v^2
    f_u = (1.0 + 1.0j) * (-v - (1j * e / (2.0 * a * a)) * lap_v + (1j / e) * v * v)
    f_v = lap_v - (b / a) * 2.0 * v * v
    return f_u, f_v


@dataclass(frozen=True)
class MmsCase:
    params: PhysParams = MMS_PARAMS
    t_final: float = 1.0

    def u(self, x, y, t):
        return mms_u(x, y, t)

    def v(self, x, y, t):
        return mms_v(x, y, t)

    def f_u(self, x, y, t):
        return mms_forcing(x, y, t, self.params)[0]

    def f_v(self, x, y, t):
        return mms_forcing(x, y, t, self.params)[1]

    def sources(self) -> SourceTerms:
        return SourceTerms(self.f_u, self.f_v)


# ---------------------------------------------------------------------------
# error norms and rates

def l2_error(grid: Grid, coeffs: np.ndarray, exact: Callable) -> float:
    """||exact - U_h|| with ``exact(x, y)`` evaluated at the quadrature points."""
    asm = assembler_for(grid)
    diff = np.asarray(exact(asm.qx, asm.qy)) - asm.values(coeffs)
    return float(np.sqrt(asm.integrate(np.abs(diff) ** 2)))


def linf_l2_error(grid: Grid, snapshots, exact: Callable, times) -> float:
    """max_n ||exact(., t_n) - U_h^n|| over paired snapshots and times."""
    errs = [l2_error(grid, c, lambda x, y, t=t: exact(x, y, t)) for c, t in zip(snapshots, times)]
    return max(errs) if errs else 0.0


@dataclass
class EocRow:
    size: float          # h or k
    e_u: float
    e_v: float
    rate_u: Optional[float] = None
    rate_v: Optional[float] = None
    flag: str = ""


def eoc_rate(e1: float, e2: float, s1: float, s2: float) -> Optional[float]:
    if s1 == s2 or e1 <= 0 or e2 <= 0:
        return None
    return (math.log(e1) - math.log(e2)) / (math.log(s1) - math.log(s2))


def fill_rates(rows: list[EocRow]) -> list[EocRow]:
    for prev, row in zip(rows, rows[1:]):
        row.rate_u = eoc_rate(prev.e_u, row.e_u, prev.size, row.size)
        row.rate_v = eoc_rate(prev.e_v, row.e_v, prev.size, row.size)
        if row.rate_u is None or row.rate_v is None:
            row.flag = "degenerate"
    return rows


# ---------------------------------------------------------------------------
# manufactured-solution runs

@dataclass
class MmsResult:
    e_u: float
    e_v: float
    errors_u: list = field(default_factory=list)
    errors_v: list = field(default_factory=list)


def run_mms(nx: int, r: int, n_steps: int, case: MmsCase = MmsCase(),
            settings: SolverSettings | None = None, domain: Domain = MMS_DOMAIN) -> MmsResult:
    """One manufactured-solution run; errors are tracked at every time node."""
    settings = settings or SolverSettings(wave_tol=1e-12)
    grid = build_grid(domain, nx, nx, r, BcKind.DIRICHLET)
    tg = TimeGrid.uniform(0.0, case.t_final, n_steps)
    state = initialize(grid, case.params, tg, lambda x, y: case.u(x, y, 0.0),
                       sources=case.sources(), settings=settings)
    res = MmsResult(0.0, 0.0)

    def measure(s: SchemeState):
        t = s.t
        res.errors_u.append(l2_error(grid, s.U, lambda x, y: case.u(x, y, t)))
        res.errors_v.append(l2_error(grid, s.V_node, lambda x, y: case.v(x, y, t)))

    measure(state)
    for _ in range(n_steps):
        state = step(state)
        measure(state)
    res.e_u, res.e_v = max(res.errors_u), max(res.errors_v)
    return res


def run_spatial_eoc(levels: list[int], r: int, n_steps: int = 2000,
                    case: MmsCase = MmsCase(), settings: SolverSettings | None = None
                    ) -> list[EocRow]:
    """Spatial convergence over cell counts ``levels`` (h = 2 / nx) with fixed N."""
    rows = []
    for nx in levels:
        res = run_mms(nx, r, n_steps, case, settings)
        rows.append(EocRow((MMS_DOMAIN.xmax - MMS_DOMAIN.xmin) / nx, res.e_u, res.e_v))
    return fill_rates(rows)


def run_temporal_eoc(k_list: list[float], r: int = 5, h: float = 0.0625,
                     case: MmsCase = MmsCase(), settings: SolverSettings | None = None
                     ) -> list[EocRow]:
    """Temporal convergence over step sizes at a fixed high-degree mesh."""
    nx = int(round((MMS_DOMAIN.xmax - MMS_DOMAIN.xmin) / h))
    rows = []
    for k in k_list:
        n_steps = int(round(case.t_final / k))
        res = run_mms(nx, r, n_steps, case, settings)
        rows.append(EocRow(k, res.e_u, res.e_v))
    return fill_rates(rows)


# ---------------------------------------------------------------------------
# conservation experiment

def conservation_initial(x, y):
    return (np.sin(x) + 1j * np.cos(y)) * (1 - x ** 2) ** 2 * (1 - y ** 2) ** 2


def run_conservation(nx: int, r: int, k: float, t_final: float, params: PhysParams,
                     lemmas: bool = False, settings: SolverSettings | None = None,
                     domain: Domain = MMS_DOMAIN, u0: Callable = conservation_initial,
                     callback: Callable[[SchemeState, InvariantRecord], None] | None = None
                     ) -> list[InvariantRecord]:
    """Source-free run logging one invariant record per time node (step 0 included)."""
    grid = build_grid(domain, nx, nx, r, BcKind.DIRICHLET)
    n_steps = int(round(t_final / k))
    tg = TimeGrid.uniform(0.0, t_final, n_steps)
    state = initialize(grid, params, tg, u0, settings=settings)
    first = record(state)
    records = [first]
    if callback:
        callback(state, first)
    for _ in range(n_steps):
        prev, state = state, step(state)
        rec = record(state, first, prev, lemmas=lemmas)
        records.append(rec)
        if callback:
            callback(state, rec)
    return records


# ---------------------------------------------------------------------------
# dense oracle

class DenseOracle:
    """Independent dense re-implementation of one relaxation step.

    Assembles M, L and P with explicit cell and quadrature-point loops, and
    solves with dense LU.  Only the 1D Lagrange basis is shared with the
    sparse code path.  Intended for grids with at most a few hundred DOFs.
    """

    def __init__(self, grid: Grid, params: PhysParams, n_quad: int = 6):
        self.grid, self.params = grid, params
        r = grid.r
        pts, wts = np.polynomial.legendre.leggauss(max(n_quad, r + 3))
        self.pts, self.wts = pts, wts
        self.v1, self.d1 = lagrange_basis_1d(grid.ref_nodes, pts)
        n = grid.n_dofs
        self.M = np.zeros((n, n))
        self.L = np.zeros((n, n))
        for cell, dofs in enumerate(grid.conn):
            for qy, wy in enumerate(wts):
                for qx, wx in enumerate(wts):
                    phi, phix, phiy, w = self._point(qx, qy, wx, wy)
                    for i, gi in enumerate(dofs):
                        if gi < 0:
                            continue
                        for j, gj in enumerate(dofs):
                            if gj < 0:
                                continue
                            self.M[gi, gj] += w * phi[i] * phi[j]
                            self.L[gi, gj] += w * (phix[i] * phix[j] + phiy[i] * phiy[j])

    def _point(self, qx, qy, wx, wy):
        g, r1 = self.grid, self.grid.r + 1
        phi = np.empty(r1 * r1)
        phix = np.empty(r1 * r1)
        phiy = np.empty(r1 * r1)
        for b in range(r1):
            for a in range(r1):
                i = b * r1 + a
                phi[i] = self.v1[a, qx] * self.v1[b, qy]
                phix[i] = self.d1[a, qx] * self.v1[b, qy] * 2.0 / g.hx
                phiy[i] = self.v1[a, qx] * self.d1[b, qy] * 2.0 / g.hy
        return phi, phix, phiy, wx * wy * g.hx * g.hy / 4.0

    def _cells(self):
        for dofs in self.grid.conn:
            for qy, wy in enumerate(self.wts):
                for qx, wx in enumerate(self.wts):
                    yield dofs, self._point(qx, qy, wx, wy)

    def potential_matrix(self, V: np.ndarray) -> np.ndarray:
        n = self.grid.n_dofs
        P = np.zeros((n, n))
        for dofs, (phi, _, _, w) in self._cells():
            vq = sum(V[g] * phi[i] for i, g in enumerate(dofs) if g >= 0)
            for i, gi in enumerate(dofs):
                if gi < 0:
                    continue
                for j, gj in enumerate(dofs):
                    if gj >= 0:
                        P[gi, gj] += w * vq * phi[i] * phi[j]
        return P

    def density_load(self, U: np.ndarray) -> np.ndarray:
        b = np.zeros(self.grid.n_dofs)
        for dofs, (phi, _, _, w) in self._cells():
            uq = sum(U[g] * phi[i] for i, g in enumerate(dofs) if g >= 0)
            for i, gi in enumerate(dofs):
                if gi >= 0:
                    b[gi] += w * abs(uq) ** 2 * phi[i]
        return b

    def step(self, n: int, U: np.ndarray, phi_prev: np.ndarray | None, V_half_prev: np.ndarray | None,
             V_node: np.ndarray, k_prev: float, k: float, phi_given: np.ndarray | None = None) -> dict:
        """One step from level n-1; ``phi_given`` replaces the relaxation update (first step)."""
        p = self.params
        M, L = self.M, self.L
        if phi_given is not None:
            phi = phi_given
        else:
            phi = ((k_prev + k) / k_prev) * np.linalg.solve(M, self.density_load(U)) - (k / k_prev) * phi_prev
        V_half = np.linalg.solve(L, -(p.beta / p.alpha) * (M @ phi))
        A = M + 1j * (0.5 * k) * ((p.epsilon / (2 * p.alpha ** 2)) * L
                                  + self.potential_matrix(V_half) / p.epsilon)
        X = np.linalg.solve(A, M @ U)
        U_new = 2 * X - U
        if n == 1:
            V_new = 2 * V_half - V_node
        else:
            V_new = V_half + (k / (k_prev + k)) * (V_half - V_half_prev)
        return {"phi_half": phi, "V_half": V_half, "U_half": X, "U": U_new, "V_node": V_new}


def dense_oracle_step(state: SchemeState, oracle: DenseOracle | None = None) -> dict:
    """Dense-LU version of ``stepper.step(state)`` for tiny Dirichlet grids."""
    if state.grid.n_dofs > 400:
        raise ValueError("dense oracle is meant for tiny grids")
    if oracle is None:
        oracle = DenseOracle(state.grid, state.model.params)
    n = state.n + 1
    tg = state.timegrid
    return oracle.step(n, state.U, state.phi_half, state.V_half, state.V_node,
                       tg.k(n - 1), tg.k(n), phi_given=state.phi_next if n == 1 else None)
