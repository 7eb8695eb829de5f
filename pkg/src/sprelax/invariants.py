"""Discrete mass, energy and momentum, and the per-step energy / momentum identities."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .assembly import FeField, assembler_for, mass_solve
from .grid import Grid
from .sparse_linalg import SparseMatrix
from .stepper import CosmologyModel, PhysParams, SchemeState, SchrodingerPoisson


@dataclass(frozen=True)
class InvariantRecord:
    step: int
    t: float
    D: float
    E: float
    Mx: float
    My: float
    D_err: float = 0.0
    E_err: float = 0.0
    M_err: float = 0.0
    lemma2_res: Optional[float] = None
    lemma3_res: Optional[float] = None

    def as_row(self) -> list:
        return [self.step, self.t, self.D, self.E, self.Mx, self.My, self.D_err, self.E_err,
                self.M_err, self.lemma2_res, self.lemma3_res]


def _coeffs(U) -> np.ndarray:
    return U.coeffs if isinstance(U, FeField) else np.asarray(U)


def mass(U, M: SparseMatrix) -> float:
    """||U||^2 = U^* M U."""
    u = _coeffs(U)
    if np.iscomplexobj(u):
        return float(u.real @ (M @ u.real) + u.imag @ (M @ u.imag))
    return float(u @ (M @ u))


def dirichlet_energy(U, L: SparseMatrix) -> float:
    """||grad U||^2 = U^* L U."""
    return mass(U, L)


def weighted_density(grid: Grid, V, U) -> float:
    """int V |U|^2 by the grid quadrature (the same numbers that enter P(V))."""
    asm = assembler_for(grid)
    uq = asm.values(_coeffs(U))
    return float(asm.integrate(asm.values(_coeffs(V)) * (uq.real ** 2 + uq.imag ** 2)))


def energy(U, V, params: PhysParams, grid: Grid, L: SparseMatrix) -> float:
    """(eps^2/alpha^2) ||grad U||^2 + (alpha/beta) ||grad V||^2 + 2 int V |U|^2."""
    if params.beta == 0:
        raise ValueError("the discrete energy is undefined for beta = 0")
    a, b, e = params.alpha, params.beta, params.epsilon
    return ((e * e / (a * a)) * dirichlet_energy(U, L) + (a / b) * dirichlet_energy(V, L)
            + 2.0 * weighted_density(grid, V, U))


def cosmology_energy(U, V, model: CosmologyModel, tau: float, grid: Grid, L: SparseMatrix) -> float:
    """Energy analogue with the coefficients frozen at ``tau``.

    Obtained by mapping the expanding system onto the constant-coefficient one
    at fixed tau; it is not conserved exactly by the continuous dynamics.
    """
    e, b = model.epsilon, model.beta
    return ((e * e / tau ** 1.5) * dirichlet_energy(U, L) + (tau ** 1.5 / b) * dirichlet_energy(V, L)
            + 2.0 * tau ** 0.5 * weighted_density(grid, V, U))


def momentum(U, epsilon: float, grid: Grid | None = None) -> tuple[float, float]:
    """-Im(eps int U grad(conj U)) by quadrature, both components."""
    if grid is None:
        grid = U.grid
    asm = assembler_for(grid)
    u = _coeffs(U)
    a, b = u.real, (u.imag if np.iscomplexobj(u) else np.zeros_like(u.real))
    aq, bq = asm.values(a), asm.values(b)
    ax, ay = asm.gradients(a)
    bx, by = asm.gradients(b)
    # Im(U grad conj U) = b grad a - a grad b
    mx = -epsilon * asm.integrate(bq * ax - aq * bx)
    my = -epsilon * asm.integrate(bq * ay - aq * by)
    return float(mx), float(my)


def conservation_errors(now: InvariantRecord, initial: InvariantRecord) -> tuple[float, float, float]:
    return (abs(now.D - initial.D), abs(now.E - initial.E),
            float(np.hypot(now.Mx - initial.Mx, now.My - initial.My)))


def _params_of(state: SchemeState) -> PhysParams:
    if isinstance(state.model, SchrodingerPoisson):
        return state.model.params
    raise TypeError("energy/momentum identities need the constant-coefficient model")


def lemma2_residual(prev: SchemeState, cur: SchemeState, params: PhysParams | None = None) -> float:
    """|E^n - RHS| of the discrete energy identity over the step prev -> cur.

    E^n = E^{n-1} + (alpha/beta)(||grad V^n||^2 - ||grad V^{n-1}||^2)
          + 2 int (V^n - V^{n-1/2}) |U^n|^2 - 2 int (V^{n-1} - V^{n-1/2}) |U^{n-1}|^2
    """
    params = params or _params_of(cur)
    grid, L = cur.grid, cur.ops.L
    a, b = params.alpha, params.beta
    U0, U1 = prev.U, cur.U
    V0, V1, Vh = cur.V_node_prev, cur.V_node, cur.V_half
    E0 = energy(U0, V0, params, grid, L)
    E1 = energy(U1, V1, params, grid, L)
    rhs = (E0 + (a / b) * (dirichlet_energy(V1, L) - dirichlet_energy(V0, L))
           + 2.0 * weighted_density(grid, V1 - Vh, U1)
           - 2.0 * weighted_density(grid, V0 - Vh, U0))
    return abs(E1 - rhs)


def lemma2_residual_decoupled(prev: SchemeState, cur: SchemeState, params: PhysParams) -> float:
    """Energy identity with the potential terms dropped (beta = 0, V = 0): the free
    Crank-Nicolson step conserves ||grad U||^2 exactly."""
    L = cur.ops.L
    return abs(dirichlet_energy(cur.U, L) - dirichlet_energy(prev.U, L)) * params.epsilon ** 2 / params.alpha ** 2


def momentum_rate_bracket(cur: SchemeState, params: PhysParams, tol: float = 1e-13) -> np.ndarray:
    """The bracket B of M^n = M^{n-1} - k_n B:

    int |U|^2 grad V + (eps^2/alpha^2) Re int grad U Lap_h conj U - 2 Re int (P_h - I)(V U) grad conj U

    with every field at the midpoint n-1/2.
    """
    grid, ops = cur.grid, cur.ops
    asm, M, L = ops.asm, ops.M, ops.L
    a, e = params.alpha, params.epsilon
    X, Vh = cur.U_half, cur.V_half
    Xq = asm.values(X)
    Xx, Xy = asm.gradients(X)
    Vq = asm.values(Vh)
    Vx, Vy = asm.gradients(Vh)
    dens = Xq.real ** 2 + Xq.imag ** 2

    lap = mass_solve(M, -(L @ X), tol, stage="discrete laplacian")
    lapq_conj = np.conj(asm.values(lap))
    VX_q = Vq * Xq
    proj = mass_solve(M, ops.load(VX_q), tol, stage="l2 projection")
    defect = asm.values(proj) - VX_q

    out = np.empty(2)
    for i, (gV, gX) in enumerate(((Vx, Xx), (Vy, Xy))):
        out[i] = (asm.integrate(dens * gV)
                  + (e * e / (a * a)) * asm.integrate(gX * lapq_conj).real
                  - 2.0 * asm.integrate(defect * np.conj(gX)).real)
    return out


def lemma3_residual(prev: SchemeState, cur: SchemeState, params: PhysParams | None = None,
                    tol: float = 1e-13) -> float:
    """Euclidean norm of M^n - M^{n-1} + k_n B (see ``momentum_rate_bracket``)."""
    params = params or _params_of(cur)
    k = cur.timegrid.k(cur.n)
    m0 = np.array(momentum(prev.U, params.epsilon, prev.grid))
    m1 = np.array(momentum(cur.U, params.epsilon, cur.grid))
    return float(np.linalg.norm(m1 - m0 + k * momentum_rate_bracket(cur, params, tol)))


def record(state: SchemeState, initial: InvariantRecord | None = None,
           prev: SchemeState | None = None, lemmas: bool = False) -> InvariantRecord:
    """Invariants of ``state``; errors against ``initial`` and identities against ``prev``."""
    grid, L, M = state.grid, state.ops.L, state.ops.M
    model = state.model
    if isinstance(model, SchrodingerPoisson):
        eps = model.params.epsilon
        E = energy(state.U, state.V_node, model.params, grid, L) if model.params.beta != 0 else 0.0
    else:
        eps = model.epsilon
        E = cosmology_energy(state.U, state.V_node, model, state.t, grid, L)
    D = mass(state.U, M)
    Mx, My = momentum(state.U, eps, grid)
    rec = InvariantRecord(state.n, state.t, D, E, Mx, My)
    if initial is not None:
        d, e, m = conservation_errors(rec, initial)
        rec = InvariantRecord(state.n, state.t, D, E, Mx, My, d, e, m)
    if lemmas and prev is not None and isinstance(model, SchrodingerPoisson) and model.params.beta != 0:
        l2 = lemma2_residual(prev, state, model.params)
        l3 = lemma3_residual(prev, state, model.params, tol=state.settings.mass_tol)
        rec = InvariantRecord(rec.step, rec.t, D, E, Mx, My, rec.D_err, rec.E_err, rec.M_err, l2, l3)
    return rec
