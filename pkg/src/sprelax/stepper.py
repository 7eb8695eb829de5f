"""Relaxation Crank-Nicolson time stepping for the Schrodinger-Poisson system.

    u_t - (i eps / 2 alpha^2) Lap u + (i / eps) v u = 0,    Lap v = (beta / alpha) |u|^2

The density |u|^2 is carried by an auxiliary field Phi living at the interval
midpoints and updated by linear extrapolation, so every step is linear:

  1. Phi^{n-1/2} = ((k_{n-1}+k_n)/k_{n-1}) P_h|U^{n-1}|^2 - (k_n/k_{n-1}) Phi^{n-3/2}
  2. L V^{n-1/2} = -(beta/alpha) <Phi^{n-1/2}, phi>
  3. (M + i k_n/2 [eps/(2 alpha^2) L + P(V^{n-1/2})/eps]) U^{n-1/2} = M U^{n-1},
     U^n = 2 U^{n-1/2} - U^{n-1}
  4. V^n extrapolated from the two most recent midpoint potentials.

The first interval is bootstrapped with a provisional step so that Phi^{1/2}
is second order accurate.  The mesh is fixed for the whole run.

All fields are stored as coefficient vectors over the grid's DOFs.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assembly import (FeField, Assembler, assemble_laplace, assemble_mass, assembler_for,
                       mass_solve)
from .grid import BcKind, ConfigurationError, Grid
from .sparse_linalg import (SolverError, SparseMatrix, cg_solve, cg_solve_meanzero,
                            complex_cn_solve)

PointwiseFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
TimeFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


class NumericalError(RuntimeError):
    """Non-finite values or a failed inner solve during time stepping."""

    def __init__(self, message: str, step: int | None = None, stage: str | None = None):
        self.step = step
        self.stage = stage
        where = []
        if step is not None:
            where.append(f"step {step}")
        if stage:
            where.append(stage)
        super().__init__(f"[{', '.join(where)}] {message}" if where else message)


@dataclass(frozen=True)
class PhysParams:
    alpha: float
    beta: float
    epsilon: float

    def __post_init__(self):
        if not self.alpha > 0 or not self.epsilon > 0:
            raise ConfigurationError("alpha and epsilon must be strictly positive")


@dataclass(frozen=True)
class TimeGrid:
    """Time nodes t_0 < ... < t_N; ``steps[n-1]`` is k_n."""

    nodes: np.ndarray
    steps: np.ndarray

    @classmethod
    def uniform(cls, t0: float, t_final: float, n_steps: int) -> "TimeGrid":
        if n_steps < 0 or (n_steps > 0 and not t_final > t0):
            raise ConfigurationError("need t_final > t0 and a non-negative step count")
        k = (t_final - t0) / n_steps if n_steps else 0.0
        nodes = t0 + k * np.arange(n_steps + 1)
        if n_steps:
            nodes[-1] = t_final
        return cls(nodes, np.full(n_steps, k))

    @classmethod
    def from_nodes(cls, nodes) -> "TimeGrid":
        nodes = np.asarray(nodes, dtype=float)
        steps = np.diff(nodes)
        if np.any(steps <= 0):
            raise ConfigurationError("time nodes must be strictly increasing")
        return cls(nodes, steps)

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def k(self, n: int) -> float:
        """Step length k_n, with the convention k_0 = k_1."""
        return float(self.steps[max(n, 1) - 1])

    def t(self, n: int) -> float:
        return float(self.nodes[n])

    def t_half(self, n: int) -> float:
        """Midpoint of the n-th interval (t_{n-1} + t_n) / 2."""
        return 0.5 * (float(self.nodes[n - 1]) + float(self.nodes[n]))


@dataclass(frozen=True)
class SourceTerms:
    """Optional manufactured-solution forcing; both ``None`` for physical runs."""

    f_u: Optional[TimeFn] = None
    f_v: Optional[TimeFn] = None

    @property
    def empty(self) -> bool:
        return self.f_u is None and self.f_v is None


@dataclass(frozen=True)
class SolverSettings:
    mass_tol: float = 1e-13
    poisson_tol: float = 1e-12
    wave_tol: float = 1e-14
    # "two_stage": provisional step refines Phi^{1/2}; "old": keep the first guess
    bootstrap: str = "two_stage"

    def __post_init__(self):
        if self.bootstrap not in ("two_stage", "old"):
            raise ConfigurationError(f"unknown bootstrap mode {self.bootstrap!r}")


class Operators:
    """Grid plus the fixed mass and Laplace matrices."""

    def __init__(self, grid: Grid, M: SparseMatrix | None = None, L: SparseMatrix | None = None):
        self.grid = grid
        self.asm: Assembler = assembler_for(grid)
        self.M = assemble_mass(grid) if M is None else M
        self.L = assemble_laplace(grid) if L is None else L

    def density_load(self, U: np.ndarray) -> np.ndarray:
        """<|U|^2, phi_j> by quadrature."""
        uq = self.asm.values(U)
        return self.asm.scatter_vector(self.asm.local_load(uq.real ** 2 + uq.imag ** 2))

    def load(self, fq: np.ndarray) -> np.ndarray:
        return self.asm.scatter_vector(self.asm.local_load(fq))

    def potential_matrix(self, V: np.ndarray) -> SparseMatrix:
        return self.asm.scatter_matrix(self.asm.local_weighted_mass(self.asm.values(V)))


# ---------------------------------------------------------------------------
# models: where the coefficients and the potential equation differ

class SchrodingerPoisson:
    """The standard system with constant coefficients alpha, beta, eps."""

    def __init__(self, params: PhysParams):
        self.params = params

    def laplace_coef(self, t: float) -> float:
        p = self.params
        return p.epsilon / (2.0 * p.alpha ** 2)

    def potential_coef(self, t: float) -> float:
        return 1.0 / self.params.epsilon

    def poisson_rhs(self, ops: Operators, phi: np.ndarray, t: float,
                    sources: SourceTerms) -> np.ndarray:
        p = self.params
        b = -(p.beta / p.alpha) * (ops.M @ phi)
        if sources.f_v is not None:
            fq = sources.f_v(ops.asm.qx, ops.asm.qy, t)
            b -= ops.load(np.broadcast_to(fq, ops.asm.qx.shape))
        return b


class CosmologyModel:
    """Expanding-background variant in the time variable tau.

        u_tau - (i eps / 2 tau^{3/2}) Lap u + (i tau^{1/2} / eps) v u = 0
        Lap v = (beta / tau) (|u|^2 - 1)

    Coefficients are frozen at the interval midpoint.
    """

    def __init__(self, beta: float, epsilon: float):
        if not epsilon > 0:
            raise ConfigurationError("epsilon must be strictly positive")
        self.beta = beta
        self.epsilon = epsilon

    def laplace_coef(self, tau: float) -> float:
        return self.epsilon / (2.0 * tau ** 1.5)

    def potential_coef(self, tau: float) -> float:
        return tau ** 0.5 / self.epsilon

    def poisson_rhs(self, ops: Operators, phi: np.ndarray, tau: float,
                    sources: SourceTerms) -> np.ndarray:
        background = ops.M @ np.ones(ops.grid.n_dofs)
        return -(self.beta / tau) * (ops.M @ phi - background)


@dataclass
class BootstrapInfo:
    phi_old: np.ndarray
    V_tilde_half: np.ndarray
    U_tilde_1: np.ndarray


@dataclass
class SchemeState:
    """Rolling state after step ``n`` (all entries are coefficient vectors).

    ``phi_half``/``V_half`` hold the n-1/2 values used by the last step and
    ``*_prev`` the n-3/2 ones.  At n = 0 ``phi_next`` carries the bootstrapped
    Phi^{1/2} for the first step.
    """

    n: int
    t: float
    U: np.ndarray
    V_node: np.ndarray
    ops: Operators
    model: object
    timegrid: TimeGrid
    sources: SourceTerms = field(default_factory=SourceTerms)
    settings: SolverSettings = field(default_factory=SolverSettings)
    U_prev: Optional[np.ndarray] = None
    U_half: Optional[np.ndarray] = None
    phi_half: Optional[np.ndarray] = None
    phi_half_prev: Optional[np.ndarray] = None
    phi_next: Optional[np.ndarray] = None
    V_half: Optional[np.ndarray] = None
    V_half_prev: Optional[np.ndarray] = None
    V_node_prev: Optional[np.ndarray] = None
    P_half: Optional[SparseMatrix] = None
    bootstrap: Optional[BootstrapInfo] = None

    @property
    def grid(self) -> Grid:
        return self.ops.grid

    def field(self, name: str) -> FeField:
        return FeField(self.grid, getattr(self, name))


# ---------------------------------------------------------------------------
# stages

def _poisson(ops: Operators, model, phi: np.ndarray, t: float, sources: SourceTerms,
             settings: SolverSettings, x0: np.ndarray | None, stage: str) -> np.ndarray:
    b = model.poisson_rhs(ops, phi, t, sources)
    if ops.grid.bc is BcKind.PERIODIC:
        V, rep = cg_solve_meanzero(ops.L, b, ops.M, tol=settings.poisson_tol, x0=x0)
    else:
        V, rep = cg_solve(ops.L, b, tol=settings.poisson_tol, x0=x0)
    if not rep.converged:
        raise SolverError("potential solve did not converge", rep, stage)
    return V


def _half_point(ops: Operators, model, U_prev: np.ndarray, V_half: np.ndarray, k: float,
                t_half: float, sources: SourceTerms, settings: SolverSettings, stage: str
                ) -> tuple[np.ndarray, SparseMatrix]:
    """Solve (M + i k/2 [c_lap L + c_pot P]) X = M U^{n-1} + k/2 <f_u>, return (X, P)."""
    P = ops.potential_matrix(V_half)
    S = _combine(ops.L, 0.5 * k * model.laplace_coef(t_half), P, 0.5 * k * model.potential_coef(t_half))
    rhs = ops.M @ U_prev
    if sources.f_u is not None:
        fq = sources.f_u(ops.asm.qx, ops.asm.qy, t_half)
        rhs = rhs + 0.5 * k * ops.load(np.broadcast_to(fq, ops.asm.qx.shape).astype(complex))
    X, rep = complex_cn_solve(ops.M, S, rhs, tol=settings.wave_tol, x0=U_prev)
    if not rep.converged:
        raise SolverError("wavefunction solve did not converge", rep, stage)
    return X, P


def _combine(A: SparseMatrix, a: float, B: SparseMatrix, b: float) -> SparseMatrix:
    # matrices from one assembler share the CSR pattern; add data arrays directly
    if (A.indptr.shape == B.indptr.shape and A.indices.shape == B.indices.shape
            and np.array_equal(A.indptr, B.indptr) and np.array_equal(A.indices, B.indices)):
        out = A.copy()
        out.data = a * A.data + b * B.data
        return out
    return (a * A + b * B).tocsr()


def _check_finite(n: int, **arrays) -> None:
    for name, arr in arrays.items():
        if arr is not None and not np.all(np.isfinite(arr)):
            raise NumericalError(f"non-finite values in {name}", step=n, stage=name)


# ---------------------------------------------------------------------------
# public operations

def initialize(grid: Grid, params: PhysParams | None, timegrid: TimeGrid, u0: PointwiseFn,
               sources: SourceTerms | None = None, settings: SolverSettings | None = None,
               model=None, ops: Operators | None = None) -> SchemeState:
    """Project the initial data and bootstrap Phi^{1/2} and V^0.

    ``u0(x, y)`` is evaluated at the quadrature points.  Either ``params``
    (standard system) or ``model`` must be given.
    """
    if model is None:
        if params is None:
            raise ConfigurationError("either params or model is required")
        model = SchrodingerPoisson(params)
    sources = sources or SourceTerms()
    settings = settings or SolverSettings()
    ops = ops or Operators(grid)
    if timegrid.n_steps < 1:
        raise ConfigurationError("time grid needs at least one step")
    asm = ops.asm
    M = ops.M

    u0q = np.broadcast_to(np.asarray(u0(asm.qx, asm.qy), dtype=complex), asm.qx.shape)
    try:
        U0 = mass_solve(M, ops.load(u0q), settings.mass_tol, stage="initial projection")
        # third relaxation line with Phi^{-1/2} = |u0|^2 and k_0 = k_1
        k0 = k1 = timegrid.k(1)
        U0q = asm.values(U0)
        dens0 = U0q.real ** 2 + U0q.imag ** 2
        exact0 = u0q.real ** 2 + u0q.imag ** 2
        phi_old = mass_solve(M, ops.load(((k0 + k1) / k0) * dens0 - (k1 / k0) * exact0),
                             settings.mass_tol, stage="bootstrap phi_old")

        t0, t_half = timegrid.t(0), timegrid.t_half(1)
        V0 = _poisson(ops, model, phi_old, t0, sources, settings, None, "bootstrap V0")
        if sources.f_v is None and isinstance(model, SchrodingerPoisson):
            V_tilde = V0.copy()
        else:
            V_tilde = _poisson(ops, model, phi_old, t_half, sources, settings, V0,
                               "bootstrap V_tilde")
        if settings.bootstrap == "two_stage":
            X, _ = _half_point(ops, model, U0, V_tilde, timegrid.k(1), t_half, sources, settings,
                               "bootstrap U_tilde")
            U_tilde = 2.0 * X - U0
            phi_half = (0.5 * mass_solve(M, ops.density_load(U_tilde), settings.mass_tol,
                                         stage="bootstrap phi_half")
                        + 0.5 * phi_old)
        else:
            U_tilde = np.full_like(U0, np.nan)
            phi_half = phi_old.copy()
    except SolverError as exc:
        raise NumericalError(str(exc), step=0, stage=exc.stage) from exc

    _check_finite(0, U0=U0, phi_old=phi_old, V0=V0, phi_half=phi_half)
    return SchemeState(n=0, t=timegrid.t(0), U=U0, V_node=V0, ops=ops, model=model,
                       timegrid=timegrid, sources=sources, settings=settings,
                       phi_next=phi_half, bootstrap=BootstrapInfo(phi_old, V_tilde, U_tilde))


def step(state: SchemeState, n: int | None = None) -> SchemeState:
    """Advance from t_{n-1} to t_n; returns a new state."""
    n = state.n + 1 if n is None else n
    if n != state.n + 1:
        raise ValueError(f"state is at step {state.n}, cannot take step {n}")
    tg = state.timegrid
    if n > tg.n_steps:
        raise ValueError(f"time grid has only {tg.n_steps} steps")
    ops, model, settings, sources = state.ops, state.model, state.settings, state.sources
    k_prev, k = tg.k(n - 1), tg.k(n)
    t_half = tg.t_half(n)

    try:
        if n == 1:
            phi = state.phi_next
        else:
            # (1) relaxation update of the density at the new midpoint
            proj = mass_solve(ops.M, ops.density_load(state.U), settings.mass_tol,
                              stage="phi update", x0=state.phi_half)
            phi = ((k_prev + k) / k_prev) * proj - (k / k_prev) * state.phi_half
        # (2) midpoint potential
        V_half = _poisson(ops, model, phi, t_half, sources, settings, state.V_half,
                          "potential solve")
        # (3) midpoint wavefunction, then the nodal value
        X, P = _half_point(ops, model, state.U, V_half, k, t_half, sources, settings,
                           "wavefunction solve")
    except SolverError as exc:
        raise NumericalError(str(exc), step=n, stage=exc.stage) from exc
    U_new = 2.0 * X - state.U
    # (4) nodal potential by linear extrapolation through computed midpoint values
    if n == 1:
        V_node = 2.0 * V_half - state.V_node
    else:
        V_node = V_half + (k / (k_prev + k)) * (V_half - state.V_half)
    _check_finite(n, phi=phi, V_half=V_half, U=U_new, V_node=V_node)

    return dataclasses.replace(
        state, n=n, t=tg.t(n), U=U_new, U_prev=state.U, U_half=X,
        phi_half=phi, phi_half_prev=state.phi_half, phi_next=None,
        V_half=V_half, V_half_prev=state.V_half, V_node=V_node, V_node_prev=state.V_node,
        P_half=P)


def step_cosmology(state: SchemeState, n: int | None = None, cosmo=None) -> SchemeState:
    """One step of the expanding-background variant (periodic grid only)."""
    if state.grid.bc is not BcKind.PERIODIC:
        raise ConfigurationError("the cosmological system needs a periodic grid")
    if not isinstance(state.model, CosmologyModel):
        if cosmo is None:
            raise ConfigurationError("state was not initialised with a cosmology model")
        state = dataclasses.replace(state, model=CosmologyModel(cosmo.beta, cosmo.epsilon))
    return step(state, n)


def potential_at(state: SchemeState, t: float) -> FeField:
    """Linear interpolant of the nodal potentials on the current interval."""
    if state.n == 0 or state.V_node_prev is None:
        if not np.isclose(t, state.t, rtol=0, atol=1e-14 * max(1.0, abs(state.t))):
            raise ValueError("before the first step only t = t_0 is available")
        return FeField(state.grid, state.V_node.copy())
    tg = state.timegrid
    t0, t1 = tg.t(state.n - 1), tg.t(state.n)
    if not t0 <= t <= t1:
        raise ValueError(f"t={t} outside the current interval [{t0}, {t1}]")
    if t == t0:
        return FeField(state.grid, state.V_node_prev.copy())
    if t == t1:
        return FeField(state.grid, state.V_node.copy())
    k = t1 - t0
    return FeField(state.grid, ((t1 - t) / k) * state.V_node_prev + ((t - t0) / k) * state.V_node)
