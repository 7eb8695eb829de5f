"""Expanding-background runs on a periodic box and density post-processing.

The system in the time variable tau is

    u_tau - (i eps / 2 tau^{3/2}) Lap u + (i tau^{1/2} / eps) v u = 0,
    Lap v = (beta / tau) (|u|^2 - 1),

so a uniform density |u|^2 = 1 is a stationary state with v = 0.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .assembly import assembler_for
from .grid import BcKind, ConfigurationError, Domain, Grid, build_grid, vertex_lattice, vertex_values
from .invariants import InvariantRecord, record
from .stepper import (CosmologyModel, SchemeState, SolverSettings, TimeGrid, initialize,
                      step_cosmology)

COSMO_DOMAIN = Domain(-0.5, 0.5, -0.5, 0.5)
DEFAULT_FRAMES = (0.023, 0.033, 0.088)


@dataclass(frozen=True)
class CosmoParams:
    tau_i: float = 0.01
    tau_f: float = 0.088
    beta: float = 1.5
    epsilon: float = 6e-5
    steps: int = 1560
    sigma: float = 0.0035

    def __post_init__(self):
        if not 0 < self.tau_i < self.tau_f:
            raise ConfigurationError("need 0 < tau_i < tau_f")
        if self.sigma < 0:
            raise ConfigurationError("sigma must be non-negative")
        if self.steps < 1:
            raise ConfigurationError("need at least one step")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be strictly positive")

    @property
    def k(self) -> float:
        return (self.tau_f - self.tau_i) / self.steps

    def timegrid(self) -> TimeGrid:
        return TimeGrid.uniform(self.tau_i, self.tau_f, self.steps)


def cosmology_grid(nx: int = 128, r: int = 1, domain: Domain = COSMO_DOMAIN) -> Grid:
    return build_grid(domain, nx, nx, r, BcKind.PERIODIC)


def sine_perturbation(amplitude: float = 0.05, epsilon: float = 6e-5,
                      phase: Callable | None = None, period: float = 1.0) -> Callable:
    """u0 = (1 + A [cos(2 pi x / P) + cos(2 pi y / P)])^{1/2} exp(i phi0(x, y) / eps).

    A generic smooth over-density used as the default start; not a reproduction
    of any published initial data.  ``phase`` defaults to zero.
    """
    if not 0 <= 2 * abs(amplitude) < 1:
        raise ConfigurationError("need 2|A| < 1 for a positive density")
    w = 2.0 * np.pi / period

    def u0(x, y):
        rho = 1.0 + amplitude * (np.cos(w * x) + np.cos(w * y))
        amp = np.sqrt(rho)
        if phase is None:
            return amp + 0j
        return amp * np.exp(1j * np.asarray(phase(x, y)) / epsilon)

    return u0


def homogeneous(x, y):
    return np.ones(np.broadcast(x, y).shape, dtype=complex)


def normalized(u0: Callable, grid: Grid) -> Callable:
    """Rescale ``u0`` so that the quadrature mean of |u0|^2 over the box is one."""
    asm = assembler_for(grid)
    q = np.broadcast_to(np.asarray(u0(asm.qx, asm.qy)), asm.qx.shape)
    total = asm.integrate(np.abs(q) ** 2)
    if total <= 0:
        raise ConfigurationError("initial data has zero mass")
    s = math.sqrt(grid.domain.area / total)
    return lambda x, y: s * np.asarray(u0(x, y))


# ---------------------------------------------------------------------------
# density frames and filtering

@dataclass
class DensityFrame:
    tau: float                 # requested time stamp
    tau_actual: float          # time node the frame was taken at
    x: np.ndarray
    y: np.ndarray
    density: np.ndarray        # (ny, nx) |U|^2 at the vertex lattice
    filtered: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.density.shape


def frame_from_state(state: SchemeState, tau: float | None = None) -> DensityFrame:
    xs, ys = vertex_lattice(state.grid)
    u = vertex_values(state.grid, state.U)
    return DensityFrame(state.t if tau is None else tau, state.t, xs, ys, np.abs(u) ** 2)


def gaussian_kernel(sigma: float, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and weights of the sampled Gaussian truncated at 4 sigma, summing to one."""
    m = int(math.ceil(4.0 * sigma / spacing))
    offsets = np.arange(-m, m + 1)
    w = np.exp(-0.5 * (offsets * spacing / sigma) ** 2)
    return offsets, w / w.sum()


def _periodic_convolve(a: np.ndarray, sigma: float, spacing: float, axis: int) -> np.ndarray:
    offsets, w = gaussian_kernel(sigma, spacing)
    out = np.zeros_like(a, dtype=float)
    for j, wj in zip(offsets, w):
        out += wj * np.roll(a, int(j), axis=axis)
    return out


def gaussian_filter_array(a: np.ndarray, sigma: float, dx: float, dy: float) -> np.ndarray:
    """Separable periodic Gaussian smoothing of a (ny, nx) lattice array."""
    a = np.asarray(a, dtype=float)
    if sigma == 0:
        return a.copy()
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma < 0.5 * min(dx, dy):
        warnings.warn(f"filter width {sigma:g} is below half the lattice spacing; "
                      "the filter is close to the identity", RuntimeWarning, stacklevel=2)
    return _periodic_convolve(_periodic_convolve(a, sigma, dx, axis=1), sigma, dy, axis=0)


def gaussian_filter(frame: DensityFrame, sigma: float) -> DensityFrame:
    """Return a copy of ``frame`` with ``filtered`` set (periodic lattice assumed)."""
    dx = frame.x[1] - frame.x[0] if len(frame.x) > 1 else 1.0
    dy = frame.y[1] - frame.y[0] if len(frame.y) > 1 else 1.0
    out = DensityFrame(frame.tau, frame.tau_actual, frame.x, frame.y, frame.density)
    out.filtered = gaussian_filter_array(frame.density, sigma, dx, dy)
    return out


# ---------------------------------------------------------------------------
# driver

@dataclass
class CosmoRun:
    state: SchemeState
    frames: list = field(default_factory=list)
    records: list = field(default_factory=list)

    @property
    def mass_drift(self) -> float:
        """max_n |D^n - D^0| / D^0 over the logged records."""
        d0 = self.records[0].D
        return max(abs(r.D - d0) for r in self.records) / d0


def frame_steps(cosmo: CosmoParams, taus: Sequence[float]) -> dict[int, list[float]]:
    """Map each requested tau to the nearest time node index."""
    out: dict[int, list[float]] = {}
    for tau in taus:
        if not cosmo.tau_i - 1e-12 <= tau <= cosmo.tau_f + 1e-12:
            raise ConfigurationError(f"frame time {tau} outside [{cosmo.tau_i}, {cosmo.tau_f}]")
        n = int(round((tau - cosmo.tau_i) / cosmo.k))
        out.setdefault(min(max(n, 0), cosmo.steps), []).append(float(tau))
    return out


def run_cosmology(grid: Grid, cosmo: CosmoParams, u0: Callable | None = None,
                  frames: Sequence[float] = DEFAULT_FRAMES, normalize: bool = True,
                  settings: SolverSettings | None = None, log_invariants: bool = True,
                  filter_frames: bool = True,
                  callback: Callable[[SchemeState, Optional[InvariantRecord]], None] | None = None
                  ) -> CosmoRun:
    """Advance the expanding-background system from tau_i to tau_f.

    Density frames are collected at the time nodes nearest to ``frames`` and,
    when ``filter_frames`` is set, smoothed with width ``cosmo.sigma``.
    """
    if grid.bc is not BcKind.PERIODIC:
        raise ConfigurationError("the cosmological system needs a periodic grid")
    if u0 is None:
        u0 = sine_perturbation(epsilon=cosmo.epsilon)
    if normalize:
        u0 = normalized(u0, grid)
    model = CosmologyModel(cosmo.beta, cosmo.epsilon)
    state = initialize(grid, None, cosmo.timegrid(), u0, settings=settings, model=model)
    wanted = frame_steps(cosmo, frames)
    run = CosmoRun(state)

    def visit(s: SchemeState):
        rec = None
        if log_invariants:
            rec = record(s, run.records[0] if run.records else None)
            run.records.append(rec)
        for tau in wanted.get(s.n, ()):
            fr = frame_from_state(s, tau)
            run.frames.append(gaussian_filter(fr, cosmo.sigma) if filter_frames else fr)
        if callback:
            callback(s, rec)

    visit(state)
    for _ in range(cosmo.steps):
        state = step_cosmology(state)
        visit(state)
    run.state = state
    return run
