"""Command line entry point and config-driven run orchestration.

    sprelax run CONFIG              run whatever problem the config describes
    sprelax conservation CONFIG     conservation / custom runs with invariant logging
    sprelax cosmology CONFIG        expanding-background run with density frames
    sprelax eoc-space ...           spatial convergence table
    sprelax eoc-time ...            temporal convergence table
    sprelax validate-config FILE..  check configs without running

Exit status: 0 on success, 1 for configuration errors, 2 for numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import output
from .config import ConfigError, RunConfig, load_config
from .cosmology import CosmoParams, homogeneous, normalized, run_cosmology, sine_perturbation
from .grid import ConfigurationError, Grid, build_grid
from .invariants import record
from .sparse_linalg import SolverError
from .stepper import (NumericalError, PhysParams, SolverSettings, TimeGrid, initialize, step)
from .verification import (MmsCase, conservation_initial, l2_error, run_spatial_eoc,
                           run_temporal_eoc)

log = logging.getLogger("sprelax")


# ---------------------------------------------------------------------------
# initial data

def initial_function(cfg: RunConfig) -> Callable:
    init = cfg.initial
    d = cfg.domain
    if init.kind == "conservation":
        u0 = conservation_initial
    elif init.kind == "mms":
        u0 = lambda x, y: MmsCase().u(x, y, cfg.t0)
    elif init.kind == "homogeneous":
        u0 = homogeneous
    elif init.kind == "sine":
        period = d.xmax - d.xmin
        w = 2.0 * np.pi / period
        phase = None
        if init.phase_amplitude:
            pa = init.phase_amplitude
            phase = lambda x, y: pa * (np.sin(w * x) + np.sin(w * y))
        u0 = sine_perturbation(init.amplitude, cfg.epsilon, phase, period)
    elif init.kind == "gaussian":
        cx, cy = init.center
        s2 = init.width ** 2
        u0 = lambda x, y: np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * s2)) + 0j
    else:  # validated earlier
        raise ConfigurationError(f"unknown initial kind {init.kind!r}")
    return u0


def settings_of(cfg: RunConfig) -> SolverSettings:
    return SolverSettings(cfg.mass_tol, cfg.poisson_tol, cfg.wave_tol, cfg.bootstrap)


def grid_of(cfg: RunConfig) -> Grid:
    return build_grid(cfg.domain, cfg.nx, cfg.ny, cfg.degree, cfg.bc)


def snapshot_schedule(cfg: RunConfig) -> dict[int, list[float]]:
    """Step index -> requested times; first and last node are always included."""
    out: dict[int, list[float]] = {0: [cfg.t0], cfg.steps: [cfg.t_final]}
    for t in cfg.snapshots:
        n = min(max(int(round((t - cfg.t0) / cfg.k)), 0), cfg.steps)
        out.setdefault(n, [])
        if t not in out[n]:
            out[n].append(t)
    return out


# ---------------------------------------------------------------------------
# runs

@dataclass
class RunSummary:
    problem: str
    directory: Path
    steps: int
    files: list = field(default_factory=list)
    info: dict = field(default_factory=dict)


def run_config(cfg: RunConfig, directory: str | Path | None = None) -> RunSummary:
    outdir = output.ensure_dir(directory or cfg.directory)
    if cfg.problem == "cosmology":
        return _run_cosmology(cfg, outdir)
    return _run_standard(cfg, outdir)


def _write_snapshots(summary, outdir, schedule, state, label="t"):
    for t in schedule.get(state.n, ()):
        name = output.snapshot_name(state.n) if len(schedule[state.n]) == 1 else \
            output.snapshot_name(state.n).replace(".dat", f"_{output.fmt(t)}.dat")
        path = output.write_snapshot(outdir / name, state.grid, state.U, state.V_node, t, state.t, label)
        summary.files.append(path)


def _run_standard(cfg: RunConfig, outdir: Path) -> RunSummary:
    grid = grid_of(cfg)
    params = PhysParams(cfg.alpha, cfg.beta, cfg.epsilon)
    tg = TimeGrid.uniform(cfg.t0, cfg.t_final, cfg.steps)
    mms = cfg.problem == "mms"
    case = MmsCase(params=params, t_final=cfg.t_final)
    sources = case.sources() if mms else None
    state = initialize(grid, params, tg, initial_function(cfg), sources=sources,
                       settings=settings_of(cfg))
    summary = RunSummary(cfg.problem, outdir, cfg.steps)
    schedule = snapshot_schedule(cfg)

    inv_log = err_fh = err_w = None
    if cfg.invariants and not mms:
        inv_log = output.InvariantLog(outdir / "invariants.csv")
        summary.files.append(inv_log.path)
    if mms:
        err_fh = open(outdir / "errors.csv", "w", newline="", encoding="utf-8")
        err_w = csv.writer(err_fh, lineterminator="\n")
        err_w.writerow(["step", "t", "err_u", "err_v"])
        summary.files.append(outdir / "errors.csv")
    first = None
    worst = [0.0, 0.0]
    try:
        prev = None
        while True:
            if inv_log is not None:
                rec = record(state, first, prev, lemmas=cfg.lemmas)
                first = first or rec
                inv_log.write(rec)
            if err_w is not None:
                t = state.t
                eu = l2_error(grid, state.U, lambda x, y: case.u(x, y, t))
                ev = l2_error(grid, state.V_node, lambda x, y: case.v(x, y, t))
                worst = [max(worst[0], eu), max(worst[1], ev)]
                err_w.writerow([state.n, output.fmt(t), output.fmt(eu), output.fmt(ev)])
            _write_snapshots(summary, outdir, schedule, state)
            if state.n == cfg.steps:
                break
            prev, state = state, step(state)
            if state.n % max(1, cfg.steps // 10) == 0:
                log.info("step %d / %d  t = %.6g", state.n, cfg.steps, state.t)
    finally:
        if inv_log is not None:
            inv_log.close()
        if err_fh is not None:
            err_fh.close()
    if mms:
        summary.info.update(max_err_u=worst[0], max_err_v=worst[1])
    if first is not None:
        summary.info.update(D0=first.D, E0=first.E)
    return summary


def _run_cosmology(cfg: RunConfig, outdir: Path) -> RunSummary:
    grid = grid_of(cfg)
    cosmo = CosmoParams(cfg.t0, cfg.t_final, cfg.beta, cfg.epsilon, cfg.steps, cfg.sigma)
    summary = RunSummary("cosmology", outdir, cfg.steps)
    schedule = snapshot_schedule(cfg)
    frame_times = sorted({t for ts in schedule.values() for t in ts})
    inv_log = output.InvariantLog(outdir / "invariants.csv") if cfg.invariants else None
    if inv_log is not None:
        summary.files.append(inv_log.path)

    def on_step(state, rec):
        if inv_log is not None and rec is not None:
            inv_log.write(rec)
        _write_snapshots(summary, outdir, schedule, state, label="tau")
        if state.n and state.n % max(1, cfg.steps // 10) == 0:
            log.info("step %d / %d  tau = %.6g", state.n, cfg.steps, state.t)

    try:
        run = run_cosmology(grid, cosmo, initial_function(cfg), frames=frame_times,
                            normalize=cfg.initial.normalize, settings=settings_of(cfg),
                            log_invariants=cfg.invariants, filter_frames=cfg.sigma > 0,
                            callback=on_step)
    finally:
        if inv_log is not None:
            inv_log.close()
    for fr in run.frames:
        if fr.filtered is None:
            continue
        n = int(round((fr.tau_actual - cfg.t0) / cfg.k))
        name = output.snapshot_name(n, "density_filtered")
        if sum(1 for f in run.frames if f.tau_actual == fr.tau_actual) > 1:
            name = name.replace(".dat", f"_{output.fmt(fr.tau)}.dat")
        summary.files.append(output.write_lattice(outdir / name, fr.filtered, fr.x, fr.y, fr.tau,
                                                  fr.tau_actual, "abs2_u_filtered", grid.domain,
                                                  "tau"))
    if run.records:
        summary.info.update(mass_drift=run.mass_drift)
    return summary


# ---------------------------------------------------------------------------
# argument parsing

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sprelax", description="Relaxation Crank-Nicolson "
                                "finite element solver for the Schrodinger-Poisson system.")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="verb", required=True)

    for verb, text in (("run", "run the problem described by a config"),
                       ("conservation", "conservation or custom run with invariant logging"),
                       ("cosmology", "expanding-background run")):
        sp = sub.add_parser(verb, help=text)
        sp.add_argument("config")
        sp.add_argument("--out", help="output directory (overrides output.directory)")

    sp = sub.add_parser("validate-config", help="check configs without running")
    sp.add_argument("configs", nargs="+")

    sp = sub.add_parser("eoc-space", help="spatial convergence on the manufactured solution")
    sp.add_argument("--degree", type=int, default=1)
    sp.add_argument("--levels", type=int, nargs="+", default=[8, 16, 32],
                    help="cells per axis on (-1, 1)^2")
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--out")

    sp = sub.add_parser("eoc-time", help="temporal convergence on the manufactured solution")
    sp.add_argument("--degree", type=int, default=5)
    sp.add_argument("--h", type=float, default=0.0625)
    sp.add_argument("--k", type=float, nargs="+", default=[0.04, 0.02, 0.01])
    sp.add_argument("--bootstrap", choices=("two_stage", "old"), default="two_stage")
    sp.add_argument("--wave-tol", type=float, default=1e-12)
    sp.add_argument("--out")
    return p


def _eoc(args) -> int:
    if args.verb == "eoc-space":
        if args.degree < 1 or args.steps < 1 or min(args.levels) < 1:
            raise ConfigurationError("degree, steps and levels must be positive")
        rows = run_spatial_eoc(args.levels, args.degree, args.steps)
        label = "h"
    else:
        if args.degree < 1 or args.h <= 0 or min(args.k) <= 0:
            raise ConfigurationError("degree, h and k must be positive")
        settings = SolverSettings(wave_tol=args.wave_tol, bootstrap=args.bootstrap)
        rows = run_temporal_eoc(args.k, args.degree, args.h, settings=settings)
        label = "k"
    print(output.format_eoc_table(rows, label))
    if args.out:
        path = output.write_eoc_csv(rows, output.ensure_dir(args.out) / "eoc.csv")
        print(f"wrote {path}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.verb == "validate-config":
            bad = 0
            for path in args.configs:
                try:
                    cfg = load_config(path)
                    print(f"{path}: ok ({cfg.problem}, {cfg.nx}x{cfg.ny}, r={cfg.degree}, "
                          f"{cfg.steps} steps)")
                except (ConfigError, OSError) as exc:
                    bad += 1
                    print(f"{path}: {exc}", file=sys.stderr)
            return 1 if bad else 0
        if args.verb in ("eoc-space", "eoc-time"):
            return _eoc(args)

        cfg = load_config(args.config)
        if args.verb == "conservation" and cfg.problem not in ("conservation", "custom"):
            raise ConfigError([f"'conservation' expects problem 'conservation' or 'custom', "
                               f"got {cfg.problem!r}"])
        if args.verb == "cosmology" and cfg.problem != "cosmology":
            raise ConfigError([f"'cosmology' expects problem 'cosmology', got {cfg.problem!r}"])
        summary = run_config(cfg, args.out)
        print(f"{summary.problem}: {summary.steps} steps, output in {summary.directory}")
        for key, val in summary.info.items():
            print(f"  {key} = {val:.6e}")
        return 0
    except (ConfigurationError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure [stage: {exc.stage or 'unknown'}]: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"numerical failure [stage: {exc.stage or 'unknown'}]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
