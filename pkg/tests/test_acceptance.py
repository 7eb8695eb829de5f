"""Acceptance gate: one test per criterion, each logging a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the summary block at the end
of the session lists every criterion.  The temporal runs at degree 5 dominate
the runtime (about 20 minutes on one core).
"""
import warnings

import numpy as np
import pytest

from sprelax.cosmology import (CosmoParams, cosmology_grid, gaussian_filter, homogeneous,
                               run_cosmology)
from sprelax.grid import build_grid
from sprelax.stepper import PhysParams, SolverSettings, TimeGrid, initialize, step
from sprelax.verification import (MMS_DOMAIN, DenseOracle, dense_oracle_step, run_conservation,
                                  run_spatial_eoc, run_temporal_eoc)

LEVELS = [8, 16, 32]  # h = 0.25, 0.125, 0.0625 on (-1, 1)^2
REFERENCE_R1 = {"u": [2.60203e-1, 6.58945e-2, 1.68103e-2], "v": [1.36736e-1, 3.29791e-2, 8.23356e-3]}
REFERENCE_R2 = {"u": [1.54310e-2, 2.19359e-3, 2.54266e-4], "v": [8.50485e-3, 1.31987e-3, 1.71600e-4]}
K_SWEEP = [0.04, 0.02, 0.01]
CONS = PhysParams(5.0, 5.0, 0.01)
# conservation studies tighten the complex solve; the per-step mass change is 4 Re(X^H r)
CONSERVATION_SETTINGS = SolverSettings(wave_tol=3e-15)


def _fmt(xs):
    return "[" + ", ".join("-" if x is None else f"{x:.3f}" for x in xs) + "]"


def _spatial_check(rows, ref, lo_u, hi_u, lo_v, hi_v):
    ru = [r.rate_u for r in rows[1:]]
    rv = [r.rate_v for r in rows[1:]]
    dev_u = [abs(r.e_u / t - 1) for r, t in zip(rows, ref["u"])]
    dev_v = [abs(r.e_v / t - 1) for r, t in zip(rows, ref["v"])]
    ok = (all(lo_u <= x <= hi_u for x in ru) and all(lo_v <= x <= hi_v for x in rv)
          and max(dev_u + dev_v) <= 0.10)
    detail = (f"rates u {_fmt(ru)} v {_fmt(rv)}; max deviation from reference "
              f"{100 * max(dev_u + dev_v):.2f}%")
    return ok, detail


@pytest.fixture(scope="module")
def temporal_two_stage():
    return run_temporal_eoc(K_SWEEP, r=5, h=0.0625, settings=SolverSettings(wave_tol=1e-12))


@pytest.fixture(scope="module")
def temporal_old():
    return run_temporal_eoc(K_SWEEP, r=5, h=0.0625,
                            settings=SolverSettings(wave_tol=1e-12, bootstrap="old"))


@pytest.fixture(scope="module")
def energy_sweep():
    out = {}
    for k in (0.01, 0.005, 0.0025):
        out[k] = run_conservation(64, 1, k, 3.0, CONS, settings=CONSERVATION_SETTINGS)[-1]
    return out


def test_criterion_01_spatial_eoc_r1(acceptance_log):
    rows = run_spatial_eoc(LEVELS, r=1, n_steps=2000)
    ok, detail = _spatial_check(rows, REFERENCE_R1, 1.8, 2.2, 1.8, 2.2)
    assert acceptance_log(1, ok, "spatial EOC r=1: " + detail)


def test_criterion_02_spatial_eoc_r2(acceptance_log):
    rows = run_spatial_eoc(LEVELS, r=2, n_steps=2000)
    ok, detail = _spatial_check(rows, REFERENCE_R2, 2.7, 3.2, 2.6, 3.0)
    assert acceptance_log(2, ok, "spatial EOC r=2: " + detail)


def test_criterion_03_temporal_eoc(acceptance_log, temporal_two_stage):
    rows = temporal_two_stage
    rates = [r.rate_u for r in rows[1:]] + [r.rate_v for r in rows[1:]]
    ok = all(1.9 <= x <= 2.05 for x in rates)
    assert acceptance_log(3, ok, f"temporal EOC r=5 h=0.0625: rates u "
                                 f"{_fmt(rates[:2])} v {_fmt(rates[2:])}")


def test_criterion_04_mass_conservation(acceptance_log):
    worst = {}
    for eps in (1.0, 0.1, 0.01):
        recs = run_conservation(64, 1, 0.001, 3.0, PhysParams(5.0, 5.0, eps),
                                settings=CONSERVATION_SETTINGS)
        worst[eps] = max(r.D_err for r in recs) / recs[0].D
    ok = all(v <= 1e-11 for v in worst.values())
    detail = ", ".join(f"eps={e:g}: {v:.2e}" for e, v in worst.items())
    assert acceptance_log(4, ok, f"max relative mass error over 3000 steps: {detail}")


def test_criterion_05_energy_error_order(acceptance_log, energy_sweep):
    e = [energy_sweep[k].E_err for k in (0.01, 0.005, 0.0025)]
    ratios = [e[0] / e[1], e[1] / e[2]]
    ok = all(3.6 <= q <= 4.4 for q in ratios)
    assert acceptance_log(5, ok, f"E_e^N = {e[0]:.3e}, {e[1]:.3e}, {e[2]:.3e}; "
                                 f"ratios {ratios[0]:.3f}, {ratios[1]:.3f}")


def test_criterion_06_momentum_plateau(acceptance_log, energy_sweep):
    m = [energy_sweep[k].M_err for k in (0.01, 0.005, 0.0025)]
    spread = (max(m) - min(m)) / min(m)
    ok = spread < 0.05
    assert acceptance_log(6, ok, f"M_e^N = {m[0]:.4e}, {m[1]:.4e}, {m[2]:.4e}; "
                                 f"spread {100 * spread:.2f}%")


@pytest.fixture(scope="module")
def lemma_run():
    tight = SolverSettings(mass_tol=1e-13, poisson_tol=1e-13, wave_tol=1e-13)
    return run_conservation(16, 1, 0.001, 0.02, CONS, lemmas=True, settings=tight)


def test_criterion_07_energy_identity(acceptance_log, lemma_run):
    worst = max(r.lemma2_res for r in lemma_run[1:])
    assert len(lemma_run) == 21
    assert acceptance_log(7, worst <= 1e-9, f"max energy identity residual over 20 steps "
                                            f"{worst:.2e}")


def test_criterion_08_momentum_identity(acceptance_log, lemma_run):
    worst = max(r.lemma3_res for r in lemma_run[1:])
    assert acceptance_log(8, worst <= 1e-8, f"max momentum identity residual over 20 steps "
                                            f"{worst:.2e}")


def test_criterion_09_dense_oracle(acceptance_log):
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        g = build_grid(MMS_DOMAIN, 4, 4, 2, "dirichlet")  # 49 DOFs
        assert g.n_dofs <= 100
        p = PhysParams(*rng.uniform(0.5, 5.0, size=3))
        a, b, c, d = rng.normal(size=4)
        u0 = lambda x, y: ((a + 1j * b * x) * np.exp(c * y + 1j * d * x * y)
                           * (1 - x * x) * (1 - y * y))
        nodes = np.concatenate([[0.0], np.cumsum(rng.uniform(0.005, 0.02, size=3))])
        s = initialize(g, p, TimeGrid.from_nodes(nodes), u0)
        oracle = DenseOracle(g, p)
        for _ in range(3):
            ref = dense_oracle_step(s, oracle)
            s = step(s)
            for name, val in ref.items():
                worst = max(worst, float(np.abs(val - getattr(s, name)).max()))
    assert acceptance_log(9, worst <= 1e-12, f"max field deviation from dense LU over 5 seeds "
                                             f"x 3 steps: {worst:.2e}")


def test_criterion_10_bootstrap_regression(acceptance_log, temporal_two_stage, temporal_old):
    good = [r.rate_v for r in temporal_two_stage[1:]]
    bad = [r.rate_v for r in temporal_old[1:]]
    ok = min(good) >= 1.9 and max(bad) <= 1.3
    assert acceptance_log(10, ok, f"v rates two-stage {_fmt(good)}, first-guess only {_fmt(bad)}")


def test_criterion_11_cosmology(acceptance_log):
    grid = cosmology_grid(128)
    cosmo = CosmoParams()
    with warnings.catch_warnings():
        # sigma = 0.0035 is below half the 128^2 lattice spacing
        warnings.simplefilter("ignore", RuntimeWarning)
        run = run_cosmology(grid, cosmo)
    completed = run.state.n == cosmo.steps and np.isclose(run.state.t, cosmo.tau_f)
    drift = run.mass_drift

    fixed = run_cosmology(grid, CosmoParams(steps=100, tau_f=cosmo.tau_i + 100 * cosmo.k),
                          homogeneous, frames=(), log_invariants=False)
    fixed_err = float(max(np.abs(fixed.state.U - 1).max(), np.abs(fixed.state.V_node).max()))

    final = run.frames[-1]
    filt_err = 0.0
    for fr in [gaussian_filter(final, 0.02)] + run.frames:
        filt_err = max(filt_err, abs(fr.filtered.mean() - fr.density.mean()) / fr.density.mean())
    ok = completed and drift <= 1e-10 and fixed_err <= 1e-10 and filt_err <= 1e-12
    assert acceptance_log(11, ok, f"128^2 x 1560 steps completed={completed}; mass drift "
                                  f"{drift:.2e}; homogeneous deviation {fixed_err:.2e}; "
                                  f"filter mean error {filt_err:.2e}; frames at tau "
                                  f"{[f.tau for f in run.frames]}")
