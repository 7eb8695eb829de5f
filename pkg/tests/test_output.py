import numpy as np
import pytest

from sprelax.grid import Domain, build_grid
from sprelax.invariants import InvariantRecord
from sprelax.output import (INVARIANT_COLUMNS, format_eoc_table, read_invariants_csv,
                            read_snapshot, write_eoc_csv, write_invariants_csv, write_snapshot)
from sprelax.verification import EocRow, run_conservation
from sprelax.stepper import PhysParams

HEADER = "step,t,D,E,Mx,My,D_err,E_err,M_err,lemma2_res,lemma3_res"


def test_zero_records_gives_header_only(tmp_path):
    p = write_invariants_csv([], tmp_path / "inv.csv")
    assert p.read_text() == HEADER + "\n"
    assert ",".join(INVARIANT_COLUMNS) == HEADER


def test_three_step_run_round_trips(tmp_path):
    recs = run_conservation(4, 1, 0.01, 0.03, PhysParams(5, 5, 0.1), lemmas=True)
    p = write_invariants_csv(recs, tmp_path / "inv.csv")
    lines = p.read_text().splitlines()
    assert len(lines) == 5
    back = read_invariants_csv(p)
    assert [r.D for r in back] == [r.D for r in recs]
    assert back == recs


def test_missing_values_are_empty_cells(tmp_path):
    p = write_invariants_csv([InvariantRecord(0, 0.0, 1.0, 2.0, 0.1, 0.2)], tmp_path / "a.csv")
    assert p.read_text().splitlines()[1].endswith(",,")


def test_zero_snapshot(tmp_path):
    g = build_grid(Domain(-1, 1, -1, 1), 3, 2, 2, "dirichlet")
    p = write_snapshot(tmp_path / "s.dat", g, np.zeros(g.n_dofs, complex), np.zeros(g.n_dofs), 0.0)
    head, data = read_snapshot(p)
    assert head["nx_samples"] == "4" and head["ny_samples"] == "3"
    assert data.shape == (12, 4)
    assert np.all(data == 0)


def test_snapshot_header_and_records(tmp_path):
    g = build_grid(Domain(-0.5, 0.5, -0.5, 0.5), 4, 4, 1, "periodic")
    U = np.exp(1j * g.x)
    V = g.y.copy()
    p = write_snapshot(tmp_path / "s.dat", g, U, V, 0.023, 0.02300000001, time_label="tau")
    head, data = read_snapshot(p)
    assert head["tau"] == "0.023"
    assert head["fields"] == "re_u im_u abs2_u v"
    assert head["domain"] == "-0.5 0.5 -0.5 0.5"
    assert data.shape == (16, 4)
    np.testing.assert_array_equal(data[:, 0], U.real)
    np.testing.assert_array_equal(data[:, 3], V)
    np.testing.assert_allclose(data[:, 2], 1.0, rtol=1e-15)


def test_eoc_outputs(tmp_path):
    rows = [EocRow(0.25, 0.2, 0.1), EocRow(0.125, 0.05, 0.025, 2.0, 2.0)]
    p = write_eoc_csv(rows, tmp_path / "eoc.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "size,e_u,rate_u,e_v,rate_v,flag"
    assert lines[1] == "0.25,0.20000000000000001,,0.10000000000000001,,"
    table = format_eoc_table(rows)
    assert "2.000" in table and "-" in table
