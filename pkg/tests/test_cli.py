import textwrap

import pytest

from sprelax.cli import main, snapshot_schedule
from sprelax.config import parse_config
from sprelax.output import read_invariants_csv, read_snapshot

SMALL = textwrap.dedent("""
    problem = "conservation"
    [mesh]
    domain = [-1.0, 1.0, -1.0, 1.0]
    nx = 6
    ny = 6
    degree = 1
    bc = "dirichlet"
    [time]
    t_final = 0.03
    steps = 3
    [params]
    alpha = 5.0
    beta = 5.0
    epsilon = 0.1
    [output]
    snapshots = [0.02]
    lemmas = true
""")


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_conservation_run_writes_outputs(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    assert main(["conservation", cfg, "--out", str(tmp_path / "o")]) == 0
    recs = read_invariants_csv(tmp_path / "o" / "invariants.csv")
    assert [r.step for r in recs] == [0, 1, 2, 3]
    assert recs[-1].lemma2_res < 1e-12
    names = sorted(p.name for p in (tmp_path / "o").glob("snapshot_*.dat"))
    assert names == ["snapshot_000000.dat", "snapshot_000002.dat", "snapshot_000003.dat"]
    head, data = read_snapshot(tmp_path / "o" / "snapshot_000002.dat")
    assert head["t"] == "0.02" and data.shape == (49, 4)


def test_identical_configs_give_identical_bytes(tmp_path):
    cfg = write(tmp_path, SMALL)
    main(["run", cfg, "--out", str(tmp_path / "a")])
    main(["run", cfg, "--out", str(tmp_path / "b")])
    for name in ("invariants.csv", "snapshot_000003.dat"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_validate_config_exit_codes(tmp_path, capsys):
    good = write(tmp_path, SMALL)
    bad = write(tmp_path, SMALL.replace("nx = 6", "nx_cells = 6"), "bad.toml")
    assert main(["validate-config", good]) == 0
    assert main(["validate-config", good, bad]) == 1
    assert "unknown key 'mesh.nx_cells'" in capsys.readouterr().err


def test_verb_problem_mismatch_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, SMALL)
    assert main(["cosmology", cfg]) == 1
    assert "expects problem 'cosmology'" in capsys.readouterr().err


def test_cosmology_dirichlet_exit_code(tmp_path, capsys):
    text = SMALL.replace('"conservation"', '"cosmology"').replace("t_final = 0.03",
                                                                    "t0 = 0.01\nt_final = 0.04")
    text = text.replace("snapshots = [0.02]", "snapshots = [0.02]\ninvariants = false")
    assert main(["run", write(tmp_path, text)]) == 1
    assert "periodic" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    text = SMALL + "[solver]\nmass_tol = 1e-30\n"
    assert main(["run", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2
    assert "stage: initial projection" in capsys.readouterr().err


def test_cosmology_run(tmp_path):
    text = textwrap.dedent("""
        problem = "cosmology"
        [mesh]
        domain = [-0.5, 0.5, -0.5, 0.5]
        nx = 8
        ny = 8
        degree = 1
        bc = "periodic"
        [time]
        t0 = 0.01
        t_final = 0.011
        steps = 20
        [params]
        beta = 1.5
        epsilon = 0.01
        [output]
        snapshots = [0.0105]
        [filter]
        sigma = 0.2
    """)
    assert main(["cosmology", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 0
    head, data = read_snapshot(tmp_path / "o" / "snapshot_000010.dat")
    assert head["tau"] == "0.0105" and data.shape == (64, 4)
    head, data = read_snapshot(tmp_path / "o" / "density_filtered_000020.dat")
    assert head["fields"] == "abs2_u_filtered" and data.shape == (64, 1)


def test_mms_run_reports_errors(tmp_path, capsys):
    text = textwrap.dedent("""
        problem = "mms"
        [mesh]
        domain = [-1.0, 1.0, -1.0, 1.0]
        nx = 4
        ny = 4
        degree = 2
        bc = "dirichlet"
        [time]
        t_final = 0.1
        steps = 4
        [params]
        alpha = 1.0
        beta = 1.0
        epsilon = 1.0
    """)
    assert main(["run", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 0
    assert "max_err_u" in capsys.readouterr().out
    assert len((tmp_path / "o" / "errors.csv").read_text().splitlines()) == 6


def test_eoc_space_verb(tmp_path, capsys):
    assert main(["eoc-space", "--degree", "1", "--levels", "2", "4", "--steps", "4",
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "err(u)" in out
    assert (tmp_path / "eoc.csv").exists()


def test_snapshot_schedule_defaults_to_first_and_last():
    cfg = parse_config(SMALL.replace("snapshots = [0.02]", "snapshots = []"))
    assert snapshot_schedule(cfg) == {0: [0.0], 3: [0.03]}
