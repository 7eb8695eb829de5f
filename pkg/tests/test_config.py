from pathlib import Path

import pytest

from sprelax.config import ConfigError, load_config, parse_config
from sprelax.grid import BcKind, Domain

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.toml"))

MINIMAL = """
problem = "conservation"
[mesh]
domain = [-1.0, 1.0, -1.0, 1.0]
nx = 64
ny = 64
degree = 1
bc = "dirichlet"
[time]
t_final = 3.0
k = 0.001
[params]
alpha = 5.0
beta = 5.0
epsilon = 0.01
"""


def test_minimal_conservation_config():
    cfg = parse_config(MINIMAL)
    assert cfg.problem == "conservation"
    assert cfg.domain == Domain(-1, 1, -1, 1)
    assert (cfg.nx, cfg.ny, cfg.degree, cfg.bc) == (64, 64, 1, BcKind.DIRICHLET)
    assert cfg.steps == 3000 and cfg.k == pytest.approx(0.001)
    assert (cfg.alpha, cfg.beta, cfg.epsilon) == (5.0, 5.0, 0.01)
    assert cfg.initial.kind == "conservation"


def test_empty_input_lists_every_required_key():
    with pytest.raises(ConfigError) as exc:
        parse_config("")
    text = "\n".join(exc.value.errors)
    for key in ("problem", "mesh.domain", "mesh.nx", "mesh.ny", "mesh.degree", "mesh.bc",
                "time.t_final", "time.steps", "params.alpha", "params.beta", "params.epsilon"):
        assert f"'{key}'" in text, key


def test_cosmology_with_dirichlet_rejected():
    text = MINIMAL.replace('"conservation"', '"cosmology"').replace("t_final = 3.0",
                                                                      "t0 = 0.01\nt_final = 3.01")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert any("cosmology" in e and "periodic" in e for e in exc.value.errors)


@pytest.mark.parametrize("patch, fragment", [
    (("k = 0.001", "k = 0.0007"), "whole number"),
    (("k = 0.001", "k = 0.001\nsteps = 3000"), "only one"),
    (("beta = 5.0", "beta = 0.0"), "beta"),
    (("nx = 64", "nx = 0"), "mesh.nx"),
    (('bc = "dirichlet"', 'bc = "robin"'), "mesh.bc"),
    (("epsilon = 0.01", "epsilon = -1.0"), "params.epsilon"),
    (("[-1.0, 1.0, -1.0, 1.0]", "[1.0, -1.0, -1.0, 1.0]"), "xmin < xmax"),
    (('problem = "conservation"', 'problem = "waves"'), "problem"),
])
def test_invalid_values_rejected(patch, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace(*patch))
    assert any(fragment in e for e in exc.value.errors)


def test_invalid_toml():
    with pytest.raises(ConfigError) as exc:
        parse_config("problem = ")
    assert "TOML" in exc.value.errors[0]


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + "\n[output]\nformat = 'hdf5'\n")
    assert "unknown key 'output.format'" in exc.value.errors


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.name)
def test_repo_configs_parse(path):
    load_config(path)


def _key_lines(text):
    for i, line in enumerate(text.splitlines()):
        s = line.strip()
        if s and not s.startswith("#") and "=" in s and not s.startswith("["):
            yield i, s.split("=")[0].strip()
        elif s.startswith("[") and s.endswith("]") and not s.startswith("[["):
            yield i, s


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.name)
def test_every_renamed_key_fails(path):
    text = path.read_text()
    lines = text.splitlines()
    for i, key in _key_lines(text):
        mutated = list(lines)
        if key.startswith("["):
            mutated[i] = key[:-1] + "_x]"
        else:
            mutated[i] = lines[i].replace(key, key + "_x", 1)
        with pytest.raises(ConfigError):
            parse_config("\n".join(mutated))
