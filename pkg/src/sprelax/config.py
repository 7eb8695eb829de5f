"""TOML run configuration with strict validation.

Every problem is described by one file; see ``docs/config.md`` for the schema.
Validation collects all problems before raising, so a user sees every
missing or unknown key at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .grid import BcKind, ConfigurationError, Domain

PROBLEMS = ("mms", "conservation", "cosmology", "custom")
INITIAL_KINDS = ("conservation", "mms", "homogeneous", "sine", "gaussian")

# section -> {key: required}; "steps"/"k" and "alpha" are handled separately
SCHEMA: dict[str, dict[str, bool]] = {
    "mesh": {"domain": True, "nx": True, "ny": True, "degree": True, "bc": True},
    "time": {"t0": False, "t_final": True, "steps": False, "k": False},
    "params": {"alpha": False, "beta": True, "epsilon": True},
    "solver": {"mass_tol": False, "poisson_tol": False, "wave_tol": False, "bootstrap": False},
    "output": {"directory": False, "snapshots": False, "invariants": False, "lemmas": False},
    "initial": {"kind": False, "amplitude": False, "phase_amplitude": False, "center": False,
                "width": False, "normalize": False},
    "filter": {"sigma": False},
}
TOP_LEVEL = {"problem"} | set(SCHEMA)


class ConfigError(ConfigurationError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class InitialSpec:
    kind: str
    amplitude: float = 0.05
    phase_amplitude: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)
    width: float = 0.1
    normalize: bool = False


@dataclass(frozen=True)
class RunConfig:
    problem: str
    domain: Domain
    nx: int
    ny: int
    degree: int
    bc: BcKind
    t0: float
    t_final: float
    steps: int
    alpha: Optional[float]
    beta: float
    epsilon: float
    mass_tol: float = 1e-13
    poisson_tol: float = 1e-12
    wave_tol: float = 1e-14
    bootstrap: str = "two_stage"
    directory: str = "output"
    snapshots: tuple = ()
    invariants: bool = True
    lemmas: bool = False
    initial: InitialSpec = field(default_factory=lambda: InitialSpec("conservation"))
    sigma: float = 0.0

    @property
    def k(self) -> float:
        return (self.t_final - self.t0) / self.steps


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def parse_config(text: str) -> RunConfig:
    """Parse and validate TOML ``text``; raises ``ConfigError`` listing all problems."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"not valid TOML: {exc}"]) from exc
    return validate(raw)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError([f"{path}: not UTF-8 ({exc})"]) from exc
    return parse_config(text)


def validate(raw: dict[str, Any]) -> RunConfig:
    errors: list[str] = []

    for key in raw:
        if key not in TOP_LEVEL:
            errors.append(f"unknown key '{key}'")
    sections: dict[str, dict] = {}
    for name, keys in SCHEMA.items():
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            errors.append(f"'{name}' must be a table")
            sec = {}
        for key in sec:
            if key not in keys:
                errors.append(f"unknown key '{name}.{key}'")
        for key, required in keys.items():
            if required and key not in sec:
                errors.append(f"missing required key '{name}.{key}'")
        sections[name] = sec
    mesh, time, params = sections["mesh"], sections["time"], sections["params"]
    solver, output, initial, filt = (sections["solver"], sections["output"], sections["initial"],
                                     sections["filter"])

    problem = raw.get("problem")
    if problem is None:
        errors.append("missing required key 'problem'")
    elif problem not in PROBLEMS:
        errors.append(f"'problem' must be one of {', '.join(PROBLEMS)}, got {problem!r}")
    if problem != "cosmology" and "alpha" not in params:
        errors.append("missing required key 'params.alpha'")
    if "steps" not in time and "k" not in time:
        errors.append("missing required key 'time.steps' (or 'time.k')")
    if "steps" in time and "k" in time:
        errors.append("give only one of 'time.steps' and 'time.k'")

    # mesh
    domain = None
    if "domain" in mesh:
        d = mesh["domain"]
        if (not isinstance(d, list) or len(d) != 4 or not all(_num(v) for v in d)):
            errors.append("'mesh.domain' must be [xmin, xmax, ymin, ymax]")
        elif not (d[0] < d[1] and d[2] < d[3]):
            errors.append("'mesh.domain' needs xmin < xmax and ymin < ymax")
        else:
            domain = Domain(*(float(v) for v in d))
    for key in ("nx", "ny", "degree"):
        if key in mesh and not (_int(mesh[key]) and mesh[key] >= 1):
            errors.append(f"'mesh.{key}' must be a positive integer")
    bc = None
    if "bc" in mesh:
        try:
            bc = BcKind.parse(mesh["bc"])
        except (ValueError, TypeError):
            errors.append(f"'mesh.bc' must be 'dirichlet' or 'periodic', got {mesh['bc']!r}")
    if bc is BcKind.PERIODIC:
        for key in ("nx", "ny"):
            if _int(mesh.get(key)) and mesh[key] < 2:
                errors.append(f"'mesh.{key}' must be at least 2 for periodic boundaries")

    # time
    t0 = time.get("t0", 0.0)
    t_final = time.get("t_final")
    steps = None
    if not _num(t0):
        errors.append("'time.t0' must be a number")
    if t_final is not None and not _num(t_final):
        errors.append("'time.t_final' must be a number")
    elif _num(t0) and _num(t_final) and not t_final > t0:
        errors.append("'time.t_final' must exceed 'time.t0'")
    if "steps" in time:
        if not (_int(time["steps"]) and time["steps"] >= 1):
            errors.append("'time.steps' must be a positive integer")
        else:
            steps = time["steps"]
    elif "k" in time:
        k = time["k"]
        if not (_num(k) and k > 0):
            errors.append("'time.k' must be a positive number")
        elif _num(t0) and _num(t_final) and t_final > t0:
            n = (t_final - t0) / k
            steps = int(round(n))
            if steps < 1 or abs(n - steps) > 1e-9 * max(1.0, n):
                errors.append("'time.k' must divide t_final - t0 into a whole number of steps")

    # params
    for key in ("alpha", "epsilon"):
        if key in params and not (_num(params[key]) and params[key] > 0):
            errors.append(f"'params.{key}' must be a positive number")
    if "beta" in params and not _num(params["beta"]):
        errors.append("'params.beta' must be a number")

    # solver
    for key in ("mass_tol", "poisson_tol", "wave_tol"):
        if key in solver and not (_num(solver[key]) and 0 < solver[key] < 1):
            errors.append(f"'solver.{key}' must lie in (0, 1)")
    if solver.get("bootstrap", "two_stage") not in ("two_stage", "old"):
        errors.append("'solver.bootstrap' must be 'two_stage' or 'old'")

    # output
    if "directory" in output and not isinstance(output["directory"], str):
        errors.append("'output.directory' must be a string")
    snaps = output.get("snapshots", [])
    if not (isinstance(snaps, list) and all(_num(s) for s in snaps)):
        errors.append("'output.snapshots' must be a list of times")
        snaps = []
    elif _num(t0) and _num(t_final):
        for s in snaps:
            if not t0 - 1e-12 <= s <= t_final + 1e-12:
                errors.append(f"snapshot time {s} outside [{t0}, {t_final}]")
    for key in ("invariants", "lemmas"):
        if key in output and not isinstance(output[key], bool):
            errors.append(f"'output.{key}' must be true or false")
    log_inv = output.get("invariants", True)
    if log_inv is True and problem != "cosmology" and params.get("beta") == 0:
        errors.append("energy logging needs 'params.beta' != 0 (set output.invariants = false)")

    # initial data
    default_kind = {"mms": "mms", "cosmology": "sine"}.get(problem, "conservation")
    kind = initial.get("kind", default_kind)
    if kind not in INITIAL_KINDS:
        errors.append(f"'initial.kind' must be one of {', '.join(INITIAL_KINDS)}, got {kind!r}")
    for key in ("amplitude", "phase_amplitude", "width"):
        if key in initial and not _num(initial[key]):
            errors.append(f"'initial.{key}' must be a number")
    if "width" in initial and _num(initial["width"]) and initial["width"] <= 0:
        errors.append("'initial.width' must be positive")
    center = initial.get("center", [0.0, 0.0])
    if not (isinstance(center, list) and len(center) == 2 and all(_num(c) for c in center)):
        errors.append("'initial.center' must be [x, y]")
        center = [0.0, 0.0]
    if "normalize" in initial and not isinstance(initial["normalize"], bool):
        errors.append("'initial.normalize' must be true or false")
    if kind == "sine" and _num(initial.get("amplitude", 0.05)) and not 2 * abs(initial.get("amplitude", 0.05)) < 1:
        errors.append("'initial.amplitude' must satisfy 2|A| < 1 for a positive density")

    sigma = filt.get("sigma", 0.0)
    if not (_num(sigma) and sigma >= 0):
        errors.append("'filter.sigma' must be a non-negative number")

    # cross-section consistency
    if problem == "cosmology":
        if bc is BcKind.DIRICHLET:
            errors.append("problem 'cosmology' requires mesh.bc = 'periodic' (got 'dirichlet')")
        if _num(t0) and t0 <= 0:
            errors.append("problem 'cosmology' needs time.t0 > 0 (tau_i)")
    if problem == "mms":
        if bc is BcKind.PERIODIC:
            errors.append("problem 'mms' requires mesh.bc = 'dirichlet'")
        if domain is not None and domain != Domain(-1.0, 1.0, -1.0, 1.0):
            errors.append("problem 'mms' is defined on mesh.domain = [-1, 1, -1, 1]")
    if errors:
        raise ConfigError(errors)

    return RunConfig(
        problem=problem, domain=domain, nx=mesh["nx"], ny=mesh["ny"], degree=mesh["degree"],
        bc=bc, t0=float(t0), t_final=float(t_final), steps=steps,
        alpha=float(params["alpha"]) if "alpha" in params else None,
        beta=float(params["beta"]), epsilon=float(params["epsilon"]),
        mass_tol=float(solver.get("mass_tol", 1e-13)),
        poisson_tol=float(solver.get("poisson_tol", 1e-12)),
        wave_tol=float(solver.get("wave_tol", 1e-14)),
        bootstrap=solver.get("bootstrap", "two_stage"),
        directory=output.get("directory", "output"),
        snapshots=tuple(float(s) for s in snaps),
        invariants=log_inv, lemmas=output.get("lemmas", False),
        initial=InitialSpec(kind, float(initial.get("amplitude", 0.05)),
                            float(initial.get("phase_amplitude", 0.0)),
                            (float(center[0]), float(center[1])),
                            float(initial.get("width", 0.1)),
                                initial.get("normalize", problem == "cosmology")),
        sigma=float(sigma),
    )
