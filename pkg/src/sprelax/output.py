"""Plain-text outputs: invariant logs, EOC tables and lattice snapshots.

All floats are written with 17 significant digits so a write/read cycle
reproduces every double exactly, and nothing run-dependent (dates, paths)
enters the files, so identical runs give byte-identical output.
"""
from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .grid import Grid, vertex_lattice, vertex_values
from .invariants import InvariantRecord
from .verification import EocRow

INVARIANT_COLUMNS = ("step", "t", "D", "E", "Mx", "My", "D_err", "E_err", "M_err",
                     "lemma2_res", "lemma3_res")
EOC_COLUMNS = ("size", "e_u", "rate_u", "e_v", "rate_v", "flag")
SNAPSHOT_FIELDS = ("re_u", "im_u", "abs2_u", "v")


def fmt(x: Optional[float]) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def fmt_header(x: float) -> str:
    """Shortest decimal that round-trips, so configured values are echoed verbatim."""
    return repr(float(x))


def invariant_row(rec: InvariantRecord) -> list[str]:
    return [str(rec.step)] + [fmt(v) for v in rec.as_row()[1:]]


class InvariantLog:
    """Streaming writer for ``invariants.csv`` (header written on open)."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(INVARIANT_COLUMNS)

    def write(self, rec: InvariantRecord) -> None:
        self._w.writerow(invariant_row(rec))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_invariants_csv(records: Iterable[InvariantRecord], path) -> Path:
    with InvariantLog(path) as log:
        for rec in records:
            log.write(rec)
    return Path(path)


def read_invariants_csv(path) -> list[InvariantRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != INVARIANT_COLUMNS:
            raise ValueError(f"unexpected invariants header {header}")
        for row in reader:
            vals = [None if s == "" else float(s) for s in row[1:]]
            out.append(InvariantRecord(int(row[0]), *vals))
    return out


def write_eoc_csv(rows: Sequence[EocRow], path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EOC_COLUMNS)
        for r in rows:
            w.writerow([fmt(r.size), fmt(r.e_u), fmt(r.rate_u), fmt(r.e_v), fmt(r.rate_v), r.flag])
    return Path(path)


def format_eoc_table(rows: Sequence[EocRow], label: str = "h") -> str:
    def rate(v):
        return "   -  " if v is None else f"{v:6.3f}"
    lines = [f"{label:>10}  {'err(u)':>12}  {'rate':>6}  {'err(v)':>12}  {'rate':>6}"]
    for r in rows:
        lines.append(f"{r.size:10.5g}  {r.e_u:12.5e}  {rate(r.rate_u)}  {r.e_v:12.5e}  {rate(r.rate_v)}"
                     + (f"  {r.flag}" if r.flag else ""))
    return "\n".join(lines)


def _header(nx: int, ny: int, domain, t: float, t_actual: float, fields, time_label: str) -> list[str]:
    bounds = " ".join(fmt_header(b) for b in (domain.xmin, domain.xmax, domain.ymin, domain.ymax))
    return [
        f"# nx_samples {nx}",
        f"# ny_samples {ny}",
        f"# domain {bounds}",
        f"# {time_label} {fmt_header(t)}",
        f"# {time_label}_actual {fmt_header(t_actual)}",
        "# fields " + " ".join(fields),
    ]


def snapshot_text(grid: Grid, U: np.ndarray, V: np.ndarray, t: float, t_actual: float,
                  time_label: str = "t") -> str:
    """Header plus one ``re_u im_u abs2_u v`` record per vertex, rows of constant y."""
    xs, ys = vertex_lattice(grid)
    u = vertex_values(grid, np.asarray(U, dtype=complex))
    v = vertex_values(grid, np.asarray(V, dtype=float))
    head = _header(len(xs), len(ys), grid.domain, t, t_actual, SNAPSHOT_FIELDS, time_label)
    body = [f"{fmt(a.real)} {fmt(a.imag)} {fmt(a.real * a.real + a.imag * a.imag)} {fmt(b)}"
            for a, b in zip(u.ravel(), v.ravel())]
    return "\n".join(head + body) + "\n"


def write_snapshot(path, grid: Grid, U: np.ndarray, V: np.ndarray, t: float,
                   t_actual: float | None = None, time_label: str = "t") -> Path:
    text = snapshot_text(grid, U, V, t, t if t_actual is None else t_actual, time_label)
    Path(path).write_text(text, encoding="utf-8")
    return Path(path)


def write_lattice(path, values: np.ndarray, xs, ys, t: float, t_actual: float, field: str,
                  domain, time_label: str = "t") -> Path:
    """Single-field lattice file in the snapshot layout (used for filtered densities)."""
    head = _header(len(xs), len(ys), domain, t, t_actual, (field,), time_label)
    body = [fmt(x) for x in np.asarray(values).ravel()]
    Path(path).write_text("\n".join(head + body) + "\n", encoding="utf-8")
    return Path(path)


def read_snapshot(path) -> tuple[dict, np.ndarray]:
    """Header dict (strings) and the (n_records, n_fields) data array."""
    header: dict[str, str] = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(" ")
                header[key] = val
            elif line.strip():
                rows.append([float(s) for s in line.split()])
    n_fields = len(header.get("fields", "").split())
    data = np.array(rows, dtype=float).reshape(-1, n_fields) if rows else np.zeros((0, n_fields))
    return header, data


def snapshot_name(n: int, prefix: str = "snapshot") -> str:
    return f"{prefix}_{n:06d}.dat"


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
