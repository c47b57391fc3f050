"""CSV tables and sampled-field files.

Tables are written twice: a four-decimal file for reading next to published
tables, and a ``.full.csv`` sidecar with round-trippable floats.  Missing
cells are written as ``NA``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hemker.fields import CompositeSolution, in_disk, in_domain
from hemker.verification import ConvergenceTable

NA = "NA"
MIN_RESOLUTION = 32


def _fmt(v, full: bool) -> str:
    if v is None or not math.isfinite(v):
        return NA
    return repr(float(v)) if full else f"{v:.4f}"


def _parse(s: str) -> float:
    return math.nan if s.strip() == NA else float(s)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".full.csv")


def table_columns(t: ConvergenceTable) -> tuple[list, np.ndarray, np.ndarray | None]:
    """(N header, body, footer) as they appear in the emitted file."""
    if t.kind == "orders":
        if t.p_local is None:
            raise ValueError("order table has no orders; call orders() first")
        return list(t.n_list[:-1]), np.asarray(t.p_local, float), np.asarray(t.p_uniform, float)
    return list(t.n_list), np.asarray(t.D, float), None


def _write(path, t, full):
    ns, body, footer = table_columns(t)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eps"] + [str(n) for n in ns])
        for eps, row in zip(t.eps_list, body):
            w.writerow([repr(float(eps))] + [_fmt(v, full) for v in row])
        if footer is not None and len(t.eps_list):
            w.writerow(["p_uniform"] + [_fmt(v, full) for v in footer])


def emit_table(t: ConvergenceTable, path) -> int:
    """Write ``path`` (4 decimals) and its full-precision sidecar.

    Returns the number of epsilon rows written; an empty table still gets
    a header-only file so a caller can tell "ran, found nothing" apart from
    "never ran".
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write(path, t, full=False)
    _write(sidecar_path(path), t, full=True)
    return len(t.eps_list)


@dataclass
class ParsedTable:
    eps_list: list
    n_list: list
    values: np.ndarray
    p_uniform: np.ndarray | None


def parse_table(path) -> ParsedTable:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    ns = [int(h) for h in header[1:]]
    footer = None
    if body and body[-1][0] == "p_uniform":
        footer = np.array([_parse(s) for s in body[-1][1:]])
        body = body[:-1]
    eps = [float(r[0]) for r in body]
    vals = np.array([[_parse(s) for s in r[1:]] for r in body], float).reshape(len(body), len(ns))
    return ParsedTable(eps, ns, vals, footer)


# ---------------------------------------------------------------------------
# fields


def field_grid(R: float, resolution: int):
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be at least {MIN_RESOLUTION}, got {resolution}")
    g = np.linspace(-R, R, resolution)
    return np.meshgrid(g, g)


def sample_field(sol: CompositeSolution, resolution: int, reference: CompositeSolution | None = None):
    """Values (or errors against ``reference``) on a uniform grid over [-R, R]^2.

    Returns ``(X, Y, values, mask)``; ``mask`` is True inside the closed
    domain and values there are finite, elsewhere NaN.  The disk reads 1
    for a solution and 0 for an error.
    """
    R = sol.params.R
    X, Y = field_grid(R, resolution)
    mask = in_domain(X, Y, R)
    vals = np.full(X.shape, np.nan)
    vals[mask] = sol.evaluate(X[mask], Y[mask])
    if reference is not None:
        vals[mask] = np.abs(vals[mask] - reference.evaluate(X[mask], Y[mask]))
    disk = in_disk(X, Y)
    vals[disk] = 0.0 if reference is not None else 1.0
    return X, Y, vals, mask


def write_field_csv(path, X, Y, vals, mask):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "value"])
        for x, y, v, m in zip(X.ravel(), Y.ravel(), vals.ravel(), mask.ravel()):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v)) if m else NA])


def write_field_vtk(path, X, Y, vals, mask, title="hemker field"):
    """Legacy ASCII STRUCTURED_POINTS; points outside the domain carry mask 0 and value 0."""
    ny, nx = X.shape
    x0, y0 = float(X[0, 0]), float(Y[0, 0])
    hx, hy = float(X[0, 1]) - x0, float(Y[1, 0]) - y0
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} 1",
        f"ORIGIN {x0!r} {y0!r} 0.0",
        f"SPACING {hx!r} {hy!r} 1.0",
        f"POINT_DATA {nx * ny}",
        "SCALARS value double 1",
        "LOOKUP_TABLE default",
    ]
    lines += [repr(float(v)) if m else "0.0" for v, m in zip(vals.ravel(), mask.ravel())]
    lines += ["SCALARS mask int 1", "LOOKUP_TABLE default"]
    lines += ["1" if m else "0" for m in mask.ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def emit_field(sol: CompositeSolution, resolution: int, path, reference=None, fmt: str = "csv"):
    """Sample ``sol`` (or its error against ``reference``) and write it; returns the sample."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    X, Y, vals, mask = sample_field(sol, resolution, reference)
    if fmt == "csv":
        write_field_csv(path, X, Y, vals, mask)
    elif fmt == "vtk":
        write_field_vtk(path, X, Y, vals, mask, title=f"{sol.label} eps={sol.params.epsilon!r} N={sol.params.N}")
    else:
        raise ValueError(f"unknown field format {fmt!r}")
    return X, Y, vals, mask


def read_field_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    x = np.array([float(r[0]) for r in rows])
    y = np.array([float(r[1]) for r in rows])
    v = np.array([_parse(r[2]) for r in rows])
    return x, y, v
