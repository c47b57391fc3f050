"""Grid functions, bilinear interpolation and composite solutions.

A :class:`CompositeSolution` is an ordered list of pieces.  A physical point
is served by the first piece whose region contains it; points in the closed
unit disk always evaluate to 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from hemker.mesh import CIRCLE_TOL, ProblemParams, TensorMesh

# slack for points that land a rounding error outside a mesh box
BOX_TOL = 1e-12


@dataclass(frozen=True)
class GridField:
    mesh: TensorMesh
    values: np.ndarray  # shape mesh.shape

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(self.mesh.shape)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __call__(self, u, v):
        return bilinear_eval(self, u, v)

    def at_physical(self, x, y):
        return bilinear_eval(self, *self.mesh.cmap.inverse(x, y))

    def contains_native(self, u, v, tol=BOX_TOL):
        u0, u1, v0, v1 = self.mesh.bbox()
        du, dv = tol * (1 + u1 - u0), tol * (1 + v1 - v0)
        return (u >= u0 - du) & (u <= u1 + du) & (v >= v0 - dv) & (v <= v1 + dv)


def _locate(nodes, q):
    i = np.searchsorted(nodes, q, side="right") - 1
    i = np.clip(i, 0, len(nodes) - 2)
    a = (q - nodes[i]) / (nodes[i + 1] - nodes[i])
    return i, np.clip(a, 0.0, 1.0)


def bilinear_eval(f: GridField, u, v):
    """Tensor-product bilinear interpolant of ``f`` at native points ``(u, v)``.

    Points outside the mesh box (beyond rounding slack) raise ``ValueError``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u, v = np.broadcast_arrays(u, v)
    if not np.all(f.contains_native(u, v)):
        bad = ~f.contains_native(u, v)
        k = np.argmax(bad.ravel())
        raise ValueError(
            f"point ({u.ravel()[k]}, {v.ravel()[k]}) outside mesh box {f.mesh.bbox()}"
        )
    i, a = _locate(f.mesh.u.nodes, u)
    j, b = _locate(f.mesh.v.nodes, v)
    V = f.values
    return (
        (1 - a) * (1 - b) * V[j, i]
        + a * (1 - b) * V[j, i + 1]
        + (1 - a) * b * V[j + 1, i]
        + a * b * V[j + 1, i + 1]
    )


@dataclass(frozen=True)
class Piece:
    name: str
    field: GridField
    owns: Callable[[np.ndarray, np.ndarray], np.ndarray]


def in_disk(x, y):
    return x * x + y * y <= 1.0 + CIRCLE_TOL


def in_domain(x, y, R=4.0, tol=1e-12):
    """Closure of the bounded domain together with the unit disk."""
    left = (x <= tol) & (x * x + y * y <= R * R * (1 + tol))
    right = (x >= -tol) & (x <= R + tol) & (np.abs(y) <= R + tol)
    return left | right


@dataclass(frozen=True)
class CompositeSolution:
    pieces: tuple
    params: ProblemParams
    label: str  # "initial", "corrected" or "sector"

    def owner(self, x, y):
        """Index of the serving piece, -1 for the disk, -2 if nothing owns the point."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        out = np.full(x.shape, -2, dtype=int)
        free = ~in_disk(x, y)
        out[~free] = -1
        for k, piece in enumerate(self.pieces):
            sel = free & piece.owns(x, y)
            out[sel] = k
            free &= ~sel
        return out

    def evaluate(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        if not np.all(in_domain(x, y, self.params.R)):
            k = np.argmax(~in_domain(x, y, self.params.R).ravel())
            raise ValueError(f"point ({x.ravel()[k]}, {y.ravel()[k]}) outside the domain")
        own = self.owner(x, y)
        if np.any(own == -2):
            k = np.argmax((own == -2).ravel())
            raise ValueError(f"no piece of the {self.label} solution owns ({x.ravel()[k]}, {y.ravel()[k]})")
        vals = np.ones(x.shape)
        for k, piece in enumerate(self.pieces):
            sel = own == k
            if sel.any():
                vals[sel] = piece.field.at_physical(x[sel], y[sel])
        return vals

    __call__ = evaluate

    def piece(self, name: str) -> Piece:
        for pc in self.pieces:
            if pc.name == name:
                return pc
        raise KeyError(name)


def eval_physical(c: CompositeSolution, x, y):
    return c.evaluate(x, y)


def trace(source, x, y):
    """Values of a composite or a single grid field at physical points."""
    if isinstance(source, GridField):
        return source.at_physical(x, y)
    return source.evaluate(x, y)


# ---------------------------------------------------------------------------
# sample sets and sup-norm differences


def _cell_centres(mesh: TensorMesh):
    uc = 0.5 * (mesh.u.nodes[1:] + mesh.u.nodes[:-1])
    vc = 0.5 * (mesh.v.nodes[1:] + mesh.v.nodes[:-1])
    U, V = np.meshgrid(uc, vc)
    return mesh.cmap.forward(U, V)


def sample_points(c: CompositeSolution, nodes: bool = True, centres: bool = False, pieces=None):
    """Physical images of the nodes (and/or cell centres) each piece actually
    serves, off the open disk.  ``pieces`` restricts to the named pieces."""
    xs, ys = [np.empty(0)], [np.empty(0)]
    for k, piece in enumerate(c.pieces):
        if pieces is not None and piece.name not in pieces:
            continue
        groups = [piece.field.mesh.physical()] if nodes else []
        if centres:
            groups.append(_cell_centres(piece.field.mesh))
        for X, Y in groups:
            X, Y = X.ravel(), Y.ravel()
            keep = (c.owner(X, Y) == k) & (X * X + Y * Y >= 1.0 - CIRCLE_TOL)
            xs.append(X[keep])
            ys.append(Y[keep])
    return np.concatenate(xs), np.concatenate(ys)


def union_samples(a: CompositeSolution, b: CompositeSolution, centres: bool = True, pieces=None):
    """Nodes of both solutions plus cell centres of the coarser one."""
    coarse = a if a.params.N <= b.params.N else b
    parts = [sample_points(a, pieces=pieces), sample_points(b, pieces=pieces)]
    if centres:
        parts.append(sample_points(coarse, nodes=False, centres=True, pieces=pieces))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def union_sup_diff(
    a: CompositeSolution,
    b: CompositeSolution,
    sample=None,
    region: Callable | None = None,
    centres: bool = True,
    return_argmax: bool = False,
):
    """Max |a - b| over the union sample set, optionally restricted to ``region``."""
    x, y = union_samples(a, b, centres) if sample is None else sample
    if region is not None:
        keep = region(x, y)
        x, y = x[keep], y[keep]
    if x.size == 0:
        return (0.0, (np.nan, np.nan)) if return_argmax else 0.0
    d = np.abs(a.evaluate(x, y) - b.evaluate(x, y))
    k = int(np.argmax(d))
    if return_argmax:
        return float(d[k]), (float(x[k]), float(y[k]))
    return float(d[k])
