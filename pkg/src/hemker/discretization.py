"""Upwind finite-difference systems for the four stages.

Every assembler works on a full stencil table ``C[(di, dj)]`` of shape
``mesh.shape``: interior coefficients are computed in bulk, boundary rows are
then overwritten according to ``mesh.mask``.  Each row is finally divided by
its diagonal entry, which keeps the sign pattern and makes residuals
comparable across stages and values of epsilon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from hemker.mesh import CoordSystem, NodeKind, ProblemParams, TensorMesh

OFFSETS = [(di, dj) for dj in (-1, 0, 1) for di in (-1, 0, 1)]

BoundaryData = Union[Callable[[np.ndarray, np.ndarray], np.ndarray], np.ndarray, float]


class StabilityError(ValueError):
    """Raised when the patch width breaks the M-matrix condition."""


@dataclass(frozen=True)
class StencilRow:
    center_index: int
    entries: list  # (node id, coefficient)
    rhs: float
    kind: NodeKind


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    kinds: np.ndarray  # NodeKind code per unknown
    mesh: TensorMesh | None = None

    @property
    def unknown_count(self) -> int:
        return self.matrix.shape[0]

    def row(self, k: int) -> StencilRow:
        lo, hi = self.matrix.indptr[k], self.matrix.indptr[k + 1]
        entries = list(zip(self.matrix.indices[lo:hi].tolist(), self.matrix.data[lo:hi].tolist()))
        return StencilRow(k, entries, float(self.rhs[k]), NodeKind(int(self.kinds[k])))

    def stencil(self, i: int, j: int) -> dict:
        """Coefficients of the row at node (i, j) keyed by neighbour offset."""
        nu = self.mesh.shape[1]
        out = {}
        for col, val in self.row(j * nu + i).entries:
            out[(col % nu - i, col // nu - j)] = val
        return out

    @property
    def rows(self):
        return [self.row(k) for k in range(self.unknown_count)]


def upwind_first(b, backward_diff, forward_diff):
    """``b`` times the upwinded first difference: ``2bD = (b-|b|)D+ + (b+|b|)D-``."""
    b = np.asarray(b, dtype=float)
    return 0.5 * ((b - np.abs(b)) * forward_diff + (b + np.abs(b)) * backward_diff)


# ---------------------------------------------------------------------------
# stencil helpers


def _table(mesh):
    return {off: np.zeros(mesh.shape) for off in OFFSETS}


def _steps(nodes):
    """Backward and forward steps at interior nodes, broadcastable."""
    h = np.diff(nodes)
    return h[:-1], h[1:]


def _add_second(C, coef, hm, hp, axis):
    """Add ``-coef * delta^2`` along ``axis`` (0 = first coordinate) to interior rows."""
    cp = 2.0 / (hp * (hm + hp))
    cm = 2.0 / (hm * (hm + hp))
    plus, minus = ((1, 0), (-1, 0)) if axis == 0 else ((0, 1), (0, -1))
    C[plus][1:-1, 1:-1] -= coef * cp
    C[minus][1:-1, 1:-1] -= coef * cm
    C[(0, 0)][1:-1, 1:-1] += coef * (cp + cm)


def _add_upwind(C, b, hm, hp, axis):
    """Add ``b D^{+-}`` along ``axis`` to interior rows."""
    bp = 0.5 * (b + np.abs(b))
    bn = 0.5 * (b - np.abs(b))
    plus, minus = ((1, 0), (-1, 0)) if axis == 0 else ((0, 1), (0, -1))
    C[minus][1:-1, 1:-1] -= bp / hm
    C[plus][1:-1, 1:-1] += bn / hp
    C[(0, 0)][1:-1, 1:-1] += bp / hm - bn / hp


def _clear(C, sel):
    for arr in C.values():
        arr[sel] = 0.0


def _set_dirichlet(C, rhs, sel, value):
    _clear(C, sel)
    C[(0, 0)][sel] = 1.0
    rhs[sel] = value[sel] if isinstance(value, np.ndarray) else value


def _set_one_sided(C, sel, off):
    """Row ``U(node) - U(node + off) = 0`` (a scaled one-sided derivative)."""
    _clear(C, sel)
    C[(0, 0)][sel] = 1.0
    C[off][sel] = -1.0


def _boundary_values(mesh, data: BoundaryData, sel) -> np.ndarray:
    vals = np.full(mesh.shape, np.nan)
    if callable(data):
        X, Y = mesh.physical()
        vals[sel] = np.asarray(data(X[sel], Y[sel]), dtype=float)
    elif np.ndim(data) == 0:
        vals[sel] = float(data)
    else:
        data = np.asarray(data, dtype=float)
        if data.shape != mesh.shape:
            raise ValueError(f"boundary array has shape {data.shape}, mesh is {mesh.shape}")
        vals[sel] = data[sel]
    bad = sel & ~np.isfinite(vals)
    if bad.any():
        j, i = np.argwhere(bad)[0]
        raise ValueError(f"missing boundary value at node (i={i}, j={j})")
    return vals


def _finish(C, rhs, mesh) -> LinearSystem:
    nv, nu = mesh.shape
    idx = np.arange(nv * nu).reshape(nv, nu)
    diag = C[(0, 0)]
    if np.any(diag <= 0):
        j, i = np.argwhere(diag <= 0)[0]
        raise ValueError(f"non-positive diagonal at node (i={i}, j={j})")
    rows, cols, vals = [], [], []
    for (di, dj), arr in C.items():
        nz = arr != 0.0
        if not nz.any():
            continue
        jj, ii = np.nonzero(nz)
        if np.any((ii + di < 0) | (ii + di >= nu) | (jj + dj < 0) | (jj + dj >= nv)):
            raise AssertionError(f"stencil offset {(di, dj)} leaves the mesh")
        rows.append(idx[jj, ii])
        cols.append(idx[jj + dj, ii + di])
        vals.append(arr[jj, ii] / diag[jj, ii])
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    A = sp.csr_matrix((vals, (rows, cols)), shape=(nv * nu, nv * nu))
    A.sort_indices()
    b = (rhs / diag).ravel()
    return LinearSystem(matrix=A, rhs=b, kinds=mesh.mask.ravel().copy(), mesh=mesh)


def _disk_rows(C, rhs, mesh):
    sel = (mesh.mask == NodeKind.INSIDE_CIRCLE) | (mesh.mask == NodeKind.DIRICHLET_INNER)
    _set_dirichlet(C, rhs, sel, 1.0)


# ---------------------------------------------------------------------------
# Stage 1: polar sector


def assemble_polar(mesh: TensorMesh, p: ProblemParams) -> LinearSystem:
    if mesh.system is not CoordSystem.POLAR:
        raise ValueError("assemble_polar needs a polar mesh")
    if mesh.u.nodes[0] != 1.0 or not np.isclose(mesh.u.nodes[-1], p.R):
        raise ValueError("mesh radial range does not match the parameters")
    eps = p.epsilon
    r, th = mesh.u.nodes, mesh.v.nodes
    C = _table(mesh)
    rhs = np.zeros(mesh.shape)

    hm, hp = _steps(r)
    km, kp = _steps(th)
    ri = r[1:-1][None, :]
    tj = th[1:-1][:, None]
    _add_second(C, eps, hm[None, :], hp[None, :], axis=0)
    _add_second(C, eps / ri**2, km[:, None], kp[:, None], axis=1)
    _add_upwind(C, np.cos(tj) - eps / ri, hm[None, :], hp[None, :], axis=0)
    _add_upwind(C, -np.sin(tj) / ri, km[:, None], kp[:, None], axis=1)

    mask = mesh.mask
    _set_dirichlet(C, rhs, mask == NodeKind.DIRICHLET_INNER, 1.0)
    _set_dirichlet(C, rhs, mask == NodeKind.DIRICHLET_OUTER, 0.0)
    n = len(th) - 1
    ang = mask == NodeKind.NEUMANN_ANGULAR
    bottom = ang.copy()
    bottom[1:, :] = False
    _set_one_sided(C, bottom, (0, 1))
    top = ang & ~bottom
    _set_one_sided(C, top, (0, -1))

    # outflow rows at r = R: cos(theta) D-_r - sin(theta)/R D+-_theta
    out = mask == NodeKind.NEUMANN_OUTFLOW
    _clear(C, out)
    h_last = r[-1] - r[-2]
    k = np.diff(th)
    for j in np.nonzero(out[:, -1])[0]:
        c = np.cos(th[j])
        b = -np.sin(th[j]) / p.R
        C[(0, 0)][j, -1] += c / h_last
        C[(-1, 0)][j, -1] -= c / h_last
        forward = b < 0 or j == 0
        if j == n:
            forward = False
        if forward:
            C[(0, 1)][j, -1] += b / k[j]
            C[(0, 0)][j, -1] -= b / k[j]
        else:
            C[(0, -1)][j, -1] -= b / k[j - 1]
            C[(0, 0)][j, -1] += b / k[j - 1]
    return _finish(C, rhs, mesh)


# ---------------------------------------------------------------------------
# Stages 2 and 4: Cartesian strip


def assemble_cartesian(mesh: TensorMesh, p: ProblemParams, inflow: BoundaryData) -> LinearSystem:
    """(-eps d2x - eps d2y + D-x) U = 0 with inflow data on the left edge."""
    if mesh.system is not CoordSystem.CARTESIAN:
        raise ValueError("assemble_cartesian needs a Cartesian mesh")
    eps = p.epsilon
    x, y = mesh.u.nodes, mesh.v.nodes
    C = _table(mesh)
    rhs = np.zeros(mesh.shape)
    hm, hp = _steps(x)
    km, kp = _steps(y)
    _add_second(C, eps, hm[None, :], hp[None, :], axis=0)
    _add_second(C, eps, km[:, None], kp[:, None], axis=1)
    _add_upwind(C, np.ones((1, 1)), hm[None, :], hp[None, :], axis=0)

    mask = mesh.mask
    _disk_rows(C, rhs, mesh)
    _set_dirichlet(C, rhs, mask == NodeKind.DIRICHLET_OUTER, 0.0)
    _set_one_sided(C, mask == NodeKind.NEUMANN_OUTFLOW, (-1, 0))
    data = mask == NodeKind.DIRICHLET_DATA
    _set_dirichlet(C, rhs, data, _boundary_values(mesh, inflow, data))
    return _finish(C, rhs, mesh)


# ---------------------------------------------------------------------------
# Stage 3: parabolic patch


def assemble_patch(
    mesh: TensorMesh, p: ProblemParams, boundary: BoundaryData, allow_unstable: bool = False
) -> LinearSystem:
    """-eps(d2ss + 2s dst + (1+s^2) d2tt) U + D-s U + (s - eps) D+-t U = 0.

    ``boundary`` supplies the values at s = 0 and on the top edge, in
    physical coordinates.  A patch wider than ``L*`` is refused unless
    ``allow_unstable`` is set.
    """
    if mesh.system is not CoordSystem.PARABOLIC:
        raise ValueError("assemble_patch needs a parabolic mesh")
    L = mesh.u.nodes[-1]
    if not allow_unstable and L > p.L_star * (1 + 1e-14):
        raise StabilityError(f"patch width {L} exceeds L* = {p.L_star}")
    if 12 * p.delta > p.M / p.N:
        raise StabilityError("step bound 12*delta <= M/N violated")
    eps = p.epsilon
    s, t = mesh.u.nodes, mesh.v.nodes
    C = _table(mesh)
    rhs = np.zeros(mesh.shape)
    hm, hp = _steps(s)
    km, kp = _steps(t)
    si = s[1:-1][None, :]
    hm_, hp_ = hm[None, :], hp[None, :]
    km_, kp_ = km[:, None], kp[:, None]

    _add_second(C, eps, hm_, hp_, axis=0)
    _add_second(C, eps * (1 + si**2), km_, kp_, axis=1)
    # -eps * s * (D-t D-s + D+t D+s)
    a = eps * si / (hm_ * km_)
    c = eps * si / (hp_ * kp_)
    inner = (slice(1, -1), slice(1, -1))
    C[(0, 0)][inner] -= a + c
    C[(-1, 0)][inner] += a
    C[(0, -1)][inner] += a
    C[(-1, -1)][inner] -= a
    C[(1, 1)][inner] -= c
    C[(0, 1)][inner] += c
    C[(1, 0)][inner] += c
    _add_upwind(C, np.ones((1, 1)), hm_, hp_, axis=0)
    _add_upwind(C, si - eps, km_, kp_, axis=1)

    mask = mesh.mask
    data = mask == NodeKind.DIRICHLET_DATA
    vals = _boundary_values(mesh, boundary, data)
    _set_dirichlet(C, rhs, data, vals)
    _set_one_sided(C, mask == NodeKind.NEUMANN_OUTFLOW, (-1, 0))
    _disk_rows(C, rhs, mesh)
    return _finish(C, rhs, mesh)


# ---------------------------------------------------------------------------
# checks and dumps


@dataclass(frozen=True)
class MMatrixReport:
    row_ok: np.ndarray
    interior: np.ndarray
    ok: bool

    @property
    def failing_rows(self) -> np.ndarray:
        return np.nonzero(self.interior & ~self.row_ok)[0]


def m_matrix_check(sys: LinearSystem, tol: float = 1e-12) -> MMatrixReport:
    """Per-row sign test: positive centre, off-centre entries <= tol * centre."""
    A = sys.matrix.tocoo()
    n = A.shape[0]
    diag = A.diagonal()
    off = A.row != A.col
    worst = np.full(n, -np.inf)
    np.maximum.at(worst, A.row[off], A.data[off])
    row_ok = (diag > 0) & (worst <= tol * np.abs(diag))
    interior = sys.kinds == NodeKind.INTERIOR
    return MMatrixReport(row_ok=row_ok, interior=interior, ok=bool(row_ok[interior].all()))


def dump_coo(sys: LinearSystem, path) -> None:
    """Write the matrix as ``row col value`` lines, followed by the rhs."""
    A = sys.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# {A.shape[0]} unknowns, {A.nnz} entries\n")
        for r, c, v in zip(A.row, A.col, A.data):
            fh.write(f"{r} {c} {v!r}\n")
        fh.write("# rhs\n")
        for k, v in enumerate(sys.rhs):
            fh.write(f"{k} {v!r}\n")
