"""Sparse direct solve with a residual certificate and an iterative fallback."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from hemker.discretization import LinearSystem
from hemker.mesh import NodeKind

log = logging.getLogger(__name__)

RTOL = 1e-10
DEFAULT_MEMORY_BUDGET = 8 * 2**30

_DIRICHLET = (
    NodeKind.DIRICHLET_INNER,
    NodeKind.DIRICHLET_OUTER,
    NodeKind.DIRICHLET_DATA,
    NodeKind.INSIDE_CIRCLE,
)


class Method(enum.Enum):
    DIRECT = "direct"
    ITERATIVE = "iterative"


class SolverError(RuntimeError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"{message} (row {row})")
        self.row = row


@dataclass(frozen=True)
class SolveReport:
    solution: np.ndarray
    residual_inf: float
    iterations: int
    method: Method

    def within(self, rhs, rtol=RTOL) -> bool:
        return self.residual_inf <= rtol * max(1.0, float(np.max(np.abs(rhs), initial=0.0)))


def check_structure(sys: LinearSystem) -> None:
    """Every unknown must be connected to a Dirichlet row through the stencil."""
    A = sys.matrix
    diag = A.diagonal()
    if np.any(diag == 0):
        raise SolverError("zero diagonal entry", int(np.nonzero(diag == 0)[0][0]))
    empty = np.diff(A.indptr) == 0
    if empty.any():
        raise SolverError("empty row", int(np.nonzero(empty)[0][0]))
    ncomp, labels = csgraph.connected_components(A, directed=True, connection="weak")
    dirichlet = np.isin(sys.kinds, _DIRICHLET)
    has_bc = np.zeros(ncomp, dtype=bool)
    has_bc[labels[dirichlet]] = True
    bad = ~has_bc[labels]
    if bad.any():
        raise SolverError("unknown not connected to any Dirichlet row", int(np.nonzero(bad)[0][0]))


def residual_inf(A, x, b) -> float:
    return float(np.max(np.abs(A @ x - b), initial=0.0))


def _certify(sys, x, iterations, method, rtol):
    A, b = sys.matrix, sys.rhs
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite entries in the solution", int(np.nonzero(~np.isfinite(x))[0][0]))
    res = residual_inf(A, x, b)
    report = SolveReport(solution=x, residual_inf=res, iterations=iterations, method=method)
    if not report.within(b, rtol):
        raise SolverError(f"residual {res:.3e} above contract {rtol:g}", int(np.argmax(np.abs(A @ x - b))))
    return report


def _direct(sys, rtol):
    A = sp.csc_matrix(sys.matrix)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        diag = np.abs(A.diagonal())
        raise SolverError(f"factorisation failed: {exc}", int(np.argmin(diag))) from exc
    x = lu.solve(sys.rhs)
    # one step of iterative refinement, residual always from the original matrix
    r = sys.rhs - sys.matrix @ x
    x = x + lu.solve(r)
    return _certify(sys, x, 0, Method.DIRECT, rtol)


def solve(sys: LinearSystem, rtol: float = RTOL) -> SolveReport:
    """Sparse LU solve; raises :class:`SolverError` on structural or numerical failure."""
    check_structure(sys)
    return _direct(sys, rtol)


def estimate_direct_memory(sys: LinearSystem) -> float:
    """Rough LU memory in bytes, assuming nested-dissection-like fill."""
    n = sys.unknown_count
    fill = 12.0 * n * max(1.0, math.log2(max(n, 2)))
    return 12.0 * (fill + sys.matrix.nnz)


def _iterative(sys, rtol, max_matvecs):
    A = sp.csc_matrix(sys.matrix)
    b = sys.rhs
    scale = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    try:
        ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=10)
        M = spla.LinearOperator(A.shape, ilu.solve)
    except RuntimeError:
        M = None
    count = [0]

    def cb(_):
        count[0] += 1

    x = np.zeros_like(b)
    used = 0
    # restarted BiCGSTAB (a breakdown just triggers a restart from the current
    # iterate); each iteration costs two matrix applications
    while used < max_matvecs:
        chunk = max(1, min(1000, (max_matvecs - used) // 2))
        before = count[0]
        x, info = spla.bicgstab(A, b, x0=x, rtol=0.0, atol=0.1 * rtol * scale, maxiter=chunk, M=M, callback=cb)
        used = 2 * count[0]
        if residual_inf(sys.matrix, x, b) <= rtol * scale:
            return _certify(sys, x, count[0], Method.ITERATIVE, rtol)
        if count[0] == before:
            break
    raise SolverError(f"iterative solve did not converge after {used} matrix applications")


def solve_with_fallback(
    sys: LinearSystem,
    rtol: float = RTOL,
    memory_budget: float = DEFAULT_MEMORY_BUDGET,
    max_matvecs: int | None = None,
) -> SolveReport:
    """Direct solve unless its estimated memory exceeds the budget."""
    check_structure(sys)
    if estimate_direct_memory(sys) <= memory_budget:
        try:
            return _direct(sys, rtol)
        except MemoryError:
            log.warning("direct factorisation ran out of memory, switching to iterative")
    else:
        log.info("direct solve over budget (%.2e bytes), using iterative", estimate_direct_memory(sys))
    if max_matvecs is None:
        max_matvecs = 50 * sys.unknown_count
    return _iterative(sys, rtol, max_matvecs)
