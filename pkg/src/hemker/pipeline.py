"""The four-stage algorithm producing the initial and corrected composites."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from hemker.discretization import (
    LinearSystem,
    assemble_cartesian,
    assemble_patch,
    assemble_polar,
    m_matrix_check,
)
from hemker.fields import CompositeSolution, GridField, Piece
from hemker.mesh import ProblemParams, annulus_mesh, patch_mesh, strip_mesh
from hemker.solver import RTOL, SolveReport, solve_with_fallback

log = logging.getLogger(__name__)

# rounding slack when deciding which side of x = 0 or x = L a point is on
X_TOL = 1e-12
RANGE_TOL = 1e-10


class RangeError(RuntimeError):
    """A stage solution left [0, 1] by more than the tolerance."""


@dataclass
class StageResult:
    field: GridField
    report: SolveReport
    system: LinearSystem | None = None


@dataclass
class PipelineRun:
    params: ProblemParams
    U_A: GridField
    U_B: GridField | None = None
    U_Cp: GridField | None = None
    U_Cm: GridField | None = None
    U_D: GridField | None = None
    sector: CompositeSolution | None = None
    initial: CompositeSolution | None = None
    corrected: CompositeSolution | None = None
    reports: dict = field(default_factory=dict)
    mmatrix: dict = field(default_factory=dict)

    @property
    def stage_fields(self) -> dict:
        names = ("U_A", "U_B", "U_Cp", "U_Cm", "U_D")
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}


def _solve(sys, rtol, what, **kw):
    rep = solve_with_fallback(sys, rtol=rtol, **kw)
    lo, hi = rep.solution.min(), rep.solution.max()
    if lo < -RANGE_TOL or hi > 1 + RANGE_TOL:
        raise RangeError(f"{what}: solution range [{lo}, {hi}] leaves [0, 1]")
    log.debug("%s solved: %d unknowns, residual %.2e", what, sys.unknown_count, rep.residual_inf)
    return rep


# ---------------------------------------------------------------------------
# region predicates


def _polar_region(x, y):
    # the line x = 0 itself belongs to the strip
    return x < -X_TOL


def _strip_region(x, y):
    return x >= -X_TOL


def _patch_region(p: ProblemParams, sign: int):
    lo, hi = 1.0 - p.tau3, 1.0 + 3.0 * p.delta
    L = p.L

    def owns(x, y):
        t = sign * y + 0.5 * x * x
        return (x >= -X_TOL) & (x <= L + X_TOL) & (t >= lo - X_TOL) & (t <= hi + X_TOL)

    return owns


def _downwind_region(L):
    def owns(x, y):
        return x >= L - X_TOL

    return owns


def patch_region(p: ProblemParams):
    """Predicate for the union of both patches in physical coordinates."""
    up, down = _patch_region(p, 1), _patch_region(p, -1)
    return lambda x, y: up(x, y) | down(x, y)


def sector_region(x, y):
    return x <= X_TOL


# ---------------------------------------------------------------------------
# stages


def run_stage1(p: ProblemParams, rtol=RTOL, keep_system=False, **kw) -> StageResult:
    mesh = annulus_mesh(p)
    sys = assemble_polar(mesh, p)
    rep = _solve(sys, rtol, "stage 1", **kw)
    return StageResult(GridField(mesh, rep.solution), rep, sys if keep_system else None)


def sector_solution(p: ProblemParams, U_A: GridField) -> CompositeSolution:
    return CompositeSolution((Piece("polar", U_A, sector_region),), p, "sector")


def initial_solution(p, U_A, U_B) -> CompositeSolution:
    pieces = (Piece("polar", U_A, _polar_region), Piece("strip", U_B, _strip_region))
    return CompositeSolution(pieces, p, "initial")


def run_stage2(p: ProblemParams, U_A: GridField, rtol=RTOL, keep_system=False, **kw):
    """Strip solve fed by the polar solution along x = 0; returns (stage, initial composite)."""
    mesh = strip_mesh(p)
    sys = assemble_cartesian(mesh, p, lambda x, y: U_A.at_physical(np.zeros_like(y), y))
    rep = _solve(sys, rtol, "stage 2", **kw)
    U_B = GridField(mesh, rep.solution)
    return StageResult(U_B, rep, sys if keep_system else None), initial_solution(p, U_A, U_B)


def run_stage3(p: ProblemParams, initial: CompositeSolution, rtol=RTOL, keep_system=False, **kw):
    """Both parabolic patches with boundary data from the initial composite."""
    out = []
    for upper in (True, False):
        mesh = patch_mesh(p, upper=upper)
        sys = assemble_patch(mesh, p, initial.evaluate)
        check = m_matrix_check(sys)
        if not check.ok:
            raise RuntimeError(f"stage 3 matrix is not an M-matrix (rows {check.failing_rows[:5]})")
        rep = _solve(sys, rtol, "stage 3" + ("+" if upper else "-"), **kw)
        res = StageResult(GridField(mesh, rep.solution), rep, sys if keep_system else None)
        out.append((res, check))
    return out


def corrected_solution(p, initial: CompositeSolution, U_Cp, U_Cm, U_D) -> CompositeSolution:
    pieces = (
        Piece("patch+", U_Cp, _patch_region(p, 1)),
        Piece("patch-", U_Cm, _patch_region(p, -1)),
        Piece("downwind", U_D, _downwind_region(p.L)),
    ) + initial.pieces
    return CompositeSolution(pieces, p, "corrected")


def run_stage4(p: ProblemParams, initial, U_Cp, U_Cm, rtol=RTOL, keep_system=False, **kw):
    """Downwind strip on [L, R] x [-R, R]; inflow from the patches, else the initial composite."""
    fed = CompositeSolution(
        (Piece("patch+", U_Cp, _patch_region(p, 1)), Piece("patch-", U_Cm, _patch_region(p, -1)))
        + initial.pieces,
        p,
        "inflow",
    )
    mesh = strip_mesh(p, x_left=p.L)
    sys = assemble_cartesian(mesh, p, lambda x, y: fed.evaluate(np.full_like(y, p.L), y))
    rep = _solve(sys, rtol, "stage 4", **kw)
    U_D = GridField(mesh, rep.solution)
    return StageResult(U_D, rep, sys if keep_system else None), corrected_solution(
        p, initial, U_Cp, U_Cm, U_D
    )


def run_pipeline(p: ProblemParams, stages: str = "full", rtol: float = RTOL, **kw) -> PipelineRun:
    """Run Stage 1 (``stages='sector'``), Stages 1-2 (``'initial'``) or all four (``'full'``)."""
    if stages not in ("sector", "initial", "full"):
        raise ValueError(f"unknown stages option {stages!r}")
    s1 = run_stage1(p, rtol, **kw)
    run = PipelineRun(params=p, U_A=s1.field)
    run.reports["stage1"] = s1.report
    run.sector = sector_solution(p, s1.field)
    if stages == "sector":
        return run
    s2, run.initial = run_stage2(p, s1.field, rtol, **kw)
    run.U_B = s2.field
    run.reports["stage2"] = s2.report
    if stages == "initial":
        return run
    (cp, chk_p), (cm, chk_m) = run_stage3(p, run.initial, rtol, **kw)
    run.U_Cp, run.U_Cm = cp.field, cm.field
    run.reports["stage3+"], run.reports["stage3-"] = cp.report, cm.report
    run.mmatrix["stage3+"], run.mmatrix["stage3-"] = chk_p, chk_m
    s4, run.corrected = run_stage4(p, run.initial, run.U_Cp, run.U_Cm, rtol, **kw)
    run.U_D = s4.field
    run.reports["stage4"] = s4.report
    return run
