"""Double-mesh convergence tables, bound envelopes and barrier-function checks."""

from __future__ import annotations

import enum
import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from hemker.fields import CompositeSolution, union_samples, union_sup_diff
from hemker.mesh import ProblemParams
from hemker.pipeline import PipelineRun, run_pipeline, sector_region

log = logging.getLogger(__name__)


class Which(enum.Enum):
    INITIAL = "initial"  # initial composite over the whole domain
    CORRECTED = "corrected"  # corrected composite over the whole domain
    PATCH = "patch"  # corrected composite over the parabolic patches
    SECTOR = "sector"  # polar solution over x <= 0

    @property
    def stages(self) -> str:
        return {"initial": "initial", "sector": "sector"}.get(self.value, "full")

    def solution(self, run: PipelineRun) -> CompositeSolution:
        return {
            Which.INITIAL: run.initial,
            Which.CORRECTED: run.corrected,
            Which.PATCH: run.corrected,
            Which.SECTOR: run.sector,
        }[self]


# ---------------------------------------------------------------------------
# tables


@dataclass
class ConvergenceTable:
    eps_list: list
    n_list: list
    D: np.ndarray  # shape (len(eps_list), len(n_list)); NaN marks a missing cell
    kind: str = "orders"  # "orders" or "errors"
    p_local: np.ndarray | None = None
    p_uniform: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def D_uniform(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.nanmax(self.D, axis=0) if len(self.eps_list) else np.array([])


def _log2_ratio(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    out = np.full(np.broadcast(a, b).shape, np.nan)
    ok = np.isfinite(a) & np.isfinite(b) & (a > 0) & (b > 0)
    out[ok] = np.log2(a[ok] / b[ok])
    return out


def orders(table: ConvergenceTable) -> ConvergenceTable:
    """Fill local orders log2(D^N / D^2N) and the uniform orders from max over eps.

    Non-positive or missing differences give NaN (undefined) entries; they
    do not poison their neighbours.
    """
    n = np.asarray(table.n_list)
    if np.any(n[1:] != 2 * n[:-1]):
        raise ValueError(f"order tables need doubling N, got {list(n)}")
    D = np.asarray(table.D, float)
    table.p_local = _log2_ratio(D[:, :-1], D[:, 1:])
    Du = table.D_uniform
    table.p_uniform = _log2_ratio(Du[:-1], Du[1:])
    return table


def synthetic_anomaly(k: float, eps: float, N: int) -> float:
    """Model two-mesh difference of a 1D Shishkin-type method."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k * eps * math.log(N) >= 1:
        rho = 1.0 / (eps * N)
        return rho / (1 + rho)
    return 1.0 / N


def synthetic_uniform(k: float, N: int) -> float:
    """Sup over eps of :func:`synthetic_anomaly`, valid for N >= 4."""
    if N < 4:
        raise ValueError("closed form needs N >= 4")
    return k * math.log(N) / (N + k * math.log(N))


def two_mesh_difference(
    run_N: PipelineRun, run_2N: PipelineRun, which: Which, centres: bool = True
) -> float:
    """Sup-norm difference of the N and 2N solutions on the region named by ``which``."""
    pN, p2N = run_N.params, run_2N.params
    if pN.epsilon != p2N.epsilon:
        raise ValueError("two-mesh difference needs equal epsilon")
    if p2N.N != 2 * pN.N or p2N.M != 2 * pN.M:
        raise ValueError("second run must double N and M")
    a, b = which.solution(run_N), which.solution(run_2N)
    if which is Which.PATCH:
        sample = union_samples(a, b, centres, pieces=("patch+", "patch-"))
        return union_sup_diff(a, b, sample=sample)
    region = sector_region if which is Which.SECTOR else None
    return union_sup_diff(a, b, region=region, centres=centres)


def fine_mesh_error(
    run: PipelineRun, reference: PipelineRun, which: Which = Which.CORRECTED, centres=True,
    return_argmax=False,
):
    """Global error proxy: sup-norm distance to a run on a mesh at least 4x finer."""
    if reference.params.N < 4 * run.params.N:
        raise ValueError("reference must use at least 4N elements")
    if reference.params.epsilon != run.params.epsilon:
        raise ValueError("reference run has a different epsilon")
    a, b = which.solution(run), which.solution(reference)
    region = sector_region if which is Which.SECTOR else None
    return union_sup_diff(a, b, region=region, centres=centres, return_argmax=return_argmax)


def default_params(eps, N, delta=0.05, R=4.0):
    return ProblemParams(epsilon=eps, N=N, M=N, R=R, delta=delta)


def difference_row(eps, n_list, which: Which, delta=0.05, R=4.0, rtol=1e-10, centres=True):
    """D^N for every N in ``n_list`` at one epsilon (solves up to 2 max N)."""
    out, runs = {}, {}
    for N in sorted(set(n_list) | {2 * n for n in n_list}):
        runs[N] = run_pipeline(default_params(eps, N, delta, R), which.stages, rtol)
        half = N // 2
        if half in n_list and half in runs:
            out[half] = two_mesh_difference(runs[half], runs[N], which, centres)
        for m in [m for m in runs if 2 * m <= N]:
            del runs[m]
    return [out[N] for N in n_list]


def order_table(eps_list, n_list, which: Which, map_fn=map, **kw) -> ConvergenceTable:
    rows = list(map_fn(functools.partial(difference_row, n_list=n_list, which=which, **kw), eps_list))
    t = ConvergenceTable(list(eps_list), list(n_list), np.array(rows, float), "orders",
                         meta={"which": which.value})
    return orders(t)


def error_row(eps, n_list, n_ref, which: Which = Which.CORRECTED, delta=0.05, R=4.0,
              rtol=1e-10, centres=True):
    ref = run_pipeline(default_params(eps, n_ref, delta, R), which.stages, rtol)
    return [
        fine_mesh_error(run_pipeline(default_params(eps, N, delta, R), which.stages, rtol),
                        ref, which, centres)
        for N in n_list
    ]


def error_table(eps_list, n_list, n_ref, map_fn=map, **kw) -> ConvergenceTable:
    rows = list(map_fn(functools.partial(error_row, n_list=n_list, n_ref=n_ref, **kw), eps_list))
    return ConvergenceTable(list(eps_list), list(n_list), np.array(rows, float), "errors",
                            meta={"n_ref": n_ref})


# ---------------------------------------------------------------------------
# bound envelopes


class BoundKind(enum.Enum):
    BASIC = "basic"
    LEFT = "left"
    RIGHT = "right"
    CENTER = "center"


@dataclass(frozen=True)
class BoundEnvelope:
    kind: BoundKind
    fitted_C: float  # NaN when the region holds no samples
    violation_count: int
    sample_count: int

    @property
    def empty(self) -> bool:
        return self.sample_count == 0


def envelope(kind: BoundKind, x, y, eps, mu=0.5):
    """Envelope values and the mask of points where the bound applies."""
    r = np.hypot(x, y)
    if kind is BoundKind.BASIC:
        return np.ones_like(x), np.ones(x.shape, bool)
    if kind is BoundKind.LEFT:
        cos = np.divide(x, r, out=np.zeros_like(x), where=r > 0)
        region = (x <= 0) & (r >= 1)
        # the exponent is only bounded inside the region
        return np.exp(np.where(region, cos * (r - 1) / eps, 0.0)), region
    if kind is BoundKind.RIGHT:
        ay = np.abs(y)
        return np.exp(-(ay - 1) / math.sqrt(eps)), (ay >= 1) & (np.abs(x) < 4.0 + 1e-12)
    q = 0.5 * x * x + np.abs(y) - 1
    e23 = eps ** (2.0 / 3.0)
    region = (np.abs(x) <= eps ** (1.0 / 3.0)) & (np.abs(q) <= mu * e23)
    return np.exp(-q / (3 * e23)), region


def bound_envelope(sol: CompositeSolution, kind: BoundKind, floor: float | None = None,
                   tol: float = 1e-10) -> BoundEnvelope:
    """Fit the constant C in u <= C * envelope over the solution's own nodes.

    Only points where the envelope is at least ``floor`` (default 1/N) are
    used: further out the bound is below the discretisation error and the
    ratio says nothing about the layer.
    """
    from hemker.fields import sample_points

    x, y = sample_points(sol)
    eps = sol.params.epsilon
    env, region = envelope(kind, x, y, eps)
    if floor is None:
        floor = 0.0 if kind in (BoundKind.BASIC, BoundKind.CENTER) else 1.0 / sol.params.N
    region &= env >= floor
    if not region.any():
        return BoundEnvelope(kind, float("nan"), 0, 0)
    u = sol.evaluate(x[region], y[region])
    C = float(np.max(u / env[region]))
    viol = int(np.count_nonzero(u < -tol)) if kind is BoundKind.BASIC else 0
    return BoundEnvelope(kind, C, viol, int(region.sum()))


# ---------------------------------------------------------------------------
# barrier functions


class Barrier(enum.Enum):
    BMINUS = "Bminus"
    BPLUS = "Bplus"
    BCENTER = "Bcenter"


CENTER_CONSTANTS = {"C": 1.0, "alpha": 0.9, "kappa": 1.0 / 3.0}


def center_constraints_hold(C: float, alpha: float, kappa: float) -> bool:
    return kappa <= C / 3 and alpha > 8.0 / 9.0 * C**2 and C**3 < 9.0 / 8.0 and alpha * C < 1


def barrier_value(kind: Barrier, eps, point, kappa=1.0, C1=2.0, alpha=0.9, C=1.0):
    """Closed form of the barrier; ``point`` is (r, theta) for Bminus, else (x, y)."""
    a, b = (np.asarray(v, float) for v in point)
    if kind is Barrier.BMINUS:
        return np.exp(kappa * np.cos(b) * (a - 1) / eps)
    if kind is Barrier.BPLUS:
        return np.exp(C1 * (1 + a)) * np.where(b >= 1, np.exp(-(b - 1) / math.sqrt(eps)), 1.0)
    xi = a / eps ** (1.0 / 3.0)
    return (1 + alpha * xi) / (1 - alpha * C) * np.exp(-kappa * (0.5 * a * a + b - 1) / eps ** (2.0 / 3.0))


def _check_region(kind, eps, a, b, kappa, C1, alpha, C):
    if kind is Barrier.BMINUS:
        ok = (np.cos(b) < 0) & (a > 1) & (0 < kappa <= 1)
    elif kind is Barrier.BPLUS:
        ok = (b > 1) & (C1 >= 2) & (C1 - eps * C1**2 - 1 >= 0)
    else:
        xi = a / eps ** (1.0 / 3.0)
        ok = (np.abs(xi) < C) & (b > 0) & center_constraints_hold(C, alpha, kappa)
    if not np.all(ok):
        raise ValueError(f"sample outside the region where the {kind.value} barrier applies")


def barrier_residual(kind: Barrier, eps: float, point, kappa=None, C1=2.0, alpha=0.9, C=1.0):
    """Closed-form lower bound on the operator applied to a barrier.

    Bminus: (kappa/eps) sin^2(theta) (1 - kappa + kappa/r)(1 - 1/r) B.
    Bplus:  (C1 - eps C1^2 - 1) B.
    Bcenter: -eps B_yy + B_x from the closed-form derivatives.
    """
    if kappa is None:
        kappa = 1.0 if kind is Barrier.BMINUS else CENTER_CONSTANTS["kappa"]
    a, b = (np.asarray(v, float) for v in point)
    _check_region(kind, eps, a, b, kappa, C1, alpha, C)
    B = barrier_value(kind, eps, (a, b), kappa, C1, alpha, C)
    if kind is Barrier.BMINUS:
        r, th = a, b
        return kappa / eps * np.sin(th) ** 2 * (1 - kappa + kappa / r) * (1 - 1 / r) * B
    if kind is Barrier.BPLUS:
        return (C1 - eps * C1**2 - 1) * B
    xi = a / eps ** (1.0 / 3.0)
    E = np.exp(-kappa * (0.5 * a * a + b - 1) / eps ** (2.0 / 3.0))
    return (
        1.0 / ((1 - alpha * C) * eps ** (1.0 / 3.0))
        * (alpha - kappa * xi * (1 + alpha * xi) - kappa**2 * (1 + alpha * xi))
        * E
    )


def barrier_operator(kind: Barrier, eps: float, point, kappa=None, C1=2.0, alpha=0.9, C=1.0):
    """Full operator image L B assembled from the closed-form derivatives.

    For Bminus this is the polar operator; for Bcenter it adds the -eps B_xx
    term that :func:`barrier_residual` omits.
    """
    if kappa is None:
        kappa = 1.0 if kind is Barrier.BMINUS else CENTER_CONSTANTS["kappa"]
    a, b = (np.asarray(v, float) for v in point)
    B = barrier_value(kind, eps, (a, b), kappa, C1, alpha, C)
    if kind is Barrier.BMINUS:
        r, th = a, b
        c, s = np.cos(th), np.sin(th)
        B_th = -kappa * s / eps * (r - 1) * B
        B_thth = -(kappa * c / eps * (r - 1) - kappa**2 * s**2 / eps**2 * (r - 1) ** 2) * B
        B_r = kappa * c / eps * B
        B_rr = kappa**2 * c**2 / eps**2 * B
        return -eps / r**2 * B_thth - eps * B_rr + (c - eps / r) * B_r - s / r * B_th
    if kind is Barrier.BPLUS:
        return (C1 - eps * C1**2 - 1) * B
    x = a
    e13 = eps ** (1.0 / 3.0)
    q = kappa * x / eps ** (2.0 / 3.0)  # d/dx of the exponent, negated
    pref = 1.0 / (1 - alpha * C)
    E = np.exp(-kappa * (0.5 * x * x + b - 1) / eps ** (2.0 / 3.0))
    lin = 1 + alpha * x / e13
    B_x = pref * (alpha / e13 - lin * q) * E
    B_xx = pref * (-2 * alpha / e13 * q - lin * kappa / eps ** (2.0 / 3.0) + lin * q * q) * E
    B_yy = pref * lin * kappa**2 / eps ** (4.0 / 3.0) * E
    return -eps * (B_xx + B_yy) + B_x
