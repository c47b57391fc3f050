"""Piecewise-uniform Shishkin meshes and the three coordinate systems.

Node arrays of a :class:`TensorMesh` are stored with shape ``(len(v), len(u))``
so that ``ravel()`` gives the lexicographic unknown ordering (second
coordinate outer, first coordinate inner).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

# nodes within this distance of the unit circle count as on it
CIRCLE_TOL = 1e-12


class CoordSystem(enum.Enum):
    POLAR = "polar"  # (r, theta)
    CARTESIAN = "cartesian"  # (x, y)
    PARABOLIC = "parabolic"  # (s, t)


class NodeKind(enum.IntEnum):
    """Classification of a mesh node, which fixes the equation of its row."""

    INTERIOR = 0
    DIRICHLET_INNER = 1  # on the unit circle, or patch bottom: value 1
    DIRICHLET_OUTER = 2  # outer boundary: value 0
    DIRICHLET_DATA = 3  # artificial boundary fed by an earlier stage
    NEUMANN_OUTFLOW = 4
    NEUMANN_ANGULAR = 5
    INSIDE_CIRCLE = 6  # strictly inside the unit disk: value 1


# ---------------------------------------------------------------------------
# transition points


def sigma1(eps: float, N: int, R: float = 4.0) -> float:
    return min((R - 1.0) / 4.0, 2.0 * eps * math.log(N))


def sigma2(eps: float, N: int, R: float = 4.0) -> float:
    return min((R - 1.0) / 4.0, 3.0 * eps ** (2.0 / 3.0) * math.log(N))


def tau_angular(eps: float, N: int) -> float:
    return min(math.pi / 6.0, math.sqrt(6.0) * eps ** (1.0 / 3.0) * math.log(N))


def tau1(eps: float, N: int) -> float:
    return min(0.5, 2.0 * math.sqrt(eps) * math.log(N))


def tau2(eps: float, N: int, R: float = 4.0) -> float:
    return min((R - 1.0) / 2.0, 2.0 * math.sqrt(eps) * math.log(N))


def tau3(eps: float, M: int, delta: float) -> float:
    return min(delta, 3.0 * eps ** (2.0 / 3.0) * math.log(M))


def tau4(eps: float, M: int, delta: float) -> float:
    return min(delta, 2.0 * math.sqrt(eps) * math.log(M))


def critical_angle(kappa: float = 1.0) -> float:
    """Angle in (pi/2, pi] with ``kappa * cos(theta) = -1/2``."""
    return math.acos(-0.5 / kappa)


def max_patch_width(N: int, M: int, t3: float) -> float:
    """Largest patch width keeping the Stage 3 matrix an M-matrix."""
    return 2.0 * math.sqrt(N * t3 / M)


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ProblemParams:
    """Problem and discretisation parameters for one pipeline run.

    ``M`` defaults to ``N`` and ``L`` to :func:`patch_width`.  An explicit
    ``L`` above the stability limit is rejected.
    """

    epsilon: float
    N: int
    M: int | None = None
    R: float = 4.0
    delta: float = 0.05
    L: float | None = None
    kappa_angle: float = 1.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.N <= 0 or self.N % 8:
            raise ValueError(f"N must be a positive multiple of 8, got {self.N}")
        if self.M is None:
            object.__setattr__(self, "M", self.N)
        if self.M <= 0 or self.M % 4:
            raise ValueError(f"M must be a positive multiple of 4, got {self.M}")
        if self.R <= 1:
            raise ValueError("outer radius R must exceed 1")
        if not 0 < self.delta <= 1.0 / 6.0:
            raise ValueError(f"delta must lie in (0, 1/6], got {self.delta}")
        if 12.0 * self.delta > self.M / self.N:
            raise ValueError(
                f"step bound 12*delta <= M/N violated: 12*{self.delta} > {self.M}/{self.N}"
            )
        if not 0 < self.kappa_angle <= 1:
            raise ValueError("kappa_angle must lie in (0, 1]")
        if self.L is None:
            object.__setattr__(self, "L", patch_width(self))
        elif not 0 < self.L < 1 or self.L > self.L_star * (1 + 1e-14):
            raise ValueError(
                f"patch width L={self.L} must satisfy 0 < L < 1 and L <= L*={self.L_star}"
            )

    @property
    def tau3(self) -> float:
        return tau3(self.epsilon, self.M, self.delta)

    @property
    def tau4(self) -> float:
        return tau4(self.epsilon, self.M, self.delta)

    @property
    def L_star(self) -> float:
        return max_patch_width(self.N, self.M, self.tau3)

    def refined(self, factor: int = 2) -> "ProblemParams":
        """Same problem with N and M multiplied by ``factor`` (L recomputed)."""
        return ProblemParams(
            epsilon=self.epsilon,
            N=self.N * factor,
            M=self.M * factor,
            R=self.R,
            delta=self.delta,
            kappa_angle=self.kappa_angle,
        )


def patch_width(p: ProblemParams) -> float:
    """Patch width used for the tables, clamped to ``L*`` and below 1."""
    L = 2.0 * math.sqrt(min(p.delta, p.epsilon ** (2.0 / 3.0) * math.log(2048.0)))
    L_star = max_patch_width(p.N, p.M, tau3(p.epsilon, p.M, p.delta))
    return min(L, L_star, 0.999)


# ---------------------------------------------------------------------------
# one-dimensional meshes


@dataclass(frozen=True)
class Mesh1D:
    nodes: np.ndarray
    transitions: np.ndarray
    segment_counts: np.ndarray

    @property
    def elements(self) -> int:
        return len(self.nodes) - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    def __len__(self):
        return len(self.nodes)


def shishkin_1d(breakpoints, counts) -> Mesh1D:
    """Uniform sub-meshes glued at ``breakpoints`` with ``counts[i]`` elements each."""
    bp = np.asarray(breakpoints, dtype=float)
    cnt = np.asarray(counts, dtype=int)
    if bp.ndim != 1 or len(bp) != len(cnt) + 1:
        raise ValueError("need exactly one more breakpoint than segment counts")
    if np.any(cnt <= 0):
        raise ValueError(f"segment counts must be positive, got {cnt.tolist()}")
    if np.any(np.diff(bp) <= 0):
        raise ValueError(f"breakpoints must be strictly increasing, got {bp.tolist()}")
    pieces = [np.array([bp[0]])]
    for a, b, n in zip(bp[:-1], bp[1:], cnt):
        seg = a + (b - a) * np.arange(1, n + 1) / n
        seg[-1] = b
        pieces.append(seg)
    nodes = np.concatenate(pieces)
    for arr in (nodes, bp, cnt):
        arr.setflags(write=False)
    return Mesh1D(nodes=nodes, transitions=bp, segment_counts=cnt)


# ---------------------------------------------------------------------------
# coordinate maps


@dataclass(frozen=True)
class CoordinateMap:
    """Map between native coordinates and physical (x, y).

    For the parabolic system ``sign=+1`` is the upper patch
    (``t = y + x**2/2``) and ``sign=-1`` the mirrored lower patch
    (``t = -y + x**2/2``).
    """

    system: CoordSystem
    sign: int = 1

    def forward(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.system is CoordSystem.POLAR:
            return u * np.cos(v), u * np.sin(v)
        if self.system is CoordSystem.PARABOLIC:
            return u, self.sign * (v - 0.5 * u * u)
        return u, v

    def inverse(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.system is CoordSystem.POLAR:
            return np.hypot(x, y), np.mod(np.arctan2(y, x), 2.0 * np.pi)
        if self.system is CoordSystem.PARABOLIC:
            return x, self.sign * y + 0.5 * x * x
        return x, y


@dataclass(frozen=True)
class TensorMesh:
    u: Mesh1D
    v: Mesh1D
    system: CoordSystem
    mask: np.ndarray  # NodeKind codes, shape (len(v), len(u))
    cmap: CoordinateMap = field(default=None)

    def __post_init__(self):
        if self.cmap is None:
            object.__setattr__(self, "cmap", CoordinateMap(self.system))
        if self.mask.shape != self.shape:
            raise ValueError("mask shape does not match the mesh")
        self.mask.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.v), len(self.u))

    @property
    def size(self) -> int:
        return len(self.u) * len(self.v)

    def grid(self):
        """Native coordinate arrays ``(U, V)`` of shape :attr:`shape`."""
        return np.meshgrid(self.u.nodes, self.v.nodes)

    def physical(self):
        """Physical coordinate arrays ``(X, Y)`` of the nodes."""
        return self.cmap.forward(*self.grid())

    def bbox(self):
        return (self.u.nodes[0], self.u.nodes[-1], self.v.nodes[0], self.v.nodes[-1])


def _disk_kinds(x, y, mask):
    rr = x * x + y * y
    on = np.abs(rr - 1.0) <= CIRCLE_TOL
    inside = (rr < 1.0) & ~on
    mask[inside] = NodeKind.INSIDE_CIRCLE
    mask[on] = NodeKind.DIRICHLET_INNER
    return inside | on


def annulus_mesh(p: ProblemParams) -> TensorMesh:
    """Polar mesh on the sector 1 <= r <= R, pi/2 - tau <= theta <= 3pi/2 + tau."""
    N, eps, R = p.N, p.epsilon, p.R
    if N % 8:
        raise ValueError("annulus mesh needs N divisible by 8")
    s1, s2 = sigma1(eps, N, R), sigma2(eps, N, R)
    tau = tau_angular(eps, N)
    r = shishkin_1d([1.0, 1.0 + s1, 1.0 + s1 + s2, R], [N // 4, N // 4, N // 2])
    h = 0.5 * math.pi
    th = shishkin_1d(
        [h - tau, h + tau, 3 * h - tau, 3 * h + tau], [N // 4, N // 2, N // 4]
    )
    # theta = pi/2 and 3pi/2 are the nodes N/8 and 7N/8; pin them exactly
    j_top, j_bot = N // 8, 7 * N // 8
    nodes = th.nodes.copy()
    nodes[j_top], nodes[j_bot] = h, 3 * h
    nodes.setflags(write=False)
    th = Mesh1D(nodes=nodes, transitions=th.transitions, segment_counts=th.segment_counts)
    mask = np.full((N + 1, N + 1), NodeKind.INTERIOR, dtype=np.int8)
    mask[:, 0] = NodeKind.DIRICHLET_INNER
    mask[:, N] = NodeKind.NEUMANN_OUTFLOW
    mask[j_top : j_bot + 1, N] = NodeKind.DIRICHLET_OUTER
    mask[0, 1:N] = NodeKind.NEUMANN_ANGULAR
    mask[N, 1:N] = NodeKind.NEUMANN_ANGULAR
    return TensorMesh(u=r, v=th, system=CoordSystem.POLAR, mask=mask)


def strip_vertical(p: ProblemParams) -> Mesh1D:
    N, eps, R = p.N, p.epsilon, p.R
    t1, t2 = tau1(eps, N), tau2(eps, N, R)
    return shishkin_1d(
        [-R, -1 - t2, -1 + t1, 1 - t1, 1 + t2, R],
        [N // 8, N // 4, N // 4, N // 4, N // 8],
    )


def strip_mesh(p: ProblemParams, x_left: float = 0.0) -> TensorMesh:
    """Cartesian mesh on [x_left, R] x [-R, R], uniform in x, Shishkin in y.

    ``x_left=0`` is the Stage 2 rectangle; Stage 4 rebuilds it from the
    patch width.
    """
    N, R = p.N, p.R
    if N % 8:
        raise ValueError("strip mesh needs N divisible by 8")
    if not 0 <= x_left < R:
        raise ValueError("x_left must lie in [0, R)")
    xm = shishkin_1d([x_left, R], [N])
    ym = strip_vertical(p)
    mask = np.full((N + 1, N + 1), NodeKind.INTERIOR, dtype=np.int8)
    mask[:, 0] = NodeKind.DIRICHLET_DATA
    mask[:, N] = NodeKind.NEUMANN_OUTFLOW
    X, Y = np.meshgrid(xm.nodes, ym.nodes)
    _disk_kinds(X, Y, mask)
    mask[0, :] = NodeKind.DIRICHLET_OUTER
    mask[N, :] = NodeKind.DIRICHLET_OUTER
    return TensorMesh(u=xm, v=ym, system=CoordSystem.CARTESIAN, mask=mask)


def patch_mesh(p: ProblemParams, upper: bool = True, width: float | None = None) -> TensorMesh:
    """Parabolic-coordinate mesh on (0, L) x (1 - tau3, 1 + 3 delta).

    ``width`` overrides ``p.L`` without the stability check; it exists for
    tests that deliberately build an unstable patch.
    """
    N, M, d = p.N, p.M, p.delta
    if M % 4:
        raise ValueError("patch mesh needs M divisible by 4")
    L = p.L if width is None else width
    t3, t4 = p.tau3, p.tau4
    sm = shishkin_1d([0.0, L], [N])
    tm = shishkin_1d([1 - t3, 1.0, 1 + t3, 1 + t3 + t4, 1 + 3 * d], [M // 4] * 4)
    cmap = CoordinateMap(CoordSystem.PARABOLIC, 1 if upper else -1)
    mask = np.full((M + 1, N + 1), NodeKind.INTERIOR, dtype=np.int8)
    mask[0, :] = NodeKind.DIRICHLET_INNER
    mask[M, :] = NodeKind.DIRICHLET_DATA
    mask[:, N] = NodeKind.NEUMANN_OUTFLOW
    mask[:, 0] = NodeKind.DIRICHLET_DATA
    S, T = np.meshgrid(sm.nodes, tm.nodes)
    _disk_kinds(*cmap.forward(S, T), mask)
    return TensorMesh(u=sm, v=tm, system=CoordSystem.PARABOLIC, mask=mask, cmap=cmap)
