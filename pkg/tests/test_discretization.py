import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemker import discretization as dz
from hemker.discretization import (
    StabilityError,
    assemble_cartesian,
    assemble_patch,
    assemble_polar,
    dump_coo,
    m_matrix_check,
    upwind_first,
)
from hemker.mesh import (
    CoordSystem,
    NodeKind,
    ProblemParams,
    TensorMesh,
    annulus_mesh,
    patch_mesh,
    shishkin_1d,
    strip_mesh,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(finite, finite, finite)
@settings(max_examples=1000)
def test_upwind_first_formula(b, dm, dp):
    expected = b * dm if b > 0 else b * dp
    assert upwind_first(b, dm, dp) == pytest.approx(expected, rel=1e-12, abs=1e-300)


def test_one_dimensional_hand_oracle():
    # -u'' + u' = 0 on 4 equispaced nodes of [0, 1], u(0) = 1, u(1) = 0
    x = shishkin_1d([0.0, 1.0], [3])
    y = shishkin_1d([-1.0, 0.0, 1.0], [1, 1])
    mask = np.full((3, 4), NodeKind.DIRICHLET_OUTER, dtype=np.int8)
    mask[1, 1:3] = NodeKind.INTERIOR
    mesh = TensorMesh(x, y, CoordSystem.CARTESIAN, mask)
    C = dz._table(mesh)
    rhs = np.zeros(mesh.shape)
    hm, hp = dz._steps(x.nodes)
    dz._add_second(C, 1.0, hm[None, :], hp[None, :], axis=0)
    dz._add_upwind(C, np.ones((1, 1)), hm[None, :], hp[None, :], axis=0)
    for j in (0, 2):
        dz._set_dirichlet(C, rhs, np.eye(3, dtype=bool)[j][:, None] & np.ones((1, 4), bool), 0.0)
    left = np.zeros(mesh.shape, bool)
    left[1, 0] = True
    right = np.zeros(mesh.shape, bool)
    right[1, 3] = True
    dz._set_dirichlet(C, rhs, left, 1.0)
    dz._set_dirichlet(C, rhs, right, 0.0)
    sys = dz._finish(C, rhs, mesh)
    u = np.linalg.solve(sys.matrix.toarray(), sys.rhs).reshape(mesh.shape)
    assert u[1, 1] == pytest.approx(28 / 37, abs=1e-14)
    assert u[1, 2] == pytest.approx(16 / 37, abs=1e-14)


def _systems(eps, N):
    p = ProblemParams(eps, N)
    out = {"polar": assemble_polar(annulus_mesh(p), p)}
    out["strip"] = assemble_cartesian(strip_mesh(p), p, 0.5)
    out["patch"] = assemble_patch(patch_mesh(p), p, 0.5)
    return out


@given(st.integers(0, 20), st.sampled_from([8, 16, 32]))
@settings(max_examples=25, deadline=None)
def test_interior_rows_annihilate_constants(j, N):
    for name, sys in _systems(2.0**-j, N).items():
        interior = sys.kinds == NodeKind.INTERIOR
        rowsum = np.asarray(sys.matrix.sum(axis=1)).ravel()
        assert np.max(np.abs(rowsum[interior])) < 1e-12, name


@given(st.integers(0, 20), st.sampled_from([8, 16, 32, 64]))
@settings(max_examples=30, deadline=None)
def test_m_matrix_sign_pattern(j, N):
    for name, sys in _systems(2.0**-j, N).items():
        assert m_matrix_check(sys).ok, name


@given(st.integers(0, 20), st.sampled_from([8, 16, 32, 64]), st.sampled_from([1, 2]))
@settings(max_examples=30, deadline=None)
def test_patch_at_stability_limit(j, N, ratio):
    p = ProblemParams(2.0**-j, N, M=ratio * N)
    sys = assemble_patch(patch_mesh(p, width=p.L_star * (1 - 1e-15)), p, 0.0)
    assert m_matrix_check(sys).ok


def test_patch_beyond_limit_breaks_sign_pattern():
    p = ProblemParams(2.0**-10, 32)
    mesh = patch_mesh(p, width=min(2 * p.L_star, 0.99))
    with pytest.raises(StabilityError):
        assemble_patch(mesh, p, 0.0)
    sys = assemble_patch(mesh, p, 0.0, allow_unstable=True)
    report = m_matrix_check(sys)
    assert not report.ok and len(report.failing_rows) > 0


def test_patch_stencil_omits_anti_diagonal():
    p = ProblemParams(2.0**-6, 16)
    sys = assemble_patch(patch_mesh(p), p, 0.0)
    nv, nu = sys.mesh.shape
    for j in range(1, nv - 1):
        for i in range(1, nu - 1):
            if sys.mesh.mask[j, i] != NodeKind.INTERIOR:
                continue
            st_ = sys.stencil(i, j)
            assert (1, -1) not in st_ and (-1, 1) not in st_
            assert st_[(0, 0)] == pytest.approx(1.0)
            assert st_[(-1, -1)] <= 0 and st_[(1, 1)] <= 0


def test_polar_coefficients_at_an_interior_node():
    p = ProblemParams(1.0, 8)
    mesh = annulus_mesh(p)
    sys = assemble_polar(mesh, p)
    i, j = 3, 4  # theta = pi/2 exactly: cos = 0, sin = 1
    r, th = mesh.u.nodes, mesh.v.nodes
    hm, hp = r[i] - r[i - 1], r[i + 1] - r[i]
    km, kp = th[j] - th[j - 1], th[j + 1] - th[j]
    br = np.cos(th[j]) - 1.0 / r[i]  # negative: forward difference in r
    bt = -np.sin(th[j]) / r[i]  # negative: forward difference in theta
    raw = {
        (-1, 0): -2 / (hm * (hm + hp)),
        (1, 0): -2 / (hp * (hm + hp)) + br / hp,
        (0, -1): -2 / (km * (km + kp)) / r[i] ** 2,
        (0, 1): -2 / (kp * (km + kp)) / r[i] ** 2 + bt / kp,
    }
    diag = -sum(raw.values())
    got = sys.stencil(i, j)
    for off, v in raw.items():
        assert got[off] == pytest.approx(v / diag, rel=1e-12)


def test_missing_boundary_data_is_an_error():
    p = ProblemParams(1.0, 8)
    with pytest.raises(ValueError, match="missing boundary value"):
        assemble_cartesian(strip_mesh(p), p, lambda x, y: np.full_like(x, np.nan))


def test_wrong_mesh_type_rejected():
    p = ProblemParams(1.0, 8)
    with pytest.raises(ValueError):
        assemble_polar(strip_mesh(p), p)
    with pytest.raises(ValueError):
        assemble_cartesian(annulus_mesh(p), p, 0.0)


def test_dump_coo(tmp_path):
    p = ProblemParams(1.0, 8)
    sys = assemble_cartesian(strip_mesh(p), p, 0.0)
    path = tmp_path / "a.txt"
    dump_coo(sys, path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"# {sys.unknown_count} unknowns, {sys.matrix.nnz} entries"
    assert len(lines) == 2 + sys.matrix.nnz + sys.unknown_count
