import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemker.verification import (
    CENTER_CONSTANTS,
    Barrier,
    BoundKind,
    ConvergenceTable,
    Which,
    barrier_operator,
    barrier_residual,
    barrier_value,
    bound_envelope,
    center_constraints_hold,
    fine_mesh_error,
    orders,
    synthetic_anomaly,
    synthetic_uniform,
    two_mesh_difference,
)

SAMPLES = 10_000
KAPPA_C = CENTER_CONSTANTS["kappa"]


def test_synthetic_worked_example():
    assert synthetic_anomaly(4, 2**-4, 32) == 2**-5
    assert synthetic_anomaly(4, 2**-4, 64) == pytest.approx(0.2)
    p = math.log2(synthetic_anomaly(4, 2**-4, 32) / synthetic_anomaly(4, 2**-4, 64))
    assert p == pytest.approx(-2.678, abs=5e-4)
    pu = math.log2(synthetic_uniform(4, 32) / synthetic_uniform(4, 64))
    assert pu == pytest.approx(0.551, abs=5e-4)
    assert synthetic_anomaly(1, 1.0, 4) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        synthetic_anomaly(0.5, 1.0, 4)


def test_synthetic_uniform_is_the_max_over_eps():
    # sup over eps of D_eps^N is attained where k eps ln N = 1
    for N in (8, 32, 256):
        grid = [synthetic_anomaly(4, e, N) for e in np.geomspace(1e-8, 1, 4001)]
        edge = synthetic_anomaly(4, (1 + 1e-15) / (4 * math.log(N)), N)
        assert max(max(grid), edge) == pytest.approx(synthetic_uniform(4, N), rel=1e-12)
        assert max(grid) <= synthetic_uniform(4, N)


def test_orders_exact_halving_and_undefined_entries():
    t = orders(ConvergenceTable([1.0, 0.5], [8, 16, 32], np.array([[0.4, 0.2, 0.1], [0.0, 0.1, np.nan]])))
    assert t.p_local[0] == pytest.approx([1.0, 1.0])
    assert np.isnan(t.p_local[1]).all()
    assert np.array_equal(t.D_uniform, np.nanmax(t.D, axis=0))
    assert t.p_uniform == pytest.approx([1.0, 1.0])
    with pytest.raises(ValueError, match="doubling"):
        orders(ConvergenceTable([1.0], [8, 24], np.array([[0.4, 0.2]])))


def test_two_mesh_difference_contract(run):
    a, b = run(1.0, 8), run(1.0, 16)
    assert two_mesh_difference(a, a.__class__(**{**a.__dict__, "params": b.params}), Which.CORRECTED) == 0.0
    with pytest.raises(ValueError, match="equal epsilon"):
        two_mesh_difference(a, run(0.5, 16), Which.CORRECTED)
    with pytest.raises(ValueError, match="double"):
        two_mesh_difference(a, run(1.0, 32), Which.CORRECTED)
    assert two_mesh_difference(a, b, Which.PATCH) <= two_mesh_difference(a, b, Which.CORRECTED)


def test_fine_mesh_error_contract(run):
    a = run(2**-4, 8)
    assert fine_mesh_error(a, a.__class__(**{**a.__dict__, "params": run(2**-4, 32).params})) == 0.0
    with pytest.raises(ValueError, match="4N"):
        fine_mesh_error(a, run(2**-4, 16))
    errs = [fine_mesh_error(run(2**-4, N), run(2**-4, 128)) for N in (8, 16, 32)]
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("eps", [1.0, 2**-4, 2**-10, 2**-20])
def test_basic_bound_is_the_discrete_range(run, eps):
    env = bound_envelope(run(eps, 16).corrected, BoundKind.BASIC)
    assert env.fitted_C <= 1 + 1e-10 and env.violation_count == 0


def test_right_bound_at_unit_eps(run):
    env = bound_envelope(run(1.0, 16).corrected, BoundKind.RIGHT)
    assert not env.empty and env.fitted_C <= 10


def test_left_bound_constant_settles(run):
    Cs = [bound_envelope(run(2**-10, N).corrected, BoundKind.LEFT).fitted_C for N in (16, 32, 64)]
    assert all(np.isfinite(Cs)) and max(Cs) < 10
    assert Cs[2] <= Cs[0] * 1.05


def test_center_bound_empty_region_reported(run):
    env = bound_envelope(run(1.0, 8).corrected, BoundKind.CENTER, floor=2.0)
    assert env.empty and np.isnan(env.fitted_C)


# ---------------------------------------------------------------------------
# barrier functions

rng = np.random.default_rng(20240611)
EPS_GRID = 2.0 ** -np.arange(0, 21)


def test_center_constants_satisfy_constraints():
    C, alpha, kappa = CENTER_CONSTANTS["C"], CENTER_CONSTANTS["alpha"], CENTER_CONSTANTS["kappa"]
    assert kappa <= C / 3 and alpha > 8 / 9 * C**2 and C**3 < 9 / 8
    assert center_constraints_hold(C, alpha, kappa)
    assert not center_constraints_hold(1.0, 0.8, 1 / 3)


def test_bminus_residual_nonnegative():
    eps = rng.choice(EPS_GRID, SAMPLES)
    kappa = rng.uniform(1e-3, 1.0, SAMPLES)
    r = rng.uniform(1.0 + 1e-9, 4.0, SAMPLES)
    th = rng.uniform(np.pi / 2 + 1e-9, 3 * np.pi / 2 - 1e-9, SAMPLES)
    res = np.array([barrier_residual(Barrier.BMINUS, e, (a, b), kappa=k) for e, a, b, k in zip(eps[:500], r[:500], th[:500], kappa[:500])])
    assert res.min() >= -1e-12
    for k in (1.0, 0.5, 1e-2):
        vec = barrier_residual(Barrier.BMINUS, 2**-6, (r, th), kappa=k)
        assert vec.min() >= -1e-12


def test_bplus_residual_nonnegative():
    x = rng.uniform(-4, 4, SAMPLES)
    y = rng.uniform(1 + 1e-9, 4, SAMPLES)
    for eps in EPS_GRID[2:]:
        assert barrier_residual(Barrier.BPLUS, eps, (x, y), C1=2.0).min() >= -1e-12


def test_bcenter_residual_nonnegative():
    for eps in EPS_GRID:
        xi = rng.uniform(-1 + 1e-9, 1 - 1e-9, SAMPLES)
        x = xi * eps ** (1 / 3)
        # offsets from the parabola y = 1 - x^2/2, scaled to the layer width
        q = rng.uniform(-1, 1, SAMPLES) * min(10 * eps ** (2 / 3), 0.4)
        y = 1 - 0.5 * x * x + q
        assert barrier_residual(Barrier.BCENTER, eps, (x, y)).min() >= -1e-12


def test_barrier_hand_values():
    assert barrier_residual(Barrier.BMINUS, 2**-4, (2.0, np.pi)) == pytest.approx(0.0, abs=1e-30)
    assert barrier_residual(Barrier.BMINUS, 2**-4, (2.0, 3 * np.pi / 4), kappa=0.5) > 0
    B = barrier_value(Barrier.BPLUS, 2**-6, (0.3, 1.5), C1=2.0)
    assert barrier_residual(Barrier.BPLUS, 2**-6, (0.3, 1.5)) == pytest.approx((2 - 4 / 64 - 1) * B)


def test_barrier_region_checks():
    with pytest.raises(ValueError):
        barrier_residual(Barrier.BMINUS, 0.1, (2.0, 0.1))
    with pytest.raises(ValueError):
        barrier_residual(Barrier.BPLUS, 0.1, (0.0, 0.5))
    with pytest.raises(ValueError):
        barrier_residual(Barrier.BCENTER, 2**-9, (0.5, 1.0))


def _fd_operator(kind, eps, a, b, h, **kw):
    """Central-difference image of the barrier under -eps*Laplace + d/dx."""
    f = lambda p, q: barrier_value(kind, eps, (p, q), **kw)
    if kind is Barrier.BMINUS:
        r, th = a, b
        f_r = (f(r + h, th) - f(r - h, th)) / (2 * h)
        f_rr = (f(r + h, th) - 2 * f(r, th) + f(r - h, th)) / h**2
        f_t = (f(r, th + h) - f(r, th - h)) / (2 * h)
        f_tt = (f(r, th + h) - 2 * f(r, th) + f(r, th - h)) / h**2
        lap = f_rr + f_r / r + f_tt / r**2
        ux = np.cos(th) * f_r - np.sin(th) / r * f_t
        return -eps * lap + ux
    f_x = (f(a + h, b) - f(a - h, b)) / (2 * h)
    lap = (f(a + h, b) + f(a - h, b) + f(a, b + h) + f(a, b - h) - 4 * f(a, b)) / h**2
    return -eps * lap + f_x


@given(st.floats(1.2, 3.5), st.floats(2.0, 4.2), st.sampled_from([1.0, 0.5]), st.sampled_from([1.0, 0.25]))
@settings(max_examples=60, deadline=None)
def test_bminus_operator_against_finite_differences(r, th, kappa, eps):
    exact = barrier_operator(Barrier.BMINUS, eps, (r, th), kappa=kappa)
    fd = _fd_operator(Barrier.BMINUS, eps, r, th, 1e-4, kappa=kappa)
    scale = barrier_value(Barrier.BMINUS, eps, (r, th), kappa=kappa) / eps**2
    assert abs(exact - fd) <= 1e-5 * max(scale, 1.0)
    # the printed lower bound never exceeds the full image
    if np.cos(th) < 0:
        assert barrier_residual(Barrier.BMINUS, eps, (r, th), kappa=kappa) <= exact + 1e-12 * abs(exact)


@given(st.floats(-0.9, 0.9), st.floats(0.8, 1.3), st.sampled_from([1.0, 0.5]))
@settings(max_examples=60, deadline=None)
def test_bcenter_operator_against_finite_differences(xi, y, eps):
    x = xi * eps ** (1 / 3)
    exact = barrier_operator(Barrier.BCENTER, eps, (x, y))
    fd = _fd_operator(Barrier.BCENTER, eps, x, y, 1e-4, kappa=KAPPA_C)
    assert abs(exact - fd) <= 1e-5 * max(1.0, abs(exact))
    # dropping the -eps B_xx term gives the printed residual
    assert barrier_residual(Barrier.BCENTER, eps, (x, y)) == pytest.approx(
        exact + eps * _bxx(x, y, eps), rel=1e-6, abs=1e-9
    )


def _bxx(x, y, eps, h=1e-4):
    f = lambda p: barrier_value(Barrier.BCENTER, eps, (p, y), kappa=KAPPA_C)
    return (f(x + h) - 2 * f(x) + f(x - h)) / h**2
