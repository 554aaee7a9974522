import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipwalk import hlip

NOMINAL = dict(T_S=0.4, T_D=0.1, z0=1.0)


def integrate_step(x, u, T_S, T_D, z0, g=9.81, h=1e-4):
    """One H-LIP step by direct ODE integration.

    Touchdown moves the stance reference forward by ``u``; double support
    drifts at constant velocity, single support follows ``p'' = lam^2 p``.
    """
    lam2 = g / z0
    p, pd = x[0] - u, x[1]
    p += pd * T_D

    def f(y):
        return np.array([y[1], lam2 * y[0]])

    y = np.array([p, pd])
    n = int(round(T_S / h))
    dt = T_S / n
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


@pytest.mark.parametrize("T_S,T_D,z0", [(0.4, 0.1, 1.0), (0.3, 0.05, 0.9), (0.5, 0.0, 1.1)])
def test_matrices_match_ode_integration(T_S, T_D, z0):
    m = hlip.s2s_matrices(T_S, T_D, z0)
    A_num = np.column_stack([integrate_step(e, 0.0, T_S, T_D, z0) for e in np.eye(2)])
    B_num = integrate_step(np.zeros(2), 1.0, T_S, T_D, z0)
    assert np.max(np.abs(A_num - m.A)) < 1e-8
    assert np.max(np.abs(B_num - m.B)) < 1e-8


def test_nominal_values():
    m = hlip.s2s_matrices(**NOMINAL)
    assert m.lam == pytest.approx(3.13209, abs=1e-5)
    assert m.A == pytest.approx(np.array([[1.89298, 0.70246], [5.03416, 2.39639]]), abs=1e-5)
    assert m.B == pytest.approx(np.array([-1.89298, -5.03416]), abs=1e-5)


def test_bad_parameters():
    with pytest.raises(ValueError):
        hlip.s2s_matrices(0.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        hlip.s2s_matrices(0.4, -0.1, 1.0)


@pytest.mark.parametrize("v", [0.0, 0.2, 0.5, 0.8, -0.3])
def test_orbit_is_fixed_point(v):
    m = hlip.s2s_matrices(**NOMINAL)
    for conv in ("pre_impact", "average"):
        u, x = hlip.orbit_for_velocity(m, v, conv)
        assert m.A @ x + m.B * u == pytest.approx(x, abs=1e-12)
    u, x = hlip.orbit_for_velocity(m, v, "pre_impact")
    assert x[1] == pytest.approx(v)
    u, x = hlip.orbit_for_velocity(m, v, "average")
    assert u == pytest.approx(v * 0.5)


def test_orbit_symmetric_single_support():
    # pre-impact p* equals minus the post-lift-off position
    m = hlip.s2s_matrices(**NOMINAL)
    u, x = hlip.orbit_for_velocity(m, 0.5)
    p0, pd0 = x[0] - u + x[1] * m.T_D, x[1]
    p1, _ = hlip.ssp_flow(p0, pd0, m.T_S, m.lam)
    assert p0 == pytest.approx(-p1)


def test_deadbeat_nilpotent():
    m = hlip.s2s_matrices(**NOMINAL)
    K = hlip.deadbeat_gain(m)
    M = hlip.closed_loop_matrix(m, K)
    assert np.max(np.abs(M @ M)) < 1e-9
    assert K == pytest.approx([1.0, 0.476026], abs=1e-5)


def test_deadbeat_two_step_convergence():
    m = hlip.s2s_matrices(**NOMINAL)
    gait = hlip.make_gait(m, 0.5)
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = gait.x_star + rng.normal(scale=[0.05, 0.2])
        for _ in range(2):
            u = gait.u_star + gait.K_db @ (x - gait.x_star)
            x = m.A @ x + m.B * u
        assert np.max(np.abs(x - gait.x_star)) < 1e-12


def test_stepping_at_pre_impact_is_linear_law():
    m = hlip.s2s_matrices(**NOMINAL)
    gait = hlip.make_gait(m, 0.5)
    u = hlip.stepping(0.12, 0.6, m.T_S, gait, m)
    assert u == pytest.approx(gait.u_star + gait.K_db @ (np.array([0.12, 0.6]) - gait.x_star))


def test_stepping_projects_mid_stance_state():
    m = hlip.s2s_matrices(**NOMINAL)
    gait = hlip.make_gait(m, 0.5)
    p, pd = -0.05, 0.45
    pf, pdf = hlip.ssp_flow(p, pd, m.T_S - 0.15, m.lam)
    assert hlip.stepping(p, pd, 0.15, gait, m) == pytest.approx(hlip.stepping(pf, pdf, m.T_S, gait, m))


def test_ssp_flow_composes():
    a = hlip.ssp_flow(*hlip.ssp_flow(0.1, -0.2, 0.13, 3.1), 0.21, 3.1)
    b = hlip.ssp_flow(0.1, -0.2, 0.34, 3.1)
    assert a == pytest.approx(b, abs=1e-14)


def test_box_and_hull_basics():
    b = hlip.bounding_box([(0, 0), (1, 2), (0.5, -1)], inflation=0.1)
    assert b.lo == pytest.approx((-0.05, -1.15)) and b.hi == pytest.approx((1.05, 2.15))
    assert b.contains((0.5, 0.5)) and not b.contains((2, 0))
    sq = hlip.ConvexPolygon.hull([(0, 0), (1, 0), (1, 1), (0, 1), (0.5, 0.5)])
    assert len(sq.vertices) == 4
    assert sq.area() == pytest.approx(1.0)
    assert sq.contains((0.5, 0.5)) and not sq.contains((1.1, 0.5))
    assert sq.extent(1) == (0.0, 1.0)
    with pytest.raises(ValueError):
        hlip.bounding_box([])


def test_degenerate_hulls():
    seg = hlip.ConvexPolygon.hull([(0, 0), (1, 1), (2, 2)])
    assert seg.contains((1.5, 1.5)) and not seg.contains((1.0, 0.0))
    pt = hlip.ConvexPolygon.hull([(1, 1)])
    assert pt.contains((1, 1)) and not pt.contains((1, 1.1))


@settings(max_examples=100, deadline=None)
@given(pts=st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=3, max_size=30))
def test_hull_contains_its_points(pts):
    h = hlip.ConvexPolygon.hull(pts)
    assert all(h.contains(p, 1e-9) for p in pts)


@settings(max_examples=60, deadline=None)
@given(
    lo=st.tuples(st.floats(-0.1, 0.0), st.floats(-0.3, 0.0)),
    size=st.tuples(st.floats(1e-3, 0.1), st.floats(1e-3, 0.3)),
    seed=st.integers(0, 2**16),
)
def test_error_set_is_invariant(lo, size, seed):
    m = hlip.s2s_matrices(**NOMINAL)
    M = hlip.closed_loop_matrix(m, hlip.deadbeat_gain(m))
    W = hlip.Box(lo, (lo[0] + size[0], lo[1] + size[1]))
    E = hlip.error_invariant_set(M, W)
    # M E + W stays in E: check the vertex sums
    for e in E.vertices:
        for w in W.vertices():
            assert E.contains(M @ np.asarray(e) + np.asarray(w), 1e-9)
    # trajectories started in E stay there under random disturbances
    rng = np.random.default_rng(seed)
    e = M @ rng.uniform(W.lo, W.hi) + rng.uniform(W.lo, W.hi)
    assert E.contains(e, 1e-9)
    for _ in range(50):
        w = rng.uniform(W.lo, W.hi)
        e = M @ e + w
        assert E.contains(e, 1e-9)


def test_point_outside_invariant_set_is_flagged():
    m = hlip.s2s_matrices(**NOMINAL)
    M = hlip.closed_loop_matrix(m, hlip.deadbeat_gain(m))
    E = hlip.error_invariant_set(M, hlip.Box((-0.01, -0.02), (0.01, 0.02)))
    lo, hi = E.extent(1)
    assert not E.contains((0.0, hi + 0.01))


def test_gait_csv_row():
    m = hlip.s2s_matrices(**NOMINAL)
    row = hlip.gait_csv_row(m, hlip.make_gait(m, 0.5))
    assert len(row) == len(hlip.GAIT_CSV_HEADER)
    assert dict(zip(hlip.GAIT_CSV_HEADER, row))["pd_star"] == pytest.approx(0.5)
    assert math.isfinite(sum(row))
