import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from maggeo import geom, flow


def _angle_close(a, b, tol):
    return abs(np.mod(a - b + np.pi, 2 * np.pi) - np.pi) <= tol


def test_flat_heading_rate(torus):
    # constant forcing b: heading rotates clockwise at rate b, unit speed
    for b in (0.5, 2.0, 7.0):
        s = flow.UnitTangentState(0.3, 0.4, 1.1)
        dx, dy, dphi = flow.magnetic_derivative(torus, geom.ConstantField(torus, b), s)
        assert dphi == pytest.approx(-b, abs=1e-14)
        assert np.hypot(dx, dy) == pytest.approx(1.0, abs=1e-14)


def test_radius_table_flat(torus):
    # K = 0 row: circle of radius 1/b, period 2 pi / b
    b = 2.0
    s0 = flow.UnitTangentState(0.3, 0.4, 0.7)
    traj = flow.integrate(torus, b, s0, np.pi, tol=1e-11)
    e = traj.endpoint
    assert abs(e.x - s0.x) <= 1e-9 and abs(e.y - s0.y) <= 1e-9
    assert _angle_close(e.phi, s0.phi, 1e-9)


def test_radius_table_sphere(sphere):
    # K = 1 row with unit forcing: closes after arc length pi sqrt(2)
    s0 = flow.UnitTangentState(0.1, -0.2, 0.5)
    traj = flow.integrate(sphere, 1.0, s0, np.pi * np.sqrt(2), tol=1e-11)
    e = traj.endpoint
    assert abs(e.x - s0.x) <= 1e-9 and abs(e.y - s0.y) <= 1e-9
    assert _angle_close(e.phi, s0.phi, 1e-9)


def test_great_circle(sphere):
    s0 = flow.UnitTangentState(0.1, -0.2, 0.5)
    traj = flow.integrate(sphere, 0.0, s0, 2 * np.pi, tol=1e-11)
    e = traj.endpoint
    assert abs(e.x - s0.x) <= 1e-9 and abs(e.y - s0.y) <= 1e-9


def test_radius_table_hyperbolic(hyperbolic):
    # K = -1 row with forcing 2: geodesic circle of radius arctanh(1/2)
    R = np.arctanh(0.5)
    T = 2 * np.pi * np.sinh(R)
    s0 = flow.UnitTangentState(0.0, 0.0, 0.0)
    traj = flow.integrate(hyperbolic, 2.0, s0, T, tol=1e-11)
    e = traj.endpoint
    assert abs(e.x - s0.x) <= 1e-9 and abs(e.y - s0.y) <= 1e-9
    sub = traj.states[::32, :2]
    D = hyperbolic.distance(sub[:, None, :], sub[None, :, :])
    assert D.max() / 2 == pytest.approx(R, abs=1e-6)


def test_unit_speed_defect(torus, sphere):
    f = geom.TorusField(torus, lambda X, Y: 1 + 0.4 * np.sin(2 * np.pi * X))
    traj = flow.integrate(torus, f, flow.UnitTangentState(0.1, 0.9, 2.0), 3.0,
                          tol=1e-10)
    assert traj.speed_defect <= 1e-8
    traj = flow.integrate(sphere, 1.0, flow.UnitTangentState(1.4, 0.2, 0.4),
                          5.0, tol=1e-10)
    assert traj.speed_defect <= 1e-8


def test_endpoint_against_scipy(torus):
    # independent integrator oracle on the same vector field
    f = geom.TorusField(torus, lambda X, Y: 1.5 + 0.3 * np.sin(2 * np.pi * X)
                        * np.cos(2 * np.pi * Y))
    s0 = flow.UnitTangentState(0.2, 0.6, 0.9)
    T = 2.3
    traj = flow.integrate(torus, f, s0, T, tol=1e-12)

    def rhs(tt, y):
        dx, dy, dphi = flow._rhs_arrays(torus, f, y[0:1], y[1:2], y[2:3],
                                        np.array([0]))
        return [dx[0], dy[0], dphi[0]]

    sol = solve_ivp(rhs, (0, T), [s0.x, s0.y, s0.phi], method="DOP853",
                    rtol=1e-12, atol=1e-12)
    e = traj.endpoint
    assert abs(e.x - sol.y[0, -1]) <= 1e-9
    assert abs(e.y - sol.y[1, -1]) <= 1e-9
    assert _angle_close(e.phi, sol.y[2, -1], 1e-9)


def test_time_reversal_exact_cases(torus, sphere):
    for surface, f, fneg, seed in [
        (torus, geom.ConstantField(torus, 1.3), geom.ConstantField(torus, -1.3),
         flow.UnitTangentState(0.37, 0.81, 2.2)),
        (sphere, geom.ConstantField(sphere, 0.7), geom.ConstantField(sphere, -0.7),
         flow.UnitTangentState(0.4, -0.1, 1.0)),
    ]:
        T = 1.7
        fwd = flow.integrate(surface, f, seed, T, tol=1e-12).endpoint
        back = flow.integrate(surface, fneg, flow.time_reversal_partner(fwd),
                              T, tol=1e-12).endpoint
        assert abs(back.x - seed.x) <= 1e-8
        assert abs(back.y - seed.y) <= 1e-8
        assert _angle_close(back.phi, seed.phi + np.pi, 1e-8)


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_time_reversal_random_fields(seed):
    # reversal conjugacy for random band-limited forcing on the torus
    torus = geom.FlatTorus(1.0, 1.0)
    rng = np.random.default_rng(seed)
    f = geom.random_torus_field(torus, rng, mean=rng.uniform(-1, 1),
                                amplitude=0.5, max_mode=2, resolution=64)
    fneg = geom.TorusField(torus, -f.grid_samples, resolution=64)
    s0 = flow.UnitTangentState(rng.uniform(0, 1), rng.uniform(0, 1),
                               rng.uniform(0, 2 * np.pi))
    T = rng.uniform(0.5, 2.0)
    fwd = flow.integrate(torus, f, s0, T, tol=1e-11).endpoint
    back = flow.integrate(torus, fneg, flow.time_reversal_partner(fwd), T,
                          tol=1e-11).endpoint
    assert abs(back.x - s0.x) <= 1e-8
    assert abs(back.y - s0.y) <= 1e-8
    assert _angle_close(back.phi, s0.phi + np.pi, 1e-8)


def test_chart_overlap_consistency(sphere):
    # a short arc inside the overlap band integrates identically in both charts
    s1 = flow.UnitTangentState(1.2, 0.4, 1.0, chart=0)
    T = 0.3
    e0 = flow.integrate(sphere, 1.0, s1, T, tol=1e-12).endpoint
    x1, y1, p1, _ = sphere.transition(np.array([s1.x]), np.array([s1.y]),
                                      np.array([s1.phi]), 0)
    s1b = flow.UnitTangentState(float(x1[0]), float(y1[0]), float(p1[0]), chart=1)
    e1 = flow.integrate(sphere, 1.0, s1b, T, tol=1e-12).endpoint
    xb, yb, pb, _ = sphere.transition(np.array([e1.x]), np.array([e1.y]),
                                      np.array([e1.phi]), 1)
    assert abs(e0.x - xb[0]) <= 1e-8
    assert abs(e0.y - yb[0]) <= 1e-8
    assert _angle_close(e0.phi, pb[0], 1e-8)


def test_chart_switch_happens(sphere):
    s0 = flow.UnitTangentState(1.5, 0.0, 0.3, chart=0)
    traj = flow.integrate(sphere, 0.0, s0, 2 * np.pi, tol=1e-11)
    assert set(np.unique(traj.charts)) == {0, 1}
    e = traj.endpoint
    assert abs(e.x - s0.x) <= 1e-9 and abs(e.y - s0.y) <= 1e-9


def test_variation_identity_at_zero(torus):
    s0 = flow.UnitTangentState(0.3, 0.4, 1.0)
    jet = flow.integrate_with_variation(torus, 1.0, s0, 0.0)
    assert np.array_equal(jet.differential, np.eye(3))


def test_variation_flat_shear(torus):
    # geodesic flow on the flat torus: the differential is the explicit
    # shear I + T * J with J nilpotent, eigenvalue 1 threefold
    s0 = flow.UnitTangentState(0.25, 0.75, 0.6)
    T = 1.3
    jet = flow.integrate_with_variation(torus, 0.0, s0, T, tol=1e-12)
    expected = np.eye(3)
    expected[0, 2] = -T * np.sin(s0.phi)
    expected[1, 2] = T * np.cos(s0.phi)
    assert np.max(np.abs(jet.differential - expected)) <= 1e-8
    eigs = np.linalg.eigvals(jet.differential)
    assert np.max(np.abs(eigs - 1.0)) <= 1e-8


def test_variation_det_monitor(sphere, torus):
    jet = flow.integrate_with_variation(torus, 2.0, flow.UnitTangentState(0.3, 0.4, 1.0),
                                        1.0, tol=1e-12)
    assert jet.det_actual == pytest.approx(jet.det_expected, abs=1e-9)
    jet = flow.integrate_with_variation(sphere, 1.0,
                                        flow.UnitTangentState(1.5, 0.0, 0.3),
                                        4.0, tol=1e-11)
    assert jet.det_actual == pytest.approx(jet.det_expected, rel=1e-8)


def test_variation_gronwall_along_trajectory(torus):
    # first-order bound with the derivative norm integrated along the orbit
    f = geom.TorusField(torus, lambda X, Y: 1 + 0.5 * np.sin(2 * np.pi * X))
    s0 = flow.UnitTangentState(0.2, 0.1, 0.4)
    T = 1.0
    jet = flow.integrate_with_variation(torus, f, s0, T, tol=1e-11)
    traj = flow.integrate(torus, f, s0, T, tol=1e-11, n_samples=256)
    from maggeo.normalize import _fd_jacobian_rhs

    J = _fd_jacobian_rhs(torus, f, traj.states, np.zeros(len(traj.states), int))
    norms = np.linalg.norm(J, ord=2, axis=(1, 2))
    bound = np.exp(np.trapezoid(norms, traj.ts))
    assert np.linalg.norm(jet.differential, ord=2) <= bound * (1 + 1e-9)


def test_hyperbolic_domain_exit(hyperbolic):
    with pytest.raises(flow.IntegrationError):
        flow.integrate(hyperbolic, 0.0, flow.UnitTangentState(0.0, 0.0, 0.0), 10.0)


def test_bad_duration(torus):
    with pytest.raises(ValueError):
        flow.integrate(torus, 1.0, flow.UnitTangentState(0, 0, 0), -1.0)


def test_trajectory_csv(torus):
    traj = flow.integrate(torus, 1.0, flow.UnitTangentState(0.1, 0.2, 0.3), 1.0,
                          n_samples=16)
    text = traj.to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "t,x,y,phi,speed_defect"
    assert len(lines) == 18
