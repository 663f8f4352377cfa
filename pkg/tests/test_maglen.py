import numpy as np
import pytest

from maggeo import geom, flow, orbit, maglen


def test_riemannian_length_cases(torus_orbit_b2, sphere_orbit_f1, great_circle):
    assert maglen.riemannian_length(torus_orbit_b2) == pytest.approx(np.pi, abs=1e-8)
    assert maglen.riemannian_length(sphere_orbit_f1) == pytest.approx(
        np.pi * np.sqrt(2), abs=1e-7)
    assert maglen.riemannian_length(great_circle) == pytest.approx(
        2 * np.pi, abs=1e-8)


@pytest.mark.parametrize("b", [1.0, 2.0, 5.0])
def test_torus_capping_closed_form(torus, b):
    # clockwise circle of radius 1/b: winding weight -1 on a disc of
    # area pi/b^2 gives flux -pi/b
    orb = orbit.find_closed_orbit(torus, b, flow.UnitTangentState(0.3, 0.4, 1.1),
                                  2 * np.pi / b)
    cap = maglen.capping_integral(orb, b, torus)
    assert cap == pytest.approx(-np.pi / b, abs=1e-6)
    assert maglen.magnetic_length(orb, b, torus) == pytest.approx(
        np.pi / b, abs=1e-6)


def test_sphere_capping_closed_form(sphere_orbit_f1, sphere):
    # negatively weighted spherical cap of angular radius pi/4
    cap = maglen.capping_integral(sphere_orbit_f1, 1.0, sphere)
    assert cap == pytest.approx(-2 * np.pi * (1 - np.sqrt(2) / 2), abs=1e-6)
    ell = maglen.magnetic_length(sphere_orbit_f1, 1.0, sphere)
    assert ell == pytest.approx(2 * np.pi / (1 + np.sqrt(2)), abs=1e-6)


def test_zero_field_capping(great_circle, sphere):
    assert maglen.capping_integral(great_circle, 0.0, sphere) == pytest.approx(
        0.0, abs=1e-10)
    assert maglen.magnetic_length(great_circle, 0.0, sphere) == pytest.approx(
        2 * np.pi, abs=1e-8)


def test_disc_independence(sphere_orbit_f1, sphere):
    # moving the projection point through admissible positions leaves the
    # magnetic length unchanged
    qs = maglen._admissible_projection_points(sphere_orbit_f1, sphere, count=5)
    assert len(qs) == 5
    vals = [maglen.magnetic_length(sphere_orbit_f1, 1.0, sphere, q=q) for q in qs]
    assert np.ptp(vals) <= 1e-6


def test_inadmissible_projection_rejected(sphere_orbit_f1, sphere):
    # a projection point inside the clockwise-bounded cap flips the chart
    # turning number and must be refused
    cands, dists = orbit._auto_chart_points(sphere, sphere_orbit_f1, n_candidates=256)
    bad = None
    for cand, d in zip(cands, dists):
        if d < 0.05:
            continue
        if orbit._sphere_turning(sphere, sphere_orbit_f1, cand) != -1:
            bad = cand
            break
    assert bad is not None
    with pytest.raises(maglen.AdmissibilityError):
        maglen.capping_integral(sphere_orbit_f1, 1.0, sphere, q=bad)


def test_out_of_class_orbit_rejected(torus):
    orb = orbit.find_closed_orbit(torus, 0.0, flow.UnitTangentState(0.2, 0.2, 0.0),
                                  1.0, bracket=(0.5, 1.5))
    assert not orb.in_fibre_class
    with pytest.raises(maglen.AdmissibilityError):
        maglen.capping_integral(orb, 1.0, torus)


def test_winding_grid_witness(torus_orbit_b2, torus):
    data = maglen.capping_integral(torus_orbit_b2, 2.0, torus, resolution=128,
                                   return_data=True)
    exact = data.flux_exact
    assert exact == pytest.approx(-np.pi / 2, abs=1e-6)
    e1 = abs(data.flux_grid - exact)
    e2 = abs(data.flux_grid_refined - exact)
    # refinement shrinks the witness error and Richardson improves on both
    assert e2 < e1
    assert abs(data.flux_richardson - exact) <= 5e-3
    # winding values are -1 inside the disc and 0 outside
    assert set(np.unique(data.winding)).issubset({-1, 0})


def test_winding_numbers_direct():
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    circle = np.stack([np.cos(t), np.sin(t)], axis=1)  # counterclockwise
    w = maglen.winding_numbers(np.array([[0.0, 0.0], [2.0, 0.0]]), circle)
    assert np.round(w[0]) == 1
    assert np.round(w[1]) == 0
    w = maglen.winding_numbers(np.array([[0.0, 0.0]]), circle[::-1])
    assert np.round(w[0]) == -1


def test_consistency_with_action_sphere(sphere_orbit_f1, sphere):
    from maggeo import forms

    ell = maglen.magnetic_length(sphere_orbit_f1, 1.0, sphere)
    ac = forms.action_orbit_sphere(sphere_orbit_f1, 1.0)
    offset = sphere.area() * 1.0 / sphere.euler_characteristic
    assert ac.action - offset == pytest.approx(ell, abs=1e-5)


def test_consistency_with_action_torus(torus_orbit_b2, torus):
    from maggeo import forms, sysdia

    ell = maglen.magnetic_length(torus_orbit_b2, 2.0, torus)
    al = sysdia.average_length(torus, geom.ConstantField(torus, 2.0))
    ac = forms.action_orbit_torus(torus_orbit_b2, 2.0)
    assert ac.action == pytest.approx((ell - al.ell_bar) / 2.0, abs=1e-5)
