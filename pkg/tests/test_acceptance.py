"""Acceptance suite: one test per criterion, each printing a PASS line
with the measured figure when its assertions hold at the stated
tolerance."""

import itertools
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from maggeo import (config, exprfield, flow, forms, geom, maglen, normalize,
                    orbit, sysdia)


def _report(num, text):
    print(f"\n[criterion {num:2d}] PASS  {text}")


@pytest.fixture(scope="module")
def zoll_sphere_survey():
    surface = geom.RoundSphere(1.0)
    f = geom.ConstantField(surface, 1.0)
    seeds = orbit.seed_states(surface, 8, 8, 8)
    assert len(seeds) >= 500
    t0 = time.time()
    orbits = orbit.survey(surface, f, seed_grid=seeds)
    report = sysdia.verdict(surface, f, orbits)
    elapsed = time.time() - t0
    return surface, f, orbits, report, elapsed, len(seeds)


@pytest.fixture(scope="module")
def zoll_torus_surveys():
    surface = geom.FlatTorus(1.0, 1.0)
    out = {}
    t0 = time.time()
    for b in (1.0, 2.0, 5.0):
        f = geom.ConstantField(surface, b)
        orbits = orbit.survey(surface, f, seed_grid=(3, 3, 4))
        out[b] = (orbits, sysdia.verdict(surface, f, orbits))
    return surface, out, time.time() - t0


def test_criterion_01_zoll_sphere(zoll_sphere_survey):
    surface, f, orbits, report, elapsed, n_seeds = zoll_sphere_survey
    assert elapsed < 60.0
    assert len(orbits) >= 1
    target = np.pi * np.sqrt(2)
    for o in orbits:
        assert o.prime
        assert abs(o.period - target) <= 1e-6
    ell_bar = 2 * np.pi / (1 + np.sqrt(2))
    for p in report.per_orbit:
        assert abs(p["magnetic_length"] - ell_bar) <= 1e-5
    assert report.zoll_flag
    assert abs(report.ell_bar - ell_bar) <= 1e-9
    _report(1, f"{n_seeds} seeds, {len(orbits)} orbits, period err "
               f"{max(abs(o.period - target) for o in orbits):.2e}, "
               f"length err {max(abs(p['magnetic_length'] - ell_bar) for p in report.per_orbit):.2e}, "
               f"{elapsed:.1f}s")


def test_criterion_02_zoll_torus(zoll_torus_surveys):
    surface, out, elapsed = zoll_torus_surveys
    assert elapsed < 30.0
    worst = 0.0
    for b, (orbits, report) in out.items():
        assert len(orbits) >= 1
        assert report.zoll_flag
        assert abs(report.ell_bar - np.pi / b) <= 1e-12
        for p in report.per_orbit:
            worst = max(worst, abs(p["magnetic_length"] - np.pi / b))
            assert abs(p["magnetic_length"] - np.pi / b) <= 1e-6
    _report(2, f"b in (1, 2, 5), worst length err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_03_hyperbolic_radius():
    t0 = time.time()
    surface = geom.HyperbolicChart(-1.0)
    R = np.arctanh(0.5)
    orb = orbit.find_closed_orbit(
        surface, 2.0, flow.UnitTangentState(0.05, 0.02, 0.3),
        2 * np.pi * np.sinh(R) * 1.1)
    assert orb is not None
    pts = orb.states[::16, :2]
    D = surface.distance(pts[:, None, :], pts[None, :, :])
    measured = D.max() / 2
    elapsed = time.time() - t0
    assert elapsed < 10.0
    assert abs(measured - R) <= 1e-6
    _report(3, f"orbit radius {measured:.9f} vs arctanh(1/2) = {R:.9f}, "
               f"err {abs(measured - R):.2e}, {elapsed:.1f}s")


def test_criterion_04_near_zoll_sphere():
    t0 = time.time()
    surface = geom.RoundSphere(1.0)
    gaps = {}
    for eps in (0.02, 0.05):
        f = geom.SphereField(surface, lambda X, Y, Z, e=eps: 1.0 + e * Z)
        orbits = orbit.survey(surface, f, seed_grid=(6, 6, 6), max_iter=60)
        report = sysdia.verdict(surface, f, orbits)
        assert report.verdict == "holds"
        assert report.ell_min <= report.ell_bar <= report.ell_max
        gaps[eps] = report.ell_max - report.ell_min
    elapsed = time.time() - t0
    assert elapsed < 300.0
    assert gaps[0.05] > 1e-4  # strictness beyond the Zoll tolerance
    _report(4, f"holds at eps=0.02, 0.05; strictness gap {gaps[0.05]:.3e} "
               f"> zoll_tol, {elapsed:.0f}s")


def test_criterion_05_strong_field_torus():
    t0 = time.time()
    surface = geom.FlatTorus(1.0, 1.0)
    diam = {}
    for s in (5.0, 20.0):
        f = geom.TorusField(surface,
                            lambda X, Y, s=s: s * (2.0 + np.sin(2 * np.pi * X)))
        orbits = orbit.survey(surface, f, seed_grid=(6, 6, 6))
        report = sysdia.verdict(surface, f, orbits)
        assert report.verdict == "holds"
        assert report.ell_min <= report.ell_bar <= report.ell_max
        # the tightest orbit is the circle at the forcing maximum with
        # diameter 2 / max f
        ds = []
        for o in orbits:
            P = o.states[::16, :2]
            D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
            ds.append(D.max())
        diam[s] = min(ds)
    elapsed = time.time() - t0
    assert elapsed < 300.0
    ratio = diam[5.0] / diam[20.0]
    assert abs(ratio - 4.0) <= 0.4
    _report(5, f"holds at s=5, 20; min-diameter ratio {ratio:.3f} "
               f"(expect 4 within 10%), {elapsed:.0f}s")


def test_criterion_06_time_reversal():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    count = 0
    worst = 0.0
    surfaces = [geom.FlatTorus(1.0, 1.0),
                geom.ConformalTorus(lambda X, Y: 0.08 * np.sin(2 * np.pi * Y)),
                geom.RoundSphere(1.0)]
    for trial in range(10):
        surface = surfaces[trial % 3]
        if geom.is_torus(surface):
            f = geom.random_torus_field(surface, rng, mean=rng.uniform(-1, 1),
                                        amplitude=0.5, max_mode=2,
                                        resolution=64)
            fneg = geom.TorusField(surface, -f.grid_samples, resolution=64)
            x0 = rng.uniform(0, 1, 10)
            y0 = rng.uniform(0, 1, 10)
        else:
            a, b = rng.uniform(-0.3, 0.3, 2)
            f = geom.SphereField(surface,
                                 lambda X, Y, Z, a=a, b=b: a + b * Z)
            fneg = geom.SphereField(surface,
                                    lambda X, Y, Z, a=a, b=b: -(a + b * Z))
            r = rng.uniform(0, 1.2, 10)
            th = rng.uniform(0, 2 * np.pi, 10)
            x0, y0 = r * np.cos(th), r * np.sin(th)
        p0 = rng.uniform(0, 2 * np.pi, 10)
        T = rng.uniform(0.5, 2.0, 10)
        Y0 = np.stack([x0, y0, p0], axis=1)
        charts0 = np.zeros(10, dtype=int)
        fwd, cf, _ = flow._integrate_batch(surface, f, Y0, charts0, T,
                                           rtol=1e-11, atol=1e-11)
        flipped = fwd.copy()
        flipped[:, 2] += np.pi
        back, cb, _ = flow._integrate_batch(surface, fneg, flipped, cf, T,
                                            rtol=1e-11, atol=1e-11)
        # expect the start state with reversed heading, in the start chart
        if surface.kind == "round_sphere":
            m = cb != charts0
            if np.any(m):
                xb, yb, pb, _ = surface.transition(back[m, 0], back[m, 1],
                                                   back[m, 2], 1)
                back[m, 0], back[m, 1], back[m, 2] = xb, yb, pb
        err = np.maximum(np.abs(back[:, 0] - Y0[:, 0]),
                         np.abs(back[:, 1] - Y0[:, 1]))
        dphi = np.abs(np.mod(back[:, 2] - Y0[:, 2], 2 * np.pi) - np.pi)
        err = np.maximum(err, dphi)
        worst = max(worst, float(err.max()))
        count += 10
        assert np.all(err <= 1e-8)
    assert count == 100
    _report(6, f"100 random reversal round-trips, worst defect {worst:.2e}, "
               f"{time.time() - t0:.0f}s")


def test_criterion_07_capping_independence(zoll_sphere_survey):
    surface, f, orbits, report, _, _ = zoll_sphere_survey
    worst = 0.0
    for o in orbits[:3]:
        qs = maglen._admissible_projection_points(o, surface, count=5)
        assert len(qs) == 5
        vals = [maglen.magnetic_length(o, f, surface, q=q) for q in qs]
        worst = max(worst, float(np.ptp(vals)))
        assert np.ptp(vals) <= 1e-6
    _report(7, f"5 projection points per orbit, worst length spread {worst:.2e}")


def test_criterion_08_turning_numbers(zoll_sphere_survey, zoll_torus_surveys):
    surface_s, _, orbits_s, _, _, _ = zoll_sphere_survey
    surface_t, out_t, _ = zoll_torus_surveys
    n_checked = 0
    for o in orbits_s:
        assert o.turning_number % 2 != 0
        n_checked += 1
    for b, (orbits, _) in out_t.items():
        for o in orbits:
            assert o.turning_number == -1
            n_checked += 1
            for m in (2, 3):
                it = orbit.iterate_orbit(o, m)
                assert orbit.turning_number(it, surface_t) == -m
    _report(8, f"{n_checked} surveyed orbits: torus -1 (iterates -m), "
               f"sphere odd; 100%")


def test_criterion_09_moser_normalization():
    surface = geom.FlatTorus(1.0, 1.0)
    favg = 3.0
    f = geom.TorusField(surface,
                        lambda X, Y: favg * (1 + 0.2 * np.cos(2 * np.pi * X)),
                        resolution=256)
    res = normalize.moser_normalize(surface, f)
    assert res.pullback_defect <= 1e-6
    const = normalize.moser_normalize(surface, geom.ConstantField(surface, favg))
    assert const.pullback_defect <= 1e-12
    _report(9, f"pullback defect {res.pullback_defect:.2e} at 256^2 "
               f"(constant case {const.pullback_defect:.1e})")


def test_criterion_10_strongness_algebra():
    surface = geom.FlatTorus(1.0, 1.0)
    f = geom.TorusField(surface, lambda X, Y: 2 + np.sin(2 * np.pi * X))
    C = 0.7
    s_star = normalize.strongness(f, C).s_star
    flips = []
    for s in np.geomspace(s_star / 16, 16 * s_star, 17):
        fs = geom.TorusField(surface, s * f.grid_samples)
        rep = normalize.strongness(fs, C)
        assert rep.is_strong == (s > s_star)
        flips.append(rep.is_strong)
    assert flips == sorted(flips)
    worst = 0.0
    for k in range(4):
        b = geom.bracket_k(f, k)
        for s in (0.5, 2.0, 10.0):
            bs = geom.bracket_k(geom.TorusField(surface, s * f.grid_samples), k)
            worst = max(worst, abs(bs / b - 1.0))
            assert abs(bs / b - 1.0) <= 1e-12
    _report(10, f"strongness flips exactly at s* = {s_star:.6g}; bracket "
                f"scale deviation {worst:.1e}")


def test_criterion_11_index_sets_and_gronwall():
    for h in range(5):
        for k in range(5):
            brute = set()
            bound = h + k
            for a in itertools.product(range(bound + 1), repeat=k + 1):
                if 0 < sum((j + 1) * a[j] for j in range(k + 1)) <= bound:
                    brute.add(a)
            assert set(normalize.index_set(h, k)) == brute
            assert normalize.index_polynomial(h, k, np.zeros(k + 1)) == 0.0
    surface = geom.FlatTorus(1.0, 1.0)
    f = geom.TorusField(surface, lambda X, Y: 1.5 + 0.4 * np.sin(2 * np.pi * X))
    rep = normalize.gronwall_witness(surface, f, n_grid=(5, 5, 5))
    assert rep.n_jets >= 100
    assert rep.first_order_holds
    rep0 = normalize.gronwall_witness(surface, 0.0, n_grid=(5, 5, 5))
    assert rep0.first_order_holds
    _report(11, f"index sets match brute force for h,k <= 4; first-order "
                f"bound holds on {rep.n_jets} jets "
                f"(norm {rep.first_order_max_norm:.3f} <= "
                f"bound {rep.first_order_bound:.3f})")


def test_criterion_12_forms_identities(zoll_sphere_survey, zoll_torus_surveys):
    surface_s, f_s, orbits_s, _, _, _ = zoll_sphere_survey
    surface_t, out_t, _ = zoll_torus_surveys
    ids = forms.identity_report(surface_s, f_s, orbits=orbits_s[:1])
    ids_t = forms.identity_report(surface_t, geom.ConstantField(surface_t, 2.0),
                                  orbits=out_t[2.0][0][:1])
    worst = 0.0
    for name, rec in {**ids, **{f"torus_{k}": v for k, v in ids_t.items()}}.items():
        worst = max(worst, rec["residual"])
        assert rec["residual"] <= 1e-5, name
    _report(12, f"{len(ids) + len(ids_t)} identities, worst residual {worst:.2e}")


def test_criterion_13_determinism(tmp_path):
    cfg = {
        "surface": {"kind": "flat_torus", "side_x": 1.0, "side_y": 1.0},
        "field": {"constant": 2.0},
        "survey": {"seeds": [2, 2, 3]},
        "output_dir": str(tmp_path / "out"),
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))

    def run():
        r = subprocess.run([sys.executable, "-m", "maggeo.cli", "verify", str(p)],
                           capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        return ((tmp_path / "out" / "sysdia_report.json").read_bytes(),
                (tmp_path / "out" / "lengths.svg").read_bytes())

    a = run()
    b = run()
    assert a[0] == b[0]
    assert a[1] == b[1]
    _report(13, "repeated runs produce byte-identical JSON and SVG reports")
