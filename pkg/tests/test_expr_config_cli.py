import json
import os
import subprocess
import sys

import numpy as np
import pytest

from maggeo import config, exprfield, geom


def test_expression_basics():
    f = exprfield.parse_expression("2 + 0.1*sin(2*pi*x)")
    x = np.array([0.0, 0.25])
    assert np.allclose(f(x, 0 * x), [2.0, 2.0 + 0.1])
    g = exprfield.parse_expression("1 + 0.05*z", names=("x", "y", "z"))
    assert g(0.0, 0.0, 1.0) == pytest.approx(1.05)
    h = exprfield.parse_expression("-x/2 + exp(y)*cos(0)")
    assert h(1.0, 0.0) == pytest.approx(0.5)


@pytest.mark.parametrize("bad", [
    "__import__('os')", "x**2", "open('x')", "q + 1", "sin(x, y)",
    "x @ y", "lambda: 1", "'str'", "[1,2]",
])
def test_expression_rejections(bad):
    with pytest.raises(exprfield.ExpressionError):
        exprfield.parse_expression(bad)


def test_config_roundtrip_and_hash():
    raw = {
        "surface": {"kind": "flat_torus", "side_x": 1.0, "side_y": 1.0},
        "field": {"expr": "2 + 0.1*sin(2*pi*x)"},
        "seed": 7,
    }
    cfg = config.load_config(raw)
    again = config.load_config(json.loads(json.dumps(cfg.as_dict())))
    assert again.canonical_json() == cfg.canonical_json()
    assert again.config_hash() == cfg.config_hash()
    surf = config.build_surface(cfg)
    assert surf.kind == "flat_torus"
    f = config.build_field(cfg, surf)
    assert geom.average_density(surf, f) == pytest.approx(2.0, abs=1e-10)


def test_config_validation():
    with pytest.raises(config.ConfigError):
        config.load_config({"surface": {"kind": "flat_torus"}})
    with pytest.raises(config.ConfigError):
        config.load_config({"surface": {"kind": "nope"}, "field": {"constant": 1}})
        config.build_surface(config.load_config(
            {"surface": {"kind": "nope"}, "field": {"constant": 1}}))
    with pytest.raises(config.ConfigError):
        config.load_config({
            "surface": {"kind": "flat_torus"}, "field": {"constant": 1},
            "resolution": 100,
        })
    with pytest.raises(config.ConfigError):
        config.load_config({
            "surface": {"kind": "flat_torus"}, "field": {"constant": 1},
            "tolerances": {"zoll": -1.0},
        })


def test_example_configs_load():
    for name, raw in config.example_configs().items():
        cfg = config.load_config(raw)
        surf = config.build_surface(cfg)
        config.build_field(cfg, surf)


def _run_cli(args):
    return subprocess.run(
        [sys.executable, "-m", "maggeo.cli", *args],
        capture_output=True, text=True,
    )


@pytest.fixture(scope="module")
def torus_cfg_path(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = {
        "surface": {"kind": "flat_torus", "side_x": 1.0, "side_y": 1.0},
        "field": {"constant": 2.0},
        "survey": {"seeds": [3, 3, 4]},
        "output_dir": str(d / "out"),
    }
    p = d / "config.json"
    p.write_text(json.dumps(cfg))
    return p, d


def test_cli_survey_and_verify(torus_cfg_path):
    p, d = torus_cfg_path
    r = _run_cli(["survey", str(p)])
    assert r.returncode == 0, r.stderr
    out = d / "out"
    assert (out / "orbits_summary.json").exists()
    assert (out / "orbit_000.csv").exists()
    assert (out / "orbit_000.json").exists()
    assert (out / "orbits.svg").exists()
    rec = json.loads((out / "orbit_000.json").read_text())
    assert rec["in_fibre_class"] is True
    assert rec["magnetic_length"] == pytest.approx(np.pi / 2, abs=1e-6)

    r = _run_cli(["verify", str(p)])
    assert r.returncode == 0
    rep = json.loads((out / "sysdia_report.json").read_text())
    assert rep["verdict"] == "holds"
    assert rep["zoll_flag"] is True
    assert rep["config_hash"]
    assert (out / "lengths.svg").exists()


def test_cli_malformed_config(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"surface": ')
    r = _run_cli(["survey", str(p)])
    assert r.returncode == 1
    assert "error" in r.stderr


def test_cli_refuses_nonpositive_torus_average(tmp_path):
    cfg = {
        "surface": {"kind": "flat_torus"},
        "field": {"constant": -1.0},
        "output_dir": str(tmp_path / "out"),
    }
    p = tmp_path / "neg.json"
    p.write_text(json.dumps(cfg))
    r = _run_cli(["verify", str(p)])
    assert r.returncode == 1
    assert "positive average" in r.stderr


def test_cli_empty_orbit_set(tmp_path):
    # zero forcing on the torus: closed geodesics exist but none are
    # contractible, so the in-class survey is empty
    cfg = {
        "surface": {"kind": "flat_torus"},
        "field": {"constant": 0.0},
        "survey": {"seeds": [2, 2, 2], "t_guess": 1.0, "max_iter": 12},
        "output_dir": str(tmp_path / "out"),
    }
    p = tmp_path / "zero.json"
    p.write_text(json.dumps(cfg))
    r = _run_cli(["survey", str(p)])
    assert r.returncode == 2


def test_cli_normalize_strongness(tmp_path):
    cfg = {
        "surface": {"kind": "flat_torus"},
        "field": {"expr": "3*(1 + 0.2*cos(2*pi*x))"},
        "output_dir": str(tmp_path / "out"),
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    r = _run_cli(["normalize", str(p)])
    assert r.returncode == 0, r.stderr
    rep = json.loads((tmp_path / "out" / "moser.json").read_text())
    assert rep["pullback_defect"] <= 1e-6
    assert (tmp_path / "out" / "psi_grid.csv").exists()
    assert (tmp_path / "out" / "displacement.svg").exists()

    r = _run_cli(["strongness", str(p), "--calibration-c", "0"])
    assert r.returncode == 0
    rep = json.loads((tmp_path / "out" / "strongness.json").read_text())
    assert rep["s_star"] > 0


def test_cli_determinism(tmp_path):
    cfg = {
        "surface": {"kind": "flat_torus"},
        "field": {"constant": 2.0},
        "survey": {"seeds": [2, 2, 3]},
        "output_dir": str(tmp_path / "out"),
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    assert _run_cli(["verify", str(p)]).returncode == 0
    first = (tmp_path / "out" / "sysdia_report.json").read_bytes()
    svg1 = (tmp_path / "out" / "lengths.svg").read_bytes()
    assert _run_cli(["verify", str(p)]).returncode == 0
    assert (tmp_path / "out" / "sysdia_report.json").read_bytes() == first
    assert (tmp_path / "out" / "lengths.svg").read_bytes() == svg1
