"""Experiment configuration: a JSON document that fully determines a run.

Configs round-trip bytewise through ``canonical_json`` and are identified
by a content hash embedded in every report, so identical configs produce
identical outputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import geom, exprfield


class ConfigError(ValueError):
    pass


_DEFAULTS = {
    "resolution": 256,
    "seed": 12345,
    "workers": 0,
    "calibration_c": 1.0,
    "output_dir": "out",
    "survey": {
        "seeds": [6, 6, 6],
        "t_guess": None,
        "max_iter": 40,
        "dedupe_tol": 1e-5,
        "n_samples": 2048,
    },
    "tolerances": {
        "integrator": 1e-10,
        "newton": 1e-10,
        "closure": 1e-8,
        "zoll": 1e-4,
        "report": 1e-6,
    },
}


@dataclass
class ExperimentConfig:
    surface: dict
    fld: dict
    resolution: int = 256
    seed: int = 12345
    workers: int = 0
    calibration_c: float = 1.0
    output_dir: str = "out"
    survey: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "surface": self.surface,
            "field": self.fld,
            "resolution": self.resolution,
            "seed": self.seed,
            "workers": self.workers,
            "calibration_c": self.calibration_c,
            "output_dir": self.output_dir,
            "survey": self.survey,
            "tolerances": self.tolerances,
        }

    def canonical_json(self):
        return json.dumps(self.as_dict(), sort_keys=True, indent=1)

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def _merged(defaults, given):
    out = dict(defaults)
    for k, v in (given or {}).items():
        out[k] = v
    return out


def load_config(data):
    """Build an ExperimentConfig from a dict or JSON text."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    if "surface" not in data or "field" not in data:
        raise ConfigError("config needs 'surface' and 'field' entries")
    cfg = ExperimentConfig(
        surface=dict(data["surface"]),
        fld=dict(data["field"]) if isinstance(data["field"], dict)
        else {"constant": data["field"]},
        resolution=int(data.get("resolution", _DEFAULTS["resolution"])),
        seed=int(data.get("seed", _DEFAULTS["seed"])),
        workers=int(data.get("workers", _DEFAULTS["workers"])),
        calibration_c=float(data.get("calibration_c", _DEFAULTS["calibration_c"])),
        output_dir=str(data.get("output_dir", _DEFAULTS["output_dir"])),
        survey=_merged(_DEFAULTS["survey"], data.get("survey")),
        tolerances=_merged(_DEFAULTS["tolerances"], data.get("tolerances")),
    )
    if cfg.resolution & (cfg.resolution - 1) or cfg.resolution <= 0:
        raise ConfigError("resolution must be a positive power of two")
    for name, val in cfg.tolerances.items():
        if not (isinstance(val, (int, float)) and val > 0):
            raise ConfigError(f"tolerance {name!r} must be positive")
    return cfg


def build_surface(cfg):
    spec = cfg.surface
    kind = spec.get("kind")
    if kind == "round_sphere":
        return geom.RoundSphere(radius=float(spec.get("radius", 1.0)))
    if kind == "flat_torus":
        return geom.FlatTorus(side_x=float(spec.get("side_x", 1.0)),
                              side_y=float(spec.get("side_y", 1.0)))
    if kind == "conformal_torus":
        expr = spec.get("log_factor")
        if expr is None:
            raise ConfigError("conformal_torus needs a 'log_factor' expression")
        func = exprfield.parse_expression(expr, names=("x", "y"))
        return geom.ConformalTorus(func,
                                   side_x=float(spec.get("side_x", 1.0)),
                                   side_y=float(spec.get("side_y", 1.0)),
                                   resolution=cfg.resolution)
    if kind == "hyperbolic_chart":
        return geom.HyperbolicChart(curvature=float(spec.get("curvature", -1.0)))
    raise ConfigError(f"unknown surface kind {kind!r}")


def build_field(cfg, surface):
    spec = cfg.fld
    if "constant" in spec:
        return geom.ConstantField(surface, float(spec["constant"]))
    if "expr" in spec:
        if surface.kind == "round_sphere":
            func = exprfield.parse_expression(spec["expr"], names=("x", "y", "z"))
            return geom.SphereField(surface, func)
        func = exprfield.parse_expression(spec["expr"], names=("x", "y"))
        return geom.scalar_field(surface, func, resolution=cfg.resolution)
    if "csv" in spec:
        if not geom.is_torus(surface):
            raise ConfigError("grid fields are only supported on torus charts")
        with open(spec["csv"]) as fh:
            return geom.field_from_csv(surface, fh.read())
    raise ConfigError("field needs one of 'constant', 'expr', or 'csv'")


def example_configs():
    """Complete configs for the documented experiment families."""
    return {
        "zoll_sphere": {
            "surface": {"kind": "round_sphere", "radius": 1.0},
            "field": {"constant": 1.0},
            "survey": {"seeds": [8, 8, 6]},
        },
        "zoll_torus": {
            "surface": {"kind": "flat_torus", "side_x": 1.0, "side_y": 1.0},
            "field": {"constant": 2.0},
            "survey": {"seeds": [4, 4, 6]},
        },
        "near_zoll_sphere": {
            "surface": {"kind": "round_sphere", "radius": 1.0},
            "field": {"expr": "1 + 0.05*z"},
            "survey": {"seeds": [6, 6, 6]},
        },
        "perturbed_torus": {
            "surface": {"kind": "flat_torus", "side_x": 1.0, "side_y": 1.0},
            "field": {"expr": "2 + 0.1*sin(2*pi*x)"},
            "survey": {"seeds": [6, 6, 6]},
        },
        "strong_torus": {
            "surface": {"kind": "flat_torus", "side_x": 1.0, "side_y": 1.0},
            "field": {"expr": "5*(2 + sin(2*pi*x))"},
            "survey": {"seeds": [6, 6, 6]},
        },
        "hyperbolic": {
            "surface": {"kind": "hyperbolic_chart", "curvature": -1.0},
            "field": {"constant": 2.0},
            "survey": {"seeds": [3, 6, 4], "t_guess": 3.6},
        },
    }
