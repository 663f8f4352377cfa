"""Command-line experiment driver.

Subcommands: survey | verify | zoll | normalize | strongness | forms.
Each reads a JSON config (see ``maggeo.config.example_configs``) and
writes JSON reports, CSV dumps, and SVG figures into the output
directory.  Outputs embed the tool version and the config hash and are
byte-identical across runs of the same config.

Exit codes: 0 success, 1 configuration or precondition error, 2 empty
orbit set from a survey.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import (config as config_mod, forms, geom, maglen, normalize, orbit,
               report, sysdia)


def _load(path):
    with open(path) as fh:
        return config_mod.load_config(fh.read())


def _prepare(cfg):
    surface = config_mod.build_surface(cfg)
    f = config_mod.build_field(cfg, surface)
    os.makedirs(cfg.output_dir, exist_ok=True)
    return surface, f


def _run_survey(cfg, surface, f):
    sv = cfg.survey
    return orbit.survey(
        surface, f,
        seed_grid=tuple(sv["seeds"]),
        dedupe_tol=float(sv["dedupe_tol"]),
        t_guess=sv.get("t_guess"),
        tol=float(cfg.tolerances["newton"]),
        tol_int=float(cfg.tolerances["integrator"]) / 10.0,
        max_iter=int(sv["max_iter"]),
        n_samples=int(sv["n_samples"]),
    )


def cmd_survey(cfg):
    surface, f = _prepare(cfg)
    orbits = _run_survey(cfg, surface, f)
    records = report.write_orbit_files(cfg.output_dir, orbits, surface, f)
    report.write_json(os.path.join(cfg.output_dir, "orbits_summary.json"),
                      {"n_orbits": len(orbits), "orbits": records}, cfg)
    report.orbits_figure(os.path.join(cfg.output_dir, "orbits.svg"),
                         surface, orbits)
    print(f"found {len(orbits)} distinct prime orbits")
    return 2 if not orbits else 0


def _check_verifiable(surface, f):
    if not surface.compact:
        raise config_mod.ConfigError(
            "the hyperbolic chart is a local model and is excluded from "
            "global systolic reports")
    if geom.is_torus(surface) and geom.average_density(surface, f) <= 0:
        raise config_mod.ConfigError(
            "torus average length is defined only for positive average "
            "forcing; rerun with -f, whose orbits are the time reversals")


def cmd_verify(cfg):
    surface, f = _prepare(cfg)
    _check_verifiable(surface, f)
    orbits = _run_survey(cfg, surface, f)
    rep = sysdia.verdict(surface, f, orbits,
                         zoll_tol=float(cfg.tolerances["zoll"]),
                         report_tol=float(cfg.tolerances["report"]),
                         seed_coverage=str(cfg.survey["seeds"]))
    report.write_json(os.path.join(cfg.output_dir, "sysdia_report.json"),
                      rep.as_dict(), cfg)
    report.lengths_figure(os.path.join(cfg.output_dir, "lengths.svg"), rep)
    print(rep.table())
    return 2 if rep.verdict == "empty_orbit_set" else 0


def cmd_zoll(cfg):
    surface, f = _prepare(cfg)
    _check_verifiable(surface, f)
    orbits = _run_survey(cfg, surface, f)
    rep = sysdia.verdict(surface, f, orbits,
                         zoll_tol=float(cfg.tolerances["zoll"]),
                         report_tol=float(cfg.tolerances["report"]),
                         seed_coverage=str(cfg.survey["seeds"]))
    payload = rep.as_dict()
    payload["zoll_statement"] = (
        "Zoll-consistent over the surveyed orbit set" if rep.zoll_flag
        else "not Zoll-consistent: lengths spread beyond tolerance")
    report.write_json(os.path.join(cfg.output_dir, "zoll_report.json"),
                      payload, cfg)
    print(payload["zoll_statement"])
    return 2 if rep.verdict == "empty_orbit_set" else 0


def cmd_normalize(cfg):
    surface, f = _prepare(cfg)
    if f.min() <= 0:
        raise config_mod.ConfigError("normalization requires min f > 0")
    res = normalize.moser_normalize(surface, f)
    report.write_json(os.path.join(cfg.output_dir, "moser.json"),
                      res.as_dict(), cfg)
    with open(os.path.join(cfg.output_dir, "psi_grid.csv"), "w") as fh:
        fh.write(res.displacement_csv())
    report.displacement_figure(os.path.join(cfg.output_dir, "displacement.svg"),
                               res)
    print(f"pullback defect {res.pullback_defect:.3e}")
    return 0


def cmd_strongness(cfg, c_override=None):
    surface, f = _prepare(cfg)
    C = float(cfg.calibration_c if c_override is None else c_override)
    rep = normalize.strongness(f, C)
    report.write_json(os.path.join(cfg.output_dir, "strongness.json"),
                      rep.as_dict(), cfg)
    print(f"is_strong={rep.is_strong}  threshold={rep.threshold:.6g}  "
          f"s_star={rep.s_star:.6g}")
    return 0


def cmd_forms(cfg):
    surface, f = _prepare(cfg)
    orbits = []
    if surface.compact:
        try:
            orbits = _run_survey(cfg, surface, f)[:2]
        except Exception:
            orbits = []
    ids = forms.identity_report(surface, f, orbits=orbits, seed=cfg.seed)
    report.write_json(os.path.join(cfg.output_dir, "forms_identities.json"),
                      ids, cfg)
    report.residuals_figure(os.path.join(cfg.output_dir, "residuals.svg"), ids)
    worst = max(v["residual"] for v in ids.values())
    print(f"{len(ids)} identities checked, worst residual {worst:.3e}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="maggeo",
        description="numerical laboratory for prescribed-curvature geodesics",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("survey", "verify", "zoll", "normalize", "strongness", "forms"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to a JSON experiment config")
        if name == "strongness":
            p.add_argument("--calibration-c", type=float, default=None,
                           help="override the calibration constant")
    args = parser.parse_args(argv)
    try:
        cfg = _load(args.config)
        surface_kind = cfg.surface.get("kind")
        del surface_kind
        if args.command == "survey":
            return cmd_survey(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "zoll":
            return cmd_zoll(cfg)
        if args.command == "normalize":
            return cmd_normalize(cfg)
        if args.command == "strongness":
            return cmd_strongness(cfg, args.calibration_c)
        return cmd_forms(cfg)
    except (config_mod.ConfigError, FileNotFoundError, geom.PositivityError,
            geom.UnsupportedSurfaceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
