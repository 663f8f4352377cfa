"""Report writers: JSON records with config hashes, delimited orbit dumps,
and matplotlib figures rendered to standalone SVG next to the data files.

All outputs are deterministic: JSON keys are sorted, floats use shortest
round-trip repr, and the SVG hash salt and date metadata are pinned.
"""

from __future__ import annotations

import json
import os

import matplotlib
matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "maggeo"
import matplotlib.pyplot as plt
import numpy as np

from . import geom

_VERSION = "0.1.0"


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return repr(obj)


def write_json(path, payload, cfg=None):
    doc = {"tool_version": _VERSION}
    if cfg is not None:
        doc["config_hash"] = cfg.config_hash()
    doc.update(_jsonify(payload))
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def lengths_figure(path, report):
    """Orbit magnetic lengths against the average-length line."""
    fig, ax = plt.subplots(figsize=(6, 4))
    lengths = [p["magnetic_length"] for p in report.per_orbit]
    ax.plot(range(len(lengths)), lengths, "o", ms=4, label="orbit length")
    if report.ell_bar is not None:
        ax.axhline(report.ell_bar, color="k", lw=1, label="average length")
    ax.set_xlabel("orbit index")
    ax.set_ylabel("magnetic length")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"verdict: {report.verdict}")
    fig.tight_layout()
    _save_svg(fig, path)


def orbits_figure(path, surface, orbits):
    """Projected orbit gallery in chart coordinates."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for orb in orbits[:64]:
        if surface.kind == "round_sphere":
            m = orb.charts[:-1] == 0
            if m.sum() > 2:
                ax.plot(orb.states[:-1][m, 0], orb.states[:-1][m, 1], lw=0.7)
        else:
            ax.plot(orb.states[:-1, 0], orb.states[:-1, 1], lw=0.7)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"{len(orbits)} closed orbits (chart 0 arcs)")
    fig.tight_layout()
    _save_svg(fig, path)


def displacement_figure(path, moser_result):
    """Quiver plot of the normalizing diffeomorphism's displacement."""
    fig, ax = plt.subplots(figsize=(5, 5))
    gx, gy = moser_result.grid_x, moser_result.grid_y
    GX, GY = np.meshgrid(gx, gy, indexing="ij")
    DX = moser_result.psi_points[..., 0] - GX
    DY = moser_result.psi_points[..., 1] - GY
    ax.quiver(GX, GY, DX, DY, angles="xy", scale_units="xy", scale=1.0,
              width=0.003)
    ax.set_aspect("equal")
    ax.set_title("normalizing map displacement")
    fig.tight_layout()
    _save_svg(fig, path)


def residuals_figure(path, identities):
    """Bar chart of identity-check residuals on a log scale."""
    fig, ax = plt.subplots(figsize=(7, 4))
    names = list(identities.keys())
    vals = [max(identities[n]["residual"], 1e-18) for n in names]
    ax.bar(range(len(names)), vals)
    ax.set_yscale("log")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("residual")
    fig.tight_layout()
    _save_svg(fig, path)


def write_orbit_files(outdir, orbits, surface, f):
    """Per-orbit CSV samples plus JSON summaries."""
    from . import maglen

    os.makedirs(outdir, exist_ok=True)
    records = []
    for i, orb in enumerate(orbits):
        stem = os.path.join(outdir, f"orbit_{i:03d}")
        with open(stem + ".csv", "w") as fh:
            fh.write(orb.to_csv())
        rec = orb.summary()
        try:
            cap = maglen.capping_integral(orb, f, surface)
            rec["capping_integral"] = float(cap)
            rec["magnetic_length"] = float(orb.period + cap)
        except maglen.AdmissibilityError as exc:
            rec["capping_integral"] = None
            rec["magnetic_length"] = None
            rec["capping_note"] = str(exc)
        with open(stem + ".json", "w") as fh:
            json.dump(_jsonify(rec), fh, sort_keys=True, indent=1)
            fh.write("\n")
        records.append(rec)
    return records
