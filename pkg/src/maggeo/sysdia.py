"""Average curvature and length, the systolic-diastolic verdict over a
surveyed orbit set, and the Zoll-consistency flag.

The verdict compares the extremes of the magnetic length over the
surveyed prime orbits in the distinguished class with the average length

    ell_bar = 2 pi / (f_avg + sqrt(K_f)),     K_f = f_avg^2 + 2 pi chi / area.

The surveyed minimum and maximum are proxies for the infimum and supremum
over all prime orbits, so the report records the seed coverage; the Zoll
flag can only certify consistency with a closed-orbit foliation, never
prove it from finitely many orbits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geom, maglen


def average_curvature(surface, f):
    """f_avg^2 + 2 pi chi / area; always positive on the sphere,
    nonnegative on the torus with equality exactly at zero average."""
    f = geom.scalar_field(surface, f)
    if not surface.compact:
        raise geom.UnsupportedSurfaceError(
            "average curvature needs a compact surface")
    favg = geom.average_density(surface, f)
    return favg**2 + 2.0 * np.pi * surface.euler_characteristic / surface.area()


@dataclass
class AverageLengthResult:
    """ell_bar for the distinguished class and ell_bar' for the reversed
    one; None with a reason when undefined."""

    ell_bar: float | None
    reason: str | None
    ell_bar_prime: float | None
    prime_reason: str | None
    f_avg: float = 0.0
    K_f: float = 0.0


def average_length(surface, f):
    f = geom.scalar_field(surface, f)
    favg = geom.average_density(surface, f)
    Kf = average_curvature(surface, f)
    if Kf < 0:
        return AverageLengthResult(None, "average curvature is negative",
                                   None, "average curvature is negative",
                                   favg, Kf)
    sq = np.sqrt(Kf)
    denom = favg + sq
    if geom.is_torus(surface) and favg <= 0:
        # on the torus sqrt(K_f) = |f_avg|, so the denominator vanishes
        res = AverageLengthResult(
            None, "torus average length requires positive average forcing",
            None, None, favg, Kf)
    elif denom <= 0:
        res = AverageLengthResult(None, "nonpositive denominator",
                                  None, None, favg, Kf)
    else:
        res = AverageLengthResult(float(2.0 * np.pi / denom), None, None, None,
                                  favg, Kf)
    denom_p = -favg + sq
    if denom_p > 1e-12 * max(1.0, abs(favg)):
        res.ell_bar_prime = float(2.0 * np.pi / denom_p)
        res.prime_reason = None
    else:
        res.ell_bar_prime = None
        res.prime_reason = "reversed-class denominator vanishes"
    return res


@dataclass
class SysDiaReport:
    f_avg: float
    K_f: float
    ell_bar: float | None
    ell_bar_reason: str | None
    ell_bar_prime: float | None
    ell_min: float | None
    ell_max: float | None
    verdict: str
    zoll_flag: bool
    zoll_tol: float
    per_orbit: list = field(default_factory=list)
    n_orbits: int = 0
    seed_coverage: str = ""

    def as_dict(self):
        return {
            "f_avg": self.f_avg,
            "K_f": self.K_f,
            "ell_bar": self.ell_bar,
            "ell_bar_reason": self.ell_bar_reason,
            "ell_bar_prime": self.ell_bar_prime,
            "ell_min": self.ell_min,
            "ell_max": self.ell_max,
            "verdict": self.verdict,
            "zoll_flag": self.zoll_flag,
            "zoll_tol": self.zoll_tol,
            "n_orbits": self.n_orbits,
            "seed_coverage": self.seed_coverage,
            "per_orbit": self.per_orbit,
        }

    def table(self):
        lines = [
            f"{'f_avg':>12}  {self.f_avg:.10g}",
            f"{'K_f':>12}  {self.K_f:.10g}",
            f"{'ell_bar':>12}  {self.ell_bar if self.ell_bar is not None else self.ell_bar_reason}",
            f"{'ell_min':>12}  {self.ell_min}",
            f"{'ell_max':>12}  {self.ell_max}",
            f"{'verdict':>12}  {self.verdict}",
            f"{'zoll':>12}  {'consistent' if self.zoll_flag else 'no'}",
            f"{'orbits':>12}  {self.n_orbits}",
        ]
        return "\n".join(lines)


def verdict(surface, f, orbits, zoll_tol=1e-4, report_tol=1e-6,
            seed_coverage=""):
    """Assemble the systolic-diastolic report from surveyed orbits."""
    f = geom.scalar_field(surface, f)
    al = average_length(surface, f)
    per = []
    for orb in orbits:
        if not (orb.prime and orb.in_fibre_class):
            continue
        cap = maglen.capping_integral(orb, f, surface)
        ell = orb.period + cap
        per.append({
            "period": float(orb.period),
            "riemannian_length": float(orb.period),
            "capping_integral": float(cap),
            "magnetic_length": float(ell),
            "turning_number": int(orb.turning_number),
            "residual": float(orb.closure_residual),
            "degenerate_family": bool(orb.degenerate_family),
        })
    report = SysDiaReport(
        f_avg=al.f_avg, K_f=al.K_f, ell_bar=al.ell_bar,
        ell_bar_reason=al.reason, ell_bar_prime=al.ell_bar_prime,
        ell_min=None, ell_max=None, verdict="empty_orbit_set",
        zoll_flag=False, zoll_tol=zoll_tol, per_orbit=per,
        n_orbits=len(per), seed_coverage=seed_coverage,
    )
    if al.ell_bar is None:
        report.verdict = "undefined_ellbar"
        return report
    if not per:
        return report
    lengths = np.array([p["magnetic_length"] for p in per])
    report.ell_min = float(lengths.min())
    report.ell_max = float(lengths.max())
    if report.ell_min <= al.ell_bar + report_tol and \
            al.ell_bar <= report.ell_max + report_tol:
        report.verdict = "holds"
    else:
        report.verdict = "violated"
    spread = report.ell_max - report.ell_min
    close = np.max(np.abs(lengths - al.ell_bar))
    report.zoll_flag = bool(spread <= zoll_tol and close <= zoll_tol)
    return report
