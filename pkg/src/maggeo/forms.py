"""Explicit one-forms on the unit tangent bundle, line integrals, numerical
exterior-derivative probes, actions and volumes of the twisted two-forms,
and the Zoll polynomial checks.

Bundle conventions (see the flow module): fibre coordinate phi, fibre
rotation field V = -2 pi d/dphi (period-one circle action against the
chart orientation, which is how the fibres are oriented).  The connection
form eta and the bundle angle form are

    eta    = -(d phi - u_y dx + u_x dy) / (2 pi),
    d G    = -(d phi) / (2 pi)            (the global angle form),

so eta(V) = 1, dG(V) = 1, and d(eta) equals the pulled-back curvature
density over 2 pi.  The canonical one-form is e^u (cos phi dx +
sin phi dy); its value on the geodesic field is one.

With these orientations the (x, y, phi) coordinates are negatively
oriented on the bundle, so triple integrals of 3-form coefficients carry
an overall minus sign.

Exterior derivatives are never taken symbolically: they are probed by
small-loop circulation (Stokes at scale h, Richardson-extrapolated), so
the identity checks exercise the forms exactly as defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geom, flow, maglen, sysdia, normalize


ORIENTATION_SIGN = -1.0  # (x, y, phi) versus the bundle orientation


class OneFormOnBundle:
    """One-form on T^1 M given by a batched evaluator.

    ``evaluate(states, charts, vectors)`` takes (n, 3) state and vector
    arrays plus an (n,) chart array and returns the pairing (n,).
    """

    def __init__(self, surface, kind, evaluator):
        self.surface = surface
        self.kind = kind
        self._evaluator = evaluator

    def evaluate(self, states, charts, vectors):
        states = np.atleast_2d(states)
        vectors = np.atleast_2d(vectors)
        charts = np.broadcast_to(charts, states.shape[:1])
        return self._evaluator(states, charts, vectors)

    def __add__(self, other):
        def ev(states, charts, vectors):
            return (self.evaluate(states, charts, vectors)
                    + other.evaluate(states, charts, vectors))
        return OneFormOnBundle(self.surface, f"{self.kind}+{other.kind}", ev)

    def scaled(self, c):
        def ev(states, charts, vectors):
            return c * self.evaluate(states, charts, vectors)
        return OneFormOnBundle(self.surface, f"{c}*{self.kind}", ev)


def canonical_one_form(surface):
    """Pairing of the unit vector with the projected velocity."""

    def ev(states, charts, vectors):
        x, y, phi = states[:, 0], states[:, 1], states[:, 2]
        val = np.empty(len(states))
        for c in np.unique(charts):
            m = charts == c
            u = surface.log_weight(x[m], y[m], chart=int(c))
            val[m] = np.exp(u) * (np.cos(phi[m]) * vectors[m, 0]
                                  + np.sin(phi[m]) * vectors[m, 1])
        return val

    return OneFormOnBundle(surface, "canonical", ev)


def levi_civita_form(surface):
    """Connection form of the unit-tangent projection: value one on the
    fibre rotation field, differential the curvature density over 2 pi."""

    def ev(states, charts, vectors):
        x, y = states[:, 0], states[:, 1]
        val = np.empty(len(states))
        for c in np.unique(charts):
            m = charts == c
            ux = surface.log_weight(x[m], y[m], 1, 0, chart=int(c))
            uy = surface.log_weight(x[m], y[m], 0, 1, chart=int(c))
            val[m] = -(vectors[m, 2] - uy * vectors[m, 0]
                       + ux * vectors[m, 1]) / (2.0 * np.pi)
        return val

    return OneFormOnBundle(surface, "levi_civita", ev)


def angle_form(surface):
    """Global bundle angle form (torus): value one on the fibre field."""

    def ev(states, charts, vectors):
        return -vectors[:, 2] / (2.0 * np.pi)

    return OneFormOnBundle(surface, "angle", ev)


def base_one_form_pullback(surface, zeta):
    """Pullback of a base one-form along the foot-point projection."""

    def ev(states, charts, vectors):
        z1, z2 = zeta.eval(states[:, 0], states[:, 1])
        return z1 * vectors[:, 0] + z2 * vectors[:, 1]

    return OneFormOnBundle(surface, "base_pullback", ev)


def magnetic_primitive_sphere(surface, f):
    """Primitive of the twisted two-form on the sphere (constant forcing)."""
    f = geom.scalar_field(surface, f)
    if not isinstance(f, geom.ConstantField):
        raise geom.UnsupportedSurfaceError(
            "the sphere primitive is implemented for constant forcing; "
            "nonconstant forcing needs a sphere Hodge solve, which is out "
            "of scope")
    favg = f.value
    coef = surface.area() / surface.euler_characteristic * favg
    return (canonical_one_form(surface)
            + levi_civita_form(surface).scaled(coef)), favg


def reference_primitive(surface):
    """Primitive of the pulled-back area form on the sphere."""
    coef = surface.area() / surface.euler_characteristic
    return levi_civita_form(surface).scaled(coef)


def magnetic_primitive_torus(surface, f):
    """Normalized-class primitive on the torus:
    canonical + pulled-back primitive of (f - f_avg) mu - ell_bar * angle form."""
    f = geom.scalar_field(surface, f)
    favg = geom.average_density(surface, f)
    if favg <= 0:
        raise geom.PositivityError(
            "torus primitive requires positive average forcing")
    al = sysdia.average_length(surface, f)
    if isinstance(f, geom.ConstantField):
        N = 64
        zero = geom.TorusField(surface, np.zeros((N, N)), resolution=N)
        zeta = normalize.OneFormOnSurface(surface, zero,
                                          geom.TorusField(surface, np.zeros((N, N)), resolution=N))
    else:
        h = geom.TorusField(surface, f.grid_samples - favg,
                            resolution=f.resolution[0])
        zeta = normalize.hodge_primitive(surface, h)
    alpha = (canonical_one_form(surface)
             + base_one_form_pullback(surface, zeta)
             + angle_form(surface).scaled(-al.ell_bar))
    return alpha, favg, al.ell_bar, zeta


# --------------------------------------------------------------------------
# curves in the bundle and line integrals


@dataclass
class BundleCurve:
    """Closed curve in T^1 M: uniform parameter samples plus tangents."""

    states: np.ndarray      # (n, 3)
    charts: np.ndarray      # (n,)
    tangents: np.ndarray    # (n, 3) d(state)/dt
    param_length: float     # parameter period


def orbit_lift_curve(orbit, f=None):
    """The tangent lift of a closed orbit as a bundle curve.

    The projected velocity is determined by the state alone; the fibre
    velocity needs the forcing field, so forms with a d(phi) component
    require ``f``.  Without it the fibre velocity is NaN and any misuse
    surfaces as NaN in the result.
    """
    states, charts = orbit.loop_states()
    surface = orbit.surface
    if f is not None:
        f = geom.scalar_field(surface, f)
        dx, dy, dphi = flow._rhs_arrays(surface, f, states[:, 0], states[:, 1],
                                        states[:, 2], charts)
    else:
        x, y, phi = states[:, 0], states[:, 1], states[:, 2]
        dx = np.empty(len(states))
        dy = np.empty(len(states))
        for c in np.unique(charts):
            m = charts == c
            emu = np.exp(-surface.log_weight(x[m], y[m], chart=int(c)))
            dx[m] = emu * np.cos(phi[m])
            dy[m] = emu * np.sin(phi[m])
        dphi = np.full(len(states), np.nan)
    return BundleCurve(states=states, charts=charts,
                       tangents=np.stack([dx, dy, dphi], axis=1),
                       param_length=orbit.period)


def fibre_curve(surface, x, y, chart=0, phi0=0.0, n=256):
    """Positively oriented fibre over a base point (the rotation-field
    orbit, period one)."""
    t = np.arange(n) / n
    phi = phi0 - 2.0 * np.pi * t
    states = np.stack([np.full(n, float(x)), np.full(n, float(y)), phi], axis=1)
    tangents = np.tile(np.array([0.0, 0.0, -2.0 * np.pi]), (n, 1))
    return BundleCurve(states=states, charts=np.full(n, chart, dtype=int),
                       tangents=tangents, param_length=1.0)


def line_integral(form, curve):
    """Periodic-trapezoid quadrature of a one-form along a closed curve."""
    vals = form.evaluate(curve.states, curve.charts, curve.tangents)
    return float(np.mean(vals) * curve.param_length)


# --------------------------------------------------------------------------
# exterior-derivative probes (small-loop circulation)


def _edge_quad(form, base, charts, direction, h):
    """Integral of the form along straight chart segments base + s*h*dir."""
    nodes, w = np.polynomial.legendre.leggauss(4)
    s = 0.5 * (nodes + 1.0)
    w = 0.5 * w
    total = np.zeros(len(base))
    for si, wi in zip(s, w):
        pts = base + si * h * direction
        total += wi * form.evaluate(pts, charts, direction)
    return total * h


def _circulation(form, states, charts, A, B, h):
    # center the loop on the probe point so the leading error is O(h^2)
    base = states - 0.5 * h * (A + B)
    c = _edge_quad(form, base, charts, A, h)
    c += _edge_quad(form, base + h * A, charts, B, h)
    c -= _edge_quad(form, base + h * B, charts, A, h)
    c -= _edge_quad(form, base, charts, B, h)
    return c / h**2


def exterior_derivative_probe(form, states, charts, A, B, h=1e-2):
    """d(form)(A, B) by Stokes on small parallelograms, Richardson-refined."""
    states = np.atleast_2d(states)
    A = np.broadcast_to(A, states.shape)
    B = np.broadcast_to(B, states.shape)
    c1 = _circulation(form, states, charts, A, B, h)
    c2 = _circulation(form, states, charts, A, B, h / 2.0)
    return (4.0 * c2 - c1) / 3.0


# --------------------------------------------------------------------------
# identity checks


def _random_states(surface, rng, n):
    if geom.is_torus(surface):
        x = rng.uniform(0, surface.side_x, n)
        y = rng.uniform(0, surface.side_y, n)
    elif surface.kind == "round_sphere":
        r = rng.uniform(0, 1.4 * surface.radius, n)
        th = rng.uniform(0, 2 * np.pi, n)
        x, y = r * np.cos(th), r * np.sin(th)
    else:
        r = rng.uniform(0, 0.7, n)
        th = rng.uniform(0, 2 * np.pi, n)
        x, y = r * np.cos(th), r * np.sin(th)
    phi = rng.uniform(0, 2 * np.pi, n)
    return np.stack([x, y, phi], axis=1), np.zeros(n, dtype=int)


def check_connection_identities(surface, n_probes=1000, seed=5):
    """Defining relations of the connection form: value on the fibre field
    and curvature of the differential."""
    rng = np.random.default_rng(seed)
    states, charts = _random_states(surface, rng, n_probes)
    eta = levi_civita_form(surface)
    V = np.tile(np.array([0.0, 0.0, -2.0 * np.pi]), (n_probes, 1))
    r1 = np.max(np.abs(eta.evaluate(states, charts, V) - 1.0))
    ex = np.array([1.0, 0.0, 0.0])
    ey = np.array([0.0, 1.0, 0.0])
    ephi = np.array([0.0, 0.0, 1.0])
    d_xy = exterior_derivative_probe(eta, states, charts, ex, ey)
    x, y = states[:, 0], states[:, 1]
    K = geom.gaussian_curvature(surface, x, y)
    target = K * np.exp(2.0 * surface.log_weight(x, y)) / (2.0 * np.pi)
    r2 = np.max(np.abs(d_xy - target) / np.maximum(1.0, np.abs(target)))
    d_xp = exterior_derivative_probe(eta, states, charts, ex, ephi)
    d_yp = exterior_derivative_probe(eta, states, charts, ey, ephi)
    r3 = max(np.max(np.abs(d_xp)), np.max(np.abs(d_yp)))
    return {"eta_on_fibre_field": float(r1), "d_eta_curvature": float(r2),
            "d_eta_mixed": float(r3)}


def check_contact_identity(surface, n_probes=300, seed=6):
    """Volume identity: canonical ^ d(canonical) = 2 pi eta ^ pulled-back
    area, probed on random 3-frames."""
    rng = np.random.default_rng(seed)
    states, charts = _random_states(surface, rng, n_probes)
    alpha = canonical_one_form(surface)
    eta = levi_civita_form(surface)
    A = rng.normal(size=(n_probes, 3))
    B = rng.normal(size=(n_probes, 3))
    C = rng.normal(size=(n_probes, 3))
    dA = {}
    for name, (U, W) in {"BC": (B, C), "AC": (A, C), "AB": (A, B)}.items():
        dA[name] = exterior_derivative_probe(alpha, states, charts, U, W)
    aA = alpha.evaluate(states, charts, A)
    aB = alpha.evaluate(states, charts, B)
    aC = alpha.evaluate(states, charts, C)
    lhs = aA * dA["BC"] - aB * dA["AC"] + aC * dA["AB"]
    w = np.exp(2.0 * surface.log_weight(states[:, 0], states[:, 1]))

    def mu(U, W):
        return w * (U[:, 0] * W[:, 1] - U[:, 1] * W[:, 0])

    eA = eta.evaluate(states, charts, A)
    eB = eta.evaluate(states, charts, B)
    eC = eta.evaluate(states, charts, C)
    rhs = 2.0 * np.pi * (eA * mu(B, C) - eB * mu(A, C) + eC * mu(A, B))
    scale = np.maximum(1.0, np.abs(rhs))
    return float(np.max(np.abs(lhs - rhs) / scale))


def check_reeb_property(surface, n_probes=500, seed=7):
    """The canonical form evaluates to one on the geodesic field."""
    rng = np.random.default_rng(seed)
    states, charts = _random_states(surface, rng, n_probes)
    zero = geom.ConstantField(surface, 0.0)
    dx, dy, dphi = flow._rhs_arrays(surface, zero, states[:, 0], states[:, 1],
                                    states[:, 2], charts)
    X = np.stack([dx, dy, dphi], axis=1)
    alpha = canonical_one_form(surface)
    return float(np.max(np.abs(alpha.evaluate(states, charts, X) - 1.0)))


# --------------------------------------------------------------------------
# actions


@dataclass
class ActionCheck:
    action: float
    comparison: float
    residual: float
    detail: dict


def action_orbit_sphere(orbit, f):
    """Action of the orbit lift against the sphere primitive, checked
    against magnetic length plus the fibre-action offset."""
    surface = orbit.surface
    if surface.kind != "round_sphere":
        raise geom.UnsupportedSurfaceError("sphere action needs a round sphere")
    f = geom.scalar_field(surface, f)
    alpha, favg = magnetic_primitive_sphere(surface, f)
    lift = orbit_lift_curve(orbit, f)
    act = line_integral(alpha, lift)
    ell = maglen.magnetic_length(orbit, f, surface)
    offset = surface.area() * favg / surface.euler_characteristic
    comp = ell + offset
    return ActionCheck(action=act, comparison=comp,
                       residual=abs(act - comp),
                       detail={"magnetic_length": ell, "offset": offset})


def fibre_action_sphere(surface):
    """Action of an oriented fibre against the reference primitive; the
    closed form is area over Euler characteristic."""
    alpha = reference_primitive(surface)
    gamma = fibre_curve(surface, 0.3 * surface.radius, -0.2 * surface.radius)
    act = line_integral(alpha, gamma)
    target = surface.area() / surface.euler_characteristic
    return ActionCheck(action=act, comparison=target,
                       residual=abs(act - target), detail={})


def action_orbit_torus(orbit, f):
    """Action of the orbit for the normalized torus two-form.

    Evaluated from the cylinder formula: the fibre integral of the
    primitive (quadrature; equals minus the average length) plus the flux
    of the twisted form through the capping cylinder (Riemannian length
    plus capping flux), all over the average forcing.  Compared against
    (magnetic length - average length) / f_avg.
    """
    surface = orbit.surface
    if not geom.is_torus(surface):
        raise geom.UnsupportedSurfaceError("torus action needs a torus")
    f = geom.scalar_field(surface, f)
    alpha, favg, ell_bar, zeta = magnetic_primitive_torus(surface, f)
    gamma0 = fibre_curve(surface, 0.39 * surface.side_x, 0.11 * surface.side_y)
    fibre_term = line_integral(alpha, gamma0)
    cap = maglen.capping_integral(orbit, f, surface)
    act = (fibre_term + orbit.period + cap) / favg
    ell = orbit.period + cap
    comp = (ell - ell_bar) / favg
    # alternative route: direct orbit integral of the primitive plus the
    # area flux of the capping chain
    lift = orbit_lift_curve(orbit, f)
    direct = line_integral(alpha, lift) / favg
    area_flux = maglen.capping_integral(orbit, geom.ConstantField(surface, 1.0),
                                        surface)
    act_alt = direct + area_flux
    return ActionCheck(action=act, comparison=comp,
                       residual=abs(act - comp),
                       detail={"fibre_term": fibre_term,
                               "ell_bar": ell_bar,
                               "alt_route": act_alt,
                               "alt_residual": abs(act_alt - comp)})


# --------------------------------------------------------------------------
# volume


def volume_quadrature_torus(surface, alpha, n_xy=24, n_phi=24, h=1e-2):
    """Volume of a primitive on the unit tangent bundle of a torus:
    half the self-wedge integral plus the wedge against the reference
    two-form, probed componentwise and integrated by periodic trapezoid."""
    xs = np.arange(n_xy) * (surface.side_x / n_xy)
    ys = np.arange(n_xy) * (surface.side_y / n_xy)
    ps = np.arange(n_phi) * (2.0 * np.pi / n_phi)
    X, Y, P = np.meshgrid(xs, ys, ps, indexing="ij")
    states = np.stack([X.ravel(), Y.ravel(), P.ravel()], axis=1)
    charts = np.zeros(len(states), dtype=int)
    ex = np.array([1.0, 0.0, 0.0])
    ey = np.array([0.0, 1.0, 0.0])
    ep = np.array([0.0, 0.0, 1.0])
    ax = alpha.evaluate(states, charts, np.tile(ex, (len(states), 1)))
    ay = alpha.evaluate(states, charts, np.tile(ey, (len(states), 1)))
    ap = alpha.evaluate(states, charts, np.tile(ep, (len(states), 1)))
    d_xy = exterior_derivative_probe(alpha, states, charts, ex, ey, h=h)
    d_xp = exterior_derivative_probe(alpha, states, charts, ex, ep, h=h)
    d_yp = exterior_derivative_probe(alpha, states, charts, ey, ep, h=h)
    wedge_self = ax * d_yp - ay * d_xp + ap * d_xy
    w = np.exp(2.0 * surface.log_weight(states[:, 0], states[:, 1]))
    wedge_ref = ap * w
    cell = (surface.side_x / n_xy) * (surface.side_y / n_xy) * (2 * np.pi / n_phi)
    integral = np.sum(0.5 * wedge_self + wedge_ref) * cell
    return ORIENTATION_SIGN * float(integral)


def normalization_volume_residual(surface, f):
    """Volume of the normalized torus primitive (should vanish)."""
    alpha, favg, _, _ = magnetic_primitive_torus(surface, f)
    return volume_quadrature_torus(surface, alpha.scaled(1.0 / favg))


def zoll_polynomial(surface, A):
    """Closed-form Zoll polynomial for the reference pairs used here."""
    if surface.kind == "round_sphere":
        return 0.5 * surface.euler_characteristic * A**2
    if geom.is_torus(surface):
        return surface.area() * A
    raise geom.UnsupportedSurfaceError("Zoll polynomial needs a closed surface")


def volume_closed_form(surface, f):
    """Closed-form volume of the twisted two-form."""
    f = geom.scalar_field(surface, f)
    if surface.kind == "round_sphere":
        Kf = sysdia.average_curvature(surface, f)
        chi = surface.euler_characteristic
        return surface.area() ** 2 / (2.0 * chi) * Kf
    if geom.is_torus(surface):
        return 0.0  # declared for the normalized reference pair
    raise geom.UnsupportedSurfaceError("volume needs a closed surface")


def zoll_equality_check(surface, f, orbit):
    """Equality of the Zoll polynomial at the measured action with the
    closed-form volume (sphere), or vanishing action (torus)."""
    f = geom.scalar_field(surface, f)
    if surface.kind == "round_sphere":
        act = action_orbit_sphere(orbit, f).action
        lhs = zoll_polynomial(surface, act)
        rhs = volume_closed_form(surface, f)
        return {"action": act, "polynomial": lhs, "volume": rhs,
                "residual": abs(lhs - rhs) / max(1.0, abs(rhs))}
    act = action_orbit_torus(orbit, f).action
    return {"action": act, "polynomial": zoll_polynomial(surface, act),
            "volume": 0.0, "residual": abs(act)}


def identity_report(surface, f, orbits=(), seed=11):
    """Bundle of residuals for the defining identities, as one record."""
    f = geom.scalar_field(surface, f)
    out = {}
    conn = check_connection_identities(surface, seed=seed)
    out["eta_fibre_value"] = {"identity": "eta(V) = 1", "lhs": 1.0, "rhs": 1.0,
                              "residual": conn["eta_on_fibre_field"]}
    out["eta_curvature"] = {"identity": "d eta = (K/2pi) area density",
                            "lhs": None, "rhs": None,
                            "residual": conn["d_eta_curvature"]}
    out["contact_volume"] = {
        "identity": "canonical ^ d canonical = 2 pi eta ^ area",
        "lhs": None, "rhs": None,
        "residual": check_contact_identity(surface, seed=seed + 1),
    }
    out["reeb"] = {"identity": "canonical(geodesic field) = 1",
                   "lhs": 1.0, "rhs": 1.0,
                   "residual": check_reeb_property(surface, seed=seed + 2)}
    if surface.kind == "round_sphere":
        fa = fibre_action_sphere(surface)
        out["fibre_action"] = {"identity": "fibre action = area/chi",
                               "lhs": fa.action, "rhs": fa.comparison,
                               "residual": fa.residual}
        for i, orb in enumerate(orbits):
            ac = action_orbit_sphere(orb, f)
            out[f"orbit_action_{i}"] = {
                "identity": "action = magnetic length + area f_avg / chi",
                "lhs": ac.action, "rhs": ac.comparison, "residual": ac.residual,
            }
            ze = zoll_equality_check(surface, f, orb)
            out[f"zoll_equality_{i}"] = {
                "identity": "P(action) = volume",
                "lhs": ze["polynomial"], "rhs": ze["volume"],
                "residual": ze["residual"],
            }
    elif geom.is_torus(surface):
        favg = geom.average_density(surface, f)
        if favg > 0:
            nv = normalization_volume_residual(surface, f)
            out["volume_normalization"] = {
                "identity": "volume of normalized primitive = 0",
                "lhs": nv, "rhs": 0.0, "residual": abs(nv),
            }
            for i, orb in enumerate(orbits):
                ac = action_orbit_torus(orb, f)
                out[f"orbit_action_{i}"] = {
                    "identity": "action = (magnetic length - average length)/f_avg",
                    "lhs": ac.action, "rhs": ac.comparison,
                    "residual": ac.residual,
                }
    return out
