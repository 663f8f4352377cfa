"""Closed-orbit search (least-squares Newton on the return map), primality,
turning numbers, fibre-class membership, and orbit surveys.

The return map is solved in the full three-dimensional phase space with the
period as a fourth unknown (three closure equations, four unknowns); the
along-orbit reparametrization direction is handled by the minimal-norm
least-squares step, and rank-deficient return maps (closed-orbit families)
fall back to a truncated pseudo-inverse and are flagged.

On the torus, trajectories are kept in the universal-cover lift, so
contractibility is the exact integer test "lattice displacement equals
zero" and the turning number is the net heading rotation over one period.
On the sphere, the turning number is measured in a stereographic chart
from a point q away from the curve's support.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geom, flow


class ResolutionError(RuntimeError):
    """A quantity that must round to an integer was too far from one."""


# --------------------------------------------------------------------------
# sphere chart from an arbitrary projection point


class SphereChart:
    """Oriented stereographic chart of a round sphere projecting from q.

    The sphere is rotated so q becomes the north pole and then projected
    with the same formula as the atlas chart 0, so the chart orientation
    agrees with the surface orientation.
    """

    def __init__(self, surface, q):
        self.surface = surface
        rho = surface.radius
        q = np.asarray(q, dtype=float)
        q = q / np.linalg.norm(q) * rho
        self.q = q
        n = np.array([0.0, 0.0, 1.0])
        qh = q / rho
        c = float(np.dot(qh, n))
        if c > 1.0 - 1e-12:
            R = np.eye(3)
        elif c < -1.0 + 1e-12:
            R = np.diag([1.0, -1.0, -1.0])
        else:
            k = np.cross(qh, n)
            s = np.linalg.norm(k)
            k = k / s
            K = np.array([
                [0.0, -k[2], k[1]],
                [k[2], 0.0, -k[0]],
                [-k[1], k[0], 0.0],
            ])
            R = np.eye(3) + s * K + (1.0 - c) * (K @ K)
        self.rotation = R

    def project(self, P):
        """Ambient points (..., 3) to chart coordinates (..., 2)."""
        Pr = P @ self.rotation.T
        rho = self.surface.radius
        denom = rho - Pr[..., 2]
        return np.stack([rho * Pr[..., 0] / denom, rho * Pr[..., 1] / denom], axis=-1)

    def push_tangent(self, P, V):
        """Push ambient tangent vectors at P to chart vectors."""
        rho = self.surface.radius
        Pr = P @ self.rotation.T
        Vr = V @ self.rotation.T
        denom = rho - Pr[..., 2]
        vx = rho * Vr[..., 0] / denom + rho * Pr[..., 0] * Vr[..., 2] / denom**2
        vy = rho * Vr[..., 1] / denom + rho * Pr[..., 1] * Vr[..., 2] / denom**2
        return np.stack([vx, vy], axis=-1)

    def log_weight(self, x, y, dx=0, dy=0):
        # same conformal factor as the atlas charts
        return self.surface.log_weight(x, y, dx, dy)


# --------------------------------------------------------------------------
# closed orbits


@dataclass
class ClosedOrbit:
    """A closed trajectory of the flow, uniformly sampled over one period."""

    surface: object
    period: float
    ts: np.ndarray                 # (n+1,)
    states: np.ndarray             # (n+1, 3), torus positions in the lift,
                                   # phi unwrapped along the trajectory
    charts: np.ndarray             # (n+1,)
    closure_residual: float
    prime: bool = True
    turning_number: int = 0
    in_fibre_class: bool = False
    lattice_displacement: tuple | None = None
    degenerate_family: bool = False
    newton_iterations: int = 0
    ambient: np.ndarray | None = None          # (n+1, 3) sphere points
    ambient_velocity: np.ndarray | None = None  # (n+1, 3) unit tangents

    @property
    def basepoint(self):
        x, y, phi = self.states[0]
        return flow.UnitTangentState(x, y, phi, chart=int(self.charts[0]))

    def loop_states(self):
        """Samples without the duplicated endpoint (for periodic quadrature)."""
        return self.states[:-1], self.charts[:-1]

    def summary(self):
        return {
            "period": float(self.period),
            "turning_number": int(self.turning_number),
            "prime": bool(self.prime),
            "in_fibre_class": bool(self.in_fibre_class),
            "residual": float(self.closure_residual),
            "degenerate_family": bool(self.degenerate_family),
        }

    def to_csv(self):
        lines = ["t,x,y,phi,chart"]
        for i in range(len(self.ts)):
            x, y, phi = self.states[i]
            lines.append(f"{self.ts[i]!r},{x!r},{y!r},{phi!r},{int(self.charts[i])}")
        return "\n".join(lines) + "\n"


def _ambient_state_embedding(surface, Y, charts):
    """Map sphere states (B, 3) to (P, V) in R^3 x R^3."""
    P = np.empty((len(Y), 3))
    V = np.empty((len(Y), 3))
    for c in (0, 1):
        m = charts == c
        if not np.any(m):
            continue
        x, y, phi = Y[m, 0], Y[m, 1], Y[m, 2]
        u = surface.log_weight(x, y, chart=c)
        emu = np.exp(-u)
        P[m] = surface.to_ambient(x, y, chart=c)
        V[m] = surface.to_ambient_tangent(
            x, y, emu * np.cos(phi), emu * np.sin(phi), chart=c
        )
    return P, V


def _embedding_jacobian(surface, Y, charts, eps=1e-6):
    """d(P, V)/d(x, y, phi) by central differences, shape (B, 6, 3)."""
    B = len(Y)
    J = np.empty((B, 6, 3))
    for j in range(3):
        Yp = Y.copy()
        Ym = Y.copy()
        Yp[:, j] += eps
        Ym[:, j] -= eps
        Pp, Vp = _ambient_state_embedding(surface, Yp, charts)
        Pm, Vm = _ambient_state_embedding(surface, Ym, charts)
        J[:, :3, j] = (Pp - Pm) / (2 * eps)
        J[:, 3:, j] = (Vp - Vm) / (2 * eps)
    return J


def _wrap_angle(a):
    return np.mod(a + np.pi, 2.0 * np.pi) - np.pi


def _torus_residual(surface, Yend, Y0):
    dx = Yend[:, 0] - Y0[:, 0]
    dy = Yend[:, 1] - Y0[:, 1]
    if geom.is_torus(surface):
        dx = dx - surface.side_x * np.round(dx / surface.side_x)
        dy = dy - surface.side_y * np.round(dy / surface.side_y)
    dphi = _wrap_angle(Yend[:, 2] - Y0[:, 2])
    return np.stack([dx, dy, dphi], axis=1)


def return_residual(surface, f, s, T_guess, tol=1e-11):
    """Return-map defect Phi_T(s) (-) s in chart coordinates."""
    if T_guess <= 0:
        raise ValueError("T_guess must be positive")
    f = geom.scalar_field(surface, f)
    Y0 = np.array([[s.x, s.y, s.phi]])
    charts0 = np.array([s.chart])
    Yend, charts_end, _ = flow._integrate_batch(
        surface, f, Y0, charts0, np.array([float(T_guess)]), rtol=tol, atol=tol
    )
    if surface.kind == "round_sphere" and charts_end[0] != s.chart:
        x, y, phi, _ = surface.transition(
            Yend[:, 0], Yend[:, 1], Yend[:, 2], int(charts_end[0])
        )
        Yend = np.stack([x, y, phi], axis=1)
    if geom.is_torus(surface):
        return _torus_residual(surface, Yend, Y0)[0]
    return np.array([
        Yend[0, 0] - s.x, Yend[0, 1] - s.y, float(_wrap_angle(Yend[0, 2] - s.phi)),
    ])


def _batch_newton(surface, f, Y0, charts0, T0, bracket, tol=1e-10,
                  tol_int=1e-11, max_iter=40):
    """Least-squares Newton on (state, period); returns per-row results."""
    B = len(Y0)
    Y = Y0.copy()
    charts = charts0.copy()
    T = T0.copy()
    active = np.ones(B, dtype=bool)
    converged = np.zeros(B, dtype=bool)
    degenerate = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    res_norm = np.full(B, np.inf)
    sphere = surface.kind == "round_sphere"
    Tlo, Thi = bracket
    clip_count = np.zeros(B, dtype=int)

    for it in range(max_iter):
        if not np.any(active):
            break
        idx = np.where(active)[0]
        Yi = Y[idx]
        Ti = T[idx]
        ci = charts[idx]
        out, cend, _ = flow._integrate_batch(
            surface, f, Yi, ci, Ti, rtol=tol_int, atol=tol_int, variational=True
        )
        E = out[:, :3]
        D = out[:, 3:].reshape(-1, 3, 3)
        Fend = np.empty((len(idx), 3))
        dx, dy, dphi = flow._rhs_arrays(surface, f, E[:, 0], E[:, 1], E[:, 2], cend)
        Fend[:, 0], Fend[:, 1], Fend[:, 2] = dx, dy, dphi
        if sphere:
            P0, V0 = _ambient_state_embedding(surface, Yi, ci)
            Pe, Ve = _ambient_state_embedding(surface, E, cend)
            R = np.concatenate([Pe - P0, Ve - V0], axis=1)
            J0 = _embedding_jacobian(surface, Yi, ci)
            Je = _embedding_jacobian(surface, E, cend)
            Jstate = np.einsum("bij,bjk->bik", Je, D) - J0
            Jtime = np.einsum("bij,bj->bi", Je, Fend)
        else:
            R = _torus_residual(surface, E, Yi)
            Jstate = D - np.eye(3)
            Jtime = Fend
        J = np.concatenate([Jstate, Jtime[:, :, None]], axis=2)
        rn = np.linalg.norm(R, axis=1)
        res_norm[idx] = rn
        done = rn <= tol
        # truncated-SVD least-squares step
        U, S, Vt = np.linalg.svd(J, full_matrices=False)
        s_max = S[:, :1]
        rank_tol = 1e-9
        Sinv = np.where(S > rank_tol * s_max, 1.0 / np.maximum(S, 1e-300), 0.0)
        degenerate[idx] |= S[:, 2] < 1e-6 * S[:, 0]
        rhs = -np.einsum("bji,bj->bi", U, R)
        delta = np.einsum("bij,bj->bi", Vt.transpose(0, 2, 1), Sinv * rhs)
        # clamp the step
        scale = np.maximum(1.0, np.abs(Ti))
        dmax = np.max(np.abs(delta[:, :3]), axis=1)
        shrink = np.minimum(1.0, 0.5 / np.maximum(dmax, 1e-300))
        shrink = np.minimum(shrink, 0.3 * scale / np.maximum(np.abs(delta[:, 3]), 1e-300))
        delta = delta * shrink[:, None]
        upd = ~done
        rows = idx[upd]
        Y[rows] = Yi[upd] + delta[upd, :3]
        Tn = Ti[upd] + delta[upd, 3]
        clipped = (Tn < Tlo) | (Tn > Thi)
        clip_count[rows] += clipped
        T[rows] = np.clip(Tn, Tlo, Thi)
        iters[rows] += 1
        newly = idx[done]
        converged[newly] = True
        active[newly] = False
        # give up on rows pinned at the bracket boundary
        stuck = idx[clip_count[idx] > 6]
        active[stuck] = False
    return {
        "Y": Y, "charts": charts, "T": T, "converged": converged,
        "residual": res_norm, "degenerate": degenerate, "iterations": iters,
    }


def _sample_closed(surface, f, Y, chart, T, n_samples):
    rec, rec_charts = flow._integrate_fixed(
        surface, f, Y[None, :], np.array([chart]), np.array([T]), n_samples
    )
    return rec[:, 0, :], rec_charts[:, 0]


def _chart_residual_norm(surface, states, charts):
    Y0 = states[0:1]
    Ye = states[-1:]
    if surface.kind == "round_sphere":
        P0, V0 = _ambient_state_embedding(surface, Y0, charts[0:1])
        Pe, Ve = _ambient_state_embedding(surface, Ye, charts[-1:])
        return float(np.sqrt(np.sum((Pe - P0) ** 2) + np.sum((Ve - V0) ** 2)))
    if geom.is_torus(surface):
        return float(np.linalg.norm(_torus_residual(surface, Ye, Y0)))
    d = Ye[0] - Y0[0]
    d[2] = _wrap_angle(d[2])
    return float(np.linalg.norm(d))


def _build_orbit(surface, f, Yrow, chart, T, n_samples, diag):
    states, charts = _sample_closed(surface, f, Yrow, chart, T, n_samples)
    ts = np.linspace(0.0, T, n_samples + 1)
    res = _chart_residual_norm(surface, states, charts)
    orb = ClosedOrbit(
        surface=surface, period=float(T), ts=ts, states=states, charts=charts,
        closure_residual=res, degenerate_family=bool(diag.get("degenerate", False)),
        newton_iterations=int(diag.get("iterations", 0)),
    )
    if surface.kind == "round_sphere":
        P, V = _ambient_state_embedding(surface, states, charts)
        orb.ambient = P
        orb.ambient_velocity = V
    if geom.is_torus(surface):
        dx = states[-1, 0] - states[0, 0]
        dy = states[-1, 1] - states[0, 1]
        orb.lattice_displacement = (
            int(np.round(dx / surface.side_x)), int(np.round(dy / surface.side_y)),
        )
    orb.turning_number = turning_number(orb, surface)
    orb.in_fibre_class = in_fibre_homotopy_class(orb, surface)
    return orb


def _prime_period(surface, f, Yrow, chart, T, res, tol_int=1e-11, kmax=12):
    """Smallest T/k that closes the orbit within 10x the closure residual."""
    ks = [k for k in range(2, kmax + 1)]
    if not ks:
        return T
    Y0 = np.tile(Yrow, (len(ks), 1))
    charts0 = np.full(len(ks), chart)
    Ts = np.array([T / k for k in ks])
    out, cend, _ = flow._integrate_batch(
        surface, f, Y0, charts0, Ts, rtol=tol_int, atol=tol_int
    )
    thr = max(10.0 * res, 1e-7)
    best = T
    for i, k in enumerate(ks):
        if surface.kind == "round_sphere":
            if cend[i] != chart:
                continue
            P0, V0 = _ambient_state_embedding(surface, Y0[i : i + 1], charts0[i : i + 1])
            Pe, Ve = _ambient_state_embedding(surface, out[i : i + 1, :3], cend[i : i + 1])
            rn = float(np.sqrt(np.sum((Pe - P0) ** 2) + np.sum((Ve - V0) ** 2)))
        else:
            rn = float(np.linalg.norm(_torus_residual(surface, out[i : i + 1, :3],
                                                      Y0[i : i + 1])))
        if rn <= thr and T / k < best:
            best = T / k
    return best


def find_closed_orbit(surface, f, seed, T_guess, bracket=None, tol=1e-10,
                      tol_int=1e-11, max_iter=40, n_samples=2048):
    """Newton search for a closed orbit near the seed; None if not found."""
    f = geom.scalar_field(surface, f)
    if bracket is None:
        bracket = (0.2 * T_guess, 5.0 * T_guess)
    if not bracket[0] <= T_guess <= bracket[1]:
        raise ValueError("T_guess outside the period bracket")
    Y0 = np.array([[seed.x, seed.y, seed.phi]])
    charts0 = np.array([seed.chart])
    res = _batch_newton(surface, f, Y0, charts0, np.array([float(T_guess)]),
                        bracket, tol=tol, tol_int=tol_int, max_iter=max_iter)
    if not res["converged"][0]:
        return None
    T = float(res["T"][0])
    Trec = _prime_period(surface, f, res["Y"][0], int(res["charts"][0]), T,
                         float(res["residual"][0]), tol_int=tol_int)
    if Trec < T:
        # re-polish at the reduced period
        res2 = _batch_newton(surface, f, res["Y"][0:1], res["charts"][0:1],
                             np.array([Trec]), (0.5 * Trec, 1.5 * Trec),
                             tol=tol, tol_int=tol_int, max_iter=10)
        if res2["converged"][0]:
            res = res2
            T = float(res["T"][0])
    diag = {"degenerate": bool(res["degenerate"][0]),
            "iterations": int(res["iterations"][0])}
    orb = _build_orbit(surface, f, res["Y"][0], int(res["charts"][0]), T,
                       n_samples, diag)
    orb.prime = True
    return orb


# --------------------------------------------------------------------------
# turning numbers and class membership


def _auto_chart_points(surface, orbit, n_candidates=128):
    """Sphere points ordered by decreasing distance from the orbit support."""
    i = np.arange(n_candidates)
    ga = np.pi * (3.0 - np.sqrt(5.0))
    z = 1.0 - 2.0 * (i + 0.5) / n_candidates
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    pts = np.stack([r * np.cos(ga * i), r * np.sin(ga * i), z], axis=1)
    pts = pts * surface.radius
    P = orbit.ambient[::4]
    d = np.linalg.norm(pts[:, None, :] - P[None, :, :], axis=2).min(axis=1)
    order = np.argsort(-d)
    return pts[order], d[order]


def _sphere_turning(surface, orbit, q):
    chart = SphereChart(surface, q)
    P, V = orbit.ambient[:-1], orbit.ambient_velocity[:-1]
    dmin = np.min(np.linalg.norm(P - chart.q, axis=1))
    if dmin < 1e-3 * surface.radius:
        raise ResolutionError("projection point lies on the curve support")
    v = chart.push_tangent(P, V)
    theta = np.arctan2(v[:, 1], v[:, 0])
    inc = _wrap_angle(np.diff(np.concatenate([theta, theta[:1]])))
    if np.max(np.abs(inc)) > 2.5:
        raise ResolutionError("velocity turns too fast between samples")
    tau = float(np.sum(inc) / (2.0 * np.pi))
    if abs(tau - round(tau)) > 0.01:
        raise ResolutionError(f"turning sum {tau} is not close to an integer")
    return int(round(tau))


def turning_number(orbit, surface, q=None):
    """Winding of the velocity curve: net heading rotation over one period.

    On the torus this is read off the unwrapped heading angle; on the
    sphere it is computed in a stereographic chart from q (auto-selected
    away from the curve when q is None) and depends on q only through the
    complementary component containing it.
    """
    if geom.is_torus(surface) or surface.kind == "hyperbolic_chart":
        tau = (orbit.states[-1, 2] - orbit.states[0, 2]) / (2.0 * np.pi)
        if abs(tau - round(tau)) > 0.01:
            raise ResolutionError(f"turning sum {tau} is not close to an integer")
        return int(round(tau))
    cands, dists = _auto_chart_points(surface, orbit)
    if q is not None:
        return _sphere_turning(surface, orbit, q)
    for cand, d in zip(cands, dists):
        if d < 0.05 * surface.radius:
            break
        try:
            return _sphere_turning(surface, orbit, cand)
        except ResolutionError:
            continue
    raise ResolutionError("no projection point clear of the curve support")


def in_fibre_homotopy_class(orbit, surface):
    """Whether the tangent lift is freely homotopic to an oriented fibre
    of the unit-tangent projection (the distinguished class of the length
    functional).

    Criteria: on the sphere, odd turning number (contractibility is
    automatic); on the torus, contractible lift (zero lattice
    displacement) and turning number -1.
    """
    if surface.kind == "round_sphere":
        tau = orbit.turning_number if orbit.turning_number else turning_number(orbit, surface)
        return bool(tau % 2 != 0)
    if geom.is_torus(surface):
        if orbit.lattice_displacement != (0, 0):
            return False
        tau = orbit.turning_number if orbit.turning_number else turning_number(orbit, surface)
        return tau == -1
    if surface.kind == "hyperbolic_chart":
        # the chart is simply connected: the universal-cover criterion
        # (turning number -1) applies directly
        tau = orbit.turning_number if orbit.turning_number else turning_number(orbit, surface)
        return tau == -1
    raise geom.UnsupportedSurfaceError("class membership needs a closed surface")


def iterate_orbit(orbit, m):
    """The m-fold iterate; period and turning number multiply by m."""
    if m < 1:
        raise ValueError("m must be >= 1")
    n = len(orbit.ts) - 1
    ts = [orbit.ts[:-1] + k * orbit.period for k in range(m)]
    ts.append(np.array([m * orbit.period]))
    dphi = orbit.states[-1, 2] - orbit.states[0, 2]
    blocks = []
    for k in range(m):
        blk = orbit.states[:-1].copy()
        blk[:, 2] += k * dphi
        if orbit.lattice_displacement is not None:
            blk[:, 0] += k * orbit.lattice_displacement[0] * orbit.surface.side_x
            blk[:, 1] += k * orbit.lattice_displacement[1] * orbit.surface.side_y
        blocks.append(blk)
    last = orbit.states[-1:].copy()
    last[:, 2] = orbit.states[0, 2] + m * dphi
    if orbit.lattice_displacement is not None:
        last[:, 0] = orbit.states[0, 0] + m * orbit.lattice_displacement[0] * orbit.surface.side_x
        last[:, 1] = orbit.states[0, 1] + m * orbit.lattice_displacement[1] * orbit.surface.side_y
    blocks.append(last)
    states = np.concatenate(blocks, axis=0)
    charts = np.concatenate([np.tile(orbit.charts[:-1], m), orbit.charts[-1:]])
    out = ClosedOrbit(
        surface=orbit.surface, period=m * orbit.period,
        ts=np.concatenate(ts), states=states, charts=charts,
        closure_residual=orbit.closure_residual, prime=(m == 1),
        turning_number=m * orbit.turning_number,
        in_fibre_class=orbit.in_fibre_class if m == 1 else False,
        lattice_displacement=orbit.lattice_displacement,
    )
    if orbit.ambient is not None:
        out.ambient = np.concatenate([np.tile(orbit.ambient[:-1], (m, 1)),
                                      orbit.ambient[-1:]])
        out.ambient_velocity = np.concatenate(
            [np.tile(orbit.ambient_velocity[:-1], (m, 1)),
             orbit.ambient_velocity[-1:]])
    if geom.is_torus(orbit.surface):
        out.in_fibre_class = in_fibre_homotopy_class(out, orbit.surface)
    else:
        out.in_fibre_class = bool(out.turning_number % 2 != 0)
    return out


# --------------------------------------------------------------------------
# embeddedness


def _segments_intersect(p1, p2, q1, q2):
    """Vectorized proper-intersection test for segment batches."""
    d1 = p2 - p1
    d2 = q2 - q1
    denom = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    rel = q1 - p1
    t = (rel[:, 0] * d2[:, 1] - rel[:, 1] * d2[:, 0]) / np.where(denom == 0, np.inf, denom)
    s = (rel[:, 0] * d1[:, 1] - rel[:, 1] * d1[:, 0]) / np.where(denom == 0, np.inf, denom)
    eps = 1e-12
    return (t > eps) & (t < 1 - eps) & (s > eps) & (s < 1 - eps)


def _polyline_self_intersections(pts, margin):
    """(has_crossing, inconclusive) for a closed 2D polyline."""
    n = len(pts)
    seg_a = pts
    seg_b = np.roll(pts, -1, axis=0)
    crossing = False
    min_gap = np.inf
    for i in range(n):
        js = np.arange(i + 2, n if i > 0 else n - 1)
        if len(js) == 0:
            continue
        p1 = np.tile(seg_a[i], (len(js), 1))
        p2 = np.tile(seg_b[i], (len(js), 1))
        hits = _segments_intersect(p1, p2, seg_a[js], seg_b[js])
        if np.any(hits):
            crossing = True
            break
        d = np.linalg.norm(seg_a[js] - seg_a[i], axis=1)
        if len(d):
            min_gap = min(min_gap, float(np.min(d)))
    return crossing, (not crossing) and (min_gap < margin)


def is_negatively_alexandrov_embedded(orbit, surface, n_check=512):
    """Sufficient certificate that the curve bounds an immersed disc in the
    clockwise direction: True, False (clear self-crossing), or None when
    the sample resolution cannot decide.

    Sphere: embeddedness of the projected curve (checked in a chart away
    from the support).  Torus: embedded lift together with turning number
    -1.  A False only reports a detected crossing, never a proof that no
    admissible disc exists.
    """
    step = max(1, (len(orbit.ts) - 1) // n_check)
    if surface.kind == "round_sphere":
        cands, dists = _auto_chart_points(surface, orbit)
        chart = SphereChart(surface, cands[0])
        pts = chart.project(orbit.ambient[:-1:step])
    elif geom.is_torus(surface):
        if orbit.turning_number != -1:
            return False
        pts = orbit.states[:-1:step, :2]
    else:
        pts = orbit.states[:-1:step, :2]
    spacing = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1).max()
    crossing, inconclusive = _polyline_self_intersections(pts, 0.5 * spacing)
    if crossing:
        return False
    if inconclusive:
        return None
    return True


# --------------------------------------------------------------------------
# survey


def default_period_guess(surface, f):
    """2 pi / sqrt(average curvature): exact for constant data, and equal
    to the strong-field heuristic 2 pi / f_avg on the torus."""
    from . import sysdia

    if not surface.compact:
        raise geom.UnsupportedSurfaceError(
            "no default period guess on a non-compact chart; pass one")
    Kf = sysdia.average_curvature(surface, f)
    if Kf <= 0:
        raise ValueError("average curvature is not positive; pass a period guess")
    return 2.0 * np.pi / np.sqrt(Kf)


def seed_states(surface, n_x, n_y, n_phi):
    """Deterministic seed grid covering the surface (both sphere charts)."""
    seeds = []
    phis = np.arange(n_phi) * (2.0 * np.pi / n_phi)
    if geom.is_torus(surface):
        xs = (np.arange(n_x) + 0.41) * (surface.side_x / n_x)
        ys = (np.arange(n_y) + 0.27) * (surface.side_y / n_y)
        for x in xs:
            for y in ys:
                for p in phis:
                    seeds.append((x, y, p, 0))
        return seeds
    if surface.kind == "round_sphere":
        L = 1.9 * surface.radius
        xs = np.linspace(-L, L, n_x)
        ys = np.linspace(-L, L, n_y)
        for chart in (0, 1):
            for x in xs:
                for y in ys:
                    if x * x + y * y > L * L:
                        continue
                    for p in phis:
                        seeds.append((x, y, p, chart))
        return seeds
    r = np.linspace(0.0, 0.6, n_x)
    for ri in r:
        for th in np.arange(n_y) * (2.0 * np.pi / n_y):
            for p in phis:
                seeds.append((ri * np.cos(th), ri * np.sin(th), p, 0))
    return seeds


def _point_to_polyline(points, poly):
    """Min distances from points (M, d) to a closed polyline (N, d)."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
    ap = points[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("mnd,nd->mn", ap, ab) / denom, 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d = np.linalg.norm(points[:, None, :] - proj, axis=2)
    return d.min(axis=1)


def _orbit_cloud(orbit, surface, n=160):
    step = max(1, (len(orbit.ts) - 1) // n)
    if surface.kind == "round_sphere":
        return np.concatenate(
            [orbit.ambient[:-1:step], orbit.ambient_velocity[:-1:step]], axis=1
        )
    pts = orbit.states[:-1:step].copy()
    pts[:, 2] = np.mod(pts[:, 2], 2.0 * np.pi)
    # embed the heading angle to make the metric chart-free
    return np.concatenate(
        [pts[:, :2], 0.2 * np.cos(pts[:, 2:]), 0.2 * np.sin(pts[:, 2:])], axis=1
    )


def _canonicalize_torus(cloud, surface):
    cx = np.mean(cloud[:, 0])
    cy = np.mean(cloud[:, 1])
    cloud = cloud.copy()
    cloud[:, 0] -= surface.side_x * np.floor(cx / surface.side_x)
    cloud[:, 1] -= surface.side_y * np.floor(cy / surface.side_y)
    return cloud


def _same_orbit(a, b, surface, tol):
    if abs(a.period - b.period) > max(100.0 * tol, 1e-6 * max(a.period, 1.0)):
        return False
    ca = _orbit_cloud(a, surface)
    cb = _orbit_cloud(b, surface)
    if geom.is_torus(surface):
        ca = _canonicalize_torus(ca, surface)
        cb = _canonicalize_torus(cb, surface)
        best = np.inf
        for mx in (-1, 0, 1):
            for my in (-1, 0, 1):
                shift = np.array([mx * surface.side_x, my * surface.side_y, 0, 0])
                d = _point_to_polyline(ca[::4] + shift, cb)
                best = min(best, float(d.max()))
                if best <= tol:
                    return True
        return best <= tol
    d1 = _point_to_polyline(ca[::4], cb)
    if float(d1.max()) > tol:
        return False
    d2 = _point_to_polyline(cb[::4], ca)
    return float(d2.max()) <= tol


def _batch_prime_periods(surface, f, Y, charts, T, res, tol_int=1e-11, kmax=12):
    """Vectorized sub-period scan over many converged rows at once."""
    B = len(Y)
    ks = np.arange(2, kmax + 1)
    Yall = np.repeat(Y, len(ks), axis=0)
    call = np.repeat(charts, len(ks))
    Tall = (T[:, None] / ks[None, :]).ravel()
    out, cend, _ = flow._integrate_batch(
        surface, f, Yall, call, Tall, rtol=tol_int, atol=tol_int
    )
    if surface.kind == "round_sphere":
        P0, V0 = _ambient_state_embedding(surface, Yall, call)
        Pe, Ve = _ambient_state_embedding(surface, out[:, :3], cend)
        rn = np.sqrt(np.sum((Pe - P0) ** 2, axis=1) + np.sum((Ve - V0) ** 2, axis=1))
        rn[cend != call] = np.inf
    else:
        rn = np.linalg.norm(_torus_residual(surface, out[:, :3], Yall), axis=1)
    rn = rn.reshape(B, len(ks))
    thr = np.maximum(10.0 * res, 1e-7)
    best = T.copy()
    for j in range(len(ks) - 1, -1, -1):
        hit = rn[:, j] <= thr
        best = np.where(hit & (T / ks[j] < best), T / ks[j], best)
    return best


def _orbit_signature(orbit, surface):
    """Cheap descriptor for dedupe prefiltering: period, cloud centroid,
    and mean spread."""
    cloud = _orbit_cloud(orbit, surface)
    if geom.is_torus(surface):
        cloud = _canonicalize_torus(cloud, surface)
    cen = cloud.mean(axis=0)
    spread = float(np.mean(np.linalg.norm(cloud - cen, axis=1)))
    return np.concatenate([[orbit.period], cen, [spread]])


def survey(surface, f, seed_grid=(6, 6, 6), dedupe_tol=1e-5, t_guess=None,
           tol=1e-10, tol_int=1e-11, max_iter=40, n_samples=2048,
           batch_size=512, require_class=True):
    """Launch the orbit finder from a seed grid and return the distinct
    prime closed orbits in the distinguished class, deterministically
    ordered by (period, basepoint).

    All stages (Newton, sub-period scan, resampling) run vectorized over
    the whole seed batch; results are merged by sorting before dedupe, so
    the output does not depend on batch sizes.
    """
    f = geom.scalar_field(surface, f)
    if isinstance(seed_grid, tuple):
        seeds = seed_states(surface, *seed_grid)
    else:
        seeds = list(seed_grid)
    if len(seeds) == 0:
        return []
    T0 = t_guess if t_guess is not None else default_period_guess(surface, f)
    bracket = (0.2 * T0, 5.0 * T0)
    rows = np.array([[s[0], s[1], s[2]] for s in seeds])
    charts = np.array([int(s[3]) for s in seeds])
    conv_Y, conv_c, conv_T = [], [], []
    conv_deg, conv_it, conv_res = [], [], []
    for lo in range(0, len(rows), batch_size):
        hi = min(lo + batch_size, len(rows))
        res = _batch_newton(surface, f, rows[lo:hi], charts[lo:hi],
                            np.full(hi - lo, float(T0)), bracket,
                            tol=tol, tol_int=tol_int, max_iter=max_iter)
        sel = res["converged"]
        conv_Y.append(res["Y"][sel])
        conv_c.append(res["charts"][sel])
        conv_T.append(res["T"][sel])
        conv_deg.append(res["degenerate"][sel])
        conv_it.append(res["iterations"][sel])
        conv_res.append(res["residual"][sel])
    if not conv_Y or sum(len(a) for a in conv_Y) == 0:
        return []
    Y = np.concatenate(conv_Y)
    ch = np.concatenate(conv_c)
    T = np.concatenate(conv_T)
    deg = np.concatenate(conv_deg)
    its = np.concatenate(conv_it)
    rno = np.concatenate(conv_res)

    Tprime = _batch_prime_periods(surface, f, Y, ch, T, rno, tol_int=tol_int)
    need = Tprime < T
    if np.any(need):
        res2 = _batch_newton(surface, f, Y[need], ch[need], Tprime[need],
                             (0.5 * float(Tprime[need].min()),
                              1.5 * float(Tprime[need].max())),
                             tol=tol, tol_int=tol_int, max_iter=12)
        keep = res2["converged"]
        idx = np.where(need)[0][keep]
        Y[idx] = res2["Y"][keep]
        ch[idx] = res2["charts"][keep]
        T[idx] = res2["T"][keep]
        drop = np.where(need)[0][~keep]
        mask = np.ones(len(Y), dtype=bool)
        mask[drop] = False
        Y, ch, T, deg, its = Y[mask], ch[mask], T[mask], deg[mask], its[mask]

    found = []
    for lo in range(0, len(Y), 128):
        hi = min(lo + 128, len(Y))
        rec, rec_charts = flow._integrate_fixed(
            surface, f, Y[lo:hi], ch[lo:hi], T[lo:hi], n_samples
        )
        for i in range(hi - lo):
            j = lo + i
            states = rec[:, i, :]
            crow = rec_charts[:, i]
            ts = np.linspace(0.0, T[j], n_samples + 1)
            r = _chart_residual_norm(surface, states, crow)
            if r > 1e-8:
                continue
            orb = ClosedOrbit(
                surface=surface, period=float(T[j]), ts=ts, states=states,
                charts=crow, closure_residual=r,
                degenerate_family=bool(deg[j]), newton_iterations=int(its[j]),
            )
            if surface.kind == "round_sphere":
                P, V = _ambient_state_embedding(surface, states, crow)
                orb.ambient = P
                orb.ambient_velocity = V
            if geom.is_torus(surface):
                dx = states[-1, 0] - states[0, 0]
                dy = states[-1, 1] - states[0, 1]
                orb.lattice_displacement = (
                    int(np.round(dx / surface.side_x)),
                    int(np.round(dy / surface.side_y)),
                )
            try:
                orb.turning_number = turning_number(orb, surface)
                orb.in_fibre_class = in_fibre_homotopy_class(orb, surface)
            except ResolutionError:
                continue
            if require_class and not orb.in_fibre_class:
                continue
            found.append(orb)
    # deterministic merge order, then dedupe with a signature prefilter
    found.sort(key=lambda o: (round(o.period, 9), round(o.states[0, 0], 7),
                              round(o.states[0, 1], 7), round(o.states[0, 2], 7)))
    distinct = []
    signatures = []
    for orb in found:
        sig = _orbit_signature(orb, surface)
        dup = False
        if signatures:
            gaps = np.max(np.abs(np.array(signatures) - sig), axis=1)
            for k in np.where(gaps < 50.0 * dedupe_tol)[0]:
                if _same_orbit(orb, distinct[k], surface, dedupe_tol):
                    dup = True
                    break
        if not dup:
            distinct.append(orb)
            signatures.append(sig)
    return distinct
