"""The prescribed-curvature flow on the unit tangent bundle and its
numerical integration, including the linearized (variational) flow.

State and sign conventions
--------------------------
A unit tangent vector is stored as chart coordinates (x, y) plus the
heading angle phi of the chart velocity, so the projected curve is

    x' = e^{-u} cos(phi),   y' = e^{-u} sin(phi),

which has g-norm one by construction.  Requiring geodesic curvature
exactly -f along the curve gives the heading equation

    phi' = -f(x, y) + e^{-u} (u_y cos(phi) - u_x sin(phi)).

With this sign choice a positive forcing f makes the curve rotate
clockwise in the oriented chart: on the flat torus with f = b > 0 the
solutions are clockwise circles of radius 1/b.  The fibre rotation field
used elsewhere (forms module) is V = -2 pi d/dphi, i.e. it turns fibres
against the chart orientation and generates a free circle action whose
orbits have period one.

The integrator is an adaptive embedded Dormand-Prince 5(4) pair with a
PI step controller, vectorized over batches of initial conditions; the
batch advances in a rescaled time so each row can target its own final
time.  On the sphere, trajectories switch stereographic charts inside
the overlap band (the transition is applied between accepted steps, which
is valid because both charts are well-defined throughout the band); the
variational matrix is conjugated by the transition differential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geom


class IntegrationError(RuntimeError):
    """Step-size underflow or domain exit; carries the last good state."""

    def __init__(self, message, t_reached=None, last_state=None):
        super().__init__(message)
        self.t_reached = t_reached
        self.last_state = last_state


@dataclass
class UnitTangentState:
    """A point of the unit tangent bundle in chart coordinates."""

    x: float
    y: float
    phi: float
    chart: int = 0

    def __post_init__(self):
        self.phi = float(np.mod(self.phi, 2.0 * np.pi))

    def as_array(self):
        return np.array([self.x, self.y, self.phi])


@dataclass
class FlowJet:
    """Endpoint of a trajectory together with the flow differential."""

    state: UnitTangentState
    differential: np.ndarray
    det_expected: float = 1.0
    time: float = 0.0

    @property
    def det_actual(self):
        return float(np.linalg.det(self.differential))


@dataclass
class Trajectory:
    """Uniformly resampled trajectory with a unit-speed defect estimate."""

    ts: np.ndarray
    states: np.ndarray          # (n, 3): x, y, phi (phi unwrapped)
    charts: np.ndarray          # (n,)
    surface: object
    speed_defect: float = 0.0

    @property
    def endpoint(self):
        x, y, phi = self.states[-1]
        return UnitTangentState(x, y, phi, chart=int(self.charts[-1]))

    def to_csv(self):
        lines = ["t,x,y,phi,speed_defect"]
        for i in range(len(self.ts)):
            x, y, phi = self.states[i]
            lines.append(
                f"{self.ts[i]!r},{x!r},{y!r},{np.mod(phi, 2*np.pi)!r},{self.speed_defect!r}"
            )
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# right-hand side and its Jacobian


def _rhs_arrays(surface, f, x, y, phi, chart):
    """Vector field on T^1 M; all arguments are equal-shape arrays."""
    u = np.empty_like(x)
    ux = np.empty_like(x)
    uy = np.empty_like(x)
    fv = np.empty_like(x)
    for c in np.unique(chart):
        m = chart == c
        u[m] = surface.log_weight(x[m], y[m], chart=int(c))
        ux[m] = surface.log_weight(x[m], y[m], 1, 0, chart=int(c))
        uy[m] = surface.log_weight(x[m], y[m], 0, 1, chart=int(c))
        fv[m] = f.eval(x[m], y[m], chart=int(c))
    emu = np.exp(-u)
    cp, sp = np.cos(phi), np.sin(phi)
    return emu * cp, emu * sp, -fv + emu * (uy * cp - ux * sp)


def _rhs_and_jacobian(surface, f, x, y, phi, chart):
    """RHS plus the 3x3 state Jacobian, for the variational flow."""
    shape = x.shape
    vals = {}
    names = [
        ("u", 0, 0), ("ux", 1, 0), ("uy", 0, 1),
        ("uxx", 2, 0), ("uxy", 1, 1), ("uyy", 0, 2),
    ]
    for name, dx, dy in names:
        vals[name] = np.empty(shape)
    fv = np.empty(shape)
    fx = np.empty(shape)
    fy = np.empty(shape)
    for c in np.unique(chart):
        m = chart == c
        for name, dx, dy in names:
            vals[name][m] = surface.log_weight(x[m], y[m], dx, dy, chart=int(c))
        fv[m] = f.eval(x[m], y[m], chart=int(c))
        fx[m] = f.eval(x[m], y[m], 1, 0, chart=int(c))
        fy[m] = f.eval(x[m], y[m], 0, 1, chart=int(c))
    u, ux, uy = vals["u"], vals["ux"], vals["uy"]
    uxx, uxy, uyy = vals["uxx"], vals["uxy"], vals["uyy"]
    emu = np.exp(-u)
    cp, sp = np.cos(phi), np.sin(phi)
    F = np.stack([emu * cp, emu * sp, -fv + emu * (uy * cp - ux * sp)], axis=-1)
    J = np.empty(shape + (3, 3))
    J[..., 0, 0] = -ux * emu * cp
    J[..., 0, 1] = -uy * emu * cp
    J[..., 0, 2] = -emu * sp
    J[..., 1, 0] = -ux * emu * sp
    J[..., 1, 1] = -uy * emu * sp
    J[..., 1, 2] = emu * cp
    rot = uy * cp - ux * sp
    J[..., 2, 0] = -fx + emu * (-ux * rot + uxy * cp - uxx * sp)
    J[..., 2, 1] = -fy + emu * (-uy * rot + uyy * cp - uxy * sp)
    J[..., 2, 2] = emu * (-uy * sp - ux * cp)
    return F, J


def magnetic_derivative(surface, f, state):
    """State derivative (x', y', phi') of the flow at a single state."""
    x = np.array([state.x])
    y = np.array([state.y])
    geom._check_domain(surface, x, y)
    phi = np.array([state.phi])
    chart = np.array([state.chart])
    dx, dy, dphi = _rhs_arrays(surface, f, x, y, phi, chart)
    return float(dx[0]), float(dy[0]), float(dphi[0])


# --------------------------------------------------------------------------
# Dormand-Prince 5(4) with FSAL, batched

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = np.array([
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
])


class _BatchSystem:
    """dY/dsigma = T * F(Y) over a batch; owns chart bookkeeping."""

    def __init__(self, surface, f, T, charts, variational):
        self.surface = surface
        self.f = f
        self.T = np.asarray(T, dtype=float)
        self.charts = np.asarray(charts, dtype=int).copy()
        self.variational = variational
        self.dim = 12 if variational else 3

    def rhs(self, Y):
        x, y, phi = Y[:, 0], Y[:, 1], Y[:, 2]
        if self.surface.kind == "hyperbolic_chart":
            if np.any(x * x + y * y >= self.surface.max_radius**2):
                raise IntegrationError("trajectory left the hyperbolic chart domain")
        if not self.variational:
            dx, dy, dphi = _rhs_arrays(self.surface, self.f, x, y, phi, self.charts)
            return np.stack([dx, dy, dphi], axis=1) * self.T[:, None]
        F, J = _rhs_and_jacobian(self.surface, self.f, x, y, phi, self.charts)
        D = Y[:, 3:].reshape(-1, 3, 3)
        dD = np.einsum("bij,bjk->bik", J, D)
        out = np.concatenate([F, dD.reshape(-1, 9)], axis=1)
        return out * self.T[:, None]

    def normalize_charts(self, Y):
        """Switch any row that left the comfort zone of its chart."""
        if self.surface.kind != "round_sphere":
            return
        x, y = Y[:, 0], Y[:, 1]
        mask = x * x + y * y > self.surface.switch_radius**2
        if not np.any(mask):
            return
        xs, ys, phis = Y[mask, 0], Y[mask, 1], Y[mask, 2]
        # keep the angle's unwrapped branch close to its previous value
        xn, yn, phin, _ = self.surface.transition(xs, ys, phis, 0)
        dphi = phin - np.mod(phis, 2 * np.pi)
        dphi = np.mod(dphi + np.pi, 2 * np.pi) - np.pi
        Y[mask, 0] = xn
        Y[mask, 1] = yn
        Y[mask, 2] = phis + dphi
        if self.variational:
            Jt = self.surface.transition_differential(xs, ys)
            D = Y[mask, 3:].reshape(-1, 3, 3)
            Y[mask, 3:] = np.einsum("bij,bjk->bik", Jt, D).reshape(-1, 9)
        self.charts[mask] = 1 - self.charts[mask]


def _integrate_batch(surface, f, states, charts, T, rtol=1e-10, atol=1e-10,
                     variational=False, h_max=0.25, max_steps=2_000_000):
    """Adaptive batched integration from sigma = 0 to 1 (t = 0 to T per row).

    Returns (Y, charts, info) where Y is (B, 3) or (B, 12) with the
    variational matrix flattened row-major.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    B = states.shape[0]
    sys = _BatchSystem(surface, f, np.broadcast_to(T, (B,)), charts, variational)
    Y = states.copy()
    if variational and Y.shape[1] == 3:
        eye = np.tile(np.eye(3).ravel(), (B, 1))
        Y = np.concatenate([Y, eye], axis=1)
    sys.normalize_charts(Y)
    Tmax = float(np.max(np.abs(sys.T))) or 1.0
    h = min(1e-3, h_max / Tmax)
    h_floor = 1e-14
    sigma = 0.0
    k1 = sys.rhs(Y)
    n_steps = 0
    n_rejected = 0
    while sigma < 1.0:
        h = min(h, 1.0 - sigma, h_max / Tmax)
        K = np.empty((7, B, Y.shape[1]))
        K[0] = k1
        for i in range(1, 7):
            Yi = Y + h * np.einsum("s,sbd->bd", _DP_A[i], K[:i])
            K[i] = sys.rhs(Yi)
        Y5 = Y + h * np.einsum("s,sbd->bd", _DP_B5, K)
        err_vec = h * np.einsum("s,sbd->bd", _DP_E, K)
        scale = atol + rtol * np.maximum(np.abs(Y), np.abs(Y5))
        err = np.sqrt(np.mean((err_vec / scale) ** 2, axis=1)).max()
        if err <= 1.0 or h <= 4 * h_floor:
            sigma += h
            Y = Y5
            k1 = K[6]
            prev_charts = sys.charts.copy()
            sys.normalize_charts(Y)
            if np.any(prev_charts != sys.charts):
                k1 = sys.rhs(Y)  # FSAL invalid across a chart switch
            n_steps += 1
        else:
            n_rejected += 1
        fac = 0.9 * (1.0 / max(err, 1e-16)) ** 0.2
        h = h * min(5.0, max(0.2, fac))
        if h < h_floor:
            raise IntegrationError(
                "step size underflow", t_reached=sigma,
                last_state=_state_from_row(Y[0], sys.charts[0]),
            )
        if n_steps + n_rejected > max_steps:
            raise IntegrationError("too many steps", t_reached=sigma)
    info = {"n_steps": n_steps, "n_rejected": n_rejected}
    return Y, sys.charts, info


def _integrate_fixed(surface, f, states, charts, T, n_steps,
                     variational=False, record=True):
    """Fixed-step DP5 pass producing uniform-in-time samples."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    B = states.shape[0]
    sys = _BatchSystem(surface, f, np.broadcast_to(T, (B,)), charts, variational)
    Y = states.copy()
    if variational and Y.shape[1] == 3:
        eye = np.tile(np.eye(3).ravel(), (B, 1))
        Y = np.concatenate([Y, eye], axis=1)
    sys.normalize_charts(Y)
    h = 1.0 / n_steps
    if record:
        out = np.empty((n_steps + 1, B, Y.shape[1]))
        out_charts = np.empty((n_steps + 1, B), dtype=int)
        out[0] = Y
        out_charts[0] = sys.charts
    k1 = sys.rhs(Y)
    for step in range(n_steps):
        K = np.empty((7, B, Y.shape[1]))
        K[0] = k1
        for i in range(1, 7):
            Yi = Y + h * np.einsum("s,sbd->bd", _DP_A[i], K[:i])
            K[i] = sys.rhs(Yi)
        Y = Y + h * np.einsum("s,sbd->bd", _DP_B5, K)
        k1 = K[6]
        prev = sys.charts.copy()
        sys.normalize_charts(Y)
        if np.any(prev != sys.charts):
            k1 = sys.rhs(Y)
        if record:
            out[step + 1] = Y
            out_charts[step + 1] = sys.charts
    if record:
        return out, out_charts
    return Y, sys.charts


def _state_from_row(row, chart):
    return UnitTangentState(float(row[0]), float(row[1]), float(row[2]),
                            chart=int(chart))


# --------------------------------------------------------------------------
# public single-trajectory operations


def _speed_defect(surface, ts, states, charts):
    """Sup over interior samples of | |c'|_g - 1 | via 6th-order differences."""
    n = len(ts)
    if n < 8:
        return 0.0
    h = ts[1] - ts[0]
    w = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60]) / h
    if surface.kind == "round_sphere":
        P = np.empty((n, 3))
        for c in (0, 1):
            m = charts == c
            if np.any(m):
                P[m] = surface.to_ambient(states[m, 0], states[m, 1], chart=c)
        V = sum(w[j] * P[j : n - 6 + j] for j in range(7))
        # the round embedding is isometric, so ambient speed is g-speed
        speed = np.linalg.norm(V, axis=1)
        return float(np.max(np.abs(speed - 1.0)))
    pos = states[:, :2]
    V = sum(w[j] * pos[j : n - 6 + j] for j in range(7))
    mid = states[3 : n - 3]
    u = surface.log_weight(mid[:, 0], mid[:, 1])
    speed = np.exp(u) * np.linalg.norm(V, axis=1)
    return float(np.max(np.abs(speed - 1.0)))


def integrate(surface, f, s0, T, tol=1e-10, n_samples=2048):
    """Integrate the flow for time T from s0; returns a Trajectory.

    The endpoint comes from the adaptive pass at the requested tolerance;
    the uniformly spaced samples come from a fixed-step pass of the same
    order, and the reported speed defect is measured on those samples.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    f = geom.scalar_field(surface, f)
    Y0 = np.array([[s0.x, s0.y, s0.phi]])
    charts0 = np.array([s0.chart])
    Yend, charts_end, _ = _integrate_batch(
        surface, f, Y0, charts0, np.array([T]), rtol=tol, atol=tol
    )
    samples, charts_rec = _integrate_fixed(
        surface, f, Y0, charts0, np.array([T]), n_samples
    )
    ts = np.linspace(0.0, T, n_samples + 1)
    states = samples[:, 0, :]
    charts = charts_rec[:, 0]
    # splice the adaptive endpoint in place of the fixed-pass one
    states = states.copy()
    if int(charts[-1]) == int(charts_end[0]):
        states[-1] = Yend[0]
    defect = _speed_defect(surface, ts, states, charts)
    return Trajectory(ts=ts, states=states, charts=charts, surface=surface,
                      speed_defect=defect)


def integrate_with_variation(surface, f, s0, T, tol=1e-10):
    """Integrate state and linearized flow; returns a FlowJet."""
    f = geom.scalar_field(surface, f)
    if T == 0:
        return FlowJet(state=s0, differential=np.eye(3), det_expected=1.0, time=0.0)
    if T < 0:
        raise ValueError("T must be nonnegative")
    Y0 = np.array([[s0.x, s0.y, s0.phi]])
    charts0 = np.array([s0.chart])
    Y, charts, _ = _integrate_batch(
        surface, f, Y0, charts0, np.array([T]), rtol=tol, atol=tol,
        variational=True,
    )
    state = _state_from_row(Y[0], charts[0])
    D = Y[0, 3:].reshape(3, 3)
    # the flow preserves e^{2u} dx dy dphi, so det dPhi should equal the
    # weight ratio between start and end charts
    u0 = float(surface.log_weight(np.array([s0.x]), np.array([s0.y]),
                                  chart=s0.chart)[0])
    u1 = float(surface.log_weight(np.array([state.x]), np.array([state.y]),
                                  chart=state.chart)[0])
    return FlowJet(state=state, differential=D,
                   det_expected=float(np.exp(2.0 * (u0 - u1))), time=float(T))


def time_reversal_partner(state):
    """Initial condition of the reversed trajectory (same point, opposite
    heading); reversing both time and the sign of f maps solutions to
    solutions."""
    return UnitTangentState(state.x, state.y, state.phi + np.pi, chart=state.chart)
