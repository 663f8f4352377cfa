"""Area-form normalization by the Moser flow, strongness diagnostics for
positive forcing functions, and the derivative-bound bookkeeping used by
the time-one-map estimates.

The normalization solves d(zeta) = (f_norm - 1) mu with the spectrally
minimal (co-exact, harmonic-free) primitive on the torus, then flows grid
points along the time-dependent field Y_s = (metric dual of the rotated
primitive) / (s f_norm + 1 - s) from s = 0 to 1.  The resulting time-one
map psi pulls f_norm mu back to mu; the pullback defect is monitored
pointwise through the transported Jacobians.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import geom, flow


# --------------------------------------------------------------------------
# spectral Hodge primitive on the torus


class OneFormOnSurface:
    """One-form on a torus chart with spectral component fields."""

    def __init__(self, surface, comp_x, comp_y):
        self.surface = surface
        self.comp_x = comp_x
        self.comp_y = comp_y

    def eval(self, x, y, dx=0, dy=0):
        return (self.comp_x.eval(x, y, dx=dx, dy=dy),
                self.comp_y.eval(x, y, dx=dx, dy=dy))

    def exterior_derivative_grid(self):
        """d(zeta) coefficient (dx wedge dy) on the sample grid."""
        return (self.comp_y.derivative_grid(1, 0)
                - self.comp_x.derivative_grid(0, 1))

    def sup_norm(self):
        z1 = self.comp_x.grid_samples
        z2 = self.comp_y.grid_samples
        return float(np.max(np.hypot(z1, z2)))


def hodge_primitive(surface, h):
    """Co-exact primitive zeta with d(zeta) = h mu, for zero-average h.

    Solves the flat Poisson problem for the potential of h times the area
    weight and rotates its differential; the harmonic part is zero by
    construction (minimal-norm gauge).
    """
    if not geom.is_torus(surface):
        raise geom.UnsupportedSurfaceError("the spectral primitive lives on tori")
    h = geom.scalar_field(surface, h)
    if isinstance(h, geom.ConstantField):
        if abs(h.value) > 1e-12:
            raise ValueError("field must have zero average against the area form")
        N = 256
        zero = geom.TorusField(surface, np.zeros((N, N)), resolution=N)
        return OneFormOnSurface(surface, zero,
                                geom.TorusField(surface, np.zeros((N, N)), resolution=N))
    avg = geom.integrate_density(surface, h)
    scale = max(1.0, float(np.max(np.abs(h.grid_samples))))
    if abs(avg) > 1e-8 * scale * surface.area():
        raise ValueError("field must have zero average against the area form")
    N = h.resolution[0]
    xs = np.arange(N) * (surface.side_x / N)
    ys = np.arange(N) * (surface.side_y / N)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    rhs = h.grid_samples * np.exp(2.0 * surface.log_weight(X, Y))
    rhs_hat = np.fft.fft2(rhs)
    kx = 2.0 * np.pi * np.fft.fftfreq(N, d=surface.side_x / N)
    ky = 2.0 * np.pi * np.fft.fftfreq(N, d=surface.side_y / N)
    KX, KY = np.meshgrid(kx, ky, indexing="ij")
    k2 = KX**2 + KY**2
    k2[0, 0] = 1.0
    psi_hat = rhs_hat / (-k2)
    psi_hat[0, 0] = 0.0
    # zeta = (-psi_y, psi_x): then d(zeta) = (psi_xx + psi_yy) dx ^ dy
    zx = np.real(np.fft.ifft2(-1j * KY * psi_hat))
    zy = np.real(np.fft.ifft2(1j * KX * psi_hat))
    flat = surface if isinstance(surface, geom.FlatTorus) else geom.FlatTorus(
        surface.side_x, surface.side_y)
    del flat
    return OneFormOnSurface(
        surface,
        geom.TorusField(surface, zx, resolution=N),
        geom.TorusField(surface, zy, resolution=N),
    )


def primitive_residual(surface, zeta, h):
    """Sup of |d(zeta) - h mu| over the sample grid."""
    N = zeta.comp_x.resolution[0]
    xs = np.arange(N) * (surface.side_x / N)
    ys = np.arange(N) * (surface.side_y / N)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    target = h.eval(X, Y) * np.exp(2.0 * surface.log_weight(X, Y))
    return float(np.max(np.abs(zeta.exterior_derivative_grid() - target)))


def schauder_ratios(surface, zeta, h, kmax=2):
    """Reported ratios of C^k data of zeta against those of h."""
    out = []
    for k in range(kmax + 1):
        num = 0.0
        for j in range(k + 1):
            gx = _grid_derivative_sup(zeta.comp_x, j)
            gy = _grid_derivative_sup(zeta.comp_y, j)
            num += float(np.hypot(gx, gy))
        den = geom.ck_norm(h, k)
        out.append(num / den if den > 0 else 0.0)
    return out


def _grid_derivative_sup(fieldk, order):
    sup = 0.0
    for dx in range(order + 1):
        dy = order - dx
        sup = max(sup, float(np.max(np.abs(fieldk.derivative_grid(dx, dy)))))
    return sup


# --------------------------------------------------------------------------
# Moser normalization


@dataclass
class MoserResult:
    zeta: OneFormOnSurface
    psi_points: np.ndarray          # (G, G, 2) images of the sample grid
    psi_jacobians: np.ndarray       # (G, G, 2, 2)
    grid_x: np.ndarray
    grid_y: np.ndarray
    pullback_defect: float
    exterior_residual: float
    f_avg: float

    def psi(self, x, y):
        """Interpolated diffeomorphism (periodic displacement splines)."""
        if not hasattr(self, "_disp"):
            sx = self.grid_x
            sy = self.grid_y
            Lx = sx[-1] - sx[0] + (sx[1] - sx[0])
            Ly = sy[-1] - sy[0] + (sy[1] - sy[0])
            GX, GY = np.meshgrid(sx, sy, indexing="ij")
            dx = self.psi_points[..., 0] - GX
            dy = self.psi_points[..., 1] - GY
            from scipy.interpolate import RectBivariateSpline

            pad = 3
            xs = np.concatenate([sx[-pad:] - Lx, sx, sx[:pad] + Lx])
            ys = np.concatenate([sy[-pad:] - Ly, sy, sy[:pad] + Ly])

            def padw(a):
                a = np.concatenate([a[-pad:, :], a, a[:pad, :]], axis=0)
                return np.concatenate([a[:, -pad:], a, a[:, :pad]], axis=1)

            self._disp = (
                RectBivariateSpline(xs, ys, padw(dx), kx=3, ky=3),
                RectBivariateSpline(xs, ys, padw(dy), kx=3, ky=3),
                Lx, Ly,
            )
        sx_spl, sy_spl, Lx, Ly = self._disp
        xf = np.mod(x, Lx)
        yf = np.mod(y, Ly)
        return (x + sx_spl.ev(xf, yf), y + sy_spl.ev(xf, yf))

    def displacement_csv(self):
        lines = ["x,y,psi_x,psi_y"]
        G = len(self.grid_x)
        for i in range(G):
            for j in range(G):
                lines.append(
                    f"{self.grid_x[i]!r},{self.grid_y[j]!r},"
                    f"{self.psi_points[i, j, 0]!r},{self.psi_points[i, j, 1]!r}"
                )
        return "\n".join(lines) + "\n"

    def as_dict(self):
        return {
            "pullback_defect": self.pullback_defect,
            "exterior_residual": self.exterior_residual,
            "f_avg": self.f_avg,
            "grid": len(self.grid_x),
        }


def moser_normalize(surface, f, grid=33, tol=1e-12):
    """Time-one map of the normalizing flow: psi^*(f_norm mu) = mu."""
    f = geom.scalar_field(surface, f)
    if not geom.is_torus(surface):
        if surface.kind == "round_sphere" and isinstance(f, geom.ConstantField):
            # constant forcing normalizes trivially (zeta = 0, psi = id)
            return _trivial_moser(geom.FlatTorus(1, 1), f)
        raise geom.UnsupportedSurfaceError(
            "normalization of nonconstant fields is implemented on tori")
    if f.min() <= 0:
        raise geom.PositivityError("normalization requires min f > 0")
    favg = geom.average_density(surface, f)
    if isinstance(f, geom.ConstantField):
        return _trivial_moser(surface, f, favg)
    fn_grid = f.grid_samples / favg
    f_norm = geom.TorusField(surface, fn_grid, resolution=f.resolution[0])
    h = geom.TorusField(surface, fn_grid - 1.0, resolution=f.resolution[0])
    zeta = hodge_primitive(surface, h)
    resid = primitive_residual(surface, zeta, h)

    G = int(grid)
    gx = np.arange(G) * (surface.side_x / G)
    gy = np.arange(G) * (surface.side_y / G)
    GX, GY = np.meshgrid(gx, gy, indexing="ij")
    pts = np.stack([GX.ravel(), GY.ravel()], axis=1)
    n = len(pts)
    y0 = np.concatenate([
        pts.reshape(-1), np.tile(np.eye(2).reshape(-1), n),
    ])

    min_fn = f_norm.min()

    def rhs(s, y):
        xy = y[: 2 * n].reshape(n, 2)
        D = y[2 * n :].reshape(n, 2, 2)
        x, yy = xy[:, 0], xy[:, 1]
        z1, z2 = zeta.eval(x, yy)
        fn = f_norm.eval(x, yy)
        q = s * fn + (1.0 - s)
        if np.any(q <= 0):
            raise RuntimeError("interpolated density lost positivity")
        w = np.exp(-2.0 * surface.log_weight(x, yy)) / q
        vx = -z2 * w
        vy = z1 * w
        # Jacobian of the velocity field
        z1x, z2x = zeta.eval(x, yy, dx=1)
        z1y, z2y = zeta.eval(x, yy, dy=1)
        fnx = f_norm.eval(x, yy, dx=1)
        fny = f_norm.eval(x, yy, dy=1)
        ux = surface.log_weight(x, yy, 1, 0)
        uy = surface.log_weight(x, yy, 0, 1)
        wx = w * (-2.0 * ux - s * fnx / q)
        wy = w * (-2.0 * uy - s * fny / q)
        J = np.empty((n, 2, 2))
        J[:, 0, 0] = -z2x * w - z2 * wx
        J[:, 0, 1] = -z2y * w - z2 * wy
        J[:, 1, 0] = z1x * w + z1 * wx
        J[:, 1, 1] = z1y * w + z1 * wy
        dD = np.einsum("nij,njk->nik", J, D)
        return np.concatenate([
            np.stack([vx, vy], axis=1).reshape(-1), dD.reshape(-1),
        ])

    sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=tol, atol=tol,
                    dense_output=False)
    if not sol.success:
        raise RuntimeError(f"normalizing flow failed: {sol.message}")
    yT = sol.y[:, -1]
    psi_pts = yT[: 2 * n].reshape(n, 2)
    jac = yT[2 * n :].reshape(n, 2, 2)
    dets = np.linalg.det(jac)
    px, py = psi_pts[:, 0], psi_pts[:, 1]
    w_ratio = np.exp(2.0 * (surface.log_weight(px, py)
                            - surface.log_weight(pts[:, 0], pts[:, 1])))
    defect = np.abs(dets * f_norm.eval(px, py) * w_ratio - 1.0)
    return MoserResult(
        zeta=zeta,
        psi_points=psi_pts.reshape(G, G, 2),
        psi_jacobians=jac.reshape(G, G, 2, 2),
        grid_x=gx, grid_y=gy,
        pullback_defect=float(np.max(defect)),
        exterior_residual=resid,
        f_avg=float(favg),
    )


def _trivial_moser(surface, f, favg=None):
    G = 33
    gx = np.arange(G) * (surface.side_x / G)
    gy = np.arange(G) * (surface.side_y / G)
    GX, GY = np.meshgrid(gx, gy, indexing="ij")
    N = 64
    zero = geom.TorusField(surface, np.zeros((N, N)), resolution=N)
    zeta = OneFormOnSurface(surface, zero,
                            geom.TorusField(surface, np.zeros((N, N)), resolution=N))
    return MoserResult(
        zeta=zeta,
        psi_points=np.stack([GX, GY], axis=-1),
        psi_jacobians=np.broadcast_to(np.eye(2), (G, G, 2, 2)).copy(),
        grid_x=gx, grid_y=gy,
        pullback_defect=0.0,
        exterior_residual=0.0,
        f_avg=float(favg if favg is not None else f.value),
    )


# --------------------------------------------------------------------------
# strongness


@dataclass
class StrongnessReport:
    f_avg: float
    brackets: tuple          # <f>_1, <f>_2, <f>_3
    calibration_c: float
    threshold: float
    is_strong: bool
    s_star: float

    def as_dict(self):
        return {
            "f_avg": self.f_avg,
            "bracket_1": self.brackets[0],
            "bracket_2": self.brackets[1],
            "bracket_3": self.brackets[2],
            "calibration_c": self.calibration_c,
            "threshold": self.threshold,
            "is_strong": self.is_strong,
            "s_star": self.s_star,
        }


def strongness(f, C):
    """Strongness report: the average must beat a bracket-built threshold.

    The threshold (b3^4 + b2^6) e^{C b1^2} is scale-invariant, so the
    minimal rescaling making s * f strong is threshold / f_avg.
    """
    if C < 0:
        raise ValueError("the calibration constant must be nonnegative")
    if f.min() <= 0:
        raise geom.PositivityError("strongness requires min f > 0")
    surface = f.surface
    b1 = geom.bracket_k(f, 1)
    b2 = geom.bracket_k(f, 2)
    b3 = geom.bracket_k(f, 3)
    favg = geom.average_density(surface, f)
    threshold = (b3**4 + b2**6) * np.exp(C * b1**2)
    return StrongnessReport(
        f_avg=float(favg),
        brackets=(float(b1), float(b2), float(b3)),
        calibration_c=float(C),
        threshold=float(threshold),
        is_strong=bool(favg > threshold),
        s_star=float(threshold / favg),
    )


# --------------------------------------------------------------------------
# multi-index machinery for the time-one-map bound


def index_set(h, k):
    """Multi-indices a in N^{k+1} with 0 < sum (j+1) a_j <= h + k."""
    if h < 0 or k < 0:
        raise ValueError("h and k must be nonnegative")
    bound = h + k
    ranges = [range(bound // (j + 1) + 1) for j in range(k + 1)]
    out = []
    for a in itertools.product(*ranges):
        s = sum((j + 1) * a[j] for j in range(k + 1))
        if 0 < s <= bound:
            out.append(tuple(a))
    return out


def index_polynomial(h, k, xs):
    """Sum over the index set of x^a (the bound polynomial of the
    time-one-map estimates)."""
    xs = np.asarray(xs, dtype=float)
    if xs.shape != (k + 1,):
        raise ValueError(f"expected {k + 1} arguments, got {xs.shape}")
    total = 0.0
    for a in index_set(h, k):
        total += float(np.prod(xs ** np.array(a)))
    return total


# --------------------------------------------------------------------------
# Gronwall witness


@dataclass
class GronwallReport:
    n_jets: int
    dphi_norms: tuple            # C^0, C^1, C^2 data of the time-one differential
    nabla_brackets: tuple        # <nabla X>_{C^0,1,2}
    lhs: float
    rhs_base: float
    c_min: float
    first_order_bound: float
    first_order_max_norm: float
    first_order_holds: bool

    def as_dict(self):
        return {
            "n_jets": self.n_jets,
            "dphi_c0": self.dphi_norms[0],
            "dphi_c1": self.dphi_norms[1],
            "dphi_c2": self.dphi_norms[2],
            "nabla_bracket_0": self.nabla_brackets[0],
            "nabla_bracket_1": self.nabla_brackets[1],
            "nabla_bracket_2": self.nabla_brackets[2],
            "lhs_b22": self.lhs,
            "rhs_base": self.rhs_base,
            "c_min": self.c_min,
            "first_order_bound": self.first_order_bound,
            "first_order_max_norm": self.first_order_max_norm,
            "first_order_holds": self.first_order_holds,
        }


def _fd_jacobian_rhs(surface, f, states, charts, eps=1e-5):
    """Finite-difference state Jacobian of the vector field (B, 3, 3)."""
    B = len(states)
    J = np.empty((B, 3, 3))
    for j in range(3):
        sp = states.copy()
        sm = states.copy()
        sp[:, j] += eps
        sm[:, j] -= eps
        Fp = np.stack(flow._rhs_arrays(surface, f, sp[:, 0], sp[:, 1], sp[:, 2], charts), axis=1)
        Fm = np.stack(flow._rhs_arrays(surface, f, sm[:, 0], sm[:, 1], sm[:, 2], charts), axis=1)
        J[:, :, j] = (Fp - Fm) / (2 * eps)
    return J


def gronwall_witness(surface, f, n_grid=(6, 6, 6), tol=1e-10):
    """Time-one jets on a state grid versus derivative norms of the field.

    Asserts the unconditional first-order bound (operator norm of the
    time-one differential below exp of the sampled sup of the field's
    derivative norm) and calibrates the minimal constant making the
    second-order bound hold over the sample.  The constant is a reported
    calibration, not a certified estimate.
    """
    f = geom.scalar_field(surface, f)
    if not geom.is_torus(surface):
        raise geom.UnsupportedSurfaceError(
            "the witness samples a single periodic chart; use a torus")
    nx, ny, nphi = n_grid
    xs = np.arange(nx) * (surface.side_x / nx)
    ys = np.arange(ny) * (surface.side_y / ny)
    ps = np.arange(nphi) * (2.0 * np.pi / nphi)
    X, Y, P = np.meshgrid(xs, ys, ps, indexing="ij")
    states = np.stack([X.ravel(), Y.ravel(), P.ravel()], axis=1)
    charts = np.zeros(len(states), dtype=int)

    out, cend, _ = flow._integrate_batch(
        surface, f, states, charts, np.ones(len(states)), rtol=tol, atol=tol,
        variational=True,
    )
    D = out[:, 3:].reshape(-1, 3, 3)
    op_norms = np.linalg.norm(D, ord=2, axis=(1, 2))

    # sup of the field derivative over a fine grid and over the trajectories
    fx = np.linspace(0, surface.side_x, 48, endpoint=False)
    fy = np.linspace(0, surface.side_y, 48, endpoint=False)
    fp = np.linspace(0, 2 * np.pi, 32, endpoint=False)
    FX, FY, FP = np.meshgrid(fx, fy, fp, indexing="ij")
    fine = np.stack([FX.ravel(), FY.ravel(), FP.ravel()], axis=1)
    Jfine = _fd_jacobian_rhs(surface, f, fine, np.zeros(len(fine), dtype=int))
    sup_fine = float(np.max(np.linalg.norm(Jfine, ord=2, axis=(1, 2))))
    rec, _ = flow._integrate_fixed(surface, f, states, charts,
                                   np.ones(len(states)), 32)
    traj_states = rec[:, :, :3].reshape(-1, 3)
    Jtraj = _fd_jacobian_rhs(surface, f, traj_states,
                             np.zeros(len(traj_states), dtype=int))
    sup_traj = float(np.max(np.linalg.norm(Jtraj, ord=2, axis=(1, 2))))
    sup_nabla = max(sup_fine, sup_traj)
    bound = float(np.exp(sup_nabla))
    max_norm = float(np.max(op_norms))

    # C^1 and C^2 data of dPhi_1 over the state grid (finite differences)
    Dg = D.reshape(nx, ny, nphi, 3, 3)
    steps = (surface.side_x / nx, surface.side_y / ny, 2 * np.pi / nphi)
    grad = np.stack(
        [(np.roll(Dg, -1, axis=a) - np.roll(Dg, 1, axis=a)) / (2 * steps[a])
         for a in range(3)], axis=-1)
    hess = np.stack(
        [(np.roll(grad, -1, axis=a) - np.roll(grad, 1, axis=a)) / (2 * steps[a])
         for a in range(3)], axis=-1)
    c0 = max_norm
    c1 = float(np.max(np.sqrt(np.sum(grad**2, axis=(3, 4, 5)))))
    c2 = float(np.max(np.sqrt(np.sum(hess**2, axis=(3, 4, 5, 6)))))
    dphi_c0 = c0
    dphi_c1 = c0 + c1
    dphi_c2 = c0 + c1 + c2

    # derivative data of nabla X itself
    Jg = Jfine.reshape(48, 48, 32, 3, 3)
    fsteps = (surface.side_x / 48, surface.side_y / 48, 2 * np.pi / 32)
    jgrad = np.stack(
        [(np.roll(Jg, -1, axis=a) - np.roll(Jg, 1, axis=a)) / (2 * fsteps[a])
         for a in range(3)], axis=-1)
    jhess = np.stack(
        [(np.roll(jgrad, -1, axis=a) - np.roll(jgrad, 1, axis=a)) / (2 * fsteps[a])
         for a in range(3)], axis=-1)
    n0 = sup_nabla
    n1 = n0 + float(np.max(np.sqrt(np.sum(jgrad**2, axis=(3, 4, 5)))))
    n2 = n1 + float(np.max(np.sqrt(np.sum(jhess**2, axis=(3, 4, 5, 6)))))
    nb = (1.0 + n0, 1.0 + n1, 1.0 + n2)

    lhs = index_polynomial(2, 2, np.array([dphi_c0, dphi_c1, dphi_c2]))
    rhs_base = nb[2] + nb[1] ** 2
    c_min = max(0.0, float(np.log(max(lhs, 1e-300) / rhs_base) / nb[0]))
    return GronwallReport(
        n_jets=len(states),
        dphi_norms=(dphi_c0, dphi_c1, dphi_c2),
        nabla_brackets=nb,
        lhs=float(lhs),
        rhs_base=float(rhs_base),
        c_min=c_min,
        first_order_bound=bound,
        first_order_max_norm=max_norm,
        first_order_holds=bool(max_norm <= bound * (1 + 1e-9)),
    )
