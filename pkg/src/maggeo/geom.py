"""Model surfaces in conformal charts, scalar fields on them, and metric
quantities (curvature, density integrals, C^k norms).

Conventions
-----------
Every surface is described by one or two conformal charts with metric

    g = e^{2u(x,y)} (dx^2 + dy^2).

The counterclockwise orientation of the (x, y) chart plane is the fixed
orientation of the surface; conformal transitions preserve it.  Angles on
the surface agree with Euclidean chart angles.

Charts:

* ``RoundSphere(radius=r)``: two stereographic charts.  Chart 0 projects
  from the north pole (origin of the chart = south pole), chart 1 projects
  from the south pole with the y axis flipped, so the transition is the
  holomorphic map w' = r^2 / w and both charts induce the same
  orientation.  Conformal factor e^u = 2 r^2 / (r^2 + x^2 + y^2).
* ``FlatTorus(side_x, side_y)``: one periodic chart, u = 0.
* ``ConformalTorus``: one periodic chart, u a spectral scalar field.
* ``HyperbolicChart(curvature=-k^2)``: rescaled Poincare disc
  e^u = 2 / (k (1 - x^2 - y^2)), a local model only (not compact).

C^k norms are Frobenius norms of covariant derivatives maximized over a
sample grid; the declared discretization order is that of the underlying
spectral/spline derivatives, so reported suprema are grid maxima, not
certified bounds.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import RectBivariateSpline


class DomainError(ValueError):
    """A chart point lies outside the domain where the chart is valid."""


class UnsupportedSurfaceError(ValueError):
    """Operation requires a compact surface (or another kind of chart)."""


class PositivityError(ValueError):
    """A quantity that must be positive is not."""


# --------------------------------------------------------------------------
# surfaces


class RoundSphere:
    """Round sphere of given radius, two oriented stereographic charts."""

    kind = "round_sphere"
    n_charts = 2
    euler_characteristic = 2
    compact = True

    def __init__(self, radius=1.0):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        # leave the chart before r = switch_radius * radius, re-enter the
        # other chart at r = radius^2 / switch_radius < radius
        self.switch_radius = 2.0 * self.radius
        self.max_chart_radius = 3.0 * self.radius

    def area(self):
        return 4.0 * np.pi * self.radius**2

    def log_weight(self, x, y, dx=0, dy=0, chart=0):
        """Chart derivatives of u = log(2 r^2) - log(r^2 + x^2 + y^2)."""
        r2 = self.radius**2
        D = r2 + x * x + y * y
        if dx == 0 and dy == 0:
            return np.log(2.0 * r2) - np.log(D)
        if (dx, dy) == (1, 0):
            return -2.0 * x / D
        if (dx, dy) == (0, 1):
            return -2.0 * y / D
        if (dx, dy) == (2, 0):
            return -2.0 / D + 4.0 * x * x / D**2
        if (dx, dy) == (1, 1):
            return 4.0 * x * y / D**2
        if (dx, dy) == (0, 2):
            return -2.0 / D + 4.0 * y * y / D**2
        if (dx, dy) == (3, 0):
            return 12.0 * x / D**2 - 16.0 * x**3 / D**3
        if (dx, dy) == (2, 1):
            return 4.0 * y / D**2 - 16.0 * x * x * y / D**3
        if (dx, dy) == (1, 2):
            return 4.0 * x / D**2 - 16.0 * x * y * y / D**3
        if (dx, dy) == (0, 3):
            return 12.0 * y / D**2 - 16.0 * y**3 / D**3
        raise ValueError(f"unsupported derivative order ({dx},{dy})")

    # chart <-> ambient R^3

    def to_ambient(self, x, y, chart=0):
        r2 = self.radius**2
        D = r2 + x * x + y * y
        X = 2.0 * r2 * x / D
        Y = 2.0 * r2 * y / D
        Z = self.radius * (x * x + y * y - r2) / D
        if chart == 0:
            return np.stack([X, Y, Z], axis=-1)
        return np.stack([X, -Y, -Z], axis=-1)

    def to_ambient_tangent(self, x, y, vx, vy, chart=0):
        """Push chart vectors (vx, vy) to ambient R^3 vectors."""
        r2 = self.radius**2
        D = r2 + x * x + y * y
        # d/dx, d/dy of (X, Y, Z) in chart 0
        Xx = 2.0 * r2 * (D - 2.0 * x * x) / D**2
        Xy = -4.0 * r2 * x * y / D**2
        Yx = Xy
        Yy = 2.0 * r2 * (D - 2.0 * y * y) / D**2
        Zx = 4.0 * r2 * self.radius * x / D**2
        Zy = 4.0 * r2 * self.radius * y / D**2
        V = np.stack(
            [Xx * vx + Xy * vy, Yx * vx + Yy * vy, Zx * vx + Zy * vy], axis=-1
        )
        if chart == 0:
            return V
        return V * np.array([1.0, -1.0, -1.0])

    def from_ambient(self, P, chart=0):
        """Chart coordinates of ambient points (singular at the chart pole)."""
        P = np.asarray(P, dtype=float)
        X, Y, Z = P[..., 0], P[..., 1], P[..., 2]
        if chart == 1:
            Y, Z = -Y, -Z
        denom = self.radius - Z
        x = self.radius * X / denom
        y = self.radius * Y / denom
        return x, y

    def transition(self, x, y, phi, chart):
        """Map (x, y, phi, chart) to the other chart; w' = r^2 / w."""
        r2sq = x * x + y * y
        fac = self.radius**2 / r2sq
        xn = fac * x
        yn = -fac * y
        phin = np.mod(phi + np.pi - 2.0 * np.arctan2(y, x), 2.0 * np.pi)
        return xn, yn, phin, 1 - chart

    def transition_differential(self, x, y):
        """3x3 chart differential of the transition at (x, y, any phi)."""
        r2 = x * x + y * y
        rho2 = self.radius**2
        a = -rho2 * (x * x - y * y) / r2**2
        b = 2.0 * rho2 * x * y / r2**2
        J = np.zeros(np.shape(x) + (3, 3))
        J[..., 0, 0] = a
        J[..., 0, 1] = -b
        J[..., 1, 0] = b
        J[..., 1, 1] = a
        J[..., 2, 0] = 2.0 * y / r2
        J[..., 2, 1] = -2.0 * x / r2
        J[..., 2, 2] = 1.0
        return J

    def chart_point(self, P):
        """Pick the chart where the ambient point P is comfortably interior."""
        P = np.asarray(P, dtype=float)
        chart = 0 if P[2] <= 0 else 1
        x, y = self.from_ambient(P, chart)
        return float(x), float(y), chart


class FlatTorus:
    kind = "flat_torus"
    n_charts = 1
    euler_characteristic = 0
    compact = True

    def __init__(self, side_x=1.0, side_y=1.0):
        if side_x <= 0 or side_y <= 0:
            raise ValueError("torus sides must be positive")
        self.side_x = float(side_x)
        self.side_y = float(side_y)

    def area(self):
        return self.side_x * self.side_y

    def log_weight(self, x, y, dx=0, dy=0, chart=0):
        return np.zeros(np.broadcast(x, y).shape)


class ConformalTorus:
    """Torus with metric e^{2u} (dx^2 + dy^2), u a periodic scalar field."""

    kind = "conformal_torus"
    n_charts = 1
    euler_characteristic = 0
    compact = True

    def __init__(self, log_factor, side_x=1.0, side_y=1.0, resolution=256):
        self.side_x = float(side_x)
        self.side_y = float(side_y)
        flat = FlatTorus(side_x, side_y)
        if isinstance(log_factor, TorusField):
            self.log_factor = log_factor
        else:
            self.log_factor = TorusField(flat, log_factor, resolution=resolution)
        self.log_factor.surface = self

    def area(self):
        w = np.exp(2.0 * self.log_factor.grid_samples)
        return float(np.mean(w) * self.side_x * self.side_y)

    def log_weight(self, x, y, dx=0, dy=0, chart=0):
        return self.log_factor.eval(x, y, dx=dx, dy=dy)


class HyperbolicChart:
    """Rescaled Poincare disc of constant curvature < 0; local model only."""

    kind = "hyperbolic_chart"
    n_charts = 1
    euler_characteristic = None
    compact = False

    def __init__(self, curvature=-1.0, max_radius=0.995):
        if curvature >= 0:
            raise ValueError("curvature must be negative")
        self.curvature = float(curvature)
        self.k = np.sqrt(-self.curvature)
        self.max_radius = float(max_radius)

    def area(self):
        raise UnsupportedSurfaceError("hyperbolic chart is not compact")

    def log_weight(self, x, y, dx=0, dy=0, chart=0):
        E = 1.0 - x * x - y * y
        if dx == 0 and dy == 0:
            return np.log(2.0 / self.k) - np.log(E)
        if (dx, dy) == (1, 0):
            return 2.0 * x / E
        if (dx, dy) == (0, 1):
            return 2.0 * y / E
        if (dx, dy) == (2, 0):
            return 2.0 / E + 4.0 * x * x / E**2
        if (dx, dy) == (1, 1):
            return 4.0 * x * y / E**2
        if (dx, dy) == (0, 2):
            return 2.0 / E + 4.0 * y * y / E**2
        if (dx, dy) == (3, 0):
            return 12.0 * x / E**2 + 16.0 * x**3 / E**3
        if (dx, dy) == (2, 1):
            return 4.0 * y / E**2 + 16.0 * x * x * y / E**3
        if (dx, dy) == (1, 2):
            return 4.0 * x / E**2 + 16.0 * x * y * y / E**3
        if (dx, dy) == (0, 3):
            return 12.0 * y / E**2 + 16.0 * y**3 / E**3
        raise ValueError(f"unsupported derivative order ({dx},{dy})")

    def distance(self, p, q):
        """Geodesic distance between chart points (arrays of shape (..., 2))."""
        z1 = p[..., 0] + 1j * p[..., 1]
        z2 = q[..., 0] + 1j * q[..., 1]
        t = np.abs((z1 - z2) / (1.0 - np.conj(z1) * z2))
        return 2.0 / self.k * np.arctanh(t)


def is_torus(surface):
    return surface.kind in ("flat_torus", "conformal_torus")


# --------------------------------------------------------------------------
# scalar fields


class ScalarField:
    """Common interface: chart-coordinate evaluation with derivatives.

    ``eval(x, y, dx, dy, chart)`` returns the (dx, dy) chart partial of the
    field.  Derivative accessors are available up to order 3.
    """

    surface = None
    resolution = None
    grid_samples = None
    spectral_coefficients = None

    def eval(self, x, y, dx=0, dy=0, chart=0):
        raise NotImplementedError

    def min(self):
        raise NotImplementedError

    def max(self):
        raise NotImplementedError


class ConstantField(ScalarField):
    def __init__(self, surface, value):
        self.surface = surface
        self.value = float(value)

    def eval(self, x, y, dx=0, dy=0, chart=0):
        shape = np.broadcast(x, y).shape
        if dx == 0 and dy == 0:
            return np.full(shape, self.value)
        return np.zeros(shape)

    def min(self):
        return self.value

    def max(self):
        return self.value


class TorusField(ScalarField):
    """Periodic field sampled on a uniform grid, differentiated spectrally.

    Off-grid evaluation goes through quintic splines built per derivative
    order from the spectrally differentiated grids, so every derivative
    carries interpolation error only.
    """

    def __init__(self, surface, values, resolution=256):
        self.surface = surface
        N = int(resolution)
        if N & (N - 1):
            raise ValueError("resolution must be a power of two")
        self.resolution = (N, N)
        Lx, Ly = surface.side_x, surface.side_y
        xs = np.arange(N) * (Lx / N)
        ys = np.arange(N) * (Ly / N)
        if callable(values):
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            self.grid_samples = np.asarray(values(X, Y), dtype=float)
            if self.grid_samples.shape != (N, N):
                self.grid_samples = np.broadcast_to(
                    self.grid_samples, (N, N)
                ).copy()
        else:
            self.grid_samples = np.asarray(values, dtype=float)
            if self.grid_samples.shape != (N, N):
                raise ValueError("grid shape does not match resolution")
        self.spectral_coefficients = np.fft.fft2(self.grid_samples) / (N * N)
        kx = 2.0 * np.pi * np.fft.fftfreq(N, d=Lx / N)
        ky = 2.0 * np.pi * np.fft.fftfreq(N, d=Ly / N)
        self._kx, self._ky = np.meshgrid(kx, ky, indexing="ij")
        self._xs, self._ys = xs, ys
        self._splines = {}

    def derivative_grid(self, dx=0, dy=0):
        if dx == 0 and dy == 0:
            return self.grid_samples
        N = self.resolution[0]
        hat = self.spectral_coefficients * N * N
        # drop rounding-level modes: the k^3 differentiation factor would
        # amplify their noise past the exact-scaling tolerance of the norms
        peak = np.max(np.abs(hat))
        if peak > 0:
            hat = np.where(np.abs(hat) >= 1e-14 * peak, hat, 0.0)
        fac = (1j * self._kx) ** dx * (1j * self._ky) ** dy
        return np.real(np.fft.ifft2(hat * fac))

    def _spline(self, dx, dy):
        key = (dx, dy)
        if key not in self._splines:
            pad = 8
            grid = self.derivative_grid(dx, dy)
            Lx, Ly = self.surface.side_x, self.surface.side_y
            N = self.resolution[0]
            gp = np.pad(grid, pad, mode="wrap")
            xs = (np.arange(-pad, N + pad)) * (Lx / N)
            ys = (np.arange(-pad, N + pad)) * (Ly / N)
            self._splines[key] = RectBivariateSpline(xs, ys, gp, kx=5, ky=5)
        return self._splines[key]

    def eval(self, x, y, dx=0, dy=0, chart=0):
        Lx, Ly = self.surface.side_x, self.surface.side_y
        xf = np.mod(x, Lx)
        yf = np.mod(y, Ly)
        out = self._spline(dx, dy).ev(xf, yf)
        return out.reshape(np.broadcast(x, y).shape)

    def min(self):
        return float(np.min(self._dense_values()))

    def max(self):
        return float(np.max(self._dense_values()))

    def _dense_values(self):
        # 4x zero-padded spectral refinement of the sample grid
        N = self.resolution[0]
        M = 4 * N
        hat = np.fft.fftshift(self.spectral_coefficients)
        big = np.zeros((M, M), dtype=complex)
        lo = M // 2 - N // 2
        big[lo : lo + N, lo : lo + N] = hat
        return np.real(np.fft.ifft2(np.fft.ifftshift(big))) * (M * M)


class SphereField(ScalarField):
    """Field on the round sphere given by a function of ambient (X, Y, Z).

    Values are evaluated exactly through the chart embedding; chart
    derivatives come from quintic splines on per-chart grids.
    """

    def __init__(self, surface, func, resolution=512, extent_factor=2.6):
        self.surface = surface
        self.func = func
        N = int(resolution) + 1
        self.resolution = (N, N)
        L = extent_factor * surface.radius
        self._extent = L
        xs = np.linspace(-L, L, N)
        self._grids = []
        self._splines = [{}, {}]
        for chart in (0, 1):
            X, Y = np.meshgrid(xs, xs, indexing="ij")
            P = surface.to_ambient(X, Y, chart=chart)
            vals = np.asarray(func(P[..., 0], P[..., 1], P[..., 2]), dtype=float)
            vals = np.broadcast_to(vals, X.shape).copy()
            self._grids.append(vals)
            self._splines[chart][(0, 0)] = RectBivariateSpline(xs, xs, vals, kx=5, ky=5)
        self._xs = xs
        self.grid_samples = self._grids[0]

    def eval(self, x, y, dx=0, dy=0, chart=0):
        if dx == 0 and dy == 0:
            P = self.surface.to_ambient(np.asarray(x, float), np.asarray(y, float), chart=chart)
            out = np.asarray(self.func(P[..., 0], P[..., 1], P[..., 2]), dtype=float)
            return np.broadcast_to(out, np.broadcast(x, y).shape).copy()
        key = (dx, dy)
        if key not in self._splines[chart]:
            base = self._splines[chart][(0, 0)]
            self._splines[chart][key] = base.partial_derivative(dx, dy)
        out = self._splines[chart][key](np.asarray(x, float), np.asarray(y, float), grid=False)
        return np.asarray(out).reshape(np.broadcast(x, y).shape)

    def _sample_values(self):
        vals = []
        for chart in (0, 1):
            r, th = np.meshgrid(
                np.linspace(0.0, 1.2 * self.surface.radius, 96),
                np.linspace(0.0, 2.0 * np.pi, 192, endpoint=False),
                indexing="ij",
            )
            x, y = r * np.cos(th), r * np.sin(th)
            vals.append(self.eval(x, y, chart=chart).ravel())
        return np.concatenate(vals)

    def min(self):
        return float(np.min(self._sample_values()))

    def max(self):
        return float(np.max(self._sample_values()))


class ChartField(ScalarField):
    """Field on a single non-periodic chart (hyperbolic disc) from a callable."""

    def __init__(self, surface, func, resolution=512):
        self.surface = surface
        self.func = func
        N = int(resolution) + 1
        self.resolution = (N, N)
        L = getattr(surface, "max_radius", 1.0)
        xs = np.linspace(-L, L, N)
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        vals = np.broadcast_to(np.asarray(func(X, Y), dtype=float), X.shape).copy()
        self.grid_samples = vals
        self._base = RectBivariateSpline(xs, xs, vals, kx=5, ky=5)
        self._derivs = {}

    def eval(self, x, y, dx=0, dy=0, chart=0):
        if dx == 0 and dy == 0:
            out = np.asarray(self.func(np.asarray(x, float), np.asarray(y, float)), dtype=float)
            return np.broadcast_to(out, np.broadcast(x, y).shape).copy()
        key = (dx, dy)
        if key not in self._derivs:
            self._derivs[key] = self._base.partial_derivative(dx, dy)
        out = self._derivs[key](np.asarray(x, float), np.asarray(y, float), grid=False)
        return np.asarray(out).reshape(np.broadcast(x, y).shape)

    def min(self):
        return float(np.min(self.grid_samples))

    def max(self):
        return float(np.max(self.grid_samples))


def scalar_field(surface, spec, resolution=256):
    """Build the natural ScalarField for ``surface`` from a number, callable,
    or sample grid."""
    if isinstance(spec, ScalarField):
        return spec
    if np.isscalar(spec):
        return ConstantField(surface, float(spec))
    if isinstance(spec, np.ndarray):
        if not is_torus(surface):
            raise ValueError("grid fields are only supported on torus charts")
        return TorusField(surface, spec, resolution=spec.shape[0])
    if callable(spec):
        if is_torus(surface):
            return TorusField(surface, spec, resolution=resolution)
        if surface.kind == "round_sphere":
            return SphereField(surface, spec)
        return ChartField(surface, spec)
    raise TypeError(f"cannot build a scalar field from {type(spec)!r}")


def random_torus_field(surface, rng, mean=0.0, amplitude=0.1, max_mode=3,
                       resolution=256):
    """Random band-limited periodic field, reproducible from ``rng``."""
    Lx, Ly = surface.side_x, surface.side_y

    terms = []
    for m in range(-max_mode, max_mode + 1):
        for n in range(-max_mode, max_mode + 1):
            if m == 0 and n == 0:
                continue
            terms.append((m, n, rng.normal(), rng.uniform(0, 2 * np.pi)))

    def func(X, Y):
        out = np.full(np.shape(X), float(mean))
        for m, n, a, ph in terms:
            out = out + a * np.cos(2 * np.pi * (m * X / Lx + n * Y / Ly) + ph)
        scale = max(abs(a) for _, _, a, _ in terms) * len(terms) ** 0.5
        return mean + (out - mean) * (amplitude / scale)

    return TorusField(surface, func, resolution=resolution)


# --------------------------------------------------------------------------
# curvature, integration, norms


def gaussian_curvature(surface, x, y, chart=0):
    """Gaussian curvature K = -e^{-2u} (u_xx + u_yy) at chart points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_domain(surface, x, y)
    lap = surface.log_weight(x, y, 2, 0, chart) + surface.log_weight(x, y, 0, 2, chart)
    return -np.exp(-2.0 * surface.log_weight(x, y, chart=chart)) * lap


def _check_domain(surface, x, y):
    if surface.kind == "hyperbolic_chart":
        if np.any(x * x + y * y >= surface.max_radius**2):
            raise DomainError("point outside the hyperbolic chart domain")
    elif surface.kind == "round_sphere":
        if np.any(x * x + y * y > surface.max_chart_radius**2):
            raise DomainError("point outside the stereographic chart's safe zone")


def _sphere_hemisphere_quadrature(surface, n_r=80, n_t=256):
    """Gauss-Legendre x trapezoid nodes and weights on the disc r <= radius."""
    nodes, weights = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * surface.radius * (nodes + 1.0)
    wr = 0.5 * surface.radius * weights
    th = np.arange(n_t) * (2.0 * np.pi / n_t)
    wt = 2.0 * np.pi / n_t
    R, TH = np.meshgrid(r, th, indexing="ij")
    X = R * np.cos(TH)
    Y = R * np.sin(TH)
    W = np.outer(wr * r, np.full(n_t, wt))
    return X, Y, W


def integrate_density(surface, h):
    """Integral of the scalar field h against the area form."""
    if not surface.compact:
        raise UnsupportedSurfaceError(
            "density integrals need a compact surface; the hyperbolic chart "
            "is a local model"
        )
    if is_torus(surface):
        N = 256
        if isinstance(h, TorusField):
            N = h.resolution[0]
        xs = np.arange(N) * (surface.side_x / N)
        ys = np.arange(N) * (surface.side_y / N)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        vals = h.eval(X, Y) * np.exp(2.0 * surface.log_weight(X, Y))
        return float(np.mean(vals) * surface.side_x * surface.side_y)
    total = 0.0
    for chart in (0, 1):
        X, Y, W = _sphere_hemisphere_quadrature(surface)
        vals = h.eval(X, Y, chart=chart) * np.exp(
            2.0 * surface.log_weight(X, Y, chart=chart)
        )
        total += float(np.sum(vals * W))
    return total


def average_density(surface, h):
    return integrate_density(surface, h) / surface.area()


def _norm_sample_points(surface):
    if is_torus(surface):
        N = 512
        xs = np.arange(N) * (surface.side_x / N)
        ys = np.arange(N) * (surface.side_y / N)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return [(0, X.ravel(), Y.ravel())]
    if surface.kind == "round_sphere":
        out = []
        for chart in (0, 1):
            r, th = np.meshgrid(
                np.linspace(0.0, 1.2 * surface.radius, 128),
                np.arange(256) * (2.0 * np.pi / 256),
                indexing="ij",
            )
            out.append((chart, (r * np.cos(th)).ravel(), (r * np.sin(th)).ravel()))
        return out
    r, th = np.meshgrid(
        np.linspace(0.0, 0.8, 128),
        np.arange(256) * (2.0 * np.pi / 256),
        indexing="ij",
    )
    return [(0, (r * np.cos(th)).ravel(), (r * np.sin(th)).ravel())]


def _covariant_frobenius(surface, h, chart, x, y, order):
    """Pointwise Frobenius norm of the order-th covariant derivative of h."""
    if order == 0:
        return np.abs(h.eval(x, y, chart=chart))
    u1 = {d: surface.log_weight(x, y, *d, chart=chart) for d in [(1, 0), (0, 1)]}
    emu = np.exp(-surface.log_weight(x, y, chart=chart))
    hx = h.eval(x, y, 1, 0, chart)
    hy = h.eval(x, y, 0, 1, chart)
    if order == 1:
        return emu * np.sqrt(hx * hx + hy * hy)

    # Christoffel symbols of the conformal metric: each is +-(a first
    # derivative of u); the table stores (sign, derivative multi-index)
    gamma_table = {
        (0, 0, 0): (1.0, (1, 0)), (0, 0, 1): (1.0, (0, 1)),
        (0, 1, 0): (1.0, (0, 1)), (0, 1, 1): (-1.0, (1, 0)),
        (1, 0, 0): (-1.0, (0, 1)), (1, 0, 1): (1.0, (1, 0)),
        (1, 1, 0): (1.0, (1, 0)), (1, 1, 1): (1.0, (0, 1)),
    }
    G = {key: sgn * u1[d] for key, (sgn, d) in gamma_table.items()}
    hij = {
        (0, 0): h.eval(x, y, 2, 0, chart),
        (0, 1): h.eval(x, y, 1, 1, chart),
        (1, 1): h.eval(x, y, 0, 2, chart),
    }
    hij[(1, 0)] = hij[(0, 1)]
    grad = {0: hx, 1: hy}
    S = {}
    for i in range(2):
        for j in range(2):
            S[(i, j)] = hij[(i, j)] - sum(G[(k, i, j)] * grad[k] for k in range(2))
    if order == 2:
        fro2 = sum(S[(i, j)] ** 2 for i in range(2) for j in range(2))
        return emu**2 * np.sqrt(fro2)

    # third covariant derivative needs dGamma (second u-derivatives) and
    # third partials of h
    u2 = {d: surface.log_weight(x, y, *d, chart=chart)
          for d in [(2, 0), (1, 1), (0, 2)]}
    dG = {}
    for (k, i, j), (sgn, d) in gamma_table.items():
        for m in range(2):
            dm = (d[0] + (1 - m), d[1] + m)  # bump derivative in direction m
            dG[(m, k, i, j)] = sgn * u2[dm]
    h3 = {
        (0, 0, 0): h.eval(x, y, 3, 0, chart),
        (0, 0, 1): h.eval(x, y, 2, 1, chart),
        (0, 1, 1): h.eval(x, y, 1, 2, chart),
        (1, 1, 1): h.eval(x, y, 0, 3, chart),
    }

    def h3v(i, j, k):
        idx = tuple(sorted((i, j, k)))
        return h3[idx]

    def dS(m, i, j):
        out = h3v(m, i, j)
        for k in range(2):
            out = out - dG[(m, k, i, j)] * grad[k] - G[(k, i, j)] * hij[(m, k)]
        return out

    fro3 = 0.0
    for m in range(2):
        for i in range(2):
            for j in range(2):
                T = dS(m, i, j) - sum(
                    G[(l, m, i)] * S[(l, j)] + G[(l, m, j)] * S[(i, l)]
                    for l in range(2)
                )
                fro3 = fro3 + T**2
    return emu**3 * np.sqrt(fro3)


def ck_norm(h, k):
    """C^k norm: sum over j <= k of the grid supremum of |nabla^j h|."""
    if not 0 <= k <= 3:
        raise ValueError("k must be between 0 and 3")
    if isinstance(h, ConstantField):
        return abs(h.value)
    surface = h.surface
    total = 0.0
    for j in range(k + 1):
        sup = 0.0
        for chart, x, y in _norm_sample_points(surface):
            sup = max(sup, float(np.max(_covariant_frobenius(surface, h, chart, x, y, j))))
        total += sup
    return total


def bracket_k(h, k):
    """C^k norm over the minimum, defined for positive fields only."""
    m = h.min()
    if m <= 0:
        raise PositivityError("bracket_k requires min h > 0")
    return ck_norm(h, k) / m


# --------------------------------------------------------------------------
# CSV import/export of torus grids


def field_to_csv(h):
    """Row-major CSV dump with a resolution header."""
    if h.grid_samples is None:
        raise ValueError("field carries no grid samples")
    buf = io.StringIO()
    n, m = h.grid_samples.shape
    buf.write(f"# resolution,{n},{m}\n")
    for row in h.grid_samples:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def field_from_csv(surface, text):
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines[0].startswith("# resolution"):
        raise ValueError("missing resolution header")
    _, n, m = lines[0].split(",")
    n, m = int(n), int(m)
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    grid = np.array(rows)
    if grid.shape != (n, m):
        raise ValueError("grid shape does not match header")
    return TorusField(surface, grid, resolution=n)
