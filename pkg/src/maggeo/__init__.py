"""Numerical laboratory for curves of prescribed geodesic curvature on
model surfaces: flow integration, closed-orbit surveys, magnetic lengths
via capping discs, the systolic-diastolic verdict, and area-form
normalization."""

from . import config, exprfield, flow, forms, geom, maglen, normalize, orbit, sysdia

__version__ = "0.1.0"

__all__ = [
    "config", "exprfield", "flow", "forms", "geom", "maglen", "normalize",
    "orbit", "sysdia", "__version__",
]
