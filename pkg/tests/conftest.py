import numpy as np
import pytest

from maggeo import geom, flow, orbit


@pytest.fixture(scope="session")
def sphere():
    return geom.RoundSphere(1.0)


@pytest.fixture(scope="session")
def torus():
    return geom.FlatTorus(1.0, 1.0)


@pytest.fixture(scope="session")
def conformal_torus():
    return geom.ConformalTorus(lambda X, Y: 0.1 * np.cos(2 * np.pi * X))


@pytest.fixture(scope="session")
def hyperbolic():
    return geom.HyperbolicChart(-1.0)


@pytest.fixture(scope="session")
def torus_orbit_b2(torus):
    """Closed orbit for constant forcing 2 on the unit flat torus."""
    return orbit.find_closed_orbit(
        torus, 2.0, flow.UnitTangentState(0.3, 0.4, 1.1), np.pi * 1.1
    )


@pytest.fixture(scope="session")
def sphere_orbit_f1(sphere):
    """Closed orbit for constant forcing 1 on the unit sphere."""
    return orbit.find_closed_orbit(
        sphere, 1.0, flow.UnitTangentState(0.4, -0.3, 2.0), 4.4
    )


@pytest.fixture(scope="session")
def great_circle(sphere):
    return orbit.find_closed_orbit(
        sphere, 0.0, flow.UnitTangentState(0.1, 0.2, 0.3), 2 * np.pi
    )
