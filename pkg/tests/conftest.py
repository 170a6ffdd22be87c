import numpy as np
import pytest

from layerlab.geometry import BoundaryField, ClosedCurve, LayerGeometry
from layerlab.meshing import MeshParams, build_mesh
from layerlab.solver import solve_diffraction, solve_limit

DISK = dict(R=1.0, h=0.2, beta=1.0, f=1.0)


def disk_geometry(eps=0.05, h=0.2, beta=1.0):
    return LayerGeometry(ClosedCurve.circle(1.0), BoundaryField.constant(h), eps, beta)


def ellipse_geometry(eps=0.05, h=None, beta=1.0):
    h = BoundaryField.constant(0.2) if h is None else h
    return LayerGeometry(ClosedCurve.ellipse(2.0, 1.0), h, eps, beta)


def solve_pair(geom, n_b=128, m=4, f=1.0):
    mesh = build_mesh(geom, params=MeshParams(n_b=n_b, m=m))
    return mesh, solve_diffraction(mesh, geom, f), solve_limit(mesh, geom, f)


def green_integral(curve, offset, g_form, n=4096):
    """``oint P dx + Q dy`` over the closed curve ``gamma + offset(t) nu`` (trapezoid, periodic).

    The offset curve is differentiated by central differences in ``t`` so this
    route shares nothing with the fibre weights.
    """
    t = np.arange(n) / n
    dt = 1e-6

    def c(tt):
        fr = curve.frame(tt)
        return fr.point + offset(tt)[:, None] * fr.normal

    p = c(t)
    dp = (c(t + dt) - c(t - dt)) / (2 * dt)
    P, Q = g_form(p[:, 0], p[:, 1])
    return float(np.mean(P * dp[:, 0] + Q * dp[:, 1]))


# Green forms with Q_x - P_y = g
FORMS = {
    "one": (lambda x, y: np.ones_like(x), lambda x, y: (np.zeros_like(x), x)),
    "x2": (lambda x, y: x**2, lambda x, y: (np.zeros_like(x), x**3 / 3)),
    "siny": (lambda x, y: np.sin(y), lambda x, y: (np.cos(y), np.zeros_like(x))),
}


@pytest.fixture(scope="session")
def disk_solution():
    geom = disk_geometry(0.05)
    mesh, u, u0 = solve_pair(geom)
    return geom, mesh, u, u0


@pytest.fixture(scope="session")
def ellipse_solution():
    geom = ellipse_geometry(0.05)
    mesh, u, u0 = solve_pair(geom)
    return geom, mesh, u, u0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
