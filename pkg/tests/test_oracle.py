import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from layerlab.oracle import (
    RadialConfig,
    radial_energy_report,
    radial_first_order,
    radial_limit,
    radial_rate_table,
    radial_solution,
)

F1_DISK = 0.11 * np.pi


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(2, 4),
    h=st.floats(0.05, 0.5),
    beta=st.floats(0.1, 10.0),
    c=st.floats(-2.0, 2.0),
    eps=st.floats(0.01, 1.0),
)
def test_closure_residuals_vanish(n, h, beta, c, eps):
    cfg = RadialConfig(n=n, h=h, beta=beta, c=c)
    sol = radial_solution(cfg, eps)
    scale = 1 + abs(sol.A) + abs(sol.D)
    for v in sol.closure_residuals().values():
        assert abs(v) < 1e-12 * scale
    lim = radial_limit(cfg)
    assert abs(lim.robin_residual()) < 1e-12 * (1 + abs(lim.A0))


def test_disk_coefficients():
    cfg = RadialConfig()
    assert radial_solution(cfg, 0.05).D == pytest.approx(-10.0, rel=1e-14)
    assert radial_limit(cfg).boundary_value == pytest.approx(0.6, rel=1e-14)
    assert radial_limit(RadialConfig(n=3)).boundary_value == pytest.approx(0.4, rel=1e-14)


def test_disk_first_order():
    cfg = RadialConfig()
    assert radial_first_order(cfg, radial_limit(cfg)) == pytest.approx(F1_DISK, rel=1e-14)


@pytest.mark.parametrize("eps", [0.2, 0.05, 0.01])
def test_disk_delta_hand_formula(eps):
    # u_eps(R) = ln(1 + eps h) / (2 eps) + 1 / (2 (1 + eps h)); deltaF = pi (u0(R) - u_eps(R)) / eps
    h = 0.2
    ueR = np.log(1 + eps * h) / (2 * eps) + 1 / (2 * (1 + eps * h))
    rep = radial_energy_report(RadialConfig(), eps)
    assert radial_solution(RadialConfig(), eps).layer(1.0) == pytest.approx(ueR, rel=1e-13)
    assert rep.delta == pytest.approx(np.pi * (0.6 - ueR) / eps, rel=1e-9)


@pytest.mark.parametrize("n", [2, 3])
def test_energies_against_adaptive_quadrature(n):
    cfg = RadialConfig(n=n, h=0.3, beta=2.0, c=1.5)
    eps = 0.1
    sol = radial_solution(cfg, eps)
    lim = radial_limit(cfg)
    area, R, rho = cfg.sphere_area, cfg.R, sol.outer_radius
    grad_in = quad(lambda r: sol.derivative(r) ** 2 * r ** (n - 1), 0, R)[0]
    grad_layer = quad(lambda r: sol.derivative(r) ** 2 * r ** (n - 1), R, rho)[0]
    load = quad(lambda r: cfg.c * sol.inner(r) * r ** (n - 1), 0, R)[0]
    f_eps = area * (grad_in + eps * grad_layer - 2 * load) + cfg.beta * area * rho ** (n - 1) * sol.layer(rho) ** 2
    grad0 = quad(lambda r: (cfg.c * r / n) ** 2 * r ** (n - 1), 0, R)[0]
    load0 = quad(lambda r: cfg.c * lim(r) * r ** (n - 1), 0, R)[0]
    f0 = area * (grad0 - 2 * load0) + cfg.beta * area * lim.boundary_value**2 / (1 + cfg.beta * cfg.h)
    rep = radial_energy_report(cfg, eps)
    assert rep.f_eps == pytest.approx(f_eps, rel=1e-12)
    assert rep.f0 == pytest.approx(f0, rel=1e-12)


def test_error_is_first_order():
    eps = [0.2, 0.1, 0.05, 0.025, 0.0125]
    rows, extrap = radial_rate_table(RadialConfig(), eps)
    err = np.array([r["err"] for r in rows])
    assert np.all(np.diff(err) < 0)
    ratios = err[:-1] / err[1:]
    assert np.allclose(ratios[-2:], 2.0, rtol=0.05)
    assert extrap == pytest.approx(F1_DISK, rel=1e-4)


def test_zero_source_gives_zero_energies():
    rep = radial_energy_report(RadialConfig(c=0.0), 0.1)
    assert rep.f_eps == rep.f0 == rep.delta == rep.f1 == 0.0


def test_invalid_configs():
    with pytest.raises(ValueError):
        RadialConfig(n=1)
    with pytest.raises(ValueError):
        RadialConfig(h=-0.1)
    with pytest.raises(ValueError):
        radial_solution(RadialConfig(h=0.5), 2.0)
