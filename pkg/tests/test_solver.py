import numpy as np
import pytest

from conftest import disk_geometry, ellipse_geometry, solve_pair
from layerlab.energy import energy_F_eps, h1_bound_quantity, source_integral
from layerlab.exceptions import GeometryError, SolverError
from layerlab.io import read_csv
from layerlab.meshing import LAYER, MeshParams, build_mesh
from layerlab.oracle import RadialConfig, radial_limit, radial_solution
from layerlab.solver import (
    ScalarField,
    assemble_diffraction,
    evaluate_layer,
    interface_trace,
    limit_profile,
    pullback,
    recovery_sequence,
    solve_diffraction,
    solve_limit,
    solve_spd,
    write_field_csv,
    write_reference_csv,
)


def barycentric_eval(u, pts):
    """Brute-force point location over the layer triangles."""
    mesh = u.mesh
    tris = mesh.triangles[mesh.region == LAYER]
    p = mesh.vertices[tris]
    out = np.full(len(pts), np.nan)
    for k, x in enumerate(pts):
        v0, v1, v2 = p[:, 0], p[:, 1], p[:, 2]
        det = (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (v2[:, 0] - v0[:, 0]) * (v1[:, 1] - v0[:, 1])
        l1 = ((x[0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (v2[:, 0] - v0[:, 0]) * (x[1] - v0[:, 1])) / det
        l2 = ((v1[:, 0] - v0[:, 0]) * (x[1] - v0[:, 1]) - (x[0] - v0[:, 0]) * (v1[:, 1] - v0[:, 1])) / det
        l0 = 1 - l1 - l2
        inside = np.flatnonzero((l0 >= -1e-9) & (l1 >= -1e-9) & (l2 >= -1e-9))
        if inside.size:
            i = inside[0]
            out[k] = u.values[tris[i]] @ np.array([l0[i], l1[i], l2[i]])
    return out


def test_zero_source_gives_zero(disk_solution):
    geom, mesh, _, _ = disk_solution
    assert np.all(solve_diffraction(mesh, geom, 0.0).values == 0.0)
    assert np.all(solve_limit(mesh, geom, None).values == 0.0)


def test_disk_trace_matches_oracle(disk_solution):
    geom, mesh, u, u0 = disk_solution
    cfg = RadialConfig()
    exact = radial_solution(cfg, 0.05)(1.0)
    t = np.linspace(0, 1, 9)
    assert np.allclose(interface_trace(u, t), exact, rtol=5e-3)
    assert np.allclose(interface_trace(u0, t), 0.6, rtol=5e-3)


def test_linearity_in_source(disk_solution):
    geom, mesh, u, _ = disk_solution
    u2 = solve_diffraction(mesh, geom, 2.0)
    assert np.allclose(u2.values, 2 * u.values, rtol=1e-12, atol=0)


def test_thicker_layer_raises_limit_trace():
    traces = []
    for h in (0.2, 0.4, 0.8):
        geom = disk_geometry(0.05, h=h)
        mesh = build_mesh(geom, params=MeshParams(n_b=64))
        traces.append(interface_trace(solve_limit(mesh, geom, 1.0), 0.0))
        assert traces[-1] == pytest.approx(radial_limit(RadialConfig(h=h)).boundary_value, rel=5e-3)
    assert traces[0] < traces[1] < traces[2]


def test_energy_identity(disk_solution, ellipse_solution):
    for geom, mesh, u, _ in (disk_solution, ellipse_solution):
        F = energy_F_eps(u, geom, 1.0)
        assert F == pytest.approx(-source_integral(u, 1.0), rel=1e-8)


def test_galerkin_minimality(ellipse_solution):
    geom, mesh, u, u0 = ellipse_solution
    F = energy_F_eps(u, geom, 1.0)
    phi = recovery_sequence(u0, geom, mesh)
    ext = np.empty(len(mesh.vertices))
    ext[: mesh.n_interior] = u0.values
    ext[mesh.layer_nodes[:, 1:]] = u0.values[mesh.layer_nodes[:, [0]]]
    for v in (np.zeros(len(mesh.vertices)), phi.values, ext):
        assert F <= energy_F_eps(ScalarField(mesh, v), geom, 1.0)


def test_h1_bound_uniform_in_eps():
    vals = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        geom = ellipse_geometry(eps)
        mesh, u, _ = solve_pair(geom, n_b=96)
        vals.append(h1_bound_quantity(u, geom))
    assert max(vals) / min(vals) < 1.2


def test_maximum_principle_surrogate(ellipse_solution):
    _, _, u, _ = ellipse_solution
    assert u.values.min() >= -1e-8 * u.values.max()


def test_iterative_path_matches_direct(disk_solution):
    geom, mesh, u, _ = disk_solution
    A, b = assemble_diffraction(mesh, geom, 1.0)
    x = solve_spd(A, b, direct_limit=0)
    assert np.allclose(x, u.values, rtol=1e-7)


def test_solver_reports_nonconvergence(disk_solution):
    geom, mesh, _, _ = disk_solution
    A, b = assemble_diffraction(mesh, geom, 1.0)
    with pytest.raises(SolverError) as info:
        solve_spd(A, b, tol=1e-30)
    assert info.value.residual is not None


def test_mesh_and_geometry_eps_must_agree(disk_solution):
    geom, mesh, _, _ = disk_solution
    with pytest.raises(GeometryError):
        solve_diffraction(mesh, geom.with_eps(0.1), 1.0)


# layer fields ---------------------------------------------------------------


def test_pullback_of_constant_is_constant(disk_solution):
    geom, mesh, _, _ = disk_solution
    ref = pullback(ScalarField(mesh, np.full(len(mesh.vertices), 3.5)), geom, 64, 9)
    assert np.allclose(ref.values, 3.5)


def test_pullback_at_eps_one_samples_the_layer_directly(rng):
    geom = ellipse_geometry(1.0)
    mesh, u, _ = solve_pair(geom, n_b=128)
    t = rng.random(40)
    s = rng.random(40)
    pts = geom.curve.offset_point(t, s * geom.h(t))
    direct = barycentric_eval(u, pts)
    logical = evaluate_layer(u, t, s)
    assert np.all(np.isfinite(direct))
    assert np.allclose(logical, direct, rtol=2e-3)


def test_radial_pullback_depends_only_on_s(disk_solution):
    geom, _, u, _ = disk_solution
    ref = pullback(u, geom, 128, 17)
    spread = ref.values.max(axis=0) - ref.values.min(axis=0)
    assert np.all(spread < 5e-4 * np.abs(ref.values).max())
    sol = radial_solution(RadialConfig(), 0.05)
    exact = sol.layer(1.0 + 0.05 * 0.2 * ref.s)
    assert np.allclose(ref.values.mean(axis=0), exact, rtol=5e-3)


def test_limit_profile_endpoints(disk_solution):
    geom, _, _, u0 = disk_solution
    ref = limit_profile(u0, geom, n_t=64, n_s=5)
    trace = interface_trace(u0, ref.t)
    assert np.allclose(ref.values[:, 0], trace)
    assert np.allclose(ref.values[:, -1], trace / 1.2)
    assert ref.values[:, -1].mean() == pytest.approx(0.5, rel=5e-3)


def test_recovery_sequence_boundary_values(ellipse_solution):
    geom, mesh, u, u0 = ellipse_solution
    phi = recovery_sequence(u0, geom, mesh)
    assert np.allclose(phi.values[: mesh.n_interior], u0.values)
    outer = mesh.layer_nodes[:, -1]
    t = mesh.interface_t
    expected = u0.values[mesh.layer_nodes[:, 0]] / (1 + geom.beta * geom.h(t))
    assert np.allclose(phi.values[outer], expected, rtol=1e-9)
    assert energy_F_eps(phi, geom, 1.0) >= energy_F_eps(u, geom, 1.0)


def test_field_exports(tmp_path, disk_solution):
    geom, mesh, u, u0 = disk_solution
    write_field_csv(u, tmp_path / "u.csv")
    schema, rows = read_csv(tmp_path / "u.csv")
    assert schema == "field v1" and len(rows) == len(mesh.vertices)
    assert rows[7]["value"] == u.values[7]
    ref = limit_profile(u0, geom, n_t=8, n_s=3)
    write_reference_csv(ref, tmp_path / "r.csv")
    schema, rows = read_csv(tmp_path / "r.csv")
    assert schema == "reference_layer v1" and list(rows[0]) == ["t", "s", "value"]
    assert len(rows) == 24
