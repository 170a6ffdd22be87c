import numpy as np
import pytest

from layerlab.exceptions import MeshError
from layerlab.geometry import BoundaryField, ClosedCurve, FourierSeries, LayerGeometry, fiber_integral, project_points
from layerlab.meshing import (
    INTERIOR,
    LAYER,
    MIN_ANGLE_DEG,
    MeshParams,
    build_mesh,
    mesh_diagnostics,
    read_mesh,
    triangle_areas,
    write_mesh,
)


def circle_geom(eps=0.1):
    return LayerGeometry(ClosedCurve.circle(1.0), BoundaryField.constant(0.2), eps)


def modulated_ellipse(eps=0.1):
    return LayerGeometry(ClosedCurve.ellipse(2.0, 1.0), FourierSeries([0.2, 0.05], [0, 0]), eps)


@pytest.fixture(scope="module")
def circle_mesh():
    return build_mesh(circle_geom(), params=MeshParams(n_b=64, m=4))


def test_circle_layer_area_and_topology(circle_mesh):
    diag = mesh_diagnostics(circle_mesh)
    assert abs(diag["area_layer"] - np.pi * (1.02**2 - 1)) < 1e-3
    assert diag["euler_characteristic"] == 1
    assert diag["min_angle_interior"] >= MIN_ANGLE_DEG


def test_circle_outer_length():
    mesh = build_mesh(circle_geom(), params=MeshParams(n_b=128, m=4))
    assert mesh_diagnostics(mesh)["length_outer"] == pytest.approx(2 * np.pi * 1.02, abs=1e-3)


def test_ellipse_interface_length_matches_arclength():
    geom = modulated_ellipse()
    mesh = build_mesh(geom)
    assert mesh_diagnostics(mesh)["length_interface"] == pytest.approx(geom.curve.length, rel=1e-3)


def test_outer_nodes_independent_of_m():
    geom = modulated_ellipse()
    a = build_mesh(geom, params=MeshParams(n_b=64, m=2))
    b = build_mesh(geom, params=MeshParams(n_b=64, m=4))
    assert np.array_equal(a.vertices[a.outer_edges], b.vertices[b.outer_edges])


def test_modulated_ellipse_layer_area_matches_quadrature():
    geom = modulated_ellipse()
    mesh = build_mesh(geom, params=MeshParams(n_b=128))
    exact = fiber_integral(geom, lambda x, y: np.ones_like(x))
    assert mesh_diagnostics(mesh)["area_layer"] == pytest.approx(exact, rel=5e-3)


def test_mesh_is_conforming_and_positive(circle_mesh):
    mesh = circle_mesh
    assert np.all(triangle_areas(mesh.vertices, mesh.triangles) > 0)
    e = np.sort(mesh.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    owner = np.repeat(np.arange(len(mesh.triangles)), 3)
    uniq, inv, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
    assert counts.max() == 2
    boundary = {tuple(x) for x in uniq[counts == 1]}
    outer = {tuple(sorted(x)) for x in mesh.outer_edges}
    assert boundary == outer
    # every interface edge sits between one body and one layer triangle
    inv = inv.ravel()
    for a, b in mesh.interface_edges:
        k = np.flatnonzero(np.all(uniq == sorted((a, b)), axis=1))[0]
        regions = sorted(mesh.region[owner[inv == k]])
        assert regions == [INTERIOR, LAYER]


def test_interior_submesh_is_vertex_prefix(circle_mesh):
    body = circle_mesh.interior()
    assert body.triangles.max() < circle_mesh.n_interior
    assert len(body.vertices) == circle_mesh.n_interior
    assert np.all(body.region == INTERIOR)


def test_refinement_halves_errors():
    geom = modulated_ellipse()
    exact_area = fiber_integral(geom, lambda x, y: np.ones_like(x))
    exact_len = fiber_integral(geom, lambda x, y: np.ones_like(x), "outer-surface")
    errs = []
    for n_b, m in [(32, 2), (64, 4), (128, 8)]:
        # the interior target edge follows the interface panel length
        d = mesh_diagnostics(build_mesh(geom, params=MeshParams(n_b, m)))
        errs.append((abs(d["area_layer"] - exact_area), abs(d["length_outer"] - exact_len)))
    errs = np.array(errs)
    assert np.all(errs[:-1] / errs[1:] >= 2.0)


@pytest.mark.parametrize("shape", ["circle", "ellipse"])
def test_outer_edge_midpoints_project_to_layer_thickness(shape):
    # thick enough layer that the chord sagitta stays well below 1% of eps*h
    curve = ClosedCurve.circle(1.0) if shape == "circle" else ClosedCurve.ellipse(2.0, 1.0)
    h = FourierSeries([0.2, 0.03], [0, 0])
    geom = LayerGeometry(curve, h, 0.5)
    mesh = build_mesh(geom, params=MeshParams(n_b=256))
    mid = mesh.vertices[mesh.outer_edges].mean(axis=1)
    tc = project_points(curve, mid, d_max=geom.d0)
    assert np.all(np.abs(tc.d - geom.eps * h(tc.t)) < 0.01 * geom.eps * h(tc.t))


def test_layer_triangle_order_follows_quads(circle_mesh):
    mesh = circle_mesh
    layer = mesh.triangles[mesh.region == LAYER]
    m = mesh.m
    i, j = 5, 2
    quad = set(mesh.layer_nodes[[i, i + 1], j]) | set(mesh.layer_nodes[[i, i + 1], j + 1])
    for r in (i * 2 * m + 2 * j, i * 2 * m + 2 * j + 1):
        assert set(layer[r]) <= quad


def test_mesh_params_validation():
    with pytest.raises(MeshError):
        MeshParams(n_b=8)
    with pytest.raises(MeshError):
        MeshParams(m=1)


def test_quality_floor_rejects_overrefined_interior():
    # interior target far below the fixed interface panels forces slivers
    with pytest.raises(MeshError, match="minimum angle"):
        build_mesh(modulated_ellipse(), params=MeshParams(n_b=32, interior_scale=0.25))


def test_mesh_export_roundtrip(tmp_path, circle_mesh):
    path = tmp_path / "mesh.txt"
    write_mesh(circle_mesh, path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"vertices {len(circle_mesh.vertices)}"
    assert lines[1].startswith("triangles ") and lines[2].startswith("edges ")
    v, t, reg, e, tag = read_mesh(path)
    assert np.array_equal(v, circle_mesh.vertices)
    assert np.array_equal(t, circle_mesh.triangles)
    assert np.array_equal(reg, circle_mesh.region)
    assert len(e) == 2 * circle_mesh.n_b and set(tag) == {0, 1}
