"""
Piecewise-linear finite elements for the insulated-body problem and its
effective Robin limit.

The diffraction problem is solved as the minimiser of

    int_Omega |grad v|^2 + eps int_layer |grad v|^2 + beta int_outer v^2 - 2 int_Omega f v

over continuous P1 functions on ``Omega_eps``; the transmission conditions
across the interface are natural in this weak form. The limit problem keeps
only the body and puts ``beta / (1 + beta h)`` on the interface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from numbers import Real

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import AssemblyError, GeometryError, SolverError
from .geometry import project_points
from .io import atomic_write_text
from .meshing import INTERIOR, LAYER, LayerMesh, triangle_areas

log = logging.getLogger(__name__)

SOLVER_TOL = 1e-10
DIRECT_LIMIT = 200_000

# 2-point Gauss on [0, 1]
EDGE_GAUSS_X = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
EDGE_GAUSS_W = np.array([0.5, 0.5])


@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: LayerMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.mesh.vertices),):
            raise ValueError(f"expected {len(self.mesh.vertices)} coefficients, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field coefficients must be finite")
        object.__setattr__(self, "values", v)

    def trace(self, t):
        """Periodic linear interpolation of the interface values at parameters ``t``."""
        return interface_trace(self, t)


@dataclass(frozen=True, eq=False)
class ReferenceLayerField:
    """Samples over the reference layer on a (boundary parameter x fibre fraction) grid.

    ``values[i, j]`` is the value at ``gamma(t[i]) + s[j] h(t[i]) nu(t[i])``.
    """

    t: np.ndarray
    s: np.ndarray
    values: np.ndarray
    geometry: object

    def __post_init__(self):
        if self.values.shape != (len(self.t), len(self.s)):
            raise ValueError("sample grid does not match values")
        if self.s[0] != 0.0 or self.s[-1] != 1.0 or np.any(np.diff(self.s) <= 0):
            raise ValueError("fibre grid must increase from s=0 to s=1")

    def with_values(self, values):
        return ReferenceLayerField(self.t, self.s, np.asarray(values, float), self.geometry)


def reference_grid(n_t, n_s):
    return np.arange(n_t) / n_t, np.linspace(0.0, 1.0, n_s)


def as_source(f):
    """Turn a constant or a vectorised ``f(x, y)`` into a callable."""
    if f is None:
        return lambda x, y: np.zeros(np.shape(x))
    if isinstance(f, Real):
        c = float(f)
        return lambda x, y: np.full(np.shape(x), c)
    if callable(f):
        return f
    raise TypeError(f"unsupported source {f!r}")


# assembly ---------------------------------------------------------------


def p1_gradients(vertices, triangles):
    """Triangle areas and the constant gradients of the three hat functions, shape (M, 3, 2)."""
    p = vertices[triangles]
    area = triangle_areas(vertices, triangles)
    if np.any(area <= 0):
        raise AssemblyError("non-positive triangle area")
    nxt = p[:, [1, 2, 0]]
    prv = p[:, [2, 0, 1]]
    grads = np.stack([nxt[..., 1] - prv[..., 1], prv[..., 0] - nxt[..., 0]], axis=-1)
    return area, grads / (2.0 * area[:, None, None])


def stiffness_matrix(mesh, conductivity):
    area, G = p1_gradients(mesh.vertices, mesh.triangles)
    local = np.einsum("e,eid,ejd->eij", area * conductivity, G, G)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = len(mesh.vertices)
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def edge_gauss_t(mesh):
    """Boundary parameter at the two Gauss points of every boundary edge, shape (n_b, 2)."""
    t0, t1 = mesh.edge_t[:, 0], mesh.edge_t[:, 1]
    return t0[:, None] + (t1 - t0)[:, None] * EDGE_GAUSS_X[None, :]


def robin_matrix(vertices, edges, weight):
    """Boundary mass ``int rho u v`` with ``rho`` given at the two Gauss points of each edge."""
    weight = np.broadcast_to(np.asarray(weight, float), (len(edges), 2))
    L = np.linalg.norm(vertices[edges[:, 1]] - vertices[edges[:, 0]], axis=1)
    phi = np.stack([1.0 - EDGE_GAUSS_X, EDGE_GAUSS_X])  # (2 basis, 2 gauss)
    local = np.einsum("e,g,eg,ag,bg->eab", L, EDGE_GAUSS_W, weight, phi, phi)
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    n = len(vertices)
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def load_vector(mesh, f):
    """``int_Omega f phi_i`` by the edge-midpoint rule on INTERIOR triangles."""
    f = as_source(f)
    tris = mesh.triangles[mesh.region == INTERIOR]
    p = mesh.vertices[tris]
    area = triangle_areas(mesh.vertices, tris)
    mids = 0.5 * (p + p[:, [1, 2, 0]])  # midpoint k sits on edge (k, k+1)
    fm = f(mids[..., 0], mids[..., 1])
    # phi_i = 1/2 at the midpoints of the two edges touching vertex i
    contrib = (area / 6.0)[:, None] * (fm + fm[:, [2, 0, 1]])
    return np.bincount(tris.ravel(), weights=contrib.ravel(), minlength=len(mesh.vertices))


def conductivity(mesh, eps):
    return np.where(mesh.region == LAYER, eps, 1.0)


def solve_spd(A, b, tol=SOLVER_TOL, direct_limit=DIRECT_LIMIT):
    """Solve a symmetric positive-definite system to relative residual ``tol``."""
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b)
    A = A.tocsc()
    if A.shape[0] < direct_limit:
        try:
            x = spla.splu(A).solve(b)
        except RuntimeError as exc:
            raise AssemblyError(f"singular system: {exc}") from exc
    else:
        M = sp.diags(1.0 / A.diagonal())
        x, info = spla.cg(A, b, rtol=tol, atol=0.0, M=M, maxiter=20 * A.shape[0])
        if info != 0:
            res = np.linalg.norm(A @ x - b) / nb
            raise SolverError(f"conjugate gradients did not converge (residual {res:.3e})", res)
    res = np.linalg.norm(A @ x - b) / nb
    if not np.isfinite(res) or res > tol:
        raise SolverError(f"relative residual {res:.3e} above {tol:.1e}", res)
    return x


def _check_mesh_eps(mesh, geom):
    if mesh.eps is not None and not np.isclose(mesh.eps, geom.eps, rtol=1e-12, atol=0):
        raise GeometryError(f"mesh built for eps={mesh.eps}, geometry has eps={geom.eps}")


def assemble_diffraction(mesh, geom, f):
    _check_mesh_eps(mesh, geom)
    A = stiffness_matrix(mesh, conductivity(mesh, geom.eps))
    A = A + robin_matrix(mesh.vertices, mesh.outer_edges, geom.beta)
    return A, load_vector(mesh, f)


def limit_robin_weight(mesh, h, beta):
    hv = h(edge_gauss_t(mesh))
    return beta / (1.0 + beta * hv)


def assemble_limit(mesh, geom, f, h=None):
    body = mesh.interior() if mesh.has_layer else mesh
    h = geom.h if h is None else h
    A = stiffness_matrix(body, 1.0)
    A = A + robin_matrix(body.vertices, body.interface_edges, limit_robin_weight(body, h, geom.beta))
    return body, A, load_vector(body, f)


def solve_diffraction(mesh, geom, f, tol=SOLVER_TOL):
    """P1 solution of the insulated-body problem on the ``Omega_eps`` mesh."""
    A, b = assemble_diffraction(mesh, geom, f)
    return ScalarField(mesh, solve_spd(A, b, tol))


def solve_limit(mesh, geom, f, h=None, tol=SOLVER_TOL):
    """P1 solution of the effective Robin problem on the body mesh.

    ``mesh`` may be the full layered mesh; its body part is used.
    """
    body, A, b = assemble_limit(mesh, geom, f, h)
    return ScalarField(body, solve_spd(A, b, tol))


# fields on the layer ------------------------------------------------------


def interface_trace(u, t):
    n_b = u.mesh.n_b
    knots = np.arange(n_b) / n_b
    vals = u.values[u.mesh.interface_edges[:, 0]]
    return np.interp(np.mod(t, 1.0), knots, vals, period=1.0)


def evaluate_layer(u, t, s):
    """Evaluate a field on the layer at logical fibre coordinates ``(t, s)``.

    The layer is structured, so ``(t, s)`` locates quad ``(floor(t n_b),
    floor(s m))`` directly; inside it the two triangles are affine in the
    logical coordinates.
    """
    mesh = u.mesh
    if not mesh.has_layer:
        raise GeometryError("field does not live on a layered mesh")
    t = np.mod(np.asarray(t, float), 1.0)
    s = np.asarray(s, float)
    if np.any(s < -1e-12) or np.any(s > 1 + 1e-12):
        raise GeometryError("point-location miss: fibre fraction outside [0, 1]")
    n_b, m = mesh.n_b, mesh.m
    xt = t * n_b
    ys = np.clip(s, 0.0, 1.0) * m
    i = np.minimum(np.floor(xt).astype(int), n_b - 1)
    j = np.minimum(np.floor(ys).astype(int), m - 1)
    xi, eta = xt - i, ys - j
    nodes = mesh.layer_nodes
    ip = (i + 1) % n_b
    v = u.values
    ua, ub = v[nodes[i, j]], v[nodes[ip, j]]
    uc, ud = v[nodes[ip, j + 1]], v[nodes[i, j + 1]]
    lower = ua + xi * (ub - ua) + eta * (uc - ub)
    upper = ua + eta * (ud - ua) + xi * (uc - ud)
    return np.where(xi >= eta, lower, upper)


def evaluate_layer_derivatives(u, t, s):
    """Derivatives ``(d/dt, d/ds)`` of the logical interpolant used by :func:`evaluate_layer`."""
    mesh = u.mesh
    t = np.mod(np.asarray(t, float), 1.0)
    n_b, m = mesh.n_b, mesh.m
    xt = t * n_b
    ys = np.clip(np.asarray(s, float), 0.0, 1.0) * m
    i = np.minimum(np.floor(xt).astype(int), n_b - 1)
    j = np.minimum(np.floor(ys).astype(int), m - 1)
    xi, eta = xt - i, ys - j
    nodes = mesh.layer_nodes
    ip = (i + 1) % n_b
    v = u.values
    ua, ub = v[nodes[i, j]], v[nodes[ip, j]]
    uc, ud = v[nodes[ip, j + 1]], v[nodes[i, j + 1]]
    lower = xi >= eta
    d_xi = np.where(lower, ub - ua, uc - ud)
    d_eta = np.where(lower, uc - ub, ud - ua)
    return n_b * d_xi, m * d_eta


def pullback(u, geom, n_t=256, n_s=33):
    """Stretched solution ``u(Psi_eps(z))`` sampled over the reference layer."""
    _check_mesh_eps(u.mesh, geom)
    t, s = reference_grid(n_t, n_s)
    T, S = np.meshgrid(t, s, indexing="ij")
    return ReferenceLayerField(t, s, evaluate_layer(u, T, S), geom)


def limit_profile(u0, geom, t=None, s=None, n_t=256, n_s=33, attenuation=None):
    """Limit of the stretched solutions: the trace times ``1 - beta d / (1 + beta h)``.

    ``attenuation`` replaces the denominator ``1 + beta h`` (used for negative
    controls only).
    """
    if t is None or s is None:
        t, s = reference_grid(n_t, n_s)
    h = geom.h(t)
    denom = (1.0 + geom.beta * h) if attenuation is None else attenuation(h)
    d = np.outer(h, s)
    vals = interface_trace(u0, t)[:, None] * (1.0 - geom.beta * d / denom[:, None])
    return ReferenceLayerField(np.asarray(t), np.asarray(s), vals, geom)


def recovery_sequence(u0, geom, mesh):
    """Recovery family: ``u0`` in the body, linear decay to ``u0/(1+beta h)`` across the layer."""
    _check_mesh_eps(mesh, geom)
    vals = np.empty(len(mesh.vertices))
    n_int = mesh.n_interior
    vals[:n_int] = u0.values[:n_int]
    layer = mesh.vertices[n_int:]
    tc = project_points(geom.curve, layer, d_max=geom.d0)
    h = geom.h(tc.t)
    vals[n_int:] = interface_trace(u0, tc.t) * (1.0 - geom.beta * tc.d / (geom.eps * (1.0 + geom.beta * h)))
    return ScalarField(mesh, vals)


def write_field_csv(u, path):
    lines = ["# schema: field v1", "vertex,x,y,value"]
    for i, ((x, y), v) in enumerate(zip(u.mesh.vertices, u.values)):
        lines.append(f"{i},{x:.17g},{y:.17g},{v:.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_reference_csv(field, path):
    lines = ["# schema: reference_layer v1", "t,s,value"]
    for i, t in enumerate(field.t):
        for j, s in enumerate(field.s):
            lines.append(f"{t:.17g},{s:.17g},{field.values[i, j]:.17g}")
    atomic_write_text(path, "\n".join(lines) + "\n")
