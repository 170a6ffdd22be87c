"""
Differential geometry of a closed planar curve and of its exterior tubular
neighbourhood.

Curves and boundary profiles are truncated Fourier series over the periodic
parameter ``t in [0, 1)``, so that derivatives are exact. Curves must be
positively oriented; with that convention the outward normal is the tangent
rotated clockwise and convex curves have positive curvature.

Points of the tube are described by tubular coordinates ``(t, d)`` with
``x = gamma(t) + d * nu(t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import (
    FocalError,
    GeometryError,
    InvalidCurveError,
    NonUniqueProjectionError,
    OutOfTubeError,
)

TWO_PI = 2.0 * np.pi

DEFAULT_MODES = 32
NEWTON_MAXITER = 30
NEWTON_TOL = 1e-12
GAUSS_PER_FIBER = 8
PANELS_PER_MODE = 4

_PROJECT_CHUNK = 4096


def _as_array(t):
    return np.asarray(t, dtype=float)


@dataclass(frozen=True)
class FourierSeries:
    """Real periodic function ``sum_k a_k cos(2 pi k t) + b_k sin(2 pi k t)``.

    ``a[0]`` is the mean; ``b[0]`` is ignored.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        n = max(a.size, b.size, 1)
        a = np.pad(a, (0, n - a.size))
        b = np.pad(b, (0, n - b.size))
        b[0] = 0.0
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise GeometryError("Fourier coefficients must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def constant(cls, value, n_modes=0):
        a = np.zeros(n_modes + 1)
        a[0] = value
        return cls(a, np.zeros(n_modes + 1))

    @property
    def n_modes(self):
        return self.a.size - 1

    def padded(self, n_modes):
        if n_modes < self.n_modes:
            raise ValueError("cannot truncate by padding")
        extra = n_modes - self.n_modes
        return FourierSeries(np.pad(self.a, (0, extra)), np.pad(self.b, (0, extra)))

    def __call__(self, t, deriv=0):
        t = _as_array(t)
        omega = TWO_PI * np.arange(self.a.size)
        phase = np.multiply.outer(t, omega) + deriv * np.pi / 2
        scale = omega**deriv if deriv else np.ones_like(omega)
        return np.cos(phase) @ (self.a * scale) + np.sin(phase) @ (self.b * scale)

    def derivative(self, t, order=1):
        return self(t, deriv=order)

    @classmethod
    def fit(cls, values, n_modes):
        """Least-squares (FFT) fit of samples taken at ``t_j = j / N``."""
        values = np.asarray(values, dtype=float)
        N = values.size
        if N < 2 * n_modes + 1:
            raise ValueError("not enough samples for the requested modes")
        c = np.fft.rfft(values) / N
        a = np.zeros(n_modes + 1)
        b = np.zeros(n_modes + 1)
        a[0] = c[0].real
        a[1:] = 2.0 * c[1 : n_modes + 1].real
        b[1:] = -2.0 * c[1 : n_modes + 1].imag
        if N % 2 == 0 and n_modes == N // 2:
            a[-1] /= 2.0
        return cls(a, b)


# Profiles over the boundary share the curve's representation.
BoundaryField = FourierSeries


class Frame(NamedTuple):
    point: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    curvature: np.ndarray


class TubularCoords(NamedTuple):
    t: np.ndarray
    d: np.ndarray


@dataclass(frozen=True)
class ClosedCurve:
    """Positively oriented closed curve ``gamma(t) = (x(t), y(t))``."""

    x: FourierSeries
    y: FourierSeries
    arclength_table: np.ndarray = field(init=False, repr=False, compare=False)
    k_max: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = max(self.x.n_modes, self.y.n_modes, 1)
        object.__setattr__(self, "x", self.x.padded(n))
        object.__setattr__(self, "y", self.y.padded(n))
        self._validate()

    # construction -----------------------------------------------------

    @classmethod
    def circle(cls, radius=1.0, center=(0.0, 0.0), n_modes=DEFAULT_MODES):
        if radius <= 0:
            raise InvalidCurveError("circle radius must be positive")
        return cls.ellipse(radius, radius, center=center, n_modes=n_modes)

    @classmethod
    def ellipse(cls, a, b, center=(0.0, 0.0), n_modes=DEFAULT_MODES):
        if a <= 0 or b <= 0:
            raise InvalidCurveError("ellipse semi-axes must be positive")
        zeros = np.zeros(n_modes + 1)
        xa, yb = zeros.copy(), zeros.copy()
        xa[0], xa[1] = center[0], a
        ya = zeros.copy()
        ya[0] = center[1]
        yb[1] = b
        return cls(FourierSeries(xa, zeros), FourierSeries(ya, yb))

    @classmethod
    def from_coefficients(cls, x_cos, x_sin, y_cos, y_sin, n_modes=None):
        x = FourierSeries(x_cos, x_sin)
        y = FourierSeries(y_cos, y_sin)
        if n_modes is not None:
            m = max(x.n_modes, y.n_modes)
            if m > n_modes:
                raise InvalidCurveError(f"{m} modes given but n_modes={n_modes}")
            x, y = x.padded(n_modes), y.padded(n_modes)
        return cls(x, y)

    @classmethod
    def from_points(cls, points, n_modes=DEFAULT_MODES):
        """Fourier fit of equispaced-in-parameter samples of a closed curve."""
        points = np.asarray(points, dtype=float)
        return cls(FourierSeries.fit(points[:, 0], n_modes), FourierSeries.fit(points[:, 1], n_modes))

    # evaluation -------------------------------------------------------

    @property
    def n_modes(self):
        return self.x.n_modes

    def point(self, t):
        return np.stack([self.x(t), self.y(t)], axis=-1)

    def derivative(self, t, order=1):
        return np.stack([self.x(t, order), self.y(t, order)], axis=-1)

    def speed(self, t):
        return np.linalg.norm(self.derivative(t), axis=-1)

    def curvature(self, t):
        d1 = self.derivative(t, 1)
        d2 = self.derivative(t, 2)
        cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def frame(self, t):
        d1 = self.derivative(t, 1)
        speed = np.linalg.norm(d1, axis=-1)
        if np.any(speed < 1e-12 * self.scale):
            raise InvalidCurveError("degenerate parametrization: |gamma'| vanishes")
        tangent = d1 / speed[..., None]
        normal = np.stack([tangent[..., 1], -tangent[..., 0]], axis=-1)
        return Frame(self.point(t), tangent, normal, self.curvature(t))

    def offset_point(self, t, d):
        t = _as_array(t)
        fr = self.frame(t)
        return fr.point + np.asarray(d, dtype=float)[..., None] * fr.normal

    # global quantities ------------------------------------------------

    @property
    def scale(self):
        return float(np.hypot(self.x.a[1:], self.x.b[1:]).sum() + np.hypot(self.y.a[1:], self.y.b[1:]).sum())

    @property
    def length(self):
        return float(self.arclength_table[-1, 1])

    def arclength(self, t):
        """Arc length from ``t = 0`` up to ``t`` (``t`` in [0, 1])."""
        table = self.arclength_table
        t = _as_array(t)
        # refine inside the panel with Gauss to keep spectral accuracy
        n = table.shape[0] - 1
        i = np.clip(np.floor(t * n).astype(int), 0, n - 1)
        t0 = table[i, 0]
        xg, wg = np.polynomial.legendre.leggauss(GAUSS_PER_FIBER)
        half = 0.5 * (t - t0)
        nodes = t0[..., None] + half[..., None] * (xg + 1.0)
        return table[i, 1] + half * (self.speed(nodes) @ wg)

    def diameter(self, samples=512):
        p = self.point(np.arange(samples) / samples)
        return float(np.max(np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)))

    def signed_area(self):
        t, w = panel_gauss(4 * self.n_modes, GAUSS_PER_FIBER)
        p = self.point(t)
        d1 = self.derivative(t)
        return 0.5 * float(np.sum(w * (p[:, 0] * d1[:, 1] - p[:, 1] * d1[:, 0])))

    def tube_radius(self, samples=None):
        """Default tubular-radius guard.

        Concave arcs limit the exterior reach to ``1 / max(-k)``; convex
        curves have unbounded exterior reach and are capped at the diameter.
        Bottlenecks are not detected here; the projection reports them as
        non-unique.
        """
        samples = samples or 16 * self.n_modes
        k = self.curvature(np.arange(samples) / samples)
        reach = self.diameter()
        if k.min() < 0:
            reach = min(reach, 1.0 / -k.min())
        return reach

    def _validate(self):
        n = max(16 * self.n_modes, 256)
        t = np.arange(n) / n
        speed = self.speed(t)
        scale = self.scale
        if scale <= 0 or speed.min() < 1e-10 * scale:
            raise InvalidCurveError("degenerate representation: |gamma'(t)| below tolerance")
        p = self.point(t)
        pairs = cKDTree(p).query_pairs(r=1e-8 * scale, output_type="ndarray")
        if pairs.size:
            gap = np.abs(pairs[:, 0] - pairs[:, 1]) / n
            gap = np.minimum(gap, 1.0 - gap)
            if np.any(gap > 2.0 / n):
                raise InvalidCurveError("curve is not simple: distinct parameters map to the same point")
        object.__setattr__(self, "k_max", float(np.max(np.abs(self.curvature(t)))))
        tp, wp = panel_gauss(PANELS_PER_MODE * self.n_modes, GAUSS_PER_FIBER)
        seg = (self.speed(tp) * wp).reshape(-1, GAUSS_PER_FIBER).sum(axis=1)
        knots = np.arange(seg.size + 1) / seg.size
        table = np.column_stack([knots, np.concatenate([[0.0], np.cumsum(seg)])])
        table.setflags(write=False)
        object.__setattr__(self, "arclength_table", table)
        if self.signed_area() <= 0:
            raise InvalidCurveError("curve must be positively (counter-clockwise) oriented")


def panel_gauss(n_panels, n_gauss, a=0.0, b=1.0):
    """Composite Gauss-Legendre rule on ``[a, b]``; returns flat nodes and weights."""
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * xg).ravel()
    weights = (half[:, None] * wg).ravel()
    return nodes, weights


@dataclass(frozen=True)
class LayerGeometry:
    """Body boundary, layer profile ``h``, ellipticity ``eps`` and Robin ``beta``."""

    curve: ClosedCurve
    h: FourierSeries
    eps: float = 1.0
    beta: float = 1.0
    d0: float | None = None

    def __post_init__(self):
        if not (0.0 < self.eps <= 1.0):
            raise GeometryError(f"eps must lie in (0, 1], got {self.eps}")
        if self.beta <= 0:
            raise GeometryError(f"beta must be positive, got {self.beta}")
        if self.d0 is None:
            object.__setattr__(self, "d0", self.curve.tube_radius())
        n = max(16 * max(self.curve.n_modes, self.h.n_modes), 256)
        t = np.arange(n) / n
        hv = self.h(t)
        if hv.min() <= 0:
            raise GeometryError(f"layer profile must be positive (min h = {hv.min():.3g})")
        if self.eps * hv.max() >= self.d0:
            raise FocalError(
                f"eps * max h = {self.eps * hv.max():.6g} must stay below the tubular radius d0 = {self.d0:.6g}"
            )
        k = self.curve.curvature(t)
        dmax = max(hv.max(), self.eps * hv.max())
        worst = np.min(1.0 + dmax * k)
        if worst <= 0:
            bound = 1.0 / -k.min()
            raise FocalError(f"offset {dmax:.6g} crosses the focal distance {bound:.6g} on a concave arc")

    def with_eps(self, eps):
        return LayerGeometry(self.curve, self.h, eps, self.beta, self.d0)

    def with_h(self, h):
        return LayerGeometry(self.curve, h, self.eps, self.beta, self.d0)

    def h_arclength_derivative(self, t):
        """``dh/ds`` along the boundary (the normal extension adds nothing)."""
        return self.h(t, 1) / self.curve.speed(t)

    def focal_bound(self):
        k = self.curve.curvature(np.arange(1024) / 1024)
        return np.inf if k.min() >= 0 else 1.0 / -k.min()


def eval_frame(curve, t):
    """Point, unit tangent, outward unit normal and signed curvature at ``t``."""
    return curve.frame(t)


def shifted_curvature(k0, d):
    """Curvature of the level set at distance ``d``: ``k0 / (1 + d k0)``."""
    k0 = np.asarray(k0, dtype=float)
    denom = 1.0 + np.asarray(d, dtype=float) * k0
    if np.any(denom <= 0):
        raise FocalError("offset distance reaches the focal set (1 + d k <= 0)")
    out = k0 / denom
    return out if out.ndim else float(out)


def _newton_project(curve, X, t):
    for _ in range(NEWTON_MAXITER):
        p = curve.point(t)
        d1 = curve.derivative(t, 1)
        d2 = curve.derivative(t, 2)
        r = p - X
        g = np.sum(r * d1, axis=-1)
        dg = np.sum(d1 * d1, axis=-1) + np.sum(r * d2, axis=-1)
        dg = np.where(dg > 0, dg, np.sum(d1 * d1, axis=-1))
        step = np.clip(g / dg, -0.05, 0.05)
        t = t - step
        if np.all(np.abs(step) < NEWTON_TOL):
            break
    return np.mod(t, 1.0)


def _project_block(curve, X, n_scan):
    ts = np.arange(n_scan) / n_scan
    P = curve.point(ts)
    D2 = np.sum((X[:, None, :] - P[None, :, :]) ** 2, axis=-1)
    best = np.argmin(D2, axis=1)
    t1 = _newton_project(curve, X, ts[best])
    d1 = np.linalg.norm(X - curve.point(t1), axis=-1)

    # second candidate: best local minimum of the scan away from the first
    local = (D2 <= np.roll(D2, 1, axis=1)) & (D2 < np.roll(D2, -1, axis=1))
    idx = np.arange(n_scan)
    gap = np.abs(idx[None, :] - best[:, None])
    gap = np.minimum(gap, n_scan - gap)
    masked = np.where(local & (gap > 1), D2, np.inf)
    second = np.argmin(masked, axis=1)
    has_second = np.isfinite(masked[np.arange(len(X)), second])
    ambiguous = np.zeros(len(X), dtype=bool)
    if np.any(has_second):
        sel = np.flatnonzero(has_second)
        t2 = _newton_project(curve, X[sel], ts[second[sel]])
        d2 = np.linalg.norm(X[sel] - curve.point(t2), axis=-1)
        dt = np.abs(t2 - t1[sel])
        dt = np.minimum(dt, 1.0 - dt)
        tol = 1e-9 * (1.0 + d1[sel])
        ambiguous[sel] = (dt > 1e-6) & (np.abs(d2 - d1[sel]) <= tol)
        better = (dt > 1e-6) & (d2 < d1[sel] - tol)
        if np.any(better):
            t1[sel[better]] = t2[better]
            d1[sel[better]] = d2[better]
    return t1, d1, ambiguous


def project_points(curve, x, d_max=np.inf, check_inside=True):
    """Metric projection of exterior points onto ``curve``.

    Dense parameter scan (4 samples per mode) followed by Newton on the
    stationarity condition ``(x - gamma(t)) . gamma'(t) = 0``.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    n_scan = PANELS_PER_MODE * curve.n_modes
    n_scan = max(n_scan, 64)
    t = np.empty(len(X))
    d = np.empty(len(X))
    amb = np.empty(len(X), dtype=bool)
    for s in range(0, len(X), _PROJECT_CHUNK):
        blk = slice(s, s + _PROJECT_CHUNK)
        t[blk], d[blk], amb[blk] = _project_block(curve, X[blk], n_scan)
    if np.any(amb):
        i = int(np.flatnonzero(amb)[0])
        raise NonUniqueProjectionError(f"point {X[i]} has two nearest boundary points")
    if check_inside:
        normal = curve.frame(t).normal
        signed = np.sum((X - curve.point(t)) * normal, axis=-1)
        inside = signed < -1e-10 * (1.0 + curve.scale)
        if np.any(inside):
            i = int(np.flatnonzero(inside)[0])
            raise OutOfTubeError(f"point {X[i]} lies inside the body")
    if np.any(d >= d_max):
        i = int(np.argmax(d))
        raise OutOfTubeError(f"point {X[i]} is at distance {d[i]:.6g} >= tube radius {d_max:.6g}")
    if single:
        return TubularCoords(float(t[0]), float(d[0]))
    return TubularCoords(t, d)


def project(geom, x):
    """Tubular coordinates ``(t, d)`` of ``x`` with respect to ``geom.curve``."""
    return project_points(geom.curve, x, d_max=geom.d0)


def stretch(geom, z, direction="forward", eps=None):
    """Fibrewise stretching ``Psi_eps`` between the reference layer and the thin layer.

    ``forward`` maps ``z = gamma + d nu`` to ``gamma + eps d nu``; ``inverse``
    divides the distance by ``eps`` instead.
    """
    eps = geom.eps if eps is None else eps
    z = np.asarray(z, dtype=float)
    tc = project(geom, z)
    t, d = np.asarray(tc.t), np.asarray(tc.d)
    limit = geom.h(t) * (1.0 if direction == "forward" else eps)
    if np.any(d > limit * (1 + 1e-9) + 1e-12):
        raise OutOfTubeError(f"point outside the closed {'reference' if direction == 'forward' else 'thin'} layer")
    if direction == "forward":
        scale = eps
    elif direction == "inverse":
        scale = 1.0 / eps
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return geom.curve.offset_point(t, scale * d)


def _jacobians_td(geom, eps, t, d):
    k = geom.curve.curvature(t)
    base = 1.0 + d * k
    scaled = 1.0 + eps * d * k
    if np.any(base <= 0) or np.any(scaled <= 0):
        raise FocalError("offset distance reaches the focal set (1 + d k <= 0)")
    J_eps = scaled / base
    J0 = 1.0 / base
    grad_h = geom.h_arclength_derivative(t) / base
    Jtau0 = J0 / np.sqrt(1.0 + grad_h**2)
    return J_eps, J0, Jtau0


def jacobians(geom, eps, z):
    """Volume Jacobian of ``Psi_eps`` and the limit volume/surface Jacobians at ``z``.

    Returns ``(J_eps, J0, Jtau0)``.  The gradient of the normally constant
    extension of ``h`` at ``z`` is ``h_s / (1 + d k)``.
    """
    tc = project(geom, z)
    out = _jacobians_td(geom, eps, np.asarray(tc.t), np.asarray(tc.d))
    if np.ndim(tc.t) == 0:
        return tuple(float(v) for v in out)
    return out


LAYER_VOLUME = "layer-volume"
OUTER_SURFACE = "outer-surface"
REFERENCE_LAYER = "reference-layer"


def fiber_integral(
    geom: LayerGeometry,
    g: Callable,
    target: str = LAYER_VOLUME,
    eps: float | None = None,
    n_panels: int | None = None,
    n_gauss: int = GAUSS_PER_FIBER,
) -> float:
    """Integrate ``g(x, y)`` over the thin layer, its outer boundary or the reference layer.

    Uses the exact fibre weights ``1 + t k`` (volume) and
    ``sqrt((1 + eps h k)^2 + (eps h_s)^2)`` (outer surface) on top of a
    composite Gauss rule in the boundary parameter weighted by ``|gamma'|``.
    """
    eps = geom.eps if eps is None else eps
    curve = geom.curve
    n_panels = n_panels or PANELS_PER_MODE * max(curve.n_modes, geom.h.n_modes)
    t, wt = panel_gauss(n_panels, n_gauss)
    fr = curve.frame(t)
    speed = curve.speed(t)
    h = geom.h(t)
    if target == OUTER_SURFACE:
        dist = eps * h
        base = 1.0 + dist * fr.curvature
        if np.any(base <= 0):
            raise FocalError("outer boundary crosses the focal set")
        weight = np.sqrt(base**2 + (eps * geom.h_arclength_derivative(t)) ** 2)
        p = fr.point + dist[:, None] * fr.normal
        return float(np.sum(wt * speed * weight * g(p[:, 0], p[:, 1])))
    if target == LAYER_VOLUME:
        top = eps * h
    elif target == REFERENCE_LAYER:
        top = h
    else:
        raise ValueError(f"unknown target {target!r}")
    xs, ws = np.polynomial.legendre.leggauss(n_gauss)
    tau = 0.5 * top[:, None] * (xs + 1.0)
    wtau = 0.5 * top[:, None] * ws
    jac = 1.0 + tau * fr.curvature[:, None]
    if np.any(jac <= 0):
        raise FocalError("layer crosses the focal set")
    p = fr.point[:, None, :] + tau[..., None] * fr.normal[:, None, :]
    vals = g(p[..., 0], p[..., 1])
    return float(np.sum((wt * speed)[:, None] * wtau * jac * vals))
