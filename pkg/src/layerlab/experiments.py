"""
Studies that turn the asymptotic statements into pass/fail evidence, and the
exploratory profile optimizer.

Each study solves independently per eps (optionally on a thread pool), then
reduces the records in eps order, so results are deterministic.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .config import StudyConfig, StudyKind
from .energy import (
    EnergyReport,
    energy_F0,
    energy_F_eps,
    first_order,
    h1_bound_quantity,
    layer_energy,
    layer_tangential_energy,
    richardson,
    source_integral,
)
from .exceptions import ConfigError
from .geometry import FourierSeries, panel_gauss
from .meshing import build_mesh
from .oracle import RadialConfig, radial_energy_report, radial_limit, radial_solution
from .solver import (
    ScalarField,
    limit_profile,
    limit_robin_weight,
    load_vector,
    pullback,
    robin_matrix,
    solve_diffraction,
    solve_limit,
    solve_spd,
    stiffness_matrix,
)

log = logging.getLogger(__name__)


@dataclass
class StudyResult:
    kind: str
    records: list
    metrics: dict = field(default_factory=dict)
    passed: bool = False

    def verdict(self):
        return {"study": self.kind, "pass": bool(self.passed), "metrics": _plain(self.metrics)}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _map_eps(fn, eps_list, threads):
    if threads <= 1 or len(eps_list) == 1:
        return [fn(e) for e in eps_list]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, eps_list))


def loglog_fit(x, y):
    """Least-squares line through ``(log x, log y)``: slope and RMS residual in log units."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    coef = np.polyfit(lx, ly, 1)
    res = ly - np.polyval(coef, lx)
    return float(coef[0]), float(np.sqrt(np.mean(res**2)))


def strictly_decreasing(v):
    v = np.asarray(v, float)
    return bool(np.all(np.diff(v) < 0))


# single-eps solve ---------------------------------------------------------


@dataclass
class Solve:
    eps: float
    geom: object
    mesh: object
    u: ScalarField
    u0: ScalarField
    report: EnergyReport


def solve_instance(cfg: StudyConfig, eps, curve=None):
    """Layered and limit solutions at one eps, with their energy report."""
    geom = cfg.layer_geometry(eps, curve)
    params = cfg.mesh.params(eps)
    mesh = build_mesh(geom, params=params)
    f = cfg.source
    u = solve_diffraction(mesh, geom, f, tol=cfg.solver.tol)
    u0 = solve_limit(mesh, geom, f, tol=cfg.solver.tol)
    f_eps = energy_F_eps(u, geom, f)
    f0 = energy_F0(u0, geom, f)
    f1 = first_order(u0, geom)
    report = EnergyReport(
        f_eps=f_eps,
        f0=f0,
        delta=(f_eps - f0) / eps,
        f1=f1,
        g_eps=f0 + eps * f1,
        tangential_layer_energy=layer_tangential_energy(u, geom),
        h1_bound_quantity=h1_bound_quantity(u, geom),
        metadata={"eps": eps, "n_b": params.n_b, "m": params.m, "vertices": int(len(mesh.vertices))},
    )
    return Solve(eps, geom, mesh, u, u0, report)


def _energy_identity_gap(s, f):
    load = source_integral(s.u, f)
    scale = max(abs(s.report.f_eps), abs(load), 1e-300)
    return abs(s.report.f_eps + load) / scale


def solve_study(cfg: StudyConfig, threads=1):
    curve = cfg.curve()
    sols = _map_eps(lambda e: solve_instance(cfg, e, curve), cfg.eps, threads)
    gaps = [_energy_identity_gap(s, cfg.source) for s in sols]
    ok = all(g <= cfg.tolerances.energy_identity or s.report.f_eps == 0 for g, s in zip(gaps, sols))
    records = [{**s.report.to_dict(), "energy_identity_gap": g} for s, g in zip(sols, gaps)]
    res = StudyResult(StudyKind.SOLVE.value, records, {"energy_identity_gap": gaps}, ok)
    res.solutions = sols
    return res


# rates --------------------------------------------------------------------


def _oracle_reports(cfg):
    if cfg.geometry.shape != "circle" or not cfg.profile.is_constant:
        raise ConfigError("the oracle path needs a circle with constant h")
    rc = RadialConfig(n=2, R=cfg.geometry.radius, h=cfg.profile.h, beta=cfg.beta, c=cfg.source)
    return [radial_energy_report(rc, e) for e in cfg.eps]


def rate_study(cfg: StudyConfig, threads=1, path="fem"):
    """``e(eps) = |delta F_eps - F1|``, its log-log slope and the Richardson limit of ``delta F_eps``."""
    tol = cfg.tolerances
    if path == "oracle":
        reports = _oracle_reports(cfg)
    else:
        curve = cfg.curve()
        reports = [s.report for s in _map_eps(lambda e: solve_instance(cfg, e, curve), cfg.eps, threads)]
    eps = np.array(cfg.eps)
    delta = np.array([r.delta for r in reports])
    f1 = np.array([r.f1 for r in reports])
    err = np.abs(delta - f1)
    records = [{**r.to_dict(), "err": float(e)} for r, e in zip(reports, err)]
    metrics = {"eps": eps.tolist(), "delta": delta.tolist(), "f1": f1.tolist(), "err": err.tolist()}

    scale = max(np.max(np.abs([r.f_eps for r in reports])), np.max(np.abs(f1)))
    if scale == 0.0:
        # f = 0: every energy vanishes, nothing to fit
        metrics.update(degenerate=True, slope=None, fit_residual=None, extrapolated=0.0, extrapolation_gap=0.0)
        return StudyResult(StudyKind.RATES.value, records, metrics, True)

    extrap = richardson(eps, delta)
    target = f1[-1]
    gap = abs(extrap - target) / abs(target)
    steps = np.abs(np.diff(delta))
    metrics.update(
        degenerate=False,
        extrapolated=extrap,
        extrapolation_gap=gap,
        final_gap=float(err[-1] / abs(f1[-1])),
        final_gap_ok=bool(err[-1] / abs(f1[-1]) <= tol.final_gap_rtol),
        err_decreasing=strictly_decreasing(err),
        cauchy_steps=steps.tolist(),
        cauchy_decreasing=strictly_decreasing(steps),
    )
    if np.all(err > 0):
        slope, resid = loglog_fit(eps, err)
        refused = resid > tol.fit_residual
        metrics.update(slope=None if refused else slope, fit_residual=resid, fit_refused=bool(refused))
    else:
        metrics.update(slope=None, fit_residual=None, fit_refused=True)
    passed = metrics["err_decreasing"] and gap <= tol.extrapolation_rtol
    return StudyResult(StudyKind.RATES.value, records, metrics, bool(passed))


# stretched convergence ------------------------------------------------------


def reference_l2(field_a, field_b, geom):
    """``L2`` distance over the reference layer with the fibre weight ``1 + s h k``."""
    t, s = field_a.t, field_a.s
    h = geom.h(t)
    k = geom.curve.curvature(t)
    speed = geom.curve.speed(t)
    diff2 = (field_a.values - field_b.values) ** 2
    w = 1.0 + np.outer(h * k, s)
    fibre = simpson(diff2 * w, x=s, axis=1) * h
    return float(np.sqrt(np.sum(fibre * speed) / len(t)))


def negative_attenuation(beta):
    return lambda h: 1.0 + 0.5 * beta * h


def radial_stretch_norm(cfg: RadialConfig, eps, n_s=257):
    """Closed-form ``||u_eps(Psi_eps) - limit||`` over the reference annulus of the disk."""
    sol, lim = radial_solution(cfg, eps), radial_limit(cfg)
    s = np.linspace(0.0, 1.0, n_s)
    d = s * cfg.h
    diff = sol.layer(cfg.R + eps * d) - lim.boundary_value * (1 - cfg.beta * d / (1 + cfg.beta * cfg.h))
    w = 1.0 + d / cfg.R
    return float(np.sqrt(2 * np.pi * cfg.R * cfg.h * simpson(diff**2 * w, x=s)))


def stretch_convergence_study(cfg: StudyConfig, threads=1):
    tol = cfg.tolerances
    curve = cfg.curve()

    def one(e):
        sol = solve_instance(cfg, e, curve)
        n_t = 4 * sol.mesh.n_b
        n_s = 8 * sol.mesh.m + 1
        ue = pullback(sol.u, sol.geom, n_t=n_t, n_s=n_s)
        good = limit_profile(sol.u0, sol.geom, ue.t, ue.s)
        bad = limit_profile(sol.u0, sol.geom, ue.t, ue.s, attenuation=negative_attenuation(cfg.beta))
        return sol, reference_l2(ue, good, sol.geom), reference_l2(ue, bad, sol.geom)

    out = _map_eps(one, cfg.eps, threads)
    norms = np.array([o[1] for o in out])
    negative = np.array([o[2] for o in out])
    records = [{"eps": o[0].eps, "norm": o[1], "negative_norm": o[2], **o[0].report.metadata} for o in out]
    metrics = {
        "eps": list(cfg.eps),
        "norms": norms.tolist(),
        "negative_norms": negative.tolist(),
        "monotone": strictly_decreasing(norms),
        "final_norm": float(norms[-1]),
        "negative_plateau": float(negative.min()),
    }
    if cfg.geometry.shape == "circle" and cfg.profile.is_constant:
        rc = RadialConfig(n=2, R=cfg.geometry.radius, h=cfg.profile.h, beta=cfg.beta, c=cfg.source)
        metrics["oracle_norms"] = [radial_stretch_norm(rc, e) for e in cfg.eps]
    metrics["negative_rejected"] = bool(metrics["negative_plateau"] > tol.negative_plateau)
    passed = metrics["monotone"] and norms[-1] < tol.stretch_final and metrics["negative_rejected"]
    return StudyResult(StudyKind.STRETCH.value, records, metrics, bool(passed))


# tangential scaling ---------------------------------------------------------


def scaling_study(cfg: StudyConfig, threads=1):
    tol = cfg.tolerances
    curve = cfg.curve()

    def one(e):
        sol = solve_instance(cfg, e, curve)
        return sol.eps, sol.report.tangential_layer_energy, layer_energy(sol.u)

    out = _map_eps(one, cfg.eps, threads)
    eps = np.array([o[0] for o in out])
    tang = np.array([o[1] for o in out])
    total = np.array([o[2] for o in out])
    records = [{"eps": e, "tangential": t, "layer_energy": L} for e, t, L in zip(eps, tang, total)]
    metrics = {"eps": eps.tolist(), "tangential": tang.tolist()}
    ratio = np.max(tang / np.maximum(total, 1e-300)) if np.any(total > 0) else 0.0
    if ratio < tol.degenerate or np.any(tang <= 0):
        metrics.update(degenerate=True, slope=None, fit_residual=None, tangential_ratio=float(ratio))
        return StudyResult(StudyKind.SCALING.value, records, metrics, False)
    slope, resid = loglog_fit(eps, tang)
    metrics.update(degenerate=False, slope=slope, fit_residual=resid, tangential_ratio=float(ratio))
    passed = slope >= tol.slope_min and resid < tol.slope_residual
    return StudyResult(StudyKind.SCALING.value, records, metrics, bool(passed))


# profile optimizer ----------------------------------------------------------


class ProfileObjective:
    """``G(h) = F0(u0(h), h) + eps F1(u0(h), h)`` on a fixed body mesh.

    The stiffness matrix and load do not depend on ``h`` and are assembled
    once; each evaluation adds the Robin term and re-solves.
    """

    def __init__(self, cfg: StudyConfig, n_modes):
        self.cfg = cfg
        self.eps = cfg.optimize.eps
        self.n_modes = n_modes
        self.geom = cfg.layer_geometry(min(cfg.eps))
        mesh = build_mesh(self.geom, params=cfg.mesh.params(cfg.mesh.eps_ref))
        self.body = mesh.interior()
        self.K = stiffness_matrix(self.body, 1.0)
        self.b = load_vector(self.body, cfg.source)
        t, w = panel_gauss(8 * max(n_modes, 8), 4)
        self.t, self.w = t, w * self.geom.curve.speed(t)
        self.basis = self._basis(t)
        self.mass_row = self.basis @ self.w
        self.nodes = np.arange(8 * (2 * n_modes + 1)) / (8 * (2 * n_modes + 1))
        self.node_basis = self._basis(self.nodes)
        self.evaluations = 0

    def _basis(self, t):
        rows = [np.ones_like(t)]
        for k in range(1, self.n_modes + 1):
            rows.append(np.cos(2 * np.pi * k * t))
            rows.append(np.sin(2 * np.pi * k * t))
        return np.array(rows)

    def series(self, p):
        a = np.concatenate([[p[0]], p[1::2]])
        b = np.concatenate([[0.0], p[2::2]])
        return FourierSeries(a, b)

    def params(self, h):
        if h.n_modes > self.n_modes:
            raise ConfigError(f"initial profile has {h.n_modes} modes, optimizer uses {self.n_modes}")
        h = h.padded(self.n_modes)
        p = np.empty(2 * self.n_modes + 1)
        p[0] = h.a[0]
        p[1::2] = h.a[1 : self.n_modes + 1]
        p[2::2] = h.b[1 : self.n_modes + 1]
        return p

    def mass(self, p):
        return float(self.mass_row @ p)

    def values(self, p):
        """``h`` on the uniform clamp nodes."""
        return p @ self.node_basis

    def solve(self, p):
        h = self.series(p)
        A = self.K + robin_matrix(self.body.vertices, self.body.interface_edges, limit_robin_weight(self.body, h, self.geom.beta))
        return h, ScalarField(self.body, solve_spd(A, self.b, self.cfg.solver.tol))

    def __call__(self, p):
        self.evaluations += 1
        h, u0 = self.solve(p)
        g = energy_F0(u0, self.geom, self.cfg.source, h)
        if self.eps > 0:
            g += self.eps * first_order(u0, self.geom, h)
        return float(g)

    def gradient(self, p, step, g0=None):
        """Central-difference gradient; with ``g0 = G(p)`` also the Hessian diagonal."""
        g = np.empty_like(p)
        d = np.empty_like(p)
        for k in range(len(p)):
            e = np.zeros_like(p)
            e[k] = step
            up, down = self(p + e), self(p - e)
            g[k] = (up - down) / (2 * step)
            if g0 is not None:
                d[k] = (up - 2 * g0 + down) / step**2
        return g if g0 is None else (g, d)


def project_profile(obj, p, mass, h_min, repeats):
    """Shift to the prescribed mass, clamp at ``h_min`` on the nodes and refit; repeat."""
    p = np.array(p, float)
    L = obj.mass_row[0]
    for _ in range(repeats):
        p[0] += (mass - obj.mass(p)) / L
        v = obj.values(p)
        if v.min() >= h_min:
            break
        fit = FourierSeries.fit(np.maximum(v, h_min), obj.n_modes)
        p = obj.params(fit)
    p[0] += (mass - obj.mass(p)) / L
    return p


@dataclass
class OptimizationResult:
    h: FourierSeries
    trace: list
    iterations: int
    converged: bool
    constraint_violation: float
    h_min: float
    stalled: bool = False


def optimize_profile(cfg: StudyConfig, mass=None, h_min=None, step=None, step_rule=None):
    """Projected gradient descent on the Fourier coefficients of ``h``.

    The objective is re-solved at every evaluation; the gradient comes from
    central differences. ``step_rule`` picks the trial step: ``parabolic``
    refines the previous step by a one-dimensional quadratic fit, ``bb`` uses
    the Barzilai-Borwein step and ``scaled`` divides the gradient by the
    finite-difference Hessian diagonal (unit trial step, then the quadratic
    fit). Steps that raise the objective are halved.
    """
    oc = cfg.optimize
    mass = oc.mass if mass is None else mass
    h_min = oc.h_min if h_min is None else h_min
    step = oc.step if step is None else step
    step_rule = oc.step_rule if step_rule is None else step_rule
    obj = ProfileObjective(cfg, oc.modes)
    length = obj.mass_row[0]
    h0 = cfg.profile.series()
    if oc.initial_cos or oc.initial_sin:
        h0 = cfg.profile.model_copy(update={"cos": oc.initial_cos, "sin": oc.initial_sin}).series()
    p = obj.params(h0)
    if mass is None:
        mass = obj.mass(p)
    if mass <= h_min * length:
        raise ConfigError(f"mass {mass:.6g} infeasible: must exceed h_min * |boundary| = {h_min * length:.6g}")
    p = project_profile(obj, p, mass, h_min, oc.max_projections)
    if obj.values(p).min() < h_min - 1e-12:
        raise ConfigError("initial profile cannot be projected onto h >= h_min")
    g_val = obj(p)

    def attempt(a, grad):
        # trials the projection cannot bring back above h_min count as failed steps
        q = project_profile(obj, p - a * grad, mass, h_min, oc.max_projections)
        if obj.values(q).min() < h_min - 1e-12:
            return q, np.inf
        return q, obj(q)

    trace = [g_val]
    converged = stalled = False
    it = 0
    prev = None
    for it in range(1, oc.max_iter + 1):
        grad, diag = obj.gradient(p, oc.fd_step, g_val)
        if step_rule == "scaled" and np.all(diag > 0):
            # gradient in the metric of the Hessian diagonal; mass row removed in that metric
            m = obj.mass_row / diag
            raw = grad
            grad = raw / diag - (raw @ m) / (obj.mass_row @ m) * m
            slope = float(raw @ grad)
        else:
            grad -= (grad @ obj.mass_row) / (obj.mass_row @ obj.mass_row) * obj.mass_row
            slope = float(grad @ grad)
        if slope == 0.0:
            converged = True
            break
        alpha = oc.step if step_rule == "scaled" else step
        if step_rule == "bb" and prev is not None:
            sp, yp = p - prev[0], grad - prev[1]
            if sp @ yp > 0:
                alpha = float(sp @ sp) / float(sp @ yp)
        prev = (p, grad)
        for _ in range(oc.max_halvings):
            trial, g_new = attempt(alpha, grad)
            if step_rule != "bb" and np.isfinite(g_new):
                # parabola through G(p), its slope along -grad and the trial value
                curv = 2.0 * (g_new - g_val + alpha * slope) / alpha**2
                if curv > 0 and abs(slope / curv - alpha) > 1e-3 * alpha:
                    cand, g_cand = attempt(slope / curv, grad)
                    if g_cand < g_new:
                        trial, g_new, alpha = cand, g_cand, slope / curv
            if g_new <= g_val:
                break
            alpha *= 0.5
        else:
            # the clamp-and-refit projection is not idempotent on the h_min face; stop where it stalls
            converged = bool(g_new - g_val <= 1e-13 * abs(g_val))
            stalled = not converged
            if stalled:
                log.warning("optimize: no descent after %d halvings at iteration %d", oc.max_halvings, it)
            break
        decrease = (g_val - g_new) / max(abs(g_val), 1e-300)
        p, g_val = trial, g_new
        trace.append(g_val)
        step = alpha
        log.debug("optimize it=%d G=%.12g step=%.3g", it, g_val, alpha)
        if decrease < oc.rtol:
            converged = True
            break
    violation = abs(obj.mass(p) - mass) / abs(mass)
    return OptimizationResult(obj.series(p), trace, it, converged, violation, float(obj.values(p).min()), stalled)


def curvature_correlation(h, curve, n=512):
    """Arc-length weighted correlation of ``h`` with the boundary curvature."""
    t = np.arange(n) / n
    w = curve.speed(t)
    w = w / w.sum()
    hv, k = h(t), curve.curvature(t)
    hc, kc = hv - w @ hv, k - w @ k
    denom = np.sqrt((w @ hc**2) * (w @ kc**2))
    return float(w @ (hc * kc) / denom) if denom > 0 else 0.0


def optimize_study(cfg: StudyConfig, threads=1):
    res = optimize_profile(cfg)
    t = np.arange(512) / 512
    hv = res.h(t)
    trace = np.array(res.trace)
    monotone = bool(np.all(np.diff(trace) <= 0))
    spread = float((hv.max() - hv.min()) / abs(hv.mean()))
    metrics = {
        "iterations": res.iterations,
        "converged": res.converged,
        "stalled": res.stalled,
        "objective": float(trace[-1]),
        "trace_monotone": monotone,
        "constraint_violation": res.constraint_violation,
        "h_relative_spread": spread,
        "h_min": res.h_min,
        "curvature_correlation": curvature_correlation(res.h, cfg.curve()),
    }
    records = [{"iteration": i, "objective": v} for i, v in enumerate(res.trace)]
    passed = monotone and res.constraint_violation < 1e-8
    out = StudyResult(StudyKind.OPTIMIZE.value, records, metrics, passed)
    out.optimum = res
    return out


STUDIES = {
    StudyKind.SOLVE: solve_study,
    StudyKind.RATES: rate_study,
    StudyKind.STRETCH: stretch_convergence_study,
    StudyKind.SCALING: scaling_study,
    StudyKind.OPTIMIZE: optimize_study,
}


def run_study(cfg: StudyConfig, threads=1):
    if cfg.study == StudyKind.ORACLE:
        reports = _oracle_reports(cfg)
        err = [abs(r.delta - r.f1) for r in reports]
        extrap = richardson(cfg.eps, [r.delta for r in reports]) if len(cfg.eps) >= 2 else None
        records = [{**r.to_dict(), "err": e} for r, e in zip(reports, err)]
        metrics = {"err": err, "extrapolated": extrap, "f1": reports[0].f1, "err_decreasing": strictly_decreasing(err)}
        return StudyResult(StudyKind.ORACLE.value, records, metrics, metrics["err_decreasing"])
    return STUDIES[cfg.study](cfg, threads=threads)
