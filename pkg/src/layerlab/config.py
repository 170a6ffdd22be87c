"""
Declarative study configuration: YAML documents validated by pydantic models.

Every tolerance and mesh default lives here so a study is reproducible from its
file alone. Unknown keys are rejected and reported with their line number.
"""

from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigError, GeometryError
from .geometry import DEFAULT_MODES, ClosedCurve, FourierSeries, LayerGeometry
from .meshing import MeshParams


class StudyKind(str, Enum):
    ORACLE = "oracle"
    SOLVE = "solve"
    RATES = "rates"
    STRETCH = "stretch"
    SCALING = "scaling"
    OPTIMIZE = "optimize"


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometrySpec(_Model):
    shape: Literal["circle", "ellipse", "fourier"] = "circle"
    radius: float = Field(1.0, gt=0)
    axes: tuple[float, float] = (2.0, 1.0)
    x_cos: list[float] = []
    x_sin: list[float] = []
    y_cos: list[float] = []
    y_sin: list[float] = []
    modes: int = Field(DEFAULT_MODES, ge=1)
    d0: float | None = Field(None, gt=0)

    @field_validator("axes")
    @classmethod
    def _positive_axes(cls, v):
        if min(v) <= 0:
            raise ValueError("ellipse axes must be positive")
        return v

    def curve(self):
        if self.shape == "circle":
            return ClosedCurve.circle(self.radius, n_modes=self.modes)
        if self.shape == "ellipse":
            return ClosedCurve.ellipse(*self.axes, n_modes=self.modes)
        return ClosedCurve.from_coefficients(self.x_cos, self.x_sin, self.y_cos, self.y_sin)


class ProfileSpec(_Model):
    """``h(t) = h + sum_k cos[k-1] cos(2 pi k t) + sin[k-1] sin(2 pi k t)``."""

    h: float = Field(0.2, gt=0)
    cos: list[float] = []
    sin: list[float] = []

    @property
    def is_constant(self):
        return not any(self.cos) and not any(self.sin)

    def series(self):
        n = max(len(self.cos), len(self.sin))
        a = np.zeros(n + 1)
        b = np.zeros(n + 1)
        a[0] = self.h
        a[1 : len(self.cos) + 1] = self.cos
        b[1 : len(self.sin) + 1] = self.sin
        return FourierSeries(a, b)


class MeshSpec(_Model):
    """Layer resolution ``n_b`` at ``eps_ref``; with ``sqrt`` scaling ``n_b ~ 1/sqrt(eps)``."""

    n_b: int = Field(128, ge=16)
    m: int = Field(4, ge=2)
    interior_scale: float = Field(1.0, gt=0)
    scaling: Literal["sqrt", "fixed"] = "sqrt"
    eps_ref: float = Field(0.05, gt=0)
    n_b_max: int = Field(512, ge=16)

    def n_b_for(self, eps):
        if self.scaling == "fixed":
            return self.n_b
        return int(min(self.n_b_max, max(16, round(self.n_b * np.sqrt(self.eps_ref / eps)))))

    def params(self, eps):
        return MeshParams(n_b=self.n_b_for(eps), m=self.m, interior_scale=self.interior_scale)


class SolverSpec(_Model):
    tol: float = Field(1e-10, gt=0)


class Tolerances(_Model):
    fit_residual: float = 0.5
    extrapolation_rtol: float = 0.02
    final_gap_rtol: float = 0.05
    slope_min: float = 0.8
    slope_residual: float = 0.2
    stretch_final: float = 1e-2
    negative_plateau: float = 0.1
    energy_identity: float = 1e-8
    degenerate: float = 1e-6


class OptimizeSpec(_Model):
    eps: float = Field(0.05, ge=0, le=1)
    mass: float | None = Field(None, gt=0)
    h_min: float = Field(0.02, gt=0)
    modes: int = Field(8, ge=1)
    initial_cos: list[float] = []
    initial_sin: list[float] = []
    fd_step: float = Field(1e-5, gt=0)
    step: float = Field(1.0, gt=0)
    step_rule: Literal["parabolic", "bb", "scaled"] = "scaled"
    max_iter: int = Field(200, ge=1)
    rtol: float = Field(1e-8, gt=0)
    max_halvings: int = Field(20, ge=1)
    max_projections: int = Field(10, ge=1)


class StudyConfig(_Model):
    study: StudyKind = StudyKind.RATES
    geometry: GeometrySpec = GeometrySpec()
    profile: ProfileSpec = ProfileSpec()
    beta: float = Field(1.0, gt=0)
    source: float = 1.0
    eps: list[float] = [0.2, 0.1, 0.05, 0.025]
    mesh: MeshSpec = MeshSpec()
    solver: SolverSpec = SolverSpec()
    tolerances: Tolerances = Tolerances()
    optimize: OptimizeSpec = OptimizeSpec()
    output: str = "results"

    @field_validator("eps")
    @classmethod
    def _descending(cls, v):
        if not v:
            raise ValueError("eps list is empty")
        if any(e <= 0 or e > 1 for e in v):
            raise ValueError("every eps must lie in (0, 1]")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("eps list must be strictly decreasing")
        return v

    @model_validator(mode="after")
    def _enough_points(self):
        if self.study in (StudyKind.RATES, StudyKind.SCALING) and len(self.eps) < 3:
            raise ValueError(f"{self.study.value} needs at least 3 eps values for a rate fit")
        return self

    def curve(self):
        return self.geometry.curve()

    def h(self):
        return self.profile.series()

    def layer_geometry(self, eps, curve=None):
        return LayerGeometry(curve or self.curve(), self.h(), eps, self.beta, self.geometry.d0)

    def check_guards(self):
        """Build the geometry at every eps; raises the geometry guard errors."""
        curve = self.curve()
        for e in self.eps:
            self.layer_geometry(e, curve)


class RunConfig(StudyConfig):
    threads: int = Field(1, ge=1)
    verbosity: int = Field(0, ge=0, le=2)


def _node_line(node, loc):
    """Line (1-based) of the YAML node addressed by a pydantic error location."""
    line = node.start_mark.line + 1
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            match = [(k, v) for k, v in node.value if k.value == str(key)]
            if not match:
                break
            k, node = match[0]
            line = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def parse_text(text, source="<config>", overrides=None):
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: invalid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a mapping at the top level")
    data.update(overrides or {})
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = [p for p in err["loc"] if not (isinstance(p, str) and p.startswith("function-"))]
            where = ".".join(str(p) for p in loc) or "<root>"
            line = _node_line(node, loc) if node is not None else 1
            lines.append(f"{source}:{line}: {where}: {err['msg']}")
        raise ConfigError("\n".join(lines)) from exc
    return cfg


def parse_config(path, overrides=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_text(text, str(path), overrides)


def echo_config(cfg):
    """Fully materialised YAML; reparses to an identical config."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


def guard_errors(cfg):
    try:
        cfg.check_guards()
    except GeometryError as exc:
        return str(exc)
    return None
