"""Scenario files: a versioned JSON document describing fields, signals, solver settings and studies."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .bvsignal import BVSignal, PiecewiseSignal
from .errors import ScenarioError
from .geometry import HalfSpace, SmoothDomain, ball, ellipsoid, smooth_intersection
from .integrate import IntegratorConfig
from .patchfield import (
    Annulus,
    FeedbackPatch,
    Patch,
    PatchyFeedback,
    PatchyField,
    affine_dynamics,
    spiral_feedback,
)

SCHEMA = "patchy-scenario/1"
BUNDLED = ("S1", "S2", "S2-feedback", "S3", "tangency", "relocation")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BallSpec(_Strict):
    kind: Literal["ball"]
    center: list[float]
    radius: float = Field(gt=0)


class EllipsoidSpec(_Strict):
    kind: Literal["ellipsoid"]
    center: list[float]
    semi_axes: list[float]


class HalfSpaceSpec(_Strict):
    normal: list[float]
    offset: float


class IntersectionSpec(_Strict):
    kind: Literal["smooth_intersection"]
    halfspaces: list[HalfSpaceSpec] = Field(min_length=1)
    sharpness: float = Field(gt=0)
    center: list[float]
    bounding_radius: float = Field(gt=0)


DomainSpec = Union[BallSpec, EllipsoidSpec, IntersectionSpec]


class LinearFieldSpec(_Strict):
    """``g(x) = A x + b``."""

    kind: Literal["linear"]
    A: list[list[float]]
    b: list[float]


class PatchSpec(_Strict):
    index: int
    domain: DomainSpec = Field(discriminator="kind")
    field: LinearFieldSpec
    margin: float = Field(default=0.1, gt=0)


class DynamicsSpec(_Strict):
    """``f(x, u) = A x + B u + c``."""

    kind: Literal["affine"]
    A: list[list[float]]
    B: list[list[float]]
    c: Optional[list[float]] = None
    control_set: str = ""


class FeedbackPatchSpec(_Strict):
    index: int
    domain: DomainSpec = Field(discriminator="kind")
    control: list[float]
    margin: float = Field(default=0.1, gt=0)


class RegionSpec(_Strict):
    kind: Literal["annulus"]
    center: list[float]
    inner: float = Field(ge=0)
    outer: float = Field(gt=0)


class JumpSpec(_Strict):
    t: float
    dw: list[float]


class PieceSpec(_Strict):
    t0: float
    t1: float
    kind: Literal["constant", "linear", "sinusoid"]
    params: dict[str, Any]


class SignalSpec(_Strict):
    origin: Optional[list[float]] = None
    jumps: list[JumpSpec] = Field(default_factory=list)
    ac: list[PieceSpec] = Field(default_factory=list)


class IntegratorSpec(_Strict):
    dt: float = Field(default=1e-3, gt=0)
    event_tol: float = Field(default=1e-9, gt=0)
    max_events: int = Field(default=10_000, ge=1)
    seed: int = 0
    graze_tol: float = Field(default=1e-6, gt=0)


class PlanSpec(_Strict):
    delta: float = Field(gt=0)
    k_bar: Optional[float] = None
    errors: Literal["zero", "alternating", "random"] = "zero"
    error_scale: float = Field(default=0.0, ge=0)


class ConstantsSpec(_Strict):
    rho_bar: float = Field(gt=0)
    sample_budget: int = Field(default=256, ge=1)
    rho1: Optional[float] = None
    rho2: Optional[float] = None
    chi: float = Field(default=0.0, ge=0)
    target_radius: Optional[float] = None
    horizon: float = Field(default=50.0, gt=0)


class ValidationSpec(_Strict):
    samples_per_boundary: int = Field(default=64, ge=1)
    chi: float = Field(default=0.0, ge=0)
    collar: float = Field(default=0.0, ge=0)


class RingsSpec(_Strict):
    n: int = Field(ge=1)
    radii: list[float] = Field(min_length=1)


class ConvergenceStudy(_Strict):
    tv_sequence: list[float] = Field(min_length=1)
    profile: str = "w"
    branch_cap: int = Field(default=64, ge=1)


class Prop22Study(_Strict):
    signal: str = "w"


class PerturbationSpec(_Strict):
    zeta: Optional[str] = None
    d: Optional[str] = None


class RobustStudy(_Strict):
    r: float = Field(gt=0)
    s: float = Field(gt=0)
    chi: float = Field(ge=0)
    rings: RingsSpec
    T: Optional[float] = None
    perturbations: list[PerturbationSpec] = Field(default_factory=lambda: [PerturbationSpec()])


class SamplingStudy(_Strict):
    r: float = Field(gt=0)
    s: float = Field(gt=0)
    chi: float = Field(ge=0)
    rings: RingsSpec
    T: Optional[float] = None
    delta: Optional[float] = None
    k_bar: Optional[float] = None
    errors: list[Literal["zero", "alternating", "random"]] = Field(default_factory=lambda: ["zero"])
    d: list[Optional[str]] = Field(default_factory=lambda: [None])


class InvarianceStudy(_Strict):
    patch: int
    rho: float = Field(ge=0)
    chi: float = Field(ge=0)
    samples: int = Field(default=100, ge=1)
    T: float = Field(gt=0)


class StudySpec(_Strict):
    convergence: Optional[ConvergenceStudy] = None
    prop22: Optional[Prop22Study] = None
    robust: Optional[RobustStudy] = None
    sampling: Optional[SamplingStudy] = None
    invariance: Optional[InvarianceStudy] = None


class ScenarioFile(_Strict):
    schema_: Literal["patchy-scenario/1"] = Field(alias="schema")
    name: str
    dimension: int = Field(ge=1)
    region: Optional[RegionSpec] = None
    patches: Optional[list[PatchSpec]] = None
    dynamics: Optional[DynamicsSpec] = None
    feedback: Optional[list[FeedbackPatchSpec]] = None
    signals: dict[str, SignalSpec] = Field(default_factory=dict)
    integrator: IntegratorSpec = Field(default_factory=IntegratorSpec)
    initial_state: Optional[list[float]] = None
    t0: float = 0.0
    T: Optional[float] = None
    plan: Optional[PlanSpec] = None
    constants: Optional[ConstantsSpec] = None
    validation: ValidationSpec = Field(default_factory=ValidationSpec)
    study: StudySpec = Field(default_factory=StudySpec)

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @model_validator(mode="after")
    def _check(self) -> ScenarioFile:
        has_patches = self.patches is not None
        has_fb = self.feedback is not None
        if has_patches == has_fb:
            raise ValueError("give exactly one of 'patches' or 'feedback'")
        if has_fb and self.dynamics is None:
            raise ValueError("'feedback' needs a 'dynamics' section")
        if self.initial_state is not None and len(self.initial_state) != self.dimension:
            raise ValueError("initial_state has the wrong dimension")
        if self.integrator.event_tol >= self.integrator.dt:
            raise ValueError("integrator.event_tol must be smaller than integrator.dt")
        c = self.constants
        if c is not None and c.rho1 is not None and c.rho2 is not None and c.rho2 > c.rho1:
            raise ValueError("constants.rho2 must not exceed constants.rho1")
        return self


def _domain(spec) -> SmoothDomain:
    if spec.kind == "ball":
        return ball(spec.center, spec.radius)
    if spec.kind == "ellipsoid":
        return ellipsoid(spec.center, spec.semi_axes)
    parts = [HalfSpace(np.asarray(h.normal, dtype=float), h.offset) for h in spec.halfspaces]
    return smooth_intersection(parts, spec.sharpness, center=spec.center,
                               bounding_radius=spec.bounding_radius)


def _linear(A, b):
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    return lambda x: A @ x + b


class Scenario:
    """Parsed scenario with builders for the numerical objects it describes."""

    def __init__(self, spec: ScenarioFile, source: str = "") -> None:
        self.spec = spec
        self.source = source
        self._field: PatchyField | None = None
        self._fb: PatchyFeedback | None = None

    @property
    def name(self) -> str:
        return self.spec.name

    @property
    def dim(self) -> int:
        return self.spec.dimension

    def region(self) -> Annulus | None:
        r = self.spec.region
        return None if r is None else Annulus(tuple(r.center), r.inner, r.outer)

    def is_feedback(self) -> bool:
        return self.spec.feedback is not None

    def feedback(self) -> PatchyFeedback:
        if self.spec.feedback is None:
            raise ScenarioError(f"scenario '{self.name}' has no feedback section")
        if self._fb is None:
            dyn = self.spec.dynamics
            f = affine_dynamics(dyn.A, dyn.B, dyn.c, dyn.control_set)
            items = [FeedbackPatch(p.index, _domain(p.domain), np.asarray(p.control, dtype=float),
                                   p.margin) for p in self.spec.feedback]
            self._fb = PatchyFeedback(f, items, region=self.region())
        return self._fb

    def field(self) -> PatchyField:
        if self._field is None:
            if self.spec.patches is None:
                self._field = self.feedback().field
            else:
                patches = [Patch(p.index, _domain(p.domain), _linear(p.field.A, p.field.b), p.margin)
                           for p in self.spec.patches]
                self._field = PatchyField(patches, self.dim, region=self.region())
        return self._field

    def config(self, *, dt: float | None = None, seed: int | None = None) -> IntegratorConfig:
        s = self.spec.integrator
        return IntegratorConfig(dt=s.dt if dt is None else dt, event_tol=s.event_tol,
                                max_events=s.max_events, rng_seed=s.seed if seed is None else seed,
                                graze_tol=s.graze_tol)

    def initial_state(self) -> np.ndarray:
        if self.spec.initial_state is None:
            raise ScenarioError(f"scenario '{self.name}' has no initial_state")
        return np.asarray(self.spec.initial_state, dtype=float)

    def horizon(self) -> float:
        if self.spec.T is None:
            raise ScenarioError(f"scenario '{self.name}' has no horizon T")
        return float(self.spec.T)

    def has_signal(self, name: str) -> bool:
        return name in self.spec.signals

    def signal(self, name: str, span: tuple[float, float] | None = None) -> BVSignal:
        if name not in self.spec.signals:
            raise ScenarioError(f"scenario '{self.name}' has no signal '{name}'")
        sp = self.spec.signals[name]
        span = span or (self.spec.t0, self.horizon())
        d = {"origin": sp.origin or [0.0] * self.dim, "span": list(span),
             "jumps": [j.model_dump() for j in sp.jumps], "ac": [p.model_dump() for p in sp.ac]}
        try:
            return BVSignal.from_dict(d, self.dim)
        except ValueError as exc:
            raise ScenarioError(f"signal '{name}': {exc}") from exc

    def density(self, name: str | None) -> PiecewiseSignal | None:
        """A signal used as a bounded disturbance: its AC density only."""
        if name is None:
            return None
        sp = self.spec.signals.get(name)
        if sp is None:
            raise ScenarioError(f"scenario '{self.name}' has no signal '{name}'")
        if sp.jumps:
            raise ScenarioError(f"signal '{name}' is used as a disturbance and must not jump")
        return PiecewiseSignal.from_list([p.model_dump() for p in sp.ac], self.dim)


def _format_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_scenario(data: dict, source: str = "") -> Scenario:
    try:
        spec = ScenarioFile.model_validate(data)
    except ValidationError as exc:
        raise ScenarioError(f"{source or 'scenario'}: {_format_error(exc)}") from exc
    return Scenario(spec, source)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("patchy") / "scenarios" / f"{name}.json"))


def load_scenario(path_or_name: str | Path) -> Scenario:
    """Load a scenario file, or a bundled fixture by name (``S1``, ``S2``, ``S3``, ...)."""
    p = Path(path_or_name)
    if not p.exists() and str(path_or_name) in BUNDLED:
        p = bundled_path(str(path_or_name))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{p}: top level must be an object")
    return parse_scenario(data, str(p))


def spiral_scenario_dict(**kwargs) -> dict:
    """Scenario document for the generated spiral feedback (the S3 fixture)."""
    fb = spiral_feedback(**kwargs)
    feedback = []
    for p in fb.patches:
        dom = p.domain
        feedback.append({"index": p.index,
                         "domain": {"kind": "ball", "center": [float(v) for v in dom.center],
                                    "radius": float(dom.radius)},
                         "control": [float(v) for v in p.control]})
    reg = fb.region
    return {
        "schema": SCHEMA,
        "name": "S3",
        "dimension": 2,
        "region": {"kind": "annulus", "center": list(reg.center), "inner": reg.inner, "outer": reg.outer},
        "dynamics": {"kind": "affine", "A": [[-1.0, 0.0], [0.0, -1.0]], "B": [[1.0, 0.0], [0.0, 1.0]],
                     "c": [0.0, 0.0], "control_set": "closed disk of radius 2"},
        "feedback": feedback,
    }
