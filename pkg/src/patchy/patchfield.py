"""Patch families, the max-index selection rule, patchy feedbacks and robustness constants."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonInwardCollar, OutsideDomain
from .geometry import Ball, SmoothDomain, halton_points

__all__ = [
    "Patch",
    "PatchyField",
    "Annulus",
    "ControlDynamics",
    "affine_dynamics",
    "FeedbackPatch",
    "PatchyFeedback",
    "closed_loop",
    "PatchMargin",
    "ValidationReport",
    "RobustnessConstants",
    "recursion_constants",
    "estimate_constants",
    "spiral_feedback",
]

C_TRIPLE_PRIME = 1.0
C_BAR_FLOOR = 1e-9
K_BAR_CAP = 1e6
_COLLAR_LEVELS = 5


@dataclass(frozen=True, eq=False)
class Patch:
    """One patch: an open domain and a smooth field defined on a ``margin`` neighbourhood of it."""

    index: int
    domain: SmoothDomain
    field_fn: Callable[[np.ndarray], np.ndarray]
    margin: float = 0.1
    control: np.ndarray | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.field_fn(x), dtype=float)


@dataclass(frozen=True)
class Annulus:
    """Working region ``inner <= |x - center| <= outer`` used for cover checks and initial grids."""

    center: tuple[float, ...]
    inner: float
    outer: float

    def contains(self, x) -> bool:
        r = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(self.center)))
        return self.inner <= r <= self.outer

    def samples(self, n: int) -> np.ndarray:
        dim = len(self.center)
        cube = halton_points(dim, 8 * n + 64)
        pts = np.asarray(self.center) + (2.0 * cube - 1.0) * self.outer
        keep = [p for p in pts if self.contains(p)]
        return np.array(keep[:n]).reshape(-1, dim)

    def rings(self, n_per_ring: int, radii: Sequence[float]) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        if len(c) != 2:
            raise ValueError("rings() is only defined in the plane")
        pts = []
        for j, r in enumerate(radii):
            for k in range(n_per_ring):
                th = 2.0 * math.pi * (k + 0.5 * j) / n_per_ring
                pts.append(c + r * np.array([math.cos(th), math.sin(th)]))
        return np.array(pts)


class PatchyField:
    """Ordered family of patches; the field at ``x`` is that of the highest patch containing ``x``."""

    def __init__(self, patches: Sequence[Patch], ambient_dim: int | None = None, *,
                 region: Annulus | None = None,
                 dynamics: ControlDynamics | None = None) -> None:
        if not patches:
            raise ValueError("a patchy field needs at least one patch")
        ordered = sorted(patches, key=lambda p: p.index)
        idx = [p.index for p in ordered]
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate patch indices in {idx}")
        dims = {p.domain.dim for p in ordered}
        if ambient_dim is None:
            ambient_dim = dims.pop() if len(dims) == 1 else -1
        if dims - {ambient_dim} or ambient_dim < 1:
            raise ValueError("patch domains disagree on the ambient dimension")
        self.patches: tuple[Patch, ...] = tuple(ordered)
        self.ambient_dim = int(ambient_dim)
        self.region = region
        self.dynamics = dynamics
        self._by_index = {p.index: p for p in self.patches}
        self._descending = self.patches[::-1]

    @property
    def indices(self) -> list[int]:
        return [p.index for p in self.patches]

    def patch(self, index: int) -> Patch:
        return self._by_index[index]

    def alpha_star_or_none(self, x) -> int | None:
        for p in self._descending:
            if p.domain.contains(x):
                return p.index
        return None

    def alpha_star(self, x) -> int:
        a = self.alpha_star_or_none(x)
        if a is None:
            raise OutsideDomain(f"no patch contains {np.asarray(x).tolist()}", state=np.asarray(x))
        return a

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._by_index[self.alpha_star(x)](x)

    def in_D(self, index: int, x) -> bool:
        """Membership in ``D_index``: inside patch ``index`` and in no higher patch."""
        return self.alpha_star_or_none(x) == index

    def higher(self, index: int) -> list[Patch]:
        return [p for p in self.patches if p.index > index]

    def validate(self, samples_per_boundary: int, perturbation_budget: float = 0.0, *,
                 collar: float = 0.0, gap_samples: int = 512) -> ValidationReport:
        return validate(self, samples_per_boundary, perturbation_budget,
                        collar=collar, gap_samples=gap_samples)

    def __repr__(self) -> str:
        return f"PatchyField(indices={self.indices}, dim={self.ambient_dim})"


# ---------------------------------------------------------------------------
# validation of the inward-pointing condition


@dataclass
class PatchMargin:
    index: int
    worst_inner: float
    margin: float
    worst_point: list[float]
    n_samples: int
    passed: bool


@dataclass
class ValidationReport:
    passed: bool
    chi: float
    samples_per_boundary: int
    collar: float
    patches: list[PatchMargin]
    cover_gaps: list[list[float]] = field(default_factory=list)
    gap_samples: int = 0
    region_covered: bool = True

    def failing(self) -> list[int]:
        return [p.index for p in self.patches if not p.passed]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> ValidationReport:
        d = dict(d)
        d["patches"] = [PatchMargin(**p) for p in d["patches"]]
        return cls(**d)


def _boundary_frame(domain: SmoothDomain, n: int) -> tuple[np.ndarray, np.ndarray]:
    pts = domain.boundary_samples(n)
    normals = np.array([g / np.linalg.norm(g) for g in (domain.gradient(p) for p in pts)])
    return pts, normals


def validate(field: PatchyField, samples_per_boundary: int, perturbation_budget: float = 0.0, *,
             collar: float = 0.0, gap_samples: int = 512) -> ValidationReport:
    """Worst ``<g_a(x) + v, n(x)>`` over sampled boundary points and ``|v| <= chi``.

    The worst perturbation is ``v = chi * n``, so the sampled worst inner
    product is ``max <g_a, n> + chi``.  With ``collar > 0`` the points
    ``p + s n``, ``|s| <= collar`` are checked as well.
    """
    if samples_per_boundary < 1:
        raise ValueError("samples_per_boundary must be >= 1")
    chi = float(perturbation_budget)
    offsets = [0.0] if collar <= 0 else list(np.linspace(-collar, collar, _COLLAR_LEVELS))
    margins = []
    for patch in field.patches:
        pts, normals = _boundary_frame(patch.domain, samples_per_boundary)
        worst, worst_pt, count = -math.inf, None, 0
        for p, n in zip(pts, normals):
            for s in offsets:
                x = p + s * n
                val = float(patch(x) @ n) + chi
                count += 1
                if val > worst:
                    worst, worst_pt = val, x
        margins.append(PatchMargin(patch.index, worst, -worst, [float(v) for v in worst_pt],
                                   count, worst < 0.0))
    gaps: list[list[float]] = []
    checked = 0
    if field.region is not None and gap_samples > 0:
        for x in field.region.samples(gap_samples):
            checked += 1
            if field.alpha_star_or_none(x) is None:
                gaps.append([float(v) for v in x])
    return ValidationReport(
        passed=all(m.passed for m in margins),
        chi=chi,
        samples_per_boundary=samples_per_boundary,
        collar=float(collar),
        patches=margins,
        cover_gaps=gaps[:32],
        gap_samples=checked,
        region_covered=not gaps,
    )


# ---------------------------------------------------------------------------
# control systems and patchy feedbacks


@dataclass(frozen=True, eq=False)
class ControlDynamics:
    f_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    control_dim: int
    control_set_description: str = ""
    params: dict | None = None

    def __call__(self, x, u) -> np.ndarray:
        return np.asarray(self.f_fn(np.asarray(x, dtype=float), np.asarray(u, dtype=float)),
                          dtype=float)


def affine_dynamics(A, B, c=None, description: str = "") -> ControlDynamics:
    """``f(x, u) = A x + B u + c``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    c = np.zeros(A.shape[0]) if c is None else np.asarray(c, dtype=float)
    return ControlDynamics(lambda x, u: A @ x + B @ u + c, B.shape[1], description,
                           {"kind": "affine", "A": A.tolist(), "B": B.tolist(), "c": c.tolist()})


@dataclass(frozen=True, eq=False)
class FeedbackPatch:
    index: int
    domain: SmoothDomain
    control: np.ndarray
    margin: float = 0.1


class PatchyFeedback:
    """Piecewise-constant feedback ``U(x) = k_{alpha*(x)}``."""

    def __init__(self, dynamics: ControlDynamics,
                 patch_domains: Sequence[FeedbackPatch | tuple], *,
                 region: Annulus | None = None) -> None:
        items = [p if isinstance(p, FeedbackPatch)
                 else FeedbackPatch(p[0], p[1], np.asarray(p[2], dtype=float)) for p in patch_domains]
        self.dynamics = dynamics
        self.region = region
        self.patches: tuple[FeedbackPatch, ...] = tuple(sorted(items, key=lambda p: p.index))
        idx = [p.index for p in self.patches]
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate patch indices in {idx}")
        self._field = closed_loop(self)
        self._controls = {p.index: np.asarray(p.control, dtype=float) for p in self.patches}

    @property
    def field(self) -> PatchyField:
        return self._field

    @property
    def indices(self) -> list[int]:
        return [p.index for p in self.patches]

    def alpha_star(self, x) -> int:
        return self._field.alpha_star(x)

    def alpha_star_or_none(self, x) -> int | None:
        return self._field.alpha_star_or_none(x)

    def control_of(self, index: int) -> np.ndarray:
        return self._controls[index]

    def control(self, x) -> np.ndarray:
        return self._controls[self.alpha_star(x)]

    def closed_loop(self) -> PatchyField:
        return self._field


def closed_loop(fb: PatchyFeedback) -> PatchyField:
    """Patchy field with ``g_a(x) = f(x, k_a)`` on the feedback's domains and ordering."""
    f = fb.dynamics
    patches = [Patch(p.index, p.domain, (lambda x, k=np.asarray(p.control, dtype=float): f(x, k)),
                     p.margin, np.asarray(p.control, dtype=float)) for p in fb.patches]
    return PatchyField(patches, region=fb.region, dynamics=f)


def spiral_feedback(n_disks: int = 8, ring_radius: float = 1.2, disk_radius: float = 1.1,
                    pull: float = 0.85, core_radius: float = 0.7, core_pull: float = 0.5,
                    inner: float = 0.5, outer: float = 2.0) -> PatchyFeedback:
    """Planar stabilizing feedback for ``f(x, u) = u - x``.

    Disks sit on a ring; disk ``j`` steers toward a point between its own
    center and the next one, pulled toward the origin, and the last disk
    hands over to a core ball around the origin whose control is zero.
    With ``f = u - x`` each patch flow is a contraction toward ``k``, so
    the inward condition on a disk reduces to ``|k - c| < radius``.
    """
    centers = [ring_radius * np.array([math.cos(2 * math.pi * j / n_disks),
                                       math.sin(2 * math.pi * j / n_disks)]) for j in range(n_disks)]
    items = []
    for j, c in enumerate(centers):
        if j + 1 < n_disks:
            k = pull * 0.5 * (c + centers[j + 1])
        else:
            k = core_pull * c
        items.append(FeedbackPatch(j + 1, Ball(c, disk_radius), k))
    items.append(FeedbackPatch(n_disks + 1, Ball([0.0, 0.0], core_radius), np.zeros(2)))
    dyn = affine_dynamics(-np.eye(2), np.eye(2), description="K = closed disk of radius 2")
    return PatchyFeedback(dyn, items, region=Annulus((0.0, 0.0), inner, outer))


# ---------------------------------------------------------------------------
# robustness constants


@dataclass
class RobustnessConstants:
    rho_bar: float
    c_prime: float
    c_double_prime: float
    c_triple_prime: float
    C_i: list[float]
    ell_i: list[float]
    delta: float
    C_big: float
    M: float
    c_bar: float
    c_transit: float
    k_bar: float
    delta_bar: float
    rho1: float
    rho2: float
    T_alpha: dict[int, float]
    chi: float = 0.0
    sample_count: int = 0

    @property
    def T_total(self) -> float:
        return float(sum(self.T_alpha.values()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["T_alpha"] = {str(k): v for k, v in self.T_alpha.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> RobustnessConstants:
        d = dict(d)
        d["T_alpha"] = {int(k): float(v) for k, v in d["T_alpha"].items()}
        return cls(**d)


def recursion_constants(c_prime: float, c_double_prime: float, c_triple_prime: float,
                        N: int) -> tuple[list[float], list[float]]:
    """Backward recursion for ``C_i`` and ``ell_i``, ``i = N .. 1`` (returned in order ``1 .. N``)."""
    C = [0.0] * N
    ell = [0.0] * N
    C[N - 1] = 1.0 + c_triple_prime
    ell[N - 1] = 2.0 * C[N - 1] / c_prime
    for i in range(N - 2, -1, -1):
        C[i] = c_double_prime * ell[i + 1] + sum(C[i + 1:])
        ell[i] = (2.0 * C[i] + c_double_prime * sum(ell[i + 1:])) / c_prime
    return C, ell


def _jacobian_norm(g: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> float:
    n = x.shape[0]
    h = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        cols.append((np.asarray(g(x + e)) - np.asarray(g(x - e))) / (2 * h))
    return float(np.linalg.norm(np.column_stack(cols), 2))


def estimate_constants(field: PatchyField, rho_bar: float, sample_budget: int = 256, *,
                       chi: float = 0.0, rho1: float | None = None, rho2: float | None = None,
                       target_radius: float | None = None, ensemble: np.ndarray | None = None,
                       horizon: float = 50.0, dt: float = 1e-2) -> RobustnessConstants:
    """Sampled stand-ins for the constants in the stability and robustness estimates.

    ``sample_budget`` boundary points per patch are taken from a nested
    sequence and pushed inward along the normal to fill the collar of
    width ``rho_bar``.  ``c_bar`` is the state-Lipschitz bound of the patch
    fields; ``c_transit`` bounds how long a collar point needs to reach
    depth ``2 rho`` (three collar widths at the worst inward speed) and
    drives ``k_bar`` and ``delta_bar``.  ``T_alpha`` comes from
    unperturbed runs of ``ensemble`` (default: region or patch samples).
    """
    if rho_bar <= 0:
        raise ValueError("rho_bar must be positive")
    rho2 = float(rho_bar if rho2 is None else rho2)
    rho1 = float(rho2 if rho1 is None else rho1)
    if not 0 < rho2 <= rho1:
        raise ValueError("need 0 < rho2 <= rho1")
    patches = field.patches
    N = len(patches)
    depths = np.linspace(0.0, rho_bar, _COLLAR_LEVELS)
    frames = [_boundary_frame(p.domain, sample_budget) for p in patches]

    worst_inward = -math.inf
    c2 = 0.0
    count = 0
    for i, (patch, (pts, normals)) in enumerate(zip(patches, frames)):
        for p, n in zip(pts, normals):
            for s in depths:
                x = p - s * n
                count += 1
                worst_inward = max(worst_inward, float(patch(x) @ n))
                for other in patches[i + 1:]:
                    c2 = max(c2, abs(float(other(x) @ n)))
    c1 = -worst_inward
    if not c1 > 0:
        raise NonInwardCollar(f"sampled inward rate c' = {c1} is not positive")
    C_i, ell_i = recursion_constants(c1, c2, C_TRIPLE_PRIME, N)
    delta = rho_bar / (2.0 * C_i[0])
    C_big = (N + 1) * sum(ell_i)

    # sup |g| and state-Lipschitz bound on B(Omega_a, rho2); inward rate on B(dOmega_a, rho2)
    M = 0.0
    c_bar = 0.0
    worst_collar = -math.inf
    n_interior = max(8, sample_budget // 4)
    for patch, (pts, normals) in zip(patches, frames):
        probe = [p + s * n for p, n in zip(pts, normals)
                 for s in np.linspace(-rho2, rho2, _COLLAR_LEVELS)]
        for p, n in zip(pts, normals):
            for s in np.linspace(-rho2, rho2, _COLLAR_LEVELS):
                worst_collar = max(worst_collar, float(patch(p + s * n) @ n))
        probe.extend(patch.domain.interior_samples(n_interior))
        for x in probe:
            M = max(M, float(np.linalg.norm(patch(x))))
            c_bar = max(c_bar, _jacobian_norm(patch, np.asarray(x)))
    c_bar = max(c_bar, C_BAR_FLOOR)
    inward2 = -worst_collar - chi
    if not inward2 > 0:
        raise NonInwardCollar(f"collar inward rate {-worst_collar} does not exceed chi = {chi}")
    c_transit = 3.0 / inward2
    k_bar = min(1.0 / (2.0 * c_transit), K_BAR_CAP)
    delta_bar = min(c_transit * rho2, rho1 / M)

    T_alpha = _transit_budgets(field, rho2, target_radius, ensemble, horizon, dt)
    return RobustnessConstants(
        rho_bar=float(rho_bar), c_prime=c1, c_double_prime=c2, c_triple_prime=C_TRIPLE_PRIME,
        C_i=C_i, ell_i=ell_i, delta=delta, C_big=C_big, M=M, c_bar=c_bar,
        c_transit=c_transit, k_bar=k_bar, delta_bar=delta_bar, rho1=rho1, rho2=rho2,
        T_alpha=T_alpha, chi=float(chi), sample_count=count,
    )


def _transit_budgets(field: PatchyField, rho2: float, target_radius: float | None,
                     ensemble: np.ndarray | None, horizon: float, dt: float) -> dict[int, float]:
    # Longest stay in (an outer approximation of) B(D_a, rho2/2) along
    # unperturbed runs, times a safety factor of 2.
    from .integrate import IntegratorConfig, solve_caratheodory

    if ensemble is None:
        if field.region is not None:
            ensemble = field.region.samples(16)
        else:
            ensemble = np.vstack([p.domain.interior_samples(4) for p in field.patches])
    cfg = IntegratorConfig(dt=dt, event_tol=1e-9)
    stop = None
    if target_radius is not None:
        r_stop = 2.0 * target_radius / 3.0
        stop = lambda t, x: float(np.linalg.norm(x)) < r_stop  # noqa: E731
    half = 0.5 * rho2
    longest = {p.index: 0.0 for p in field.patches}
    for x0 in ensemble:
        if field.alpha_star_or_none(x0) is None:
            continue
        traj = solve_caratheodory(field, x0, 0.0, horizon, cfg, stop_when=stop)
        for patch in field.patches:
            higher = field.higher(patch.index)
            run_start = None
            best = 0.0
            for t, x in zip(traj.times, traj.states):
                near = (patch.domain.signed_distance(x) > -half
                        and all(q.domain.signed_distance(x) < half for q in higher))
                if near and run_start is None:
                    run_start = t
                elif not near and run_start is not None:
                    best = max(best, t - run_start)
                    run_start = None
            if run_start is not None:
                best = max(best, traj.times[-1] - run_start)
            longest[patch.index] = max(longest[patch.index], best)
    return {int(k): float(max(2.0 * v, dt)) for k, v in longest.items()}
