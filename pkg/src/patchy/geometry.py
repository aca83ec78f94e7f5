"""Implicit smooth domains ``{psi < 0}`` and the metric queries on them.

Every domain answers membership, signed distance (positive inside),
outer normal at the nearest boundary point, boundary projection and inset
membership ``Omega^rho = {phi >= rho}``.  Balls are handled in closed form;
ellipsoids and smoothed intersections go through a generic foot-point
projection seeded from a nested set of ray-bisected boundary samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp, ndtri
from scipy.stats import qmc

from .errors import DegenerateBoundary, DomainValidationError, NumericalFailure

__all__ = [
    "SmoothDomain",
    "Ball",
    "Ellipsoid",
    "HalfSpace",
    "SmoothIntersection",
    "ball",
    "ellipsoid",
    "smooth_intersection",
    "sphere_directions",
    "halton_points",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_GRAD_FLOOR = 1e-12


def sphere_directions(dim: int, n: int) -> np.ndarray:
    """First ``n`` unit vectors of a deterministic, prefix-nested sequence.

    Prefix nesting matters: estimates built as a sup over the first ``n``
    samples can only grow with ``n``.
    """
    if n <= 0:
        return np.zeros((0, dim))
    if dim == 1:
        return np.array([[1.0 if k % 2 == 0 else -1.0] for k in range(n)])
    if dim == 2:
        k = np.arange(n)
        theta = 2.0 * np.pi * np.mod(k * GOLDEN, 1.0)
        return np.column_stack([np.cos(theta), np.sin(theta)])
    pts = halton_points(dim, n)
    z = ndtri(np.clip(pts, 1e-12, 1.0 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def halton_points(dim: int, n: int, skip: int = 1) -> np.ndarray:
    """Unscrambled Halton points in ``[0, 1)^dim`` (prefix-nested)."""
    sampler = qmc.Halton(d=dim, scramble=False)
    if skip:
        sampler.fast_forward(skip)
    return sampler.random(n)


class SmoothDomain:
    """Open region ``{x : psi(x) < 0}`` with a nonvanishing gradient near its boundary.

    Parameters
    ----------
    level_fn, gradient_fn
        ``psi`` and ``grad psi``.
    bounding_radius
        Radius of a ball around ``center`` that contains the domain.
    center
        Interior point; the domain is assumed star-shaped with respect to it
        (boundary samples are found by bisection along rays from here).
    collar_width
        Width, in distance units, of the boundary collar on which the
        gradient is checked.  Defaults to 10% of ``bounding_radius``.
    """

    kind = "implicit"

    def __init__(
        self,
        level_fn: Callable[[np.ndarray], float],
        gradient_fn: Callable[[np.ndarray], np.ndarray],
        bounding_radius: float,
        center: Sequence[float],
        *,
        collar_width: float | None = None,
        check: bool = True,
    ) -> None:
        if not bounding_radius > 0:
            raise DomainValidationError("bounding_radius must be positive")
        self.level_fn = level_fn
        self.gradient_fn = gradient_fn
        self.bounding_radius = float(bounding_radius)
        self.center = np.asarray(center, dtype=float)
        self.dim = self.center.shape[0]
        self.collar_width = (0.1 * self.bounding_radius if collar_width is None
                             else float(collar_width))
        self._boundary_cache: dict[int, np.ndarray] = {}
        if self.level(self.center) >= 0:
            raise DomainValidationError("center must lie inside the domain")
        if check:
            self.check_regularity()

    # -- raw level set --------------------------------------------------
    def level(self, x) -> float:
        return float(self.level_fn(np.asarray(x, dtype=float)))

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self.gradient_fn(np.asarray(x, dtype=float)), dtype=float)

    # -- public queries -------------------------------------------------
    def contains(self, x) -> bool:
        return self.level(x) < 0.0

    def signed_distance(self, x) -> float:
        x = np.asarray(x, dtype=float)
        lv = self.level(x)
        if lv == 0.0:
            return 0.0
        d = float(np.linalg.norm(x - self.project_boundary(x)))
        return d if lv < 0.0 else -d

    def outer_normal(self, x) -> np.ndarray:
        p = self.project_boundary(x)
        g = self.gradient(p)
        ng = float(np.linalg.norm(g))
        if ng < _GRAD_FLOOR:
            raise DegenerateBoundary(f"vanishing gradient at boundary point {p}")
        return g / ng

    def project_boundary(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        seeds = []
        newton = self._newton_to_surface(x)
        if newton is not None:
            seeds.append(newton)
        samples = self.boundary_samples(256)
        seeds.append(samples[int(np.argmin(np.linalg.norm(samples - x, axis=1)))])
        best = None
        best_d = math.inf
        for seed in seeds:
            p = self._foot_point(x, seed)
            d = float(np.linalg.norm(x - p))
            if d < best_d:
                best, best_d = p, d
        if best is None or abs(self.level(best)) > 1e-10:
            raise NumericalFailure(f"boundary projection failed from {x}")
        return best

    def inset_contains(self, rho: float, x) -> bool:
        if rho < 0:
            raise ValueError("rho must be non-negative")
        if not self.contains(x):
            return False
        return rho == 0.0 or self.signed_distance(x) >= rho

    # -- sampling -------------------------------------------------------
    def boundary_samples(self, n: int) -> np.ndarray:
        """First ``n`` boundary points of a nested, deterministic sequence."""
        cached = self._boundary_cache.get(n)
        if cached is not None:
            return cached
        larger = [k for k in self._boundary_cache if k >= n]
        if larger:
            out = self._boundary_cache[min(larger)][:n]
        else:
            out = np.array([self._ray_boundary(u) for u in sphere_directions(self.dim, n)])
        self._boundary_cache[n] = out
        return out

    def interior_samples(self, n: int, *, oversample: int = 64) -> np.ndarray:
        """Up to ``n`` interior points, Halton in the bounding box, rejection filtered."""
        cube = halton_points(self.dim, n * oversample)
        pts = self.center + (2.0 * cube - 1.0) * self.bounding_radius
        keep = [p for p in pts if self.contains(p)]
        return np.array(keep[:n]).reshape(-1, self.dim)

    def check_regularity(self, n_dirs: int = 64, levels: int = 7) -> None:
        """Sample the boundary collar and reject vanishing gradients."""
        for p in self.boundary_samples(n_dirs):
            g = self.gradient(p)
            ng = float(np.linalg.norm(g))
            if ng < _GRAD_FLOOR:
                raise DomainValidationError(f"gradient vanishes on the boundary at {p}")
            nrm = g / ng
            for s in np.linspace(-self.collar_width, self.collar_width, levels):
                q = p + s * nrm
                if np.linalg.norm(self.gradient(q)) < _GRAD_FLOOR:
                    raise DomainValidationError(f"gradient vanishes in the collar at {q}")

    # -- internals ------------------------------------------------------
    def _ray_boundary(self, u: np.ndarray) -> np.ndarray:
        def f(s: float) -> float:
            return self.level(self.center + s * u)

        hi = 2.0 * self.bounding_radius
        for _ in range(8):
            if f(hi) > 0:
                break
            hi *= 2.0
        else:
            raise NumericalFailure("ray never leaves the domain; bounding_radius too small")
        s = brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        p = self.center + s * u
        refined = self._newton_to_surface(p)
        return p if refined is None else refined

    def _newton_to_surface(self, x: np.ndarray, max_iter: int = 60) -> np.ndarray | None:
        p = np.array(x, dtype=float)
        for _ in range(max_iter):
            lv = self.level(p)
            if abs(lv) <= 1e-15:
                return p
            g = self.gradient(p)
            g2 = float(g @ g)
            if g2 < _GRAD_FLOOR ** 2:
                return None
            step = lv / g2 * g
            p = p - step
            if float(np.linalg.norm(step)) <= 1e-15 * (1.0 + float(np.linalg.norm(p))):
                break
        return p if abs(self.level(p)) <= 1e-12 else None

    def _foot_point(self, x: np.ndarray, p: np.ndarray, max_iter: int = 500) -> np.ndarray:
        # Alternate tangent-plane projection and Newton return to the surface;
        # damped so the distance to x never increases.
        dist = float(np.linalg.norm(x - p))
        lam = 1.0
        for _ in range(max_iter):
            g = self.gradient(p)
            ng = float(np.linalg.norm(g))
            if ng < _GRAD_FLOOR:
                break
            n = g / ng
            r = x - p
            tangent = r - float(r @ n) * n
            if float(np.linalg.norm(tangent)) <= 1e-14 * (1.0 + dist):
                break
            cand = self._newton_to_surface(p + lam * tangent)
            if cand is None:
                lam *= 0.5
                if lam < 1e-8:
                    break
                continue
            d_new = float(np.linalg.norm(x - cand))
            if d_new <= dist + 1e-15:
                moved = float(np.linalg.norm(cand - p))
                p, dist = cand, d_new
                lam = min(1.0, 2.0 * lam)
                if moved <= 1e-15 * (1.0 + dist):
                    break
            else:
                lam *= 0.5
                if lam < 1e-8:
                    break
        return p

    def to_dict(self) -> dict:
        raise NotImplementedError(f"{type(self).__name__} has no serialized form")

    def __repr__(self) -> str:
        return f"{type(self).__name__}(center={self.center.tolist()}, R={self.bounding_radius})"


class Ball(SmoothDomain):
    """Euclidean ball; every query is closed-form."""

    kind = "ball"

    def __init__(self, center: Sequence[float], radius: float, *,
                 collar_width: float | None = None) -> None:
        if not radius > 0:
            raise DomainValidationError("radius must be positive")
        c = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self._r2 = self.radius ** 2
        super().__init__(
            lambda x: float((x - c) @ (x - c)) - self._r2,
            lambda x: 2.0 * (x - c),
            self.radius,
            c,
            collar_width=collar_width,
            check=False,
        )

    def contains(self, x) -> bool:
        d = np.asarray(x, dtype=float) - self.center
        return float(d @ d) < self._r2

    def signed_distance(self, x) -> float:
        return self.radius - float(np.linalg.norm(np.asarray(x, dtype=float) - self.center))

    def _radial(self, x) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.center
        nd = float(np.linalg.norm(d))
        if nd == 0.0:
            raise DegenerateBoundary("projection of the ball center is not unique")
        return d / nd

    def outer_normal(self, x) -> np.ndarray:
        return self._radial(x)

    def project_boundary(self, x) -> np.ndarray:
        return self.center + self.radius * self._radial(x)

    def boundary_samples(self, n: int) -> np.ndarray:
        return self.center + self.radius * sphere_directions(self.dim, n)

    def to_dict(self) -> dict:
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}

    def __repr__(self) -> str:
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


class Ellipsoid(SmoothDomain):
    """Axis-aligned ellipsoid ``sum(((x - c) / a)**2) < 1``."""

    kind = "ellipsoid"

    def __init__(self, center: Sequence[float], semi_axes: Sequence[float], *,
                 collar_width: float | None = None) -> None:
        c = np.asarray(center, dtype=float)
        a = np.asarray(semi_axes, dtype=float)
        if a.shape != c.shape or np.any(a <= 0):
            raise DomainValidationError("semi_axes must be positive and match center")
        self.semi_axes = a
        inv2 = 1.0 / a ** 2
        super().__init__(
            lambda x: float(((x - c) ** 2) @ inv2) - 1.0,
            lambda x: 2.0 * (x - c) * inv2,
            float(a.max()),
            c,
            collar_width=collar_width,
        )

    def to_dict(self) -> dict:
        return {"kind": "ellipsoid", "center": self.center.tolist(),
                "semi_axes": self.semi_axes.tolist()}


@dataclass(frozen=True)
class HalfSpace:
    """``{x : <normal, x> < offset}``; only usable inside a smooth intersection."""

    normal: tuple[float, ...]
    offset: float

    def level(self, x: np.ndarray) -> float:
        return float(np.dot(self.normal, x)) - self.offset

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.normal, dtype=float)

    def to_dict(self) -> dict:
        return {"kind": "halfspace", "normal": list(self.normal), "offset": self.offset}


class SmoothIntersection(SmoothDomain):
    """Softmax-smoothed intersection of level sets.

    ``psi = log(sum(exp(k * psi_i))) / k`` over the parts.  This is an
    approximation of ``max(psi_i)`` that overestimates it by at most
    ``log(m) / k``, so the region is slightly smaller than the exact
    intersection and corners are rounded.
    """

    kind = "intersection"

    def __init__(self, parts: Sequence[SmoothDomain | HalfSpace], sharpness: float,
                 *, center: Sequence[float] | None = None,
                 bounding_radius: float | None = None,
                 collar_width: float | None = None) -> None:
        if not parts:
            raise DomainValidationError("intersection needs at least one part")
        if not sharpness > 0:
            raise DomainValidationError("sharpness must be positive")
        self.parts = tuple(parts)
        self.sharpness = float(sharpness)
        bounded = [p for p in self.parts if isinstance(p, SmoothDomain)]
        if center is None:
            if not bounded:
                raise DomainValidationError("center required when no part is bounded")
            center = bounded[0].center
        if bounding_radius is None:
            if not bounded:
                raise DomainValidationError("bounding_radius required when no part is bounded")
            c0 = np.asarray(center, dtype=float)
            bounding_radius = min(float(np.linalg.norm(b.center - c0)) + b.bounding_radius
                                  for b in bounded)
        k = self.sharpness

        def level(x):
            vals = np.array([p.level(x) for p in self.parts])
            return float(logsumexp(k * vals) / k)

        def grad(x):
            vals = np.array([p.level(x) for p in self.parts])
            w = np.exp(k * vals - logsumexp(k * vals))
            return sum(wi * np.asarray(p.gradient(x), dtype=float)
                       for wi, p in zip(w, self.parts))

        super().__init__(level, grad, bounding_radius, center, collar_width=collar_width)

    def to_dict(self) -> dict:
        return {"kind": "intersection", "sharpness": self.sharpness,
                "center": self.center.tolist(), "bounding_radius": self.bounding_radius,
                "parts": [p.to_dict() for p in self.parts]}


def ball(center: Sequence[float], radius: float, **kw) -> Ball:
    return Ball(center, radius, **kw)


def ellipsoid(center: Sequence[float], semi_axes: Sequence[float], **kw) -> Ellipsoid:
    return Ellipsoid(center, semi_axes, **kw)


def smooth_intersection(parts, sharpness: float, **kw) -> SmoothIntersection:
    return SmoothIntersection(parts, sharpness, **kw)
