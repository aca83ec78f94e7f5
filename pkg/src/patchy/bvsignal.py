"""Left-continuous signals of bounded variation.

A :class:`BVSignal` is a finite list of jumps plus an absolutely continuous
part whose density is a :class:`PiecewiseSignal`.  The same piecewise type
doubles as a bounded disturbance ``d(t)``.

Jump convention: a jump ``dw`` at time ``s`` is an atom of the measure
``Dw`` at ``s``.  Values are left-continuous, so ``eval_left(s)`` excludes
it and the jump shows on ``(s, T]``; total variation over ``[a, b]`` counts
atoms in ``[a, b]`` and over ``(a, b]`` counts atoms in ``(a, b]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable, Sequence

import numpy as np
from scipy.integrate import quad

if TYPE_CHECKING:
    from .integrate import Trajectory
    from .patchfield import PatchyFeedback

__all__ = [
    "Piece",
    "PiecewiseSignal",
    "BVSignal",
    "SamplingPlan",
    "constant_piece",
    "compose_inner_outer",
    "from_sampling_errors",
    "build_equivalent_w",
]

PIECE_KINDS = ("constant", "linear", "sinusoid", "callable")
_QUAD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Piece:
    """A smooth vector density on ``[t0, t1)``.

    ``constant``: ``value``; ``linear``: ``a + b * (t - tref)``;
    ``sinusoid``: ``amplitude * sin(omega * t + phase)``;
    ``callable``: ``fn(t)`` (not serializable).
    """

    t0: float
    t1: float
    kind: str
    params: dict = field(default_factory=dict)
    fn: Callable[[float], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.kind not in PIECE_KINDS:
            raise ValueError(f"unknown piece kind {self.kind!r}")
        if not self.t1 > self.t0:
            raise ValueError("piece needs t1 > t0")
        if self.kind == "callable" and self.fn is None:
            raise ValueError("callable piece needs fn")

    def value(self, t: float) -> np.ndarray:
        p = self.params
        if self.kind == "constant":
            return np.asarray(p["value"], dtype=float)
        if self.kind == "linear":
            return (np.asarray(p["a"], dtype=float)
                    + np.asarray(p["b"], dtype=float) * (t - p.get("tref", self.t0)))
        if self.kind == "sinusoid":
            return np.asarray(p["amplitude"], dtype=float) * math.sin(p["omega"] * t + p.get("phase", 0.0))
        return np.asarray(self.fn(t), dtype=float)

    def integral(self, a: float, b: float) -> np.ndarray:
        """``int_a^b value`` for ``[a, b]`` inside the piece window."""
        p = self.params
        if self.kind == "constant":
            return np.asarray(p["value"], dtype=float) * (b - a)
        if self.kind == "linear":
            tref = p.get("tref", self.t0)
            return (np.asarray(p["a"], dtype=float) * (b - a)
                    + np.asarray(p["b"], dtype=float) * 0.5 * ((b - tref) ** 2 - (a - tref) ** 2))
        if self.kind == "sinusoid":
            w, ph = p["omega"], p.get("phase", 0.0)
            amp = np.asarray(p["amplitude"], dtype=float)
            if w == 0:
                return amp * math.sin(ph) * (b - a)
            return amp * (math.cos(w * a + ph) - math.cos(w * b + ph)) / w
        dim = np.asarray(self.fn(a)).shape[0]
        return np.array([quad(lambda s, k=k: float(self.fn(s)[k]), a, b,
                              epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200)[0]
                         for k in range(dim)])

    def clipped(self, a: float, b: float) -> Piece | None:
        lo, hi = max(a, self.t0), min(b, self.t1)
        if hi <= lo:
            return None
        params = dict(self.params)
        if self.kind == "linear":
            params.setdefault("tref", self.t0)
        return Piece(lo, hi, self.kind, params, self.fn)

    def scaled(self, factor: float) -> Piece:
        if self.kind == "callable":
            fn = self.fn
            return Piece(self.t0, self.t1, "callable", {}, lambda t: factor * np.asarray(fn(t)))
        params = dict(self.params)
        for key in ("value", "a", "b", "amplitude"):
            if key in params:
                params[key] = (factor * np.asarray(params[key], dtype=float)).tolist()
        return Piece(self.t0, self.t1, self.kind, params)

    def to_dict(self) -> dict:
        if self.kind == "callable":
            raise ValueError("callable pieces cannot be serialized")
        params = {k: (np.asarray(v).tolist() if isinstance(v, (list, tuple, np.ndarray)) else v)
                  for k, v in self.params.items()}
        return {"t0": self.t0, "t1": self.t1, "kind": self.kind, "params": params}

    @classmethod
    def from_dict(cls, d: dict) -> Piece:
        return cls(float(d["t0"]), float(d["t1"]), d["kind"], dict(d.get("params", {})))


def constant_piece(t0: float, t1: float, value: Sequence[float]) -> Piece:
    return Piece(float(t0), float(t1), "constant", {"value": list(map(float, value))})


class PiecewiseSignal:
    """Sum of (possibly overlapping) smooth pieces; zero where none is active."""

    def __init__(self, pieces: Iterable[Piece], dim: int) -> None:
        self.pieces = tuple(pieces)
        self.dim = int(dim)

    @classmethod
    def zero(cls, dim: int) -> PiecewiseSignal:
        return cls((), dim)

    @classmethod
    def constant(cls, t0: float, t1: float, value: Sequence[float]) -> PiecewiseSignal:
        return cls((constant_piece(t0, t1, value),), len(value))

    def is_zero(self) -> bool:
        return not self.pieces

    def __add__(self, other: PiecewiseSignal) -> PiecewiseSignal:
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        return PiecewiseSignal(self.pieces + other.pieces, self.dim)

    def scaled(self, factor: float) -> PiecewiseSignal:
        return PiecewiseSignal((p.scaled(factor) for p in self.pieces), self.dim)

    def clipped(self, a: float, b: float) -> PiecewiseSignal:
        out = [c for c in (p.clipped(a, b) for p in self.pieces) if c is not None]
        return PiecewiseSignal(out, self.dim)

    def breakpoints(self) -> list[float]:
        return sorted({t for p in self.pieces for t in (p.t0, p.t1)})

    def value(self, t: float, hint: float | None = None) -> np.ndarray:
        """Density at ``t`` using the pieces active at ``hint`` (default ``t``).

        Integrators pass the midpoint of the current step as ``hint`` so a
        stage evaluated exactly on a breakpoint uses the piece of that step.
        """
        s = t if hint is None else hint
        out = np.zeros(self.dim)
        for p in self.pieces:
            if p.t0 <= s < p.t1:
                out = out + p.value(t)
        return out

    def integral(self, a: float, b: float) -> np.ndarray:
        out = np.zeros(self.dim)
        if b <= a:
            return out
        for p in self.pieces:
            lo, hi = max(a, p.t0), min(b, p.t1)
            if hi > lo:
                out = out + p.integral(lo, hi)
        return out

    def _segments(self, a: float, b: float) -> list[tuple[float, float]]:
        cuts = [a] + [t for t in self.breakpoints() if a < t < b] + [b]
        return [(lo, hi) for lo, hi in zip(cuts[:-1], cuts[1:]) if hi > lo]

    def abs_integral(self, a: float, b: float) -> float:
        """``int_a^b |density(t)| dt`` (adaptive quadrature on each smooth segment)."""
        total = 0.0
        for lo, hi in self._segments(a, b):
            mid = 0.5 * (lo + hi)
            active = [p for p in self.pieces if p.t0 <= mid < p.t1]
            if not active:
                continue
            if all(p.kind == "constant" for p in active):
                total += float(np.linalg.norm(sum(p.value(mid) for p in active))) * (hi - lo)
                continue
            val, _ = quad(lambda s: float(np.linalg.norm(sum(p.value(s) for p in active))),
                          lo, hi, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL, limit=200)
            total += val
        return total

    def sup_norm(self, a: float, b: float, samples: int = 257) -> float:
        best = 0.0
        for lo, hi in self._segments(a, b):
            mid = 0.5 * (lo + hi)
            active = [p for p in self.pieces if p.t0 <= mid < p.t1]
            if not active:
                continue
            ts = [mid] if all(p.kind == "constant" for p in active) else np.linspace(lo, hi, samples)
            for s in ts:
                best = max(best, float(np.linalg.norm(sum(p.value(s) for p in active))))
        return best

    def to_list(self) -> list[dict]:
        return [p.to_dict() for p in self.pieces]

    @classmethod
    def from_list(cls, items: Sequence[dict], dim: int) -> PiecewiseSignal:
        return cls((Piece.from_dict(d) for d in items), dim)


class BVSignal:
    """Left-continuous BV signal: ``origin + sum of earlier jumps + int of density``."""

    def __init__(self, jumps: Iterable[tuple[float, Sequence[float]]], ac: PiecewiseSignal | None,
                 origin: Sequence[float], span: tuple[float, float]) -> None:
        self.origin = np.asarray(origin, dtype=float)
        self.dim = self.origin.shape[0]
        self.span = (float(span[0]), float(span[1]))
        t0, T = self.span
        if not T > t0:
            raise ValueError("span must have T > t0")
        js = [(float(t), np.asarray(dw, dtype=float)) for t, dw in jumps]
        times = [t for t, _ in js]
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("jump times must be strictly increasing")
        if times and (times[0] <= t0 or times[-1] > T):
            raise ValueError("jump times must lie in (t0, T]")
        self.jumps: tuple[tuple[float, np.ndarray], ...] = tuple(js)
        self.ac = ac if ac is not None else PiecewiseSignal.zero(self.dim)

    @classmethod
    def zero(cls, dim: int, span: tuple[float, float]) -> BVSignal:
        return cls((), None, np.zeros(dim), span)

    @property
    def jump_times(self) -> list[float]:
        return [t for t, _ in self.jumps]

    def is_zero(self) -> bool:
        return not self.jumps and self.ac.is_zero()

    def jump_at(self, t: float) -> np.ndarray | None:
        for s, dw in self.jumps:
            if s == t:
                return dw
        return None

    def eval_left(self, t: float) -> np.ndarray:
        t0, _ = self.span
        out = self.origin + self.ac.integral(t0, t)
        for s, dw in self.jumps:
            if s < t:
                out = out + dw
        return out

    def eval_right(self, t: float) -> np.ndarray:
        dw = self.jump_at(t)
        val = self.eval_left(t)
        return val if dw is None else val + dw

    def density(self, t: float, hint: float | None = None) -> np.ndarray:
        return self.ac.value(t, hint)

    def total_variation(self, a: float | None = None, b: float | None = None,
                        *, closed_left: bool = True) -> float:
        """Total variation over ``[a, b]`` (or ``(a, b]`` with ``closed_left=False``)."""
        t0, T = self.span
        a = t0 if a is None else float(a)
        b = T if b is None else float(b)
        tv = sum(float(np.linalg.norm(dw)) for s, dw in self.jumps
                 if (a <= s if closed_left else a < s) and s <= b)
        return tv + self.ac.abs_integral(a, b)

    def scaled(self, factor: float) -> BVSignal:
        return BVSignal(((t, factor * dw) for t, dw in self.jumps), self.ac.scaled(factor),
                        factor * self.origin, self.span)

    def to_dict(self) -> dict:
        return {
            "origin": self.origin.tolist(),
            "span": list(self.span),
            "jumps": [{"t": t, "dw": dw.tolist()} for t, dw in self.jumps],
            "ac": self.ac.to_list(),
        }

    @classmethod
    def from_dict(cls, d: dict, dim: int | None = None,
                  span: tuple[float, float] | None = None) -> BVSignal:
        jumps = [(j["t"], j["dw"]) for j in d.get("jumps", [])]
        if dim is None:
            dim = len(d["origin"]) if "origin" in d else len(jumps[0][1])
        origin = d.get("origin", [0.0] * dim)
        span = tuple(d.get("span", span))
        return cls(jumps, PiecewiseSignal.from_list(d.get("ac", []), dim), origin, span)

    def __repr__(self) -> str:
        return f"BVSignal(jumps={len(self.jumps)}, pieces={len(self.ac.pieces)}, span={self.span})"


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """Sampling partition with per-sample measurement errors.

    Enforces ``delta/2 <= tau_{i+1} - tau_i <= delta`` and, when ``k_bar``
    is supplied, ``max |e_i| <= k_bar * delta``.
    """

    partition: np.ndarray
    errors: np.ndarray
    delta: float
    k_bar: float | None = None

    def __post_init__(self) -> None:
        tau = np.asarray(self.partition, dtype=float)
        err = np.atleast_2d(np.asarray(self.errors, dtype=float))
        object.__setattr__(self, "partition", tau)
        object.__setattr__(self, "errors", err)
        if tau.ndim != 1 or tau.size < 2:
            raise ValueError("partition needs at least two times")
        gaps = np.diff(tau)
        slack = 1e-12 * self.delta
        if np.any(gaps < 0.5 * self.delta - slack) or np.any(gaps > self.delta + slack):
            raise ValueError("partition steps must satisfy delta/2 <= step <= delta")
        if err.shape[0] != tau.size - 1:
            raise ValueError("need one error vector per sampling interval")
        if self.k_bar is not None:
            worst = float(np.max(np.linalg.norm(err, axis=1)))
            if worst > self.k_bar * self.delta * (1 + 1e-12):
                raise ValueError("measurement errors exceed k_bar * delta")

    @property
    def T(self) -> float:
        return float(self.partition[-1])

    @classmethod
    def uniform_random(cls, t0: float, T: float, delta: float, errors_fn: Callable[[int, int], np.ndarray],
                       rng: np.random.Generator, k_bar: float | None = None) -> SamplingPlan:
        """Random steps ``delta * (1 + u) / 2``; the tail is merged so every step stays admissible."""
        taus = [float(t0)]
        while T - taus[-1] > delta:
            taus.append(taus[-1] + 0.5 * delta * (1.0 + rng.random()))
        if T - taus[-1] < 0.5 * delta:
            if len(taus) == 1:
                raise ValueError("horizon shorter than delta/2")
            taus.pop()
            span = T - taus[-1]
            if span > delta:
                taus.append(taus[-1] + 0.5 * span)
        taus.append(float(T))
        m = len(taus) - 1
        errs = np.array([errors_fn(i, m) for i in range(m)], dtype=float)
        return cls(np.array(taus), errs, delta, k_bar)


def compose_inner_outer(e1: BVSignal, e2: PiecewiseSignal, t0: float | None = None) -> BVSignal:
    """``w(t) = e1(t) + int_{t0}^t e2``: the impulsive form of inner plus outer perturbations."""
    if t0 is not None and t0 != e1.span[0]:
        raise ValueError("t0 must be the start of e1's span")
    return BVSignal(e1.jumps, e1.ac + e2, e1.origin, e1.span)


def from_sampling_errors(plan: SamplingPlan) -> BVSignal:
    """Piecewise-constant ``zeta = e_i`` on ``(tau_i, tau_{i+1}]``, with ``zeta(tau_0) = e_0``."""
    tau, err = plan.partition, plan.errors
    jumps = [(float(tau[i]), err[i] - err[i - 1]) for i in range(1, err.shape[0])
             if np.any(err[i] != err[i - 1])]
    return BVSignal(jumps, None, err[0], (float(tau[0]), float(tau[-1])))


def build_equivalent_w(y_traj: Trajectory, zeta: BVSignal, d: PiecewiseSignal,
                       fb: PatchyFeedback) -> BVSignal:
    """Impulsive driving term equivalent to measurement error ``zeta`` plus disturbance ``d``.

    ``w = zeta + int (h(y, zeta) + d)`` with
    ``h(y, z) = f(y - z, U(y)) - f(y, U(y))``.  ``y`` is read off the
    stored trajectory (linear between rows), so ``h`` is exact only when
    it does not depend on ``y`` beyond the selected control.
    """
    t0, T = zeta.span
    f = fb.dynamics.f_fn

    def h(t: float) -> np.ndarray:
        y = y_traj.value_at(t)
        z = zeta.eval_left(t)
        k = fb.control(y)
        return np.asarray(f(y - z, k), dtype=float) - np.asarray(f(y, k), dtype=float)

    cuts = sorted({t0, T} | {t for t in y_traj.event_times() if t0 < t < T}
                  | {t for t in zeta.jump_times if t0 < t < T})
    h_pieces = [Piece(a, b, "callable", {}, h) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]
    ac = zeta.ac + PiecewiseSignal(h_pieces, zeta.dim) + d
    return BVSignal(zeta.jumps, ac, zeta.origin, zeta.span)
