"""Event-driven RK4 integrators for patchy fields: Caratheodory, impulsive, feedback and sampling runs."""

from __future__ import annotations

import bisect
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .bvsignal import BVSignal, PiecewiseSignal, SamplingPlan
from .errors import BranchOverflow, EventOverflow, OutsideDomain
from .patchfield import PatchyFeedback, PatchyField

__all__ = [
    "Event",
    "Trajectory",
    "IntegratorConfig",
    "solve_caratheodory",
    "solve_impulsive",
    "solve_perturbed_feedback",
    "solve_sampling",
    "enumerate_solutions",
    "solve_single_patch",
    "shift_by_signal",
    "sup_distance",
]

EVENT_KINDS = ("-", "switch", "jump", "exit")
_MERGE_TOL = 1e-12


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    from_index: int | None
    to_index: int | None


@dataclass
class IntegratorConfig:
    dt: float = 1e-3
    event_tol: float = 1e-9
    max_events: int = 10_000
    rng_seed: int = 0
    graze_tol: float = 1e-6

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.event_tol < self.dt:
            raise ValueError("need 0 < event_tol < dt")
        if self.max_events < 1:
            raise ValueError("max_events must be >= 1")


@dataclass
class Trajectory:
    """Rows ``(t_k, x_k, alpha_k, event_k)``.

    ``alphas[k]`` is the index used on the interval ending at row ``k``
    (row 0 holds the initial index), so the index history is a
    left-continuous step function.  A jump at ``s`` produces two rows at
    ``s``: the left value, then the post-jump value marked ``jump``.
    """

    times: np.ndarray
    states: np.ndarray
    alphas: np.ndarray
    row_events: list[str]
    events: list[Event] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.states.shape[1])

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def _row_left(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="left"))

    def value_at(self, t: float) -> np.ndarray:
        """Left value ``x(t)``, linear between rows."""
        k = self._row_left(t)
        if k >= len(self):
            if t <= self.t_end + _MERGE_TOL:
                return self.states[-1].copy()
            raise ValueError(f"t={t} beyond trajectory end {self.t_end}")
        if self.times[k] == t or k == 0:
            return self.states[k].copy()
        t_a, t_b = self.times[k - 1], self.times[k]
        lam = (t - t_a) / (t_b - t_a)
        return (1.0 - lam) * self.states[k - 1] + lam * self.states[k]

    def index_at(self, t: float) -> int:
        k = min(self._row_left(t), len(self) - 1)
        return int(self.alphas[k])

    def event_times(self, kinds: Sequence[str] = ("switch", "jump")) -> list[float]:
        return sorted({e.time for e in self.events if e.kind in kinds})

    def jumps(self) -> list[tuple[float, np.ndarray]]:
        out = []
        for k, ev in enumerate(self.row_events):
            if ev == "jump" and k > 0:
                out.append((float(self.times[k]), self.states[k] - self.states[k - 1]))
        return out

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        cols = ["t"] + [f"x{i + 1}" for i in range(self.dim)] + ["alpha", "event"]
        buf.write(",".join(cols) + "\n")
        for t, x, a, ev in zip(self.times, self.states, self.alphas, self.row_events):
            buf.write(",".join([repr(float(t))] + [repr(float(v)) for v in x] + [str(int(a)), ev]) + "\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "t": [float(v) for v in self.times],
            "x": [[float(v) for v in row] for row in self.states],
            "alpha": [int(a) for a in self.alphas],
            "event": list(self.row_events),
            "events": [asdict(e) for e in self.events],
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> Trajectory:
        return cls(np.asarray(d["t"], dtype=float), np.asarray(d["x"], dtype=float),
                   np.asarray(d["alpha"], dtype=int), list(d["event"]),
                   [Event(**e) for e in d.get("events", [])], dict(d.get("meta", {})))


class _Builder:
    def __init__(self, dim: int) -> None:
        self.t: list[float] = []
        self.x: list[np.ndarray] = []
        self.a: list[int] = []
        self.ev: list[str] = []
        self.events: list[Event] = []
        self.dim = dim

    def row(self, t: float, x: np.ndarray, a: int, ev: str = "-") -> None:
        self.t.append(float(t))
        self.x.append(np.array(x, dtype=float))
        self.a.append(int(a))
        self.ev.append(ev)

    def truncate_after(self, t: float) -> None:
        while self.t and self.t[-1] > t:
            for lst in (self.t, self.x, self.a, self.ev):
                lst.pop()

    def build(self, meta: dict | None = None) -> Trajectory:
        states = np.array(self.x, dtype=float).reshape(-1, self.dim)
        return Trajectory(np.array(self.t, dtype=float), states, np.array(self.a, dtype=int),
                          list(self.ev), list(self.events), dict(meta or {}))


# ---------------------------------------------------------------------------
# core engine

Rhs = Callable[[float, np.ndarray, float], np.ndarray]


def _rk4(rhs: Rhs, t: float, x: np.ndarray, h: float, hint: float) -> np.ndarray:
    k1 = rhs(t, x, hint)
    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1, hint)
    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2, hint)
    k4 = rhs(t + h, x + h * k3, hint)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _checkpoints(t0: float, T: float, dt: float, breaks: Sequence[float]) -> list[float]:
    n = int(math.floor((T - t0) / dt + 1e-9))
    grid = [t0 + k * dt for k in range(n + 1)]
    pts = sorted(set(grid) | {float(b) for b in breaks if t0 < b < T} | {float(T)})
    out = [pts[0]]
    for p in pts[1:]:
        if p - out[-1] > _MERGE_TOL * max(1.0, abs(p)):
            out.append(p)
        elif p in breaks or p == T:
            out[-1] = p
    return out


@dataclass
class _Spec:
    """Problem description consumed by the shared engine."""

    rhs_of: Callable[[int], Rhs]
    select: Callable[[float, np.ndarray], int | None]
    is_event: Callable[[int, int | None], bool]
    jumps: dict[float, Callable[[np.ndarray, int], tuple[np.ndarray, int]]] = field(default_factory=dict)
    extra_breaks: Sequence[float] = ()
    grazes: Callable | None = None


def _bisect_event(spec: _Spec, rhs: Rhs, mode: int, t: float, x: np.ndarray, h: float,
                  hint: float, tol: float) -> tuple[float, np.ndarray, float, np.ndarray]:
    lo, hi = 0.0, h
    x_lo, x_hi = x, _rk4(rhs, t, x, h, hint)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        xm = _rk4(rhs, t, x, mid, hint)
        if spec.is_event(mode, spec.select(t + mid, xm)):
            hi, x_hi = mid, xm
        else:
            lo, x_lo = mid, xm
    return lo, x_lo, hi, x_hi


def _engine(spec: _Spec, x0, t0: float, T: float, cfg: IntegratorConfig,
            stop_when: Callable[[float, np.ndarray], bool] | None = None,
            meta: dict | None = None) -> Trajectory:
    x = np.asarray(x0, dtype=float).copy()
    b = _Builder(x.shape[0])
    mode = spec.select(t0, x)
    if mode is None:
        b.row(t0, x, -1, "exit")
        b.events.append(Event(t0, "exit", None, None))
        raise OutsideDomain(f"initial state {x.tolist()} is outside every patch", time=t0,
                            state=x, trajectory=b.build(meta))
    b.row(t0, x, mode)
    b.events.append(Event(t0, "start", None, mode))
    cps = _checkpoints(t0, T, cfg.dt, list(spec.jumps) + list(spec.extra_breaks))
    n_events = 0
    t = t0
    meta = dict(meta or {})

    def apply_jump(t_j: float) -> None:
        nonlocal x, mode, n_events
        x_new, new_mode = spec.jumps[t_j](x, mode)
        if new_mode is None:
            b.row(t_j, x_new, -1, "exit")
            b.events.append(Event(t_j, "exit", mode, None))
            raise OutsideDomain(f"jump at t={t_j} leaves every patch", time=t_j, state=x_new,
                                trajectory=b.build(meta))
        b.row(t_j, x_new, new_mode, "jump")
        b.events.append(Event(t_j, "jump", mode, new_mode))
        x, mode = np.asarray(x_new, dtype=float), new_mode
        n_events += 1

    if t0 in spec.jumps:
        apply_jump(t0)
    k = 1
    while k < len(cps):
        target = cps[k]
        h = target - t
        hint = t + 0.5 * h
        rhs = spec.rhs_of(mode)
        x_new = _rk4(rhs, t, x, h, hint)
        if not np.all(np.isfinite(x_new)):
            raise OutsideDomain(f"non-finite state at t={target}", time=target, state=x_new,
                                trajectory=b.build(meta))
        a_new = spec.select(target, x_new)
        if spec.is_event(mode, a_new):
            # The switch row holds the last state still selected by ``mode``;
            # integration resumes from the first state past the boundary.
            lo, x_lo, hi, x_hi = _bisect_event(spec, rhs, mode, t, x, h, hint, cfg.event_tol)
            t_lo, t_s = t + lo, t + hi
            a_s = spec.select(t_s, x_hi)
            if a_s is None:
                b.row(t_s, x_hi, mode, "exit")
                b.events.append(Event(t_s, "exit", mode, None))
                raise OutsideDomain(f"trajectory left every patch at t={t_s:.9g}", time=t_s,
                                    state=x_hi, trajectory=b.build(meta))
            if t_lo > b.t[-1]:
                b.row(t_lo, x_lo, mode, "switch")
            else:
                b.ev[-1] = "switch"
            b.events.append(Event(t_lo, "switch", mode, a_s))
            n_events += 1
            if n_events > cfg.max_events:
                raise EventOverflow(f"more than {cfg.max_events} events by t={t_s:.9g}",
                                    trajectory=b.build(meta))
            t, x, mode = t_s, x_hi, a_s
            if t >= target - _MERGE_TOL * max(1.0, abs(target)):
                k += 1
                if target in spec.jumps:
                    apply_jump(target)
            continue
        if stop_when is not None and stop_when(target, x_new):
            lo, hi, x_hi = 0.0, h, x_new
            while hi - lo > cfg.event_tol:
                mid = 0.5 * (lo + hi)
                xm = _rk4(rhs, t, x, mid, hint)
                if stop_when(t + mid, xm):
                    hi, x_hi = mid, xm
                else:
                    lo = mid
            b.row(t + hi, x_hi, mode)
            meta["stopped_at"] = t + hi
            return b.build(meta)
        if spec.grazes is not None:
            branch = spec.grazes(b, t, x, target, x_new, mode, rhs)
            if branch is not None:
                t_g, x_g, beta = branch
                b.truncate_after(t_g)
                b.row(t_g, x_g, mode, "switch")
                b.events.append(Event(t_g, "switch", mode, beta))
                n_events += 1
                t, x, mode = t_g, x_g, beta
                k = bisect.bisect_right(cps, t_g + _MERGE_TOL * max(1.0, abs(t_g)))
                continue
        b.row(target, x_new, mode)
        t, x = target, x_new
        k += 1
        if target in spec.jumps:
            apply_jump(target)
            if n_events > cfg.max_events:
                raise EventOverflow(f"more than {cfg.max_events} events by t={target:.9g}",
                                    trajectory=b.build(meta))
    return b.build(meta)


# ---------------------------------------------------------------------------
# public solvers


def _field_rhs(field: PatchyField, density: Callable[[float, float], np.ndarray] | None):
    cache: dict[int, Rhs] = {}

    def rhs_of(mode: int) -> Rhs:
        if mode not in cache:
            g = field.patch(mode)
            if density is None:
                cache[mode] = lambda t, x, hint: g(x)
            else:
                cache[mode] = lambda t, x, hint: g(x) + density(t, hint)
        return cache[mode]

    return rhs_of


def solve_caratheodory(field: PatchyField, x0, t0: float, T: float, cfg: IntegratorConfig | None = None,
                       *, stop_when: Callable[[float, np.ndarray], bool] | None = None) -> Trajectory:
    """Forward solution of ``x' = g(x)``: switches only into strictly higher patches."""
    cfg = cfg or IntegratorConfig()
    spec = _Spec(
        rhs_of=_field_rhs(field, None),
        select=lambda t, x: field.alpha_star_or_none(x),
        is_event=lambda mode, a: a is None or a > mode,
    )
    return _engine(spec, x0, t0, T, cfg, stop_when, {"solver": "caratheodory"})


def solve_impulsive(field: PatchyField, w: BVSignal, y0, t0: float, T: float,
                    cfg: IntegratorConfig | None = None, *,
                    stop_when: Callable[[float, np.ndarray], bool] | None = None) -> Trajectory:
    """``y(t) = y0 + int g(y) + w(t) - w(t0)`` with jumps applied on ``(s, T]``.

    After a jump, or whenever the absolutely continuous drift pushes ``y``
    across a patch boundary, the index is re-selected and may decrease.
    """
    cfg = cfg or IntegratorConfig()
    if w.is_zero():
        spec = _Spec(_field_rhs(field, None), lambda t, x: field.alpha_star_or_none(x),
                     lambda mode, a: a is None or a > mode)
        return _engine(spec, y0, t0, T, cfg, stop_when, {"solver": "impulsive"})

    def jump_fn(dw):
        def apply(x, mode):
            x_new = x + dw
            return x_new, field.alpha_star_or_none(x_new)
        return apply

    spec = _Spec(
        rhs_of=_field_rhs(field, None if w.ac.is_zero() else w.density),
        select=lambda t, x: field.alpha_star_or_none(x),
        is_event=lambda mode, a: a != mode,
        jumps={float(s): jump_fn(dw) for s, dw in w.jumps if t0 <= s <= T},
        extra_breaks=w.ac.breakpoints(),
    )
    return _engine(spec, y0, t0, T, cfg, stop_when, {"solver": "impulsive"})


def solve_perturbed_feedback(fb: PatchyFeedback, zeta: BVSignal | None, d: PiecewiseSignal | None,
                             x0, T: float, cfg: IntegratorConfig | None = None, *, t0: float = 0.0,
                             stop_when: Callable[[float, np.ndarray], bool] | None = None) -> Trajectory:
    """``x' = f(x, U(x + zeta(t))) + d(t)``; ``zeta`` only moves the measured state."""
    cfg = cfg or IntegratorConfig()
    dim = np.asarray(x0).shape[0]
    zeta = zeta if zeta is not None else BVSignal.zero(dim, (t0, T))
    d = d if d is not None else PiecewiseSignal.zero(dim)
    if zeta.is_zero() and d.is_zero():
        return solve_caratheodory(fb.field, x0, t0, T, cfg, stop_when=stop_when)
    f = fb.dynamics
    cache: dict[int, Rhs] = {}
    d_zero = d.is_zero()

    def rhs_of(mode: int) -> Rhs:
        if mode not in cache:
            k = fb.control_of(mode)
            if d_zero:
                cache[mode] = lambda t, x, hint: f(x, k)
            else:
                cache[mode] = lambda t, x, hint: f(x, k) + d.value(t, hint)
        return cache[mode]

    zeta_const = zeta.ac.is_zero()
    zeta_right: dict[float, np.ndarray] = {}

    def measured(t: float, x: np.ndarray) -> np.ndarray:
        if zeta_const:
            # piecewise constant: value on (s_j, s_{j+1}] is fixed
            i = bisect.bisect_left(jump_ts, t)
            return x + zeta_levels[i]
        return x + zeta.eval_left(t)

    jump_ts = zeta.jump_times
    zeta_levels = [zeta.origin.copy()]
    for _, dw in zeta.jumps:
        zeta_levels.append(zeta_levels[-1] + dw)

    def select(t: float, x: np.ndarray) -> int | None:
        return fb.alpha_star_or_none(measured(t, x))

    def jump_fn(s: float):
        def apply(x, mode):
            return x, fb.alpha_star_or_none(x + zeta.eval_right(s))
        return apply

    for s in jump_ts:
        zeta_right[s] = zeta.eval_right(s)
    spec = _Spec(
        rhs_of=rhs_of,
        select=select,
        is_event=lambda mode, a: a != mode,
        jumps={float(s): jump_fn(s) for s in jump_ts if t0 <= s <= T},
        extra_breaks=list(zeta.ac.breakpoints()) + list(d.breakpoints()),
    )
    return _engine(spec, x0, t0, T, cfg, stop_when, {"solver": "feedback"})


def solve_sampling(fb: PatchyFeedback, plan: SamplingPlan, d: PiecewiseSignal | None, x0,
                   cfg: IntegratorConfig | None = None, *,
                   stop_when: Callable[[float, np.ndarray], bool] | None = None) -> Trajectory:
    """Sample-and-hold: on ``[tau_i, tau_{i+1}]`` the control is ``U(x(tau_i) + e_i)``.

    ``meta["measured_indices"]`` holds the sequence ``alpha*(x(tau_i) + e_i)``.
    Rows are written on a ``dt`` grid inside each interval and at every ``tau_i``.
    """
    cfg = cfg or IntegratorConfig()
    x = np.asarray(x0, dtype=float).copy()
    dim = x.shape[0]
    d = d if d is not None else PiecewiseSignal.zero(dim)
    d_breaks = d.breakpoints()
    f = fb.dynamics
    tau, errs = plan.partition, plan.errors
    b = _Builder(dim)
    measured_idx: list[int] = []
    meta: dict = {"solver": "sampling", "measured_indices": measured_idx}
    a0 = fb.alpha_star_or_none(x + errs[0])
    b.row(tau[0], x, -1 if a0 is None else a0)
    b.events.append(Event(float(tau[0]), "start", None, a0))
    prev = None
    for i in range(errs.shape[0]):
        t_i, t_next = float(tau[i]), float(tau[i + 1])
        a = fb.alpha_star_or_none(x + errs[i])
        if a is None:
            b.ev[-1] = "exit"
            b.events.append(Event(t_i, "exit", prev, None))
            meta["measured_indices"] = measured_idx
            raise OutsideDomain(f"measured state at t={t_i:.9g} is outside every patch", time=t_i,
                                state=x + errs[i], trajectory=b.build(meta))
        if prev is not None and a != prev:
            b.ev[-1] = "switch"
            b.events.append(Event(t_i, "switch", prev, a))
        if i == 0:
            b.a[0] = a
        measured_idx.append(a)
        k = fb.control_of(a)
        if d.is_zero():
            rhs: Rhs = lambda t, y, hint, k=k: f(y, k)
        else:
            rhs = lambda t, y, hint, k=k: f(y, k) + d.value(t, hint)
        cps = _checkpoints(t_i, t_next, cfg.dt, d_breaks)
        t = t_i
        for target in cps[1:]:
            h = target - t
            x_new = _rk4(rhs, t, x, h, t + 0.5 * h)
            if stop_when is not None and stop_when(target, x_new):
                lo, hi, x_hi = 0.0, h, x_new
                while hi - lo > cfg.event_tol:
                    mid = 0.5 * (lo + hi)
                    xm = _rk4(rhs, t, x, mid, t + 0.5 * h)
                    if stop_when(t + mid, xm):
                        hi, x_hi = mid, xm
                    else:
                        lo = mid
                b.row(t + hi, x_hi, a)
                meta["stopped_at"] = t + hi
                return b.build(meta)
            b.row(target, x_new, a)
            t, x = target, x_new
        prev = a
    return b.build(meta)


def solve_single_patch(patch, x0, t0: float, T: float, cfg: IntegratorConfig | None = None, *,
                       d: PiecewiseSignal | None = None,
                       stop_when: Callable[[float, np.ndarray], bool] | None = None) -> Trajectory:
    """``x' = g_a(x) + d(t)`` for one patch, ignoring every other patch and the domain boundary."""
    cfg = cfg or IntegratorConfig()
    if d is None or d.is_zero():
        rhs: Rhs = lambda t, x, hint: patch(x)
        breaks: Sequence[float] = ()
    else:
        rhs = lambda t, x, hint: patch(x) + d.value(t, hint)
        breaks = d.breakpoints()
    spec = _Spec(rhs_of=lambda mode: rhs, select=lambda t, x: patch.index,
                 is_event=lambda mode, a: False, extra_breaks=breaks)
    return _engine(spec, x0, t0, T, cfg, stop_when, {"solver": "single_patch"})


# ---------------------------------------------------------------------------
# branching enumeration at grazing contacts


def _graze_detector(field: PatchyField, cfg: IntegratorConfig, decisions: Sequence[bool],
                    counter: list[int]):
    def detect(b: _Builder, t: float, x: np.ndarray, target: float, x_new: np.ndarray,
               mode: int, rhs: Rhs):
        if len(b.t) < 2 or b.ev[-1] != "-" or b.a[-2] != mode:
            return None
        t_prev, x_prev = b.t[-2], b.x[-2]
        for patch in field.higher(mode):
            dom = patch.domain
            p0, p1, p2 = (dom.signed_distance(v) for v in (x_prev, x, x_new))
            speed = float(np.linalg.norm(rhs(t, x, t)))
            band = max(cfg.event_tol, 1e-9) * (1.0 + speed)
            if not (p1 > p0 and p1 >= p2 and p1 > -2.0 * speed * cfg.dt):
                continue

            def state(s: float) -> np.ndarray:
                if s <= t:
                    return _rk4(rhs, t_prev, x_prev, s - t_prev, t_prev + 0.5 * (t - t_prev))
                return _rk4(rhs, t, x, s - t, t + 0.5 * (target - t))

            res = minimize_scalar(lambda s: -dom.signed_distance(state(s)), bounds=(t_prev, target),
                                  method="bounded", options={"xatol": cfg.event_tol})
            t_g = float(res.x)
            x_g = state(t_g)
            peak = dom.signed_distance(x_g)
            if not -band <= peak <= 0.0:
                continue
            g = rhs(t_g, x_g, t_g)
            n = dom.outer_normal(x_g)
            if abs(float(g @ n)) / max(float(np.linalg.norm(g)), 1e-300) > cfg.graze_tol:
                continue
            j = counter[0]
            counter[0] += 1
            if j < len(decisions) and decisions[j]:
                return t_g, x_g, patch.index
        return None

    return detect


def _caratheodory_with_decisions(field: PatchyField, x0, t0: float, T: float, cfg: IntegratorConfig,
                                 decisions: Sequence[bool]) -> tuple[Trajectory, int]:
    counter = [0]
    spec = _Spec(
        rhs_of=_field_rhs(field, None),
        select=lambda t, x: field.alpha_star_or_none(x),
        is_event=lambda mode, a: a is None or a > mode,
        grazes=_graze_detector(field, cfg, decisions, counter),
    )
    traj = _engine(spec, x0, t0, T, cfg, None, {"solver": "caratheodory",
                                                "branch": [bool(v) for v in decisions]})
    return traj, counter[0]


def enumerate_solutions(field: PatchyField, x0, T: float, cfg: IntegratorConfig | None = None,
                        branch_cap: int = 64, *, t0: float = 0.0) -> list[Trajectory]:
    """Caratheodory solutions that differ by entering or skipping a grazed higher patch.

    The first entry is the canonical solution (never enter at a graze).
    Transversal crossings never branch.
    """
    cfg = cfg or IntegratorConfig()
    leaves: list[Trajectory] = []
    stack: list[list[bool]] = [[]]
    while stack:
        prefix = stack.pop(0)
        traj, n = _caratheodory_with_decisions(field, x0, t0, T, cfg, prefix)
        leaves.append(traj)
        if len(leaves) > branch_cap:
            raise BranchOverflow(f"more than {branch_cap} solutions")
        for j in range(len(prefix), n):
            stack.append(list(prefix) + [False] * (j - len(prefix)) + [True])
    return leaves


# ---------------------------------------------------------------------------
# helpers


def shift_by_signal(traj: Trajectory, zeta: BVSignal) -> Trajectory:
    """Rows of ``x + zeta``: left values on ordinary rows, right values on ``jump`` rows."""
    states = np.array([x + (zeta.eval_right(t) if ev == "jump" else zeta.eval_left(t))
                       for t, x, ev in zip(traj.times, traj.states, traj.row_events)])
    return Trajectory(traj.times.copy(), states, traj.alphas.copy(), list(traj.row_events),
                      list(traj.events), dict(traj.meta))


def sup_distance(a: Trajectory, b: Trajectory, times: Sequence[float] | None = None) -> float:
    """``sup_t |a(t) - b(t)|`` over both grids (left values, plus right values at jump rows)."""
    if times is None:
        times = np.union1d(a.times, b.times)
    t_hi = min(a.t_end, b.t_end)
    worst = 0.0
    for t in times:
        if t > t_hi:
            continue
        worst = max(worst, float(np.linalg.norm(a.value_at(t) - b.value_at(t))))
    for traj, other in ((a, b), (b, a)):
        for k, ev in enumerate(traj.row_events):
            t = float(traj.times[k])
            if ev == "jump" and t < t_hi:
                right_other = other.value_at(t + 1e-12)
                worst = max(worst, float(np.linalg.norm(traj.states[k] - right_other)))
    return worst
