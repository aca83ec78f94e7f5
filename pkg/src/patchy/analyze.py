"""Executable checks: monotone partitions and modifications, convergence, robustness and invariance."""

from __future__ import annotations

import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bvsignal import BVSignal, Piece, PiecewiseSignal, SamplingPlan
from .errors import EventOverflow, Inconclusive, OutsideDomain, PartitionMismatch
from .geometry import halton_points
from .integrate import (
    IntegratorConfig,
    Trajectory,
    enumerate_solutions,
    solve_impulsive,
    solve_perturbed_feedback,
    solve_sampling,
    solve_single_patch,
    sup_distance,
)
from .patchfield import Patch, PatchyFeedback, PatchyField, RobustnessConstants

__all__ = [
    "worker_count",
    "parallel_map",
    "check_index_monotone",
    "MonotonePartition",
    "monotone_partition",
    "check_prop22_budget",
    "monotone_modification",
    "distance_to_solution_set",
    "ConvergenceTable",
    "convergence_study",
    "CellOutcome",
    "RobustnessReport",
    "robustness_run",
    "sampling_robustness_run",
    "InvarianceReport",
    "entry_time",
    "invariance_checks",
]


# ---------------------------------------------------------------------------
# batch plumbing


def worker_count() -> int:
    raw = os.environ.get("PATCHY_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Ordered map over ``items``; uses ``PATCHY_THREADS`` workers."""
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# index monotonicity and monotone partitions


def check_index_monotone(traj: Trajectory | Sequence[int],
                         times: Sequence[float] | None = None) -> tuple[bool, float | None]:
    """``(True, None)`` if the index history never decreases, else ``(False, first drop time)``."""
    if isinstance(traj, Trajectory):
        alphas, times = traj.alphas, traj.times
    else:
        alphas = list(traj)
        times = list(range(len(alphas))) if times is None else times
    for k in range(1, len(alphas)):
        if alphas[k] < alphas[k - 1]:
            return False, float(times[k])
    return True, None


@dataclass
class MonotonePartition:
    """Monotone envelope of an index history.

    ``taus`` and ``indices`` give the intervals ``(tau_i, tau_{i+1}]`` and
    their levels; the cell arrays hold the grid the envelope was fitted on.
    """

    taus: list[float]
    indices: list[int]
    excess_measure: float
    cell_start: list[float] = field(default_factory=list)
    cell_end: list[float] = field(default_factory=list)
    history: list[int] = field(default_factory=list)
    envelope: list[int] = field(default_factory=list)

    def level_at(self, t: float) -> int:
        for a, b, lev in zip(self.taus[:-1], self.taus[1:], self.indices):
            if t <= b:
                return lev
        return self.indices[-1]

    def to_dict(self) -> dict:
        return asdict(self)


def _cells(traj: Trajectory) -> tuple[list[float], list[float], list[int], list[int]]:
    starts, ends, hist, rows = [], [], [], []
    for k in range(1, len(traj)):
        a, b = float(traj.times[k - 1]), float(traj.times[k])
        if b > a:
            starts.append(a)
            ends.append(b)
            hist.append(int(traj.alphas[k]))
            rows.append(k)
    return starts, ends, hist, rows


def _optimal_envelope(widths: Sequence[float], hist: Sequence[int],
                      levels: Sequence[int]) -> tuple[list[int], float]:
    """Non-decreasing ``env <= hist`` (values in ``levels``) minimizing the width where ``env < hist``."""
    L = len(levels)
    inf = math.inf
    n = len(hist)
    cost = [[inf] * L for _ in range(n)]
    back = [[-1] * L for _ in range(n)]
    for j in range(n):
        if j == 0:
            best = [0.0] * L
            arg = [-1] * L
        else:
            # prefix minimum over predecessor levels; ties go to the larger level
            best, arg = [inf] * L, [-1] * L
            run, run_arg = inf, -1
            for l in range(L):
                if cost[j - 1][l] <= run:
                    run, run_arg = cost[j - 1][l], l
                best[l], arg[l] = run, run_arg
        for l, lev in enumerate(levels):
            if lev > hist[j] or best[l] == inf:
                continue
            cost[j][l] = best[l] + (widths[j] if hist[j] > lev else 0.0)
            back[j][l] = arg[l]
    if n == 0:
        return [], 0.0
    last = min(range(L), key=lambda l: (cost[n - 1][l], -l))
    total = cost[n - 1][last]
    env = [0] * n
    l = last
    for j in range(n - 1, -1, -1):
        env[j] = levels[l]
        l = back[j][l]
    return env, float(total)


def monotone_partition(traj: Trajectory, field: PatchyField | None = None,
                       levels: Sequence[int] | None = None) -> MonotonePartition:
    """Optimal monotone partition of the recorded index history (dynamic program over grid cells)."""
    starts, ends, hist, _ = _cells(traj)
    if levels is None:
        levels = field.indices if field is not None else sorted(set(hist))
    levels = sorted(levels)
    if not hist:
        lev = int(traj.alphas[0])
        return MonotonePartition([traj.t0, traj.t_end], [lev], 0.0)
    widths = [b - a for a, b in zip(starts, ends)]
    env, excess = _optimal_envelope(widths, hist, levels)
    taus = [starts[0]]
    idx = [env[0]]
    for j in range(1, len(env)):
        if env[j] != env[j - 1]:
            taus.append(starts[j])
            idx.append(env[j])
    taus.append(ends[-1])
    return MonotonePartition(taus, idx, excess, starts, ends, hist, env)


def check_prop22_budget(part: MonotonePartition, w: BVSignal, consts: RobustnessConstants) -> bool:
    """``excess < C * TV(w)``; raises :class:`Inconclusive` when ``TV(w) >= delta``."""
    tv = w.total_variation()
    if tv >= consts.delta:
        raise Inconclusive(f"TV(w) = {tv:.6g} is not below delta = {consts.delta:.6g}")
    if tv == 0.0:
        return part.excess_measure == 0.0
    return part.excess_measure < consts.C_big * tv


def _row_levels(traj: Trajectory, part: MonotonePartition) -> tuple[list[int], list[int]]:
    """Envelope level and partition-interval id for every row."""
    cell_of_row: dict[int, int] = {}
    _, _, _, rows = _cells(traj)
    for j, k in enumerate(rows):
        cell_of_row[k] = j
    interval = [0]
    for j in range(1, len(part.envelope)):
        interval.append(interval[-1] + (part.envelope[j] != part.envelope[j - 1]))
    n = len(traj)
    levels, ids = [0] * n, [0] * n
    for k in range(n):
        if k in cell_of_row:
            j = cell_of_row[k]
        elif traj.row_events[k] == "jump":
            # right value: belongs to the cell that starts here
            j = next((cell_of_row[m] for m in range(k + 1, n) if m in cell_of_row), None)
            if j is None:
                j = max((cell_of_row[m] for m in range(k) if m in cell_of_row), default=0)
        else:
            j = next((cell_of_row[m] for m in range(k + 1, n) if m in cell_of_row), 0)
        levels[k] = part.envelope[j]
        ids[k] = interval[j]
    return levels, ids


def monotone_modification(y: Trajectory, w: BVSignal, part: MonotonePartition,
                          field: PatchyField) -> tuple[Trajectory, BVSignal]:
    """Freeze ``y`` during excursions above the envelope so the selected index becomes monotone.

    On a partition interval with level ``a``, rows whose state is not
    selected by ``a`` take the last earlier state selected by ``a`` (or the
    first later one if the excursion precedes it).  An interval with no such
    state copies the first value of the next interval.  The companion
    signal is ``w = y - int g(y)`` on the row grid.
    """
    if part.excess_measure == 0.0:
        return y, w
    starts, ends, hist, _ = _cells(y)
    if hist != list(part.history) or len(part.envelope) != len(hist):
        raise PartitionMismatch("partition was not computed from this trajectory")
    if any(e > h for e, h in zip(part.envelope, hist)):
        raise PartitionMismatch("envelope exceeds the recorded index history")
    levels, ids = _row_levels(y, part)
    n = len(y)
    sel = [field.alpha_star_or_none(x) for x in y.states]
    good = [sel[k] == levels[k] for k in range(n)]
    new = [None] * n
    last_id = ids[-1]
    for iid in range(last_id, -1, -1):
        rows = [k for k in range(n) if ids[k] == iid]
        good_rows = [k for k in rows if good[k]]
        for k in rows:
            if good[k]:
                new[k] = y.states[k].copy()
                continue
            before = [m for m in good_rows if m < k]
            after = [m for m in good_rows if m > k]
            if before:
                new[k] = y.states[before[-1]].copy()
            elif after:
                new[k] = y.states[after[0]].copy()
            elif iid < last_id:
                first_next = min(m for m in range(n) if ids[m] == iid + 1)
                new[k] = new[first_next].copy()
            else:
                new[k] = y.states[k].copy()
    states = np.array(new)
    alphas = np.array([field.alpha_star(x) for x in states], dtype=int)
    y_mod = Trajectory(y.times.copy(), states, alphas, list(y.row_events), list(y.events),
                       {**y.meta, "modified": True})

    # w = y - int g(y) on the row grid (trapezoid), as jumps plus per-cell constant densities
    g = [field.eval(x) for x in states]
    W = [states[0].copy()]
    Q = np.zeros(y.dim)
    jumps, pieces = [], []
    for k in range(1, n):
        t_a, t_b = float(y.times[k - 1]), float(y.times[k])
        if t_b > t_a:
            Q = Q + 0.5 * (t_b - t_a) * (g[k - 1] + g[k])
            W.append(states[k] - Q)
            rate = (W[-1] - W[-2]) / (t_b - t_a)
            if np.any(rate != 0.0):
                pieces.append(Piece(t_a, t_b, "constant", {"value": rate.tolist()}))
        else:
            W.append(states[k] - Q)
            jumps.append((t_b, W[-1] - W[-2]))
    w_mod = BVSignal(jumps, PiecewiseSignal(pieces, y.dim), W[0], (float(y.times[0]), float(y.times[-1])))
    return y_mod, w_mod


# ---------------------------------------------------------------------------
# distance to the solution set and convergence


def distance_to_solution_set(y: Trajectory, field: PatchyField, cfg: IntegratorConfig | None = None,
                             branch_cap: int = 64) -> float:
    """``min`` over enumerated solutions ``x`` from ``y(0)`` of ``sup_t |x(t) - y(t)|``."""
    sols = enumerate_solutions(field, y.states[0], y.t_end, cfg, branch_cap, t0=y.t0)
    return min(sup_distance(x, y) for x in sols)


@dataclass
class ConvergenceTable:
    tv: list[float]
    distance: list[float]
    slack: float = 0.1

    @property
    def non_increasing(self) -> bool:
        return all(b <= (1.0 + self.slack) * a + 1e-9
                   for a, b in zip(self.distance[:-1], self.distance[1:]))

    @property
    def contracts(self) -> bool:
        if len(self.tv) < 2 or self.tv[-1] > self.tv[0] / 100.0 or self.tv[0] == 0:
            return True
        return self.distance[-1] < self.distance[0] / 10.0

    @property
    def passed(self) -> bool:
        return self.non_increasing and self.contracts

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("tv,distance\n")
        for a, b in zip(self.tv, self.distance):
            buf.write(f"{a!r},{b!r}\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"tv": self.tv, "distance": self.distance, "slack": self.slack,
                "non_increasing": self.non_increasing, "contracts": self.contracts,
                "passed": self.passed}


def convergence_study(field: PatchyField, x0, tv_sequence: Sequence[float], jump_profile: BVSignal,
                      cfg: IntegratorConfig | None = None, *, branch_cap: int = 64) -> ConvergenceTable:
    """Scale ``jump_profile`` to each total variation, solve impulsively, measure the distance."""
    cfg = cfg or IntegratorConfig()
    base = jump_profile.total_variation()
    if base <= 0:
        raise ValueError("jump_profile must have positive total variation")
    t0, T = jump_profile.span

    def cell(tv: float) -> float:
        w = jump_profile.scaled(tv / base)
        y = solve_impulsive(field, w, x0, t0, T, cfg)
        return distance_to_solution_set(y, field, cfg, branch_cap)

    tvs = [float(v) for v in tv_sequence]
    return ConvergenceTable(tvs, [float(d) for d in parallel_map(cell, tvs)])


# ---------------------------------------------------------------------------
# robustness experiments


@dataclass
class CellOutcome:
    x0: list[float]
    reached_target: bool
    t_hit: float | None
    stayed_in_domain: bool
    index_monotone: bool
    variant: int = 0
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.reached_target and self.stayed_in_domain


@dataclass
class RobustnessReport:
    scenario: str
    outcomes: list[CellOutcome]
    budgets: dict
    require_monotone: bool = False

    @property
    def passed(self) -> bool:
        return all(o.ok and (o.index_monotone or not self.require_monotone) for o in self.outcomes)

    def failing(self) -> list[CellOutcome]:
        return [o for o in self.outcomes
                if not (o.ok and (o.index_monotone or not self.require_monotone))]

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "pass": self.passed, "budgets": self.budgets,
                "require_monotone": self.require_monotone,
                "outcomes": [asdict(o) for o in self.outcomes]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> RobustnessReport:
        return cls(d["scenario"], [CellOutcome(**o) for o in d["outcomes"]], d["budgets"],
                   d.get("require_monotone", False))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        dim = len(self.outcomes[0].x0) if self.outcomes else 0
        buf.write(",".join([f"x0_{i + 1}" for i in range(dim)] + ["reached", "t_hit", "monotone"]) + "\n")
        for o in self.outcomes:
            t_hit = "" if o.t_hit is None else repr(float(o.t_hit))
            buf.write(",".join([repr(float(v)) for v in o.x0]
                               + [str(int(o.reached_target)), t_hit, str(int(o.index_monotone))]) + "\n")
        return buf.getvalue()


def _check_annulus(grid: np.ndarray, r: float, s: float) -> None:
    if not r < s:
        raise ValueError("need r < s")
    for x0 in grid:
        rad = float(np.linalg.norm(x0))
        if not r - 1e-12 <= rad <= s + 1e-12:
            raise ValueError(f"initial state {list(x0)} is outside the annulus [{r}, {s}]")


def _sup_norm(d: PiecewiseSignal | None, span: tuple[float, float]) -> float:
    return 0.0 if d is None or d.is_zero() else d.sup_norm(*span)


def _broadcast(a: Sequence, b: Sequence) -> list[tuple]:
    a, b = list(a) or [None], list(b) or [None]
    if len(a) == 1:
        a = a * len(b)
    if len(b) == 1:
        b = b * len(a)
    if len(a) != len(b):
        raise ValueError("perturbation families must have equal length or length 1")
    return list(zip(a, b))


def robustness_run(fb: PatchyFeedback, r: float, s: float, chi: float, initial_grid,
                   zeta_family: Sequence[BVSignal | None], d_family: Sequence[PiecewiseSignal | None],
                   T: float, cfg: IntegratorConfig | None = None, *, scenario: str = "") -> RobustnessReport:
    """Perturbed closed-loop runs: does every cell reach ``|x| < r`` before ``T`` without leaving the domain?"""
    cfg = cfg or IntegratorConfig()
    grid = np.atleast_2d(np.asarray(initial_grid, dtype=float))
    _check_annulus(grid, r, s)
    pairs = _broadcast(zeta_family, d_family)
    for z, d in pairs:
        if z is not None and z.total_variation() > chi * (1 + 1e-12):
            raise ValueError("a measurement error exceeds the total-variation budget chi")
        if _sup_norm(d, (0.0, T)) > chi * (1 + 1e-12):
            raise ValueError("a disturbance exceeds the sup-norm budget chi")
    stop = lambda t, x: float(np.linalg.norm(x)) < r  # noqa: E731
    cells = [(x0, v, z, d) for x0 in grid for v, (z, d) in enumerate(pairs)]

    def run(cell) -> CellOutcome:
        x0, v, z, d = cell
        try:
            traj = solve_perturbed_feedback(fb, z, d, x0, T, cfg, stop_when=stop)
        except (OutsideDomain, EventOverflow) as exc:
            part = exc.trajectory
            mono = check_index_monotone(part)[0] if part is not None and len(part) else True
            return CellOutcome(x0.tolist(), False, None, False, mono, v, type(exc).__name__)
        t_hit = traj.meta.get("stopped_at")
        return CellOutcome(x0.tolist(), t_hit is not None and t_hit < T, t_hit, True,
                           check_index_monotone(traj)[0], v)

    outcomes = parallel_map(run, cells)
    return RobustnessReport(scenario, outcomes, {"chi": chi, "r": r, "s": s, "T": T})


def sampling_robustness_run(fb: PatchyFeedback, r: float, s: float, chi: float, delta: float,
                            k_bar: float, initial_grid, error_family: Sequence[Callable],
                            d_family: Sequence[PiecewiseSignal | None], T: float,
                            cfg: IntegratorConfig | None = None, *, seed: int = 0,
                            scenario: str = "") -> RobustnessReport:
    """Sample-and-hold runs on seeded random partitions.

    Each member of ``error_family`` is called as ``fn(rng, i, m, bound)``
    and returns the measurement error of interval ``i`` of ``m``; ``bound``
    is ``k_bar * delta``.  A cell passes if it reaches ``|x| < r`` before
    ``T``, never measures outside the domain, and its measured index
    sequence never decreases.
    """
    cfg = cfg or IntegratorConfig()
    grid = np.atleast_2d(np.asarray(initial_grid, dtype=float))
    _check_annulus(grid, r, s)
    pairs = _broadcast(error_family, d_family)
    for _, d in pairs:
        if _sup_norm(d, (0.0, T)) > chi * (1 + 1e-12):
            raise ValueError("a disturbance exceeds the sup-norm budget chi")
    bound = k_bar * delta
    stop = lambda t, x: float(np.linalg.norm(x)) < r  # noqa: E731
    cells = [(c, x0, v, e, d) for c, (x0, (v, (e, d))) in
             enumerate((x0, vp) for x0 in grid for vp in enumerate(pairs))]

    def run(cell) -> CellOutcome:
        c, x0, v, efn, d = cell
        rng = np.random.default_rng([seed, c])
        if efn is None:
            errors_fn = lambda i, m: np.zeros(grid.shape[1])  # noqa: E731
        else:
            errors_fn = lambda i, m: np.asarray(efn(rng, i, m, bound), dtype=float)  # noqa: E731
        plan = SamplingPlan.uniform_random(0.0, T, delta, errors_fn, rng, k_bar)
        try:
            traj = solve_sampling(fb, plan, d, x0, cfg, stop_when=stop)
        except (OutsideDomain, EventOverflow) as exc:
            seq = (exc.trajectory.meta.get("measured_indices", []) if exc.trajectory is not None else [])
            return CellOutcome(x0.tolist(), False, None, False, check_index_monotone(seq)[0], v,
                               type(exc).__name__)
        seq = traj.meta["measured_indices"]
        t_hit = traj.meta.get("stopped_at")
        return CellOutcome(x0.tolist(), t_hit is not None and t_hit < T, t_hit, True,
                           check_index_monotone(seq)[0], v)

    outcomes = parallel_map(run, cells)
    return RobustnessReport(scenario, outcomes,
                            {"chi": chi, "delta": delta, "k_bar": k_bar, "r": r, "s": s, "T": T},
                            require_monotone=True)


# ---------------------------------------------------------------------------
# positive invariance and transit into deeper insets


@dataclass
class InvarianceReport:
    rho: float
    chi: float
    p2_runs: int
    p2_violations: list[list[float]]
    p3_runs: int
    p3_max_entry: float
    c_transit: float
    c_transit_reseeded: float
    p3_missed: int

    @property
    def p2_pass(self) -> bool:
        return not self.p2_violations

    @property
    def p3_stable(self) -> bool:
        if self.c_transit == 0.0:
            return self.c_transit_reseeded == 0.0
        return abs(self.c_transit_reseeded - self.c_transit) <= 0.2 * self.c_transit

    @property
    def passed(self) -> bool:
        return self.p2_pass and self.p3_missed == 0 and self.p3_stable

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(p2_pass=self.p2_pass, p3_stable=self.p3_stable, passed=self.passed)
        return d


def entry_time(patch: Patch, x0, depth: float, T: float, cfg: IntegratorConfig | None = None,
               d: PiecewiseSignal | None = None) -> float | None:
    """First time the single-patch flow reaches ``signed_distance >= depth`` (``None`` if not by ``T``)."""
    dom = patch.domain
    if dom.signed_distance(x0) >= depth:
        return 0.0
    traj = solve_single_patch(patch, x0, 0.0, T, cfg, d=d,
                              stop_when=lambda t, x: dom.signed_distance(x) >= depth)
    return traj.meta.get("stopped_at")


def _random_disturbance(rng: np.random.Generator, dim: int, chi: float, T: float,
                        n_pieces: int = 4) -> PiecewiseSignal:
    cuts = np.linspace(0.0, T, n_pieces + 1)
    pieces = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        v = rng.normal(size=dim)
        v *= chi * rng.random() / max(float(np.linalg.norm(v)), 1e-300)
        pieces.append(Piece(float(a), float(b), "constant", {"value": v.tolist()}))
    return PiecewiseSignal(pieces, dim)


def _inset_samples(patch: Patch, rho: float, n: int, rng: np.random.Generator) -> np.ndarray:
    dom = patch.domain
    dim = dom.dim
    shift = rng.random(dim)
    cube = (halton_points(dim, 16 * n + 64) + shift) % 1.0
    pts = dom.center + (2.0 * cube - 1.0) * dom.bounding_radius
    keep = [p for p in pts if dom.signed_distance(p) >= rho]
    return np.array(keep[:n])


def _collar_samples(patch: Patch, rho: float, n: int, rng: np.random.Generator) -> np.ndarray:
    dom = patch.domain
    pts = dom.boundary_samples(max(n, 8))
    pick = rng.choice(len(pts), size=n, replace=len(pts) < n)
    out = []
    for i in pick:
        p = pts[i]
        nrm = dom.outer_normal(p)
        out.append(p - rng.uniform(0.0, rho) * nrm)
    return np.array(out)


def invariance_checks(patch: Patch, rho: float, chi: float, sample_budget: int, T: float,
                      cfg: IntegratorConfig | None = None, *, seed: int = 0) -> InvarianceReport:
    """Sampled checks that ``Omega^rho`` is invariant and that the ``rho`` collar drains into ``Omega^{2 rho}``.

    Disturbances are piecewise constant with ``|d| <= chi``.  The transit
    constant is the longest observed entry time divided by ``rho``; it is
    recomputed with a second seed to check stability.
    """
    cfg = cfg or IntegratorConfig()
    dom = patch.domain
    dim = dom.dim
    rng = np.random.default_rng(seed)
    starts = _inset_samples(patch, rho, sample_budget, rng)
    tol = 1e-9

    def p2(x0):
        d = _random_disturbance(rng_for(x0), dim, chi, T) if chi > 0 else None
        traj = solve_single_patch(patch, x0, 0.0, T, cfg, d=d)
        if rho == 0.0:
            ok = all(dom.contains(x) for x in traj.states)
        else:
            ok = all(dom.signed_distance(x) >= rho - tol for x in traj.states)
        return None if ok else [float(v) for v in x0]

    def rng_for(x0) -> np.random.Generator:
        key = [seed] + [int(abs(v) * 1e9) % (2**31) for v in x0]
        return np.random.default_rng(key)

    violations = [v for v in parallel_map(p2, list(starts)) if v is not None]

    def transit(seed_k: int) -> tuple[float, int, int]:
        if rho == 0.0:
            return 0.0, 0, 0
        r2 = np.random.default_rng(seed_k)
        pts = _collar_samples(patch, rho, sample_budget, r2)

        def one(x0):
            d = _random_disturbance(rng_for(x0), dim, chi, T) if chi > 0 else None
            return entry_time(patch, x0, 2.0 * rho, T, cfg, d)

        times = parallel_map(one, list(pts))
        missed = sum(t is None for t in times)
        worst = max((t for t in times if t is not None), default=0.0)
        return worst, missed, len(times)

    worst, missed, n3 = transit(seed + 1)
    worst_b, missed_b, _ = transit(seed + 2)
    c_est = worst / rho if rho > 0 else 0.0
    c_est_b = worst_b / rho if rho > 0 else 0.0
    return InvarianceReport(rho, chi, len(starts), violations, n3, worst, c_est, c_est_b,
                            missed + missed_b)
