from __future__ import annotations

import itertools
import json
import math

import numpy as np
import pytest

from patchy.analyze import (
    ConvergenceTable,
    InvarianceReport,
    MonotonePartition,
    RobustnessReport,
    _cells,
    _optimal_envelope,
    check_index_monotone,
    check_prop22_budget,
    convergence_study,
    distance_to_solution_set,
    entry_time,
    invariance_checks,
    monotone_modification,
    monotone_partition,
    parallel_map,
    robustness_run,
    sampling_robustness_run,
)
from patchy.bvsignal import BVSignal, PiecewiseSignal
from patchy.errors import Inconclusive, PartitionMismatch
from patchy.geometry import ball
from patchy.integrate import IntegratorConfig, Trajectory, solve_caratheodory, solve_impulsive, sup_distance
from patchy.patchfield import FeedbackPatch, PatchyFeedback, affine_dynamics, estimate_constants


def step_traj(hist, width=0.1):
    n = len(hist)
    times = np.arange(n + 1) * width
    return Trajectory(times, np.zeros((n + 1, 2)), np.array([hist[0]] + list(hist)), ["-"] * (n + 1), [], {})


def brute_envelope(widths, hist, levels):
    best = math.inf
    for env in itertools.combinations_with_replacement(levels, len(hist)):
        if any(e > h for e, h in zip(env, hist)):
            continue
        best = min(best, sum(w for w, e, h in zip(widths, env, hist) if h > e))
    return best


def test_index_monotone_checker():
    assert check_index_monotone([1, 1, 2, 3]) == (True, None)
    assert check_index_monotone([1, 2, 1], [0.0, 0.5, 0.9]) == (False, 0.9)


def test_partition_example():
    part = monotone_partition(step_traj([1, 1, 2, 1, 2, 2]))
    assert part.excess_measure == pytest.approx(0.1)
    assert part.indices == [1, 2]
    assert part.taus == pytest.approx([0.0, 0.4, 0.6])
    assert part.level_at(0.25) == 1 and part.level_at(0.5) == 2


def test_partition_of_monotone_and_constant_histories():
    part = monotone_partition(step_traj([1, 2, 2, 3]))
    assert part.excess_measure == 0.0 and part.indices == [1, 2, 3]
    part = monotone_partition(step_traj([2, 2, 2]))
    assert part.excess_measure == 0.0 and part.indices == [2]


def test_partition_exhaustive_oracle():
    levels = [1, 2, 3]
    rng = np.random.default_rng(7)
    for n in range(1, 9):
        for hist in itertools.product(levels, repeat=n):
            widths = list(rng.uniform(0.01, 1.0, n))
            _, cost = _optimal_envelope(widths, hist, levels)
            assert cost == pytest.approx(brute_envelope(widths, hist, levels), abs=1e-12)
    for _ in range(300):
        n = int(rng.integers(9, 13))
        hist = list(rng.integers(1, 4, n))
        widths = list(rng.uniform(0.01, 1.0, n))
        env, cost = _optimal_envelope(widths, hist, levels)
        assert all(a <= b for a, b in zip(env[:-1], env[1:]))
        assert cost == pytest.approx(brute_envelope(widths, hist, levels), abs=1e-12)


@pytest.fixture(scope="module")
def s2_consts(s2):
    return estimate_constants(s2.field(), 0.1, 256)


def test_prop22_examples(s2, relocation, s2_consts):
    cfg = s2.config()
    # large jump: budget not applicable
    y = solve_impulsive(s2.field(), s2.signal("w"), s2.initial_state(), 0.0, 3.0, cfg)
    with pytest.raises(Inconclusive):
        check_prop22_budget(monotone_partition(y, s2.field()), s2.signal("w"), s2_consts)
    # small relocation jump below delta
    w = relocation.signal("w")
    y = solve_impulsive(relocation.field(), w, relocation.initial_state(), 0.0, 3.0, cfg)
    part = monotone_partition(y, relocation.field())
    assert 0.0 < part.excess_measure < s2_consts.C_big * w.total_variation()
    assert check_prop22_budget(part, w, s2_consts)
    # w = 0: the excess must vanish
    zero = BVSignal.zero(2, (0.0, 3.0))
    x = solve_caratheodory(s2.field(), s2.initial_state(), 0.0, 3.0, cfg)
    assert check_prop22_budget(monotone_partition(x, s2.field()), zero, s2_consts)


def test_modification_identity_when_monotone(s2):
    x = solve_caratheodory(s2.field(), s2.initial_state(), 0.0, 3.0, s2.config())
    zero = BVSignal.zero(2, (0.0, 3.0))
    y_mod, w_mod = monotone_modification(x, zero, monotone_partition(x, s2.field()), s2.field())
    assert y_mod is x and w_mod is zero


def test_modification_on_relocation(relocation, s2_consts):
    field, w = relocation.field(), relocation.signal("w")
    y = solve_impulsive(field, w, relocation.initial_state(), 0.0, 3.0, relocation.config())
    part = monotone_partition(y, field)
    y_mod, w_mod = monotone_modification(y, w, part, field)
    assert check_index_monotone(y_mod)[0]
    bound = (s2_consts.M + 2.0) * (part.excess_measure + w.total_variation())
    assert sup_distance(y, y_mod) <= bound
    # rows closing non-excess cells are untouched
    _, _, _, rows = _cells(y)
    for j, k in enumerate(rows):
        if part.envelope[j] == part.history[j]:
            assert np.array_equal(y_mod.states[k], y.states[k])
    assert w_mod.total_variation() < math.inf


def test_modification_rejects_foreign_partition(s2, relocation):
    field = relocation.field()
    y = solve_impulsive(field, relocation.signal("w"), relocation.initial_state(), 0.0, 3.0,
                        relocation.config())
    other = monotone_partition(step_traj([2, 1, 2]))
    with pytest.raises(PartitionMismatch):
        monotone_modification(y, relocation.signal("w"), other, field)


def test_distance_examples(s1):
    field, cfg = s1.field(), s1.config()
    w = s1.signal("w")
    y = solve_impulsive(field, w, [1.0, 0.0], 0.0, 2.0, cfg)
    assert distance_to_solution_set(y, field, cfg) == pytest.approx(0.1, abs=1e-6)
    y = solve_impulsive(field, w.scaled(0.1), [1.0, 0.0], 0.0, 2.0, cfg)
    assert distance_to_solution_set(y, field, cfg) == pytest.approx(0.01, abs=1e-6)


def test_convergence_study_s1(s1):
    table = convergence_study(s1.field(), [1.0, 0.0], [0.1, 0.01, 0.001], s1.signal("w"), s1.config())
    assert table.passed
    assert table.distance == pytest.approx([0.1, 0.01, 0.001], abs=1e-6)
    assert table.to_csv_text().splitlines()[0] == "tv,distance"
    bad = ConvergenceTable([0.1, 0.01, 0.001], [0.1, 0.2, 0.05])
    assert not bad.non_increasing and not bad.passed


def contraction_fb(radius=3.0):
    dyn = affine_dynamics(-np.eye(2), np.eye(2))
    return PatchyFeedback(dyn, [FeedbackPatch(1, ball([0.0, 0.0], radius), np.zeros(2))])


def test_robustness_single_contraction():
    grid = [[2.0, 0.0], [0.0, -1.5], [1.0, 1.0]]
    rep = robustness_run(contraction_fb(), 0.5, 2.0, 0.1, grid, [None], [None], 5.0, IntegratorConfig(dt=1e-2))
    assert rep.passed
    for o in rep.outcomes:
        assert o.t_hit == pytest.approx(math.log(np.linalg.norm(o.x0) / 0.5), abs=1e-3)
    again = RobustnessReport.from_dict(json.loads(rep.to_json()))
    assert again.to_dict() == rep.to_dict()
    assert rep.to_csv_text().splitlines()[0] == "x0_1,x0_2,reached,t_hit,monotone"


def test_robustness_failure_path():
    d = PiecewiseSignal.constant(0.0, 5.0, [3.0, 0.0])
    rep = robustness_run(contraction_fb(2.5), 0.5, 2.0, 3.0, [[2.0, 0.0]], [None], [d], 5.0,
                         IntegratorConfig(dt=1e-2))
    assert not rep.passed
    bad = rep.failing()[0]
    assert not bad.stayed_in_domain and bad.note == "OutsideDomain"


def test_robustness_budget_and_annulus_checks():
    d = PiecewiseSignal.constant(0.0, 5.0, [0.3, 0.0])
    with pytest.raises(ValueError):
        robustness_run(contraction_fb(), 0.5, 2.0, 0.1, [[2.0, 0.0]], [None], [d], 5.0)
    with pytest.raises(ValueError):
        robustness_run(contraction_fb(), 0.5, 2.0, 0.1, [[0.1, 0.0]], [None], [None], 5.0)


def test_sampling_robustness_contraction():
    def alternating(rng, i, m, bound):
        return np.array([(-1) ** i * bound, 0.0])

    grid = [[2.0, 0.0], [-1.0, 1.0]]
    rep = sampling_robustness_run(contraction_fb(), 0.5, 2.0, 0.05, 0.1, 0.5, grid, [None, alternating],
                                  [None], 5.0, IntegratorConfig(dt=1e-2), seed=3)
    assert rep.passed and len(rep.outcomes) == 4
    rep2 = sampling_robustness_run(contraction_fb(), 0.5, 2.0, 0.05, 0.1, 0.5, grid, [None, alternating],
                                   [None], 5.0, IntegratorConfig(dt=1e-2), seed=3)
    assert rep.to_dict() == rep2.to_dict()


def test_parallel_map_keeps_order(monkeypatch):
    monkeypatch.setenv("PATCHY_THREADS", "4")
    assert parallel_map(lambda v: v * v, list(range(50))) == [v * v for v in range(50)]


def test_entry_time_closed_form(s1):
    patch = s1.field().patch(1)
    # |x| shrinks like e^{-t}; signed distance 2 - |x| reaches 0.5 at |x| = 1.5
    t = entry_time(patch, [1.9, 0.0], 0.5, 5.0, IntegratorConfig(dt=1e-2))
    assert t == pytest.approx(math.log(1.9 / 1.5), abs=1e-6)


def test_invariance_checks_s1(s1):
    rep = invariance_checks(s1.field().patch(1), 0.2, 0.1, 40, 2.0, IntegratorConfig(dt=1e-2), seed=0)
    assert rep.p2_pass and rep.p3_missed == 0 and rep.passed
    d = rep.to_dict()
    assert d["passed"] and InvarianceReport(**{k: d[k] for k in (
        "rho", "chi", "p2_runs", "p2_violations", "p3_runs", "p3_max_entry", "c_transit",
        "c_transit_reseeded", "p3_missed")}).passed


def test_invariance_detects_expanding_patch():
    from patchy.patchfield import Patch

    patch = Patch(1, ball([0.0, 0.0], 2.0), lambda x: 0.5 * x)
    rep = invariance_checks(patch, 0.2, 0.0, 20, 2.0, IntegratorConfig(dt=1e-2))
    assert not rep.p2_pass and not rep.passed


def test_partition_serializes():
    part = monotone_partition(step_traj([1, 2, 1]))
    assert MonotonePartition(**json.loads(json.dumps(part.to_dict()))) == part
