from __future__ import annotations

import json
import math

import numpy as np
import pytest

from conftest import impulsive_residual
from patchy.analyze import check_index_monotone
from patchy.bvsignal import BVSignal, PiecewiseSignal, SamplingPlan, build_equivalent_w
from patchy.errors import BranchOverflow, EventOverflow, OutsideDomain
from patchy.geometry import ball
from patchy.integrate import (
    IntegratorConfig,
    Trajectory,
    enumerate_solutions,
    shift_by_signal,
    solve_caratheodory,
    solve_impulsive,
    solve_perturbed_feedback,
    solve_sampling,
    solve_single_patch,
    sup_distance,
)
from patchy.patchfield import FeedbackPatch, PatchyFeedback, affine_dynamics

T_SWITCH = math.log(5.0 / 3.0)


def s2_exact(t: float) -> np.ndarray:
    if t <= T_SWITCH:
        return np.array([2.5 * math.exp(-t), 0.0])
    return np.array([1.0 + 0.5 * math.exp(-(t - T_SWITCH)), 0.0])


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=1e-3, event_tol=1e-2)
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.0)


def test_s1_closed_form(s1):
    traj = solve_caratheodory(s1.field(), [1.0, 0.0], 0.0, 2.0, s1.config())
    assert np.allclose(traj.final_state, [math.exp(-2.0), 0.0], atol=1e-6)
    assert set(traj.alphas) == {1}
    err = max(abs(x[0] - math.exp(-t)) for t, x in zip(traj.times, traj.states))
    assert err < 1e-6


def test_outside_domain_at_start(s1):
    with pytest.raises(OutsideDomain) as info:
        solve_caratheodory(s1.field(), [3.0, 0.0], 0.0, 1.0, s1.config())
    assert info.value.time == 0.0


def test_s2_switch_time_and_values(s2):
    traj = solve_caratheodory(s2.field(), s2.initial_state(), 0.0, 3.0, s2.config())
    sw = traj.event_times(("switch",))
    assert len(sw) == 1 and sw[0] == pytest.approx(T_SWITCH, abs=1e-8)
    assert traj.index_at(0.2) == 1 and traj.index_at(1.0) == 2
    for t in (0.1, 0.4, 0.6, 1.5, 3.0):
        assert np.allclose(traj.value_at(t), s2_exact(t), atol=1e-6)


def test_rk4_order():
    from patchy.scenario import load_scenario

    field = load_scenario("S1").field()
    errs = []
    for dt in (0.2, 0.1, 0.05):
        traj = solve_caratheodory(field, [1.0, 0.0], 0.0, 2.0, IntegratorConfig(dt=dt, event_tol=1e-10))
        errs.append(abs(traj.final_state[0] - math.exp(-2.0)))
    assert errs[0] / errs[1] > 12 and errs[1] / errs[2] > 12


def test_impulsive_s1_closed_form(s1):
    w = s1.signal("w")
    traj = solve_impulsive(s1.field(), w, [1.0, 0.0], 0.0, 2.0, s1.config())
    expected = (math.exp(-1.0) + 0.1) * math.exp(-1.0)
    assert traj.final_state[0] == pytest.approx(expected, abs=1e-8)
    jumps = traj.jumps()
    assert len(jumps) == 1 and jumps[0][0] == 1.0
    assert np.allclose(traj.value_at(1.0), [math.exp(-1.0), 0.0], atol=1e-9)
    cfg = s1.config()
    assert impulsive_residual(traj, s1.field(), w) <= 10 * cfg.dt ** 4 * 2.0 + 1e-9


def test_impulsive_residual_with_ac_part(s2):
    w = BVSignal([(0.3, [0.02, 0.01])], PiecewiseSignal.constant(0.0, 3.0, [0.01, -0.01]),
                 [0.0, 0.0], (0.0, 3.0))
    cfg = s2.config()
    traj = solve_impulsive(s2.field(), w, s2.initial_state(), 0.0, 3.0, cfg)
    assert impulsive_residual(traj, s2.field(), w) <= 10 * cfg.dt ** 4 * 3.0 + 1e-9


def test_zero_w_matches_caratheodory_bitwise(s2):
    cfg = s2.config()
    a = solve_caratheodory(s2.field(), s2.initial_state(), 0.0, 3.0, cfg)
    b = solve_impulsive(s2.field(), BVSignal.zero(2, (0.0, 3.0)), s2.initial_state(), 0.0, 3.0, cfg)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.states, b.states)
    assert np.array_equal(a.alphas, b.alphas)


def test_jump_can_lower_the_index(s2):
    traj = solve_impulsive(s2.field(), s2.signal("w"), s2.initial_state(), 0.0, 3.0, s2.config())
    assert traj.index_at(1.0) == 2
    assert traj.index_at(1.5) == 1
    ok, t_bad = check_index_monotone(traj)
    assert not ok and t_bad == pytest.approx(1.427)


def _fb_u(u, radius=2.0):
    return PatchyFeedback(affine_dynamics(np.zeros((2, 2)), np.eye(2)),
                          [FeedbackPatch(1, ball([0.0, 0.0], radius), np.asarray(u, dtype=float))])


def test_feedback_zero_perturbation_reduces(s2fb):
    fb = s2fb.feedback()
    cfg = s2fb.config()
    a = solve_perturbed_feedback(fb, None, None, s2fb.initial_state(), 2.0, cfg)
    b = solve_caratheodory(fb.field, s2fb.initial_state(), 0.0, 2.0, cfg)
    assert np.array_equal(a.states, b.states)


def test_feedback_straight_line():
    fb = _fb_u([0.0, -1.0], radius=5.0)
    d = PiecewiseSignal.constant(0.0, 1.0, [0.2, 0.0])
    zeta = BVSignal([(0.5, [0.1, 0.0])], None, [0.0, 0.0], (0.0, 1.0))
    traj = solve_perturbed_feedback(fb, zeta, d, [0.0, 0.0], 1.0, IntegratorConfig(dt=1e-2))
    assert np.allclose(traj.final_state, [0.2, -1.0], atol=1e-12)
    # a measurement jump logs a row but leaves the state continuous
    assert "jump" in traj.row_events
    assert np.linalg.norm(traj.value_at(0.5) - traj.value_at(0.5 + 1e-12)) < 1e-9


def test_feedback_equivalence(s2fb):
    fb = s2fb.feedback()
    cfg = s2fb.config()
    zeta, d = s2fb.signal("zeta", (0.0, 2.0)), s2fb.density("d")
    x = solve_perturbed_feedback(fb, zeta, d, s2fb.initial_state(), 2.0, cfg)
    y = shift_by_signal(x, zeta)
    w = build_equivalent_w(y, zeta, d, fb)
    y2 = solve_impulsive(fb.field, w, y.states[0], 0.0, 2.0, cfg)
    assert sup_distance(y, y2) < 1e-5


def test_sampling_straight_line():
    fb = _fb_u([1.0, 0.0], radius=5.0)
    plan = SamplingPlan.uniform_random(0.0, 1.0, 0.1, lambda i, m: np.zeros(2), np.random.default_rng(3))
    traj = solve_sampling(fb, plan, None, [0.0, 0.0], IntegratorConfig(dt=1e-2))
    assert np.allclose(traj.final_state, [1.0, 0.0], atol=1e-12)
    assert traj.meta["measured_indices"] == [1] * (len(plan.partition) - 1)


def test_sampling_close_to_continuous(s2fb):
    fb = s2fb.feedback()
    cfg = s2fb.config()
    plan = SamplingPlan.uniform_random(0.0, 2.0, 0.05, lambda i, m: np.zeros(2), np.random.default_rng(0))
    a = solve_sampling(fb, plan, None, s2fb.initial_state(), cfg)
    b = solve_caratheodory(fb.field, s2fb.initial_state(), 0.0, 2.0, cfg)
    assert sup_distance(a, b) <= 0.2


def test_sampling_collapses_as_delta_shrinks(s2fb):
    fb = s2fb.feedback()
    cfg = IntegratorConfig(dt=1e-3, event_tol=1e-10)
    ref = solve_caratheodory(fb.field, s2fb.initial_state(), 0.0, 2.0, cfg)
    dists = []
    for delta in (0.1, 0.01, 0.002):
        plan = SamplingPlan.uniform_random(0.0, 2.0, delta, lambda i, m: np.zeros(2), np.random.default_rng(1))
        dists.append(sup_distance(solve_sampling(fb, plan, None, s2fb.initial_state(), cfg), ref))
    assert dists[0] > dists[1] > dists[2]
    assert dists[2] < 5e-3


def test_sampling_exit_raises():
    fb = _fb_u([1.0, 0.0], radius=1.0)
    plan = SamplingPlan(np.linspace(0.0, 2.0, 21), np.zeros((20, 2)), 0.1)
    with pytest.raises(OutsideDomain) as info:
        solve_sampling(fb, plan, None, [0.0, 0.0], IntegratorConfig(dt=1e-2))
    assert info.value.trajectory is not None and info.value.time == pytest.approx(1.0)


def test_single_patch_ignores_other_patches(s2):
    p1 = s2.field().patch(1)
    traj = solve_single_patch(p1, [2.5, 0.0], 0.0, 1.0, s2.config())
    assert traj.final_state[0] == pytest.approx(2.5 * math.exp(-1.0), abs=1e-9)
    assert not traj.event_times()


def test_enumeration_counts(s1, s2, tangency):
    assert len(enumerate_solutions(s1.field(), [1.0, 0.0], 2.0, s1.config())) == 1
    assert len(enumerate_solutions(s2.field(), s2.initial_state(), 3.0, s2.config())) == 1
    sols = enumerate_solutions(tangency.field(), tangency.initial_state(), tangency.horizon(), tangency.config())
    assert len(sols) == 2
    assert set(sols[0].alphas) == {1}
    assert 2 in set(sols[1].alphas)
    with pytest.raises(BranchOverflow):
        enumerate_solutions(tangency.field(), tangency.initial_state(), tangency.horizon(),
                            tangency.config(), branch_cap=1)


def test_event_overflow():
    # opposing controls across the boundary of patch 2: the feedback loop chatters
    dyn = affine_dynamics(np.zeros((2, 2)), np.eye(2))
    fb = PatchyFeedback(dyn, [FeedbackPatch(1, ball([0.0, 0.0], 3.0), np.array([1.0, 0.0])),
                              FeedbackPatch(2, ball([1.0, 0.0], 0.5), np.array([-1.0, 0.0]))])
    d = PiecewiseSignal.constant(0.0, 2.0, [0.0, 1e-6])
    cfg = IntegratorConfig(dt=1e-3, event_tol=1e-10, max_events=50)
    with pytest.raises(EventOverflow) as info:
        solve_perturbed_feedback(fb, None, d, [0.0, 0.0], 2.0, cfg)
    assert info.value.trajectory is not None


def test_serialization_roundtrip(s2):
    traj = solve_impulsive(s2.field(), s2.signal("w"), s2.initial_state(), 0.0, 3.0, IntegratorConfig(dt=1e-2))
    again = Trajectory.from_dict(json.loads(traj.to_json()))
    assert np.array_equal(again.states, traj.states) and again.row_events == traj.row_events
    lines = traj.to_csv_text().splitlines()
    assert lines[0] == "t,x1,x2,alpha,event"
    assert len(lines) == len(traj) + 1
    row = lines[-1].split(",")
    assert float(row[1]) == traj.final_state[0]
    assert any(line.endswith(",jump") for line in lines)


def test_caratheodory_index_nondecreasing(s2, s3):
    traj = solve_caratheodory(s2.field(), s2.initial_state(), 0.0, 3.0, s2.config())
    assert check_index_monotone(traj)[0]
    field = s3.field()
    for x0 in ([1.9, 0.0], [0.0, -1.5], [-1.2, 0.8]):
        traj = solve_caratheodory(field, x0, 0.0, 15.0, s3.config())
        assert check_index_monotone(traj)[0]
