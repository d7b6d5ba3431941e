import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from degrade_opt.degradation import (IDLE, MAINT, Activity, DegradationModel, InfeasibleInsertion,
                                     Schedule, crossing_probability_linear, failure_probability,
                                     failure_probability_analytic, failure_probability_mc,
                                     insert_maintenance, sample_path, schedule_from_sequence,
                                     simulate_paths)
from degrade_opt.uncertainty import build_set, nominal_set

HN = ("Heating", "Normal")
HS = ("Heating", "Slow")


def test_labels_and_overlap():
    s = Schedule(1.0, 8, {"U": [Activity(0, 3, "T", "k"), Activity(3, 2), Activity(6, 2, "T", "k")]})
    assert s.labels("U") == [("T", "k")] * 3 + [MAINT] * 2 + [IDLE] + [("T", "k")] * 2
    assert s.maintenance_count() == 1
    bad = Schedule(1.0, 5, {"U": [Activity(0, 3, "T", "k"), Activity(2, 2)]})
    with pytest.raises(ValueError):
        bad.labels("U")


def test_schedule_from_sequence(toy):
    s = schedule_from_sequence(toy, "Heater", [HN, None, MAINT, HS])
    acts = s.unit_activities("Heater")
    assert [(a.start, a.steps, a.task) for a in acts] == [(0, 6, "Heating"), (7, 2, None), (9, 9, "Heating")]
    assert s.n_steps == 18
    s.validate(toy)


def test_maintenance_duration_is_validated(toy):
    s = Schedule(1.0, 5, {"Heater": [Activity(0, 1)]})
    with pytest.raises(ValueError):
        s.validate(toy)


def test_increment_law_matches_task_totals(toy, toy_model):
    dist = toy_model.increments[("Heating", "Heater", "Normal")]
    assert dist.mean(6) == pytest.approx(11)
    assert math.sqrt(dist.var(6)) == pytest.approx(2.97)
    g = DegradationModel.from_instance(toy, "gamma").increments[("Heating", "Heater", "Normal")]
    assert g.mean(6) == pytest.approx(11)
    assert math.sqrt(g.var(6)) == pytest.approx(2.97)


def test_crossing_zero_drift_is_reflection():
    # P(max W >= b) = 2 Phi(-b / sqrt(T))
    for b, T in [(1.0, 1.0), (2.5, 4.0), (0.3, 0.1)]:
        assert crossing_probability_linear(0.0, b, T) == pytest.approx(2 * stats.norm.cdf(-b / math.sqrt(T)))


@pytest.mark.parametrize("a, b, T", [(-0.5, 1.0, 3.0), (-2.0, 4.0, 1.5), (-0.1, 0.5, 10.0)])
def test_crossing_matches_inverse_gaussian_cdf(a, b, T):
    # W_t - a t has drift nu = -a > 0; its first passage to b is IG(mean b/nu, shape b^2)
    nu = -a
    mean, shape = b / nu, b * b
    expected = stats.invgauss.cdf(T, mean / shape, scale=shape)
    assert crossing_probability_linear(a, b, T) == pytest.approx(expected, rel=1e-9)


def test_crossing_limits():
    assert crossing_probability_linear(1.0, 0.0, 1.0) == 1.0
    assert crossing_probability_linear(50.0, 5.0, 1.0) < 1e-12
    with pytest.raises(ValueError):
        crossing_probability_linear(0.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        crossing_probability_linear(0.0, 1.0, 0.0)


@given(st.floats(-3, 3), st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0.01, 5))
def test_crossing_monotone_in_horizon(a, b, t1, t2):
    lo, hi = sorted((t1, t2))
    p_lo, p_hi = crossing_probability_linear(a, b, lo), crossing_probability_linear(a, b, hi)
    assert 0.0 <= p_lo <= p_hi + 1e-12 <= 1.0 + 1e-12


def test_deterministic_path_fails_exactly_when_mean_crosses(toy, toy_model):
    m = toy_model.scaled(0.0)
    # Heater starts at 43; each Normal run adds 11: 54, 65, 76, 87 > 80
    three = schedule_from_sequence(toy, "Heater", [HN] * 3)
    four = schedule_from_sequence(toy, "Heater", [HN] * 4)
    assert failure_probability_mc(m, three, "Heater", 50, seed=0).p_f == 0.0
    assert failure_probability_mc(m, four, "Heater", 50, seed=0).p_f == 1.0
    path = sample_path(m, four, "Heater", seed=1)
    assert path.values[6] == pytest.approx(54)
    assert path.failed and path.crossing_time == pytest.approx(21.0)


def test_maintenance_resets_signal(toy, toy_model):
    s = schedule_from_sequence(toy, "Heater", [HN, HN, MAINT, HN, HN, HN])
    m = toy_model.scaled(0.0)
    vals, failed = simulate_paths(m, s, "Heater", 3, seed=0)
    assert np.all(vals[:, 14] == 0.0)
    assert vals[0, -1] == pytest.approx(33.0)
    assert not failed.any()


def test_idle_noise_is_mean_zero(toy, toy_model):
    s = schedule_from_sequence(toy, "Heater", [None] * 100)
    vals, _ = simulate_paths(toy_model, s, "Heater", 4000, seed=3)
    inc = vals[:, -1] - vals[:, 0]
    assert abs(inc.mean()) < 4 * 0.5 / math.sqrt(4000)
    assert inc.std() == pytest.approx(0.05 * 10, rel=0.05)


def test_gamma_paths_are_monotone_and_match_moments(toy):
    gm = DegradationModel.from_instance(toy, "gamma")
    s = schedule_from_sequence(toy, "Heater", [HN])
    vals, _ = simulate_paths(gm, s, "Heater", 20000, seed=5)
    assert np.all(np.diff(vals, axis=1) >= 0)
    inc = vals[:, -1] - vals[:, 0]
    assert inc.mean() == pytest.approx(11, rel=0.02)
    assert inc.std() == pytest.approx(2.97, rel=0.03)


def test_mc_is_reproducible(toy, toy_model):
    s = schedule_from_sequence(toy, "Heater", [HN] * 3)
    a = failure_probability_mc(toy_model, s, "Heater", 500, seed=11)
    b = failure_probability_mc(toy_model, s, "Heater", 500, seed=11)
    assert a == b
    assert a.stderr == pytest.approx(math.sqrt(a.p_f * (1 - a.p_f) / 500))


def test_analytic_single_segment_matches_closed_form(toy, toy_model):
    # one constant-law stretch: P(x0 + mu t + sigma W_t >= s_max) on [0, T]
    s = schedule_from_sequence(toy, "Heater", [HN] * 3)
    dist = toy_model.increments[("Heating", "Heater", "Normal")]
    T, b = 18.0, 80.0 - 43.0
    exact = crossing_probability_linear(-dist.mu / dist.sigma, b / dist.sigma, T)
    est = failure_probability_analytic(toy_model, s, "Heater", M=20000, seed=0)
    assert 0.05 < exact < 0.5
    assert abs(est.p_f - exact) <= 3 * est.stderr


def test_analytic_agrees_with_bridge_mc(toy, toy_model):
    s = schedule_from_sequence(toy, "Reactor", [("Reaction 2", "Normal"), None, ("Reaction 1", "Slow"),
                                                ("Reaction 2", "Normal"), ("Reaction 1", "Normal")] * 2)
    an = failure_probability_analytic(toy_model, s, "Reactor", M=4000, seed=1)
    mc = failure_probability_mc(toy_model, s, "Reactor", 20000, seed=2, monitor="bridge")
    assert abs(an.p_f - mc.p_f) <= 4 * math.hypot(an.stderr, mc.stderr)


def test_bridge_catches_more_than_discrete(toy, toy_model):
    s = schedule_from_sequence(toy, "Heater", [HN] * 3)
    d = failure_probability_mc(toy_model, s, "Heater", 5000, seed=4).p_f
    b = failure_probability_mc(toy_model, s, "Heater", 5000, seed=4, monitor="bridge").p_f
    assert b >= d


def test_analytic_needs_wiener(toy):
    gm = DegradationModel.from_instance(toy, "gamma")
    s = schedule_from_sequence(toy, "Heater", [HN])
    with pytest.raises(ValueError):
        failure_probability_analytic(gm, s, "Heater")
    with pytest.raises(ValueError):
        failure_probability(gm, s, "Heater", method="exact")


def test_insertion_hand_example(toy):
    # worst case at alpha = 0.5 is the nominal value; Heater budget 80 - 43 = 37 before
    # the first maintenance, 80 afterwards.  11 + 11 + 11 = 33 < 37, the 4th run would hit 44.
    s = insert_maintenance(toy, "Heater", [HN] * 9, nominal_set(toy))
    labels = [a.task or MAINT for a in s.unit_activities("Heater")]
    assert labels == ["Heating"] * 3 + [MAINT] + ["Heating"] * 6
    # 7 more runs after maintenance would give 77 < 80, the 8th 88
    s2 = insert_maintenance(toy, "Heater", [HN] * 11, nominal_set(toy))
    assert [a.task or MAINT for a in s2.unit_activities("Heater")] == (
        ["Heating"] * 3 + [MAINT] + ["Heating"] * 7 + [MAINT] + ["Heating"])


def test_insertion_is_strict(toy):
    # Heater with s_init 36: budget 44 = 4 x 11 exactly, so maintenance precedes the 4th run
    s = insert_maintenance(toy, "Heater", [HN] * 4, nominal_set(toy), s_init=36.0)
    assert s.unit_activities("Heater")[3].is_maintenance


def test_insertion_keeps_idle_and_shifts(toy):
    s = insert_maintenance(toy, "Heater", [None, HN, HN, HN, None, HN], nominal_set(toy))
    acts = s.unit_activities("Heater")
    maint = [a for a in acts if a.is_maintenance]
    assert len(maint) == 1 and maint[0].start == 20
    assert s.n_steps == 1 + 18 + 1 + 2 + 6


def test_insertion_infeasible_task(toy):
    tiny = toy.unit("Heater")
    unc = build_set(toy, 0.001)
    import dataclasses
    inst = dataclasses.replace(toy, units=(dataclasses.replace(tiny, s_max=10.0, s_init=0.0),
                                           toy.units[1]))
    with pytest.raises(InfeasibleInsertion):
        insert_maintenance(inst, "Heater", [HN], unc)


def test_insertion_rejects_maintenance_tokens(toy):
    with pytest.raises(ValueError):
        insert_maintenance(toy, "Heater", [HN, MAINT], nominal_set(toy))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.sampled_from([HN, HS, None]), min_size=1, max_size=40), st.sampled_from([0.5, 0.26, 0.1, 0.02]))
def test_insertion_keeps_worst_case_below_limit(toy, tokens, alpha):
    unc = build_set(toy, alpha)
    s = insert_maintenance(toy, "Heater", tokens, unc)
    u = toy.unit("Heater")
    level = u.s_init
    for a in s.unit_activities("Heater"):
        if a.is_maintenance:
            level = u.s_0
        else:
            level += unc.d_max((a.task, "Heater", a.mode))
            assert level < u.s_max
    assert [a for a in s.unit_activities("Heater") if not a.is_maintenance].__len__() == sum(
        t is not None for t in tokens)
