import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikegrasp.env import GeometryFeatures
from spikegrasp.reward import (
    STAGE_ONE,
    STAGE_TWO,
    CurriculumSchedule,
    DeadZoneParams,
    DeadZoneTracker,
    RewardScales,
    RewardWeightSet,
    deadzone_update,
    grip_geom_reward,
    pose_reward_and_penalty,
    prox_align_reward,
    schedule_weights,
    task_reward,
    total_reward,
    verticality,
)

S = RewardScales()
IDENT = np.array([0.0, 0.0, 0.0, 1.0])
dist = st.floats(0.0, 2.0, allow_nan=False)


def geom(n=1, **over):
    base = {name: np.zeros(n) for name in GeometryFeatures.names()}
    base["g"] = np.full(n, 0.054)
    base["g_opt"] = np.full(n, 0.054)
    base["nu_z"] = np.ones(n)
    base["grasped"] = np.zeros(n, dtype=bool)
    for k, v in over.items():
        base[k] = np.broadcast_to(np.asarray(v), (n,)).copy()
    base["quat"] = np.tile(IDENT, (n, 1))
    return GeometryFeatures(**base)


def only(**w):
    full = {"alpha": np.zeros(4), "beta": np.zeros(3), "gamma": np.array(0.0), "delta": np.zeros(2)}
    full.update({k: np.asarray(v, dtype=float) for k, v in w.items()})
    return RewardWeightSet(**full)


def test_prox_align_examples():
    w = STAGE_TWO
    assert prox_align_reward(geom(), w, S)[0] == pytest.approx(w.alpha.sum())
    far = geom(d=1e3, d_lf=1e3, d_rf=1e3, d_align=1e3, d_mid=1e3, dx=1e3, dy=1e3)
    assert prox_align_reward(far, w, S)[0] == pytest.approx(0.0, abs=1e-12)
    g = geom(d=0.3, d_lf=0.3, d_rf=0.3)
    assert prox_align_reward(g, only(alpha=[1, 0, 0, 0]), S)[0] == pytest.approx(1 - np.tanh(0.9))


def test_grip_geom_examples():
    w = STAGE_TWO
    assert grip_geom_reward(geom(), w, S)[0] == pytest.approx(w.beta.sum())
    assert grip_geom_reward(geom(g=1e3), only(beta=[0, 0, 1]), S)[0] == pytest.approx(0.0, abs=1e-12)
    s10 = RewardScales(xi=(20.0, 20.0, 10.0))
    assert grip_geom_reward(geom(g=0.154), only(beta=[0, 0, 1]), s10)[0] == pytest.approx(np.exp(-1.0))


def test_task_reward_examples():
    assert task_reward([False], 1.0, 10.0)[0] == 0.0
    assert task_reward([True], 1.0, 10.0)[0] == 10.0
    assert task_reward([True], 0.0, 10.0)[0] == 0.0


def test_pose_examples():
    w = only(delta=[0.3, 0.2])
    r, p = pose_reward_and_penalty(geom(), IDENT, w, S)
    assert r[0] == pytest.approx(0.5) and p[0] == 0.0
    assert verticality(IDENT) == 1.0
    tilt = np.array([np.sin(np.pi / 4), 0.0, 0.0, np.cos(np.pi / 4)])  # 90 degrees about x
    s = RewardScales(vartheta=(10.0, 0.5, 1.0), penalty_scale=1.0)
    _, p = pose_reward_and_penalty(geom(), tilt, w, s)
    assert verticality(tilt) == pytest.approx(0.0, abs=1e-12)
    assert p[0] == pytest.approx(-1.0)


def test_pose_rejects_non_unit_quaternion():
    with pytest.raises(ValueError):
        pose_reward_and_penalty(geom(), np.array([0.0, 0.0, 0.0, 1.1]), STAGE_TWO, S)


def test_total_examples():
    zero = only()
    t, _ = total_reward(geom(), zero, S)
    assert t[0] == 0.0
    w = STAGE_TWO
    t, parts = total_reward(geom(grasped=True), w, S)
    expected = w.alpha.sum() + w.beta.sum() + float(w.gamma) * S.success + w.delta.sum()
    assert abs(t[0] - expected) < 1e-9
    assert parts["pose_penalty"][0] == 0.0


def test_weights_must_be_nonnegative():
    with pytest.raises(ValueError):
        only(alpha=[-1, 0, 0, 0])
    with pytest.raises(ValueError):
        RewardScales(kappa=(0.0, 1.0, 1.0, 1.0))


@given(dist, dist, st.floats(0.0, 1.0))
def test_decay_terms_monotone_and_bounded(a, b, weight):
    lo, hi = min(a, b), max(a, b)
    w = only(alpha=[0, weight, 0, 0])
    r_lo = prox_align_reward(geom(d_align=lo), w, S)[0]
    r_hi = prox_align_reward(geom(d_align=hi), w, S)[0]
    assert 0.0 <= r_hi <= r_lo <= weight
    if hi > lo + 1e-6 and weight > 0 and hi < 1.0:
        assert r_hi < r_lo


@given(
    st.lists(dist, min_size=12, max_size=12),
    st.floats(0.0, 0.1),
    st.booleans(),
    st.floats(-np.pi, np.pi),
)
def test_breakdown_sums_and_bounded(ds, g, grasped, tilt):
    q = np.array([np.sin(tilt / 2), 0.0, 0.0, np.cos(tilt / 2)])
    names = ["d", "d_lf", "d_rf", "d_align", "d_mid", "dx", "dy", "z_lf", "z_rf", "z_mid", "z_cube", "eps_xy"]
    gm = geom(g=g, grasped=grasped, **dict(zip(names, ds)))
    for w in (STAGE_ONE, STAGE_TWO):
        t, parts = total_reward(gm, w, S, q)
        assert abs(t[0] - sum(p[0] for p in parts.values())) <= 1e-12
        bounded = parts["prox_align"][0] + parts["grip_geom"][0] + parts["pose"][0]
        assert bounded <= w.total_bounded() + 1e-12


# -- curriculum -----------------------------------------------------------------------


def test_stage_boundary():
    sched = CurriculumSchedule(t1=2000)
    assert schedule_weights(1999, sched).equals(STAGE_ONE)
    assert schedule_weights(2000, sched).equals(STAGE_TWO)
    assert sched.stage(1999) == 1 and sched.stage(2000) == 2
    with pytest.raises(ValueError):
        CurriculumSchedule(t1=0)


def test_inactive_deadzone_leaves_weights_unchanged():
    tracker = DeadZoneTracker.fresh(3)
    w = schedule_weights(2500, CurriculumSchedule(), tracker)
    for i in range(3):
        np.testing.assert_array_equal(w.alpha[i], STAGE_TWO.alpha)
        np.testing.assert_array_equal(w.delta[i], STAGE_TWO.delta)


def test_active_deadzone_scales_weights():
    tracker = DeadZoneTracker.fresh(2)
    tracker = DeadZoneTracker(tracker.best, np.array([True, False]), np.array([10, 0]), tracker.params)
    w = schedule_weights(2500, CurriculumSchedule(), tracker)
    assert w.alpha[0, 0] == pytest.approx(0.3)  # 0.2 * 1.5
    assert w.alpha[1, 0] == pytest.approx(0.2)
    assert w.gamma[0] == pytest.approx(0.5) and w.gamma[1] == 1.0
    assert w.beta[0, 0] == pytest.approx(0.6) and w.delta[0, 1] == pytest.approx(0.075)
    stage2 = CurriculumSchedule(t1=1000, stage_one=STAGE_ONE, stage_two=RewardWeightSet(
        alpha=np.array([0.4, 0.15, 0.15, 0.1]), beta=STAGE_TWO.beta, gamma=STAGE_TWO.gamma, delta=STAGE_TWO.delta))
    assert schedule_weights(1000, stage2, tracker).alpha[0, 0] == pytest.approx(0.6)


def _run(trace, grasps=None, params=DeadZoneParams()):
    t = DeadZoneTracker.fresh(1, params)
    states = []
    for i, d in enumerate(trace):
        g = bool(grasps[i]) if grasps else False
        t = deadzone_update(t, [d], [g], [10.0 if g else 0.0])
        states.append(bool(t.active[0]))
    return t, states


def test_decreasing_distance_never_triggers():
    _, states = _run(np.linspace(0.5, 0.0, 200))
    assert not any(states)


def test_regression_triggers_and_expires():
    p = DeadZoneParams(hysteresis=0.02, window=5)
    trace = [0.2, 0.1, 0.05, 0.05 + 0.02 + 1e-3] + [0.05 + 0.02 + 1e-3] * 6
    t, states = _run(trace, params=p)
    assert states[:3] == [False, False, False]
    assert states[3:8] == [True] * 5
    assert states[8] is False


def test_grasp_clears_flag():
    p = DeadZoneParams(hysteresis=0.02, window=50)
    trace = [0.05, 0.1, 0.1, 0.1]
    t, states = _run(trace, grasps=[0, 0, 0, 1], params=p)
    assert states == [False, True, True, False]
    assert np.isinf(t.best[0])


def test_deadzone_never_moves_stage_boundary():
    sched = CurriculumSchedule(t1=10)
    active = DeadZoneTracker(np.zeros(1), np.array([True]), np.array([5]))
    for step in (9, 10):
        assert sched.stage(step) == (1 if step < 10 else 2)
        base = STAGE_ONE if step < 10 else STAGE_TWO
        w = schedule_weights(step, sched, active)
        np.testing.assert_allclose(w.alpha[0], base.alpha * 1.5)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60))
def test_schedule_is_pure(trace):
    t, _ = _run(trace)
    a = schedule_weights(5, CurriculumSchedule(t1=3), t)
    b = schedule_weights(5, CurriculumSchedule(t1=3), t)
    assert a.equals(b)
