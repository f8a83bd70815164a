import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spikegrasp.env import (
    ACTION_DIM,
    HOME_EEF,
    JOINT_LIMITS,
    OBS_DIM,
    ArmEnv,
    EnvConfig,
    GeometryFeatures,
    build_observation,
    compute_geometry,
    forward_kinematics,
    grasp_check,
    jacobian,
    write_trajectory_csv,
)

joint_vectors = arrays(
    float, 6, elements=st.floats(-1.7, 1.7, allow_nan=False)
)


def small_env(n=3, **kw):
    return ArmEnv(EnvConfig(num_envs=n, **kw), np.random.default_rng(0))


def test_home_pose():
    fk = forward_kinematics(np.zeros(6), 0.0)
    np.testing.assert_allclose(fk["eef"], HOME_EEF, atol=1e-12)
    np.testing.assert_allclose(HOME_EEF, [0.35, 0.0, 0.55])
    np.testing.assert_allclose(fk["quat"], [0, 0, 0, 1], atol=1e-12)


def test_zero_gap_fingers_coincide():
    fk = forward_kinematics(np.array([0.3, -0.2, 0.5, 0.1, 0.2, -0.4]), 0.0)
    np.testing.assert_allclose(fk["left"], fk["right"])
    np.testing.assert_allclose(fk["left"], fk["eef"])


@given(joint_vectors, st.floats(0.0, 0.08))
def test_finger_separation_equals_gap(q, g):
    fk = forward_kinematics(q, g)
    assert np.linalg.norm(fk["left"] - fk["right"]) == pytest.approx(g, abs=1e-12)
    assert np.linalg.norm(fk["quat"]) == pytest.approx(1.0, abs=1e-9)


def test_out_of_limit_is_clamped_and_flagged():
    q = np.zeros(6)
    q[1] = 5.0
    fk = forward_kinematics(q)
    assert fk["clamped"]
    q[1] = JOINT_LIMITS[1, 1]
    np.testing.assert_allclose(fk["eef"], forward_kinematics(q)["eef"])


@given(joint_vectors)
def test_jacobian_matches_finite_differences(q):
    J = jacobian(q)[0]
    eps = 1e-6
    for j in range(6):
        dq = np.zeros(6)
        dq[j] = eps
        num = (forward_kinematics(q + dq)["eef"] - forward_kinematics(q - dq)["eef"]) / (2 * eps)
        np.testing.assert_allclose(J[:3, j], num, atol=1e-6)


def test_zero_action_only_advances_counter():
    env = small_env()
    before = (env.q.copy(), env.gap.copy(), env.cube.copy())
    env.step(np.zeros((3, ACTION_DIM)))
    np.testing.assert_array_equal(env.q, before[0])
    np.testing.assert_array_equal(env.gap, before[1])
    np.testing.assert_array_equal(env.cube, before[2])
    assert np.all(env.steps == 1)


def test_upward_command_raises_eef_monotonically():
    env = small_env(1)
    a = np.zeros((1, ACTION_DIM))
    a[0, 2] = 1.0
    z = [forward_kinematics(env.q)["eef"][0, 2]]
    for _ in range(40):
        _, _, _, info = env.step(a)
        if info["joint_limit"][0]:
            break
        z.append(forward_kinematics(env.q)["eef"][0, 2])
    assert len(z) > 5 and np.all(np.diff(z) > 0)


def test_non_finite_action_rejected():
    env = small_env(1)
    with pytest.raises(ValueError):
        env.step(np.full((1, ACTION_DIM), np.nan))
    with pytest.raises(ValueError):
        env.step(np.zeros((2, ACTION_DIM)))


def test_constructed_grasp_is_detected():
    cfg = EnvConfig()
    q = np.zeros(6)
    cube = forward_kinematics(q)["eef"]
    geom = compute_geometry(q, cfg.optimal_gap, cube, cfg)
    assert geom.grasped[0]
    geom = compute_geometry(q, cfg.g_max, cube + [0.0, 0.0, 0.1], cfg)
    assert not geom.grasped[0]


def _geom(**over):
    base = {n: np.zeros(1) for n in GeometryFeatures.names()}
    base["g_opt"] = np.array([0.054])
    base["g"] = np.array([0.054])
    base.update({k: np.array([v]) for k, v in over.items()})
    return GeometryFeatures(**base)


def test_grasp_check_cases():
    cfg = EnvConfig()
    assert grasp_check(_geom(), cfg)[0]
    assert not grasp_check(_geom(d_lf=1.0), cfg)[0]
    assert not grasp_check(_geom(d_lf=cfg.tau_finger), cfg)[0]
    assert not grasp_check(_geom(eps_xy=cfg.tau_align), cfg)[0]
    assert not grasp_check(_geom(g=0.054 + cfg.tau_gap), cfg)[0]


def test_observation_layout():
    cfg = EnvConfig()
    q = np.zeros(6)
    eef = forward_kinematics(q)["eef"]
    geom = compute_geometry(q, 0.03, eef, cfg)
    obs = build_observation(q, eef, eef, 0.03, geom.nu_z, geom.d_mid)
    assert obs.shape == (1, OBS_DIM)
    np.testing.assert_array_equal(obs[0, 12:15], 0.0)
    assert obs[0, 17] == 0.0


def test_observation_delta_is_cube_minus_eef():
    env = small_env(5)
    rng = np.random.default_rng(2)
    env.step(rng.uniform(-1, 1, (5, ACTION_DIM)))
    obs = env.observe()
    eef = forward_kinematics(env.q)["eef"]
    np.testing.assert_allclose(obs[:, 12:15], env.cube - eef)
    np.testing.assert_allclose(obs[:, 6:9], eef)
    assert np.all(env.bounds.low <= env.bounds.high)


def test_reset_is_seeded_and_contained():
    cfg = EnvConfig(num_envs=10_000)
    a = ArmEnv(cfg, np.random.default_rng(9))
    b = ArmEnv(cfg, np.random.default_rng(9))
    np.testing.assert_array_equal(a.cube, b.cube)
    lo, hi = np.array(cfg.spawn_low), np.array(cfg.spawn_high)
    assert np.all(a.cube >= lo) and np.all(a.cube <= hi)
    assert not a.geometry().grasped.any()


def test_invalid_spawn_region_rejected():
    with pytest.raises(ValueError):
        EnvConfig(spawn_low=(0.5, 0, 0), spawn_high=(0.4, 0, 0))
    with pytest.raises(ValueError):
        EnvConfig(spawn_low=(2.0, 0, 0), spawn_high=(2.0, 0, 0))


@given(joint_vectors, st.floats(0.0, 0.08))
def test_geometry_self_consistency(q, g):
    cfg = EnvConfig()
    geom = compute_geometry(q, g, np.array([0.45, 0.05, 0.025]), cfg)
    lhs = geom.d_mid**2
    rhs = geom.eps_xy**2 + (geom.z_mid - geom.z_cube) ** 2
    assert abs(lhs[0] - rhs[0]) < 1e-9
    assert 0.0 <= geom.nu_z[0] <= 1.0 + 1e-12
    for name in ("d", "d_lf", "d_rf", "d_align", "d_mid", "dx", "dy", "eps_xy"):
        assert getattr(geom, name)[0] >= 0.0


@given(joint_vectors)
def test_fingers_level_when_lateral_axis_horizontal(q):
    q = q.copy()
    q[3] = q[5] = 0.0  # no roll or gripper yaw: finger axis stays horizontal
    fk = forward_kinematics(q, 0.06)
    assert fk["left"][2] == pytest.approx(fk["right"][2], abs=1e-12)


def test_vectorized_matches_individual():
    rng = np.random.default_rng(4)
    batch = small_env(4)
    singles = [small_env(1) for _ in range(4)]
    for i, env in enumerate(singles):
        env.cube[0] = batch.cube[i]
    for _ in range(15):
        a = rng.uniform(-1, 1, (4, ACTION_DIM))
        obs, _, done, _ = batch.step(a)
        for i, env in enumerate(singles):
            o, _, d, _ = env.step(a[i : i + 1])
            np.testing.assert_allclose(o[0], obs[i], rtol=0, atol=1e-12)
            assert d[0] == done[i]


def test_trajectories_deterministic():
    def run():
        env = small_env(3)
        rng = np.random.default_rng(11)
        out = []
        for _ in range(10):
            out.append(env.step(rng.uniform(-1, 1, (3, ACTION_DIM)))[0])
        return np.stack(out)

    assert run().tobytes() == run().tobytes()


def test_episode_timeout():
    env = small_env(2, episode_length=3)
    for _ in range(2):
        _, _, done, _ = env.step(np.zeros((2, ACTION_DIM)))
        assert not done.any()
    _, _, done, info = env.step(np.zeros((2, ACTION_DIM)))
    assert done.all() and info["timeout"].all()


def test_trajectory_csv(tmp_path):
    env = small_env(2)
    geom = env.geometry()
    rows = [{"step": 0, "env": i, **geom.row(i), "reward": 0.5} for i in range(2)]
    write_trajectory_csv(tmp_path / "traj.csv", rows)
    lines = (tmp_path / "traj.csv").read_text().strip().splitlines()
    assert len(lines) == 3 and lines[0].startswith("step,env,d,")
