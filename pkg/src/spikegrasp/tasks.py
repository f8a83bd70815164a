"""Reward-bearing task wrappers consumed by the PPO trainer.

A task exposes ``num_envs``, ``obs_dim``, ``action_dim``, ``bounds``,
``reset(indices)`` and ``step(actions) -> (raw_obs, reward, done, info)``.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .encoding import NormalizationBounds
from .env import ACTION_DIM, OBS_DIM, ArmEnv, EnvConfig
from .reward import (
    COMPONENTS,
    STAGE_TWO,
    CurriculumSchedule,
    DeadZoneParams,
    DeadZoneTracker,
    RewardScales,
    RewardWeightSet,
    deadzone_update,
    schedule_weights,
    total_reward,
)


class GraspTask:
    """Arm environment plus curriculum-weighted composite reward.

    ``global_update`` must be advanced by the trainer; curriculum weights are
    looked up from it, never from the per-episode step counter.
    """

    obs_dim = OBS_DIM
    action_dim = ACTION_DIM

    def __init__(
        self,
        env_cfg: EnvConfig,
        schedule: CurriculumSchedule,
        scales: RewardScales = RewardScales(),
        deadzone: Optional[DeadZoneParams] = DeadZoneParams(),
        rng: Optional[np.random.Generator] = None,
    ):
        self.env = ArmEnv(env_cfg, rng)
        self.schedule = schedule
        self.scales = scales
        self.deadzone_params = deadzone
        self.tracker = DeadZoneTracker.fresh(env_cfg.num_envs, deadzone) if deadzone is not None else None
        self.global_update = 0
        self.bounds: NormalizationBounds = self.env.bounds

    @property
    def num_envs(self) -> int:
        return self.env.num_envs

    def reset(self, indices=None) -> np.ndarray:
        if self.tracker is not None:
            idx = np.arange(self.num_envs) if indices is None else indices
            self.tracker = self.tracker.reset(idx)
        return self.env.reset(indices)

    def current_weights(self) -> RewardWeightSet:
        return schedule_weights(self.global_update, self.schedule, self.tracker)

    def step(self, actions):
        weights = self.current_weights()
        obs, geom, done, info = self.env.step(actions)
        reward, parts = total_reward(geom, weights, self.scales)
        if self.tracker is not None:
            self.tracker = deadzone_update(self.tracker, geom.d_mid, geom.grasped, parts["task"])
            info["deadzone"] = self.tracker.active.copy()
        else:
            info["deadzone"] = np.zeros(self.num_envs, dtype=bool)
        info["components"] = parts
        info["geometry"] = geom
        info["stage"] = self.schedule.stage(self.global_update)
        return obs, reward, done, info


class EvalGraspTask(GraspTask):
    """Fixed reference weights, no dead-zone modulation."""

    def __init__(self, env_cfg: EnvConfig, weights: RewardWeightSet = STAGE_TWO, scales=RewardScales(), rng=None):
        super().__init__(env_cfg, CurriculumSchedule.constant(weights), scales, None, rng)


class QuadraticToyTask:
    """One-step bandit with reward ``-(a - target)^2`` and a constant observation."""

    action_dim = 1

    def __init__(self, num_envs: int = 64, target: float = 0.4, obs_dim: int = 4):
        self.num_envs = num_envs
        self.target = target
        self.obs_dim = obs_dim
        self.bounds = NormalizationBounds.unit(obs_dim)
        self.global_update = 0
        self._obs = np.full((num_envs, obs_dim), 1.0)

    def reset(self, indices=None) -> np.ndarray:
        return self._obs.copy()

    def step(self, actions):
        a = np.asarray(actions, dtype=float).reshape(self.num_envs, 1)
        reward = -((a[:, 0] - self.target) ** 2)
        done = np.ones(self.num_envs, dtype=bool)
        info = {"grasped": np.zeros(self.num_envs, dtype=bool), "stage": 1}
        return self._obs.copy(), reward, done, info


def empty_components(n: int) -> dict:
    return {c: np.zeros(n) for c in COMPONENTS}
