"""
Composite grasp reward, two-stage curriculum weights and dead-zone reweighting.

All reward functions are vectorized: geometry fields are arrays over
environments and weight arrays may carry a leading environment axis, e.g.
``alpha`` of shape (N, 4) when dead-zone modulation differs per environment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

COMPONENTS = ("prox_align", "grip_geom", "task", "pose", "pose_penalty")


@dataclass(frozen=True)
class RewardScales:
    kappa: tuple = (3.0, 5.0, 5.0, 5.0)
    xi: tuple = (20.0, 20.0, 30.0)
    vartheta: tuple = (10.0, 0.5, 0.5)
    success: float = 10.0
    penalty_scale: float = 1.0

    def __post_init__(self):
        vals = list(self.kappa) + list(self.xi) + list(self.vartheta) + [self.success, self.penalty_scale]
        if len(self.kappa) != 4 or len(self.xi) != 3 or len(self.vartheta) != 3:
            raise ValueError("expected 4 kappa, 3 xi and 3 vartheta scales")
        if min(vals) <= 0:
            raise ValueError("reward scales must be strictly positive")


@dataclass(frozen=True)
class RewardWeightSet:
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(4))
    beta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(()))
    delta: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if np.any(arr < 0):
                raise ValueError(f"reward weights must be nonnegative ({name})")
            object.__setattr__(self, name, arr)

    def total_bounded(self):
        """Upper bound of the bounded (non-task, non-penalty) reward terms."""
        return self.alpha.sum(-1) + self.beta.sum(-1) + self.delta.sum(-1)

    def equals(self, other: "RewardWeightSet") -> bool:
        return all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in ("alpha", "beta", "gamma", "delta")
        )


STAGE_ONE = RewardWeightSet(
    alpha=np.array([0.5, 0.3, 0.3, 0.2]),
    beta=np.array([0.05, 0.05, 0.05]),
    gamma=np.array(0.2),
    delta=np.array([0.3, 0.3]),
)
STAGE_TWO = RewardWeightSet(
    alpha=np.array([0.2, 0.15, 0.15, 0.1]),
    beta=np.array([0.4, 0.4, 0.4]),
    gamma=np.array(1.0),
    delta=np.array([0.15, 0.15]),
)


def _decay(scale, dist):
    return 1.0 - np.tanh(scale * np.asarray(dist, dtype=float))


def prox_align_reward(geom, w: RewardWeightSet, s: RewardScales):
    a = w.alpha
    k1, k2, k3, k4 = s.kappa
    return (
        a[..., 0] * _decay(k1, (np.asarray(geom.d) + geom.d_lf + geom.d_rf) / 3.0)
        + a[..., 1] * _decay(k2, geom.d_align)
        + a[..., 2] * _decay(k3, geom.d_mid)
        + a[..., 3] * _decay(k4, np.asarray(geom.dx) + geom.dy)
    )


def grip_geom_reward(geom, w: RewardWeightSet, s: RewardScales):
    b = w.beta
    x1, x2, x3 = s.xi
    return (
        b[..., 0] * _decay(x1, np.abs(np.asarray(geom.z_lf) - geom.z_rf))
        + b[..., 1] * _decay(x2, np.abs(np.asarray(geom.z_mid) - geom.z_cube))
        + b[..., 2] * np.exp(-x3 * np.abs(np.asarray(geom.g) - geom.g_opt))
    )


def task_reward(grasped, gamma, success):
    return np.where(np.asarray(grasped, dtype=bool), np.asarray(gamma) * success, 0.0)


def verticality(q_eef, tol: float = 1e-6):
    """|(R(q) z)_z| for quaternions in (x, y, z, w) order."""
    q = np.asarray(q_eef, dtype=float)
    norm = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(norm - 1.0) > tol):
        raise ValueError("end-effector quaternion is not unit-norm")
    return np.abs(1.0 - 2.0 * (q[..., 0] ** 2 + q[..., 1] ** 2))


def pose_reward_and_penalty(geom, q_eef, w: RewardWeightSet, s: RewardScales):
    """Upright-posture reward and the planar/vertical penalty term.

    The penalty is ``vt2 * eps_xy * lam - vt3 * (1 - nu_z) * lam``, signs left
    as they are (it is added, not subtracted), with nu_z taken from the quaternion.
    """
    nu_z = verticality(q_eef)
    d = w.delta
    vt1, vt2, vt3 = s.vartheta
    lam = s.penalty_scale
    eps = np.asarray(geom.eps_xy, dtype=float)
    r_pose = d[..., 0] * nu_z + d[..., 1] * _decay(vt1, eps)
    p_pose = vt2 * eps * lam - vt3 * (1.0 - nu_z) * lam
    return r_pose, p_pose


def total_reward(geom, weights: RewardWeightSet, scales: RewardScales, q_eef=None):
    """Sum of the five components and the per-component breakdown."""
    if q_eef is None:
        q_eef = geom.quat
    r_pose, p_pose = pose_reward_and_penalty(geom, q_eef, weights, scales)
    parts = {
        "prox_align": prox_align_reward(geom, weights, scales),
        "grip_geom": grip_geom_reward(geom, weights, scales),
        "task": task_reward(geom.grasped, weights.gamma, scales.success),
        "pose": r_pose,
        "pose_penalty": p_pose,
    }
    total = parts["prox_align"] + parts["grip_geom"] + parts["task"] + parts["pose"] + parts["pose_penalty"]
    return total, parts


# -- curriculum ------------------------------------------------------------------


@dataclass(frozen=True)
class CurriculumSchedule:
    t1: int = 2000
    stage_one: RewardWeightSet = STAGE_ONE
    stage_two: RewardWeightSet = STAGE_TWO

    def __post_init__(self):
        if self.t1 <= 0:
            raise ValueError("stage boundary T1 must be positive")

    @classmethod
    def constant(cls, weights: RewardWeightSet = STAGE_TWO) -> "CurriculumSchedule":
        return cls(t1=1, stage_one=weights, stage_two=weights)

    def stage(self, global_step: int) -> int:
        return 1 if global_step < self.t1 else 2


@dataclass(frozen=True)
class DeadZoneParams:
    hysteresis: float = 0.02
    window: int = 50
    k_up: float = 1.5
    k_down: float = 0.5

    def __post_init__(self):
        if self.k_up < 1 or not 0 < self.k_down <= 1 or self.window < 1 or self.hysteresis < 0:
            raise ValueError("invalid dead-zone parameters")


@dataclass(frozen=True)
class DeadZoneTracker:
    """Per-environment regression detector. Arrays are indexed by environment."""

    best: np.ndarray
    active: np.ndarray
    remaining: np.ndarray
    params: DeadZoneParams = DeadZoneParams()

    @classmethod
    def fresh(cls, num_envs: int, params: DeadZoneParams = DeadZoneParams()) -> "DeadZoneTracker":
        return cls(np.full(num_envs, np.inf), np.zeros(num_envs, bool), np.zeros(num_envs, np.int64), params)

    def reset(self, indices) -> "DeadZoneTracker":
        best, active, remaining = self.best.copy(), self.active.copy(), self.remaining.copy()
        best[indices], active[indices], remaining[indices] = np.inf, False, 0
        return replace(self, best=best, active=active, remaining=remaining)


def deadzone_update(tracker: DeadZoneTracker, d_mid, grasped, r_task) -> DeadZoneTracker:
    """One control step of the dead-zone state machine.

    An inactive environment whose ``d_mid`` rises more than the hysteresis
    above its best-so-far distance, with no task reward, becomes active for
    ``window`` steps and its baseline is re-anchored at the current distance.
    A grasp clears the flag and forgets the baseline.
    """
    p = tracker.params
    d_mid = np.asarray(d_mid, dtype=float)
    success = np.asarray(grasped, dtype=bool) | (np.asarray(r_task) > 0)

    remaining = np.where(tracker.active, tracker.remaining - 1, 0)
    active = tracker.active & (remaining > 0)
    trigger = ~active & (d_mid > tracker.best + p.hysteresis) & ~success
    active = active | trigger
    remaining = np.where(trigger, p.window, remaining)
    best = np.where(trigger, d_mid, np.minimum(tracker.best, d_mid))

    active = active & ~success
    remaining = np.where(success, 0, remaining)
    best = np.where(success, np.inf, best)
    return replace(tracker, best=best, active=active, remaining=remaining)


def schedule_weights(global_step: int, schedule: CurriculumSchedule, tracker: Optional[DeadZoneTracker] = None):
    """Stage weights for ``global_step``, modulated per environment by the dead-zone flag."""
    base = schedule.stage_one if global_step < schedule.t1 else schedule.stage_two
    if tracker is None:
        return base
    p = tracker.params
    up = np.where(tracker.active, p.k_up, 1.0)
    down = np.where(tracker.active, p.k_down, 1.0)
    return RewardWeightSet(
        alpha=base.alpha * up[:, None],
        beta=base.beta * up[:, None],
        gamma=base.gamma * down,
        delta=base.delta * down[:, None],
    )
