"""
Vectorized kinematic reach-and-grasp environment.

A six-joint serial arm carries a parallel-jaw gripper above a table; a cube of
edge ``cube_edge`` rests on the table at a random position.  Actions are
end-effector twists plus a gripper-gap rate; twists are mapped to joint
increments with damped least squares.  There is no dynamics or contact
model: a grasp is declared purely from geometry (see ``grasp_check``).

Kinematic chain (product of exponentials, space frame, metres).  At the home
pose ``q = 0`` the upper arm points straight up from the shoulder, the forearm
points along +x and the gripper hangs straight down:

    joint  axis  point on axis
    1      z     (0,    0, 0)        base yaw
    2      y     (0,    0, 0.40)     shoulder pitch
    3      y     (0,    0, 0.75)     elbow pitch
    4      x     (0,    0, 0.75)     forearm roll
    5      y     (0.35, 0, 0.75)     wrist pitch
    6      z     (0.35, 0, 0.75)     gripper yaw

The tool centre point (gripper midpoint, fingertip height) sits
``FLANGE_LENGTH + FINGER_LENGTH`` below the wrist, i.e. at HOME_EEF.
The gripper frame has identity orientation at home: its approach axis is
world -z and its finger (lateral) axis is world +y.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .encoding import NormalizationBounds

SHOULDER_HEIGHT = 0.40
UPPER_ARM = 0.35
FOREARM = 0.35
FLANGE_LENGTH = 0.10
FINGER_LENGTH = 0.10
WRIST = np.array([FOREARM, 0.0, SHOULDER_HEIGHT + UPPER_ARM])
HOME_EEF = WRIST - np.array([0.0, 0.0, FLANGE_LENGTH + FINGER_LENGTH])  # (0.35, 0, 0.55)

JOINT_AXES = np.array(
    [[0, 0, 1], [0, 1, 0], [0, 1, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float
)
JOINT_POINTS = np.array(
    [
        [0.0, 0.0, 0.0],
        [0.0, 0.0, SHOULDER_HEIGHT],
        [0.0, 0.0, SHOULDER_HEIGHT + UPPER_ARM],
        [0.0, 0.0, SHOULDER_HEIGHT + UPPER_ARM],
        WRIST,
        WRIST,
    ]
)
JOINT_LIMITS = np.array(
    [[-2.9, 2.9], [-1.75, 1.75], [-2.5, 2.5], [-2.9, 2.9], [-2.0, 2.0], [-2.9, 2.9]]
)
N_JOINTS = 6
OBS_DIM = 18
ACTION_DIM = 7


@dataclass
class EnvConfig:
    num_envs: int = 64
    episode_length: int = 300
    spawn_low: tuple = (0.35, -0.15, 0.025)
    spawn_high: tuple = (0.55, 0.15, 0.025)
    cube_edge: float = 0.05
    gap_allowance: float = 0.004
    g_max: float = 0.08
    tau_finger: float = 0.03
    tau_gap: float = 0.01
    tau_align: float = 0.02
    reach_radius: float = 0.05
    reach_hold: int = 10
    max_joint_step: float = 0.05
    max_linear_step: float = 0.02
    max_angular_step: float = 0.05
    gripper_rate: float = 0.01
    ik_damping: float = 0.05
    seed: int = 0

    def __post_init__(self):
        lo, hi = np.asarray(self.spawn_low, float), np.asarray(self.spawn_high, float)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi < lo):
            raise ValueError("spawn region must be a valid 3-D box")
        if lo[2] < 0 or np.linalg.norm(hi[:2]) > 0.9:
            raise ValueError("spawn region outside the arm workspace")
        if self.num_envs < 1 or self.episode_length < 1:
            raise ValueError("num_envs and episode_length must be >= 1")

    @property
    def optimal_gap(self) -> float:
        return self.cube_edge + self.gap_allowance


# -- kinematics ------------------------------------------------------------------


def _rodrigues(axes, angles):
    """Rotation matrices for unit ``axes`` (..., 3) by ``angles`` (...)."""
    k = axes
    kx = np.zeros(k.shape[:-1] + (3, 3))
    kx[..., 0, 1], kx[..., 0, 2] = -k[..., 2], k[..., 1]
    kx[..., 1, 0], kx[..., 1, 2] = k[..., 2], -k[..., 0]
    kx[..., 2, 0], kx[..., 2, 1] = -k[..., 1], k[..., 0]
    s = np.sin(angles)[..., None, None]
    c = np.cos(angles)[..., None, None]
    return np.eye(3) + s * kx + (1.0 - c) * (kx @ kx)


def _chain(q):
    """Joint frames for a batch of configurations.

    Returns ``(R, p, axes, points)``: the tool rotation (B,3,3), the tool
    centre point (B,3), and every joint's current world axis/point (B,6,3).
    """
    q = np.atleast_2d(q)
    batch = q.shape[0]
    R = np.broadcast_to(np.eye(3), (batch, 3, 3)).copy()
    t = np.zeros((batch, 3))
    axes = np.empty((batch, N_JOINTS, 3))
    points = np.empty((batch, N_JOINTS, 3))
    for i in range(N_JOINTS):
        axes[:, i] = R @ JOINT_AXES[i]
        points[:, i] = np.einsum("bij,j->bi", R, JOINT_POINTS[i]) + t
        Ri = _rodrigues(JOINT_AXES[i], q[:, i])
        ti = JOINT_POINTS[i] - np.einsum("bij,j->bi", Ri, JOINT_POINTS[i])
        t = np.einsum("bij,bj->bi", R, ti) + t
        R = R @ Ri
    tcp = np.einsum("bij,j->bi", R, HOME_EEF) + t
    return R, tcp, axes, points


def clamp_joints(q):
    q = np.asarray(q, dtype=float)
    clamped = np.clip(q, JOINT_LIMITS[:, 0], JOINT_LIMITS[:, 1])
    return clamped, np.any(clamped != q, axis=-1)


def forward_kinematics(q, gap=0.0):
    """Tool pose and finger positions for one (6,) or a batch (B, 6) of joint vectors.

    Returns a dict with ``eef`` (gripper midpoint), ``quat`` (x, y, z, w),
    ``rot``, ``left``, ``right`` and the ``clamped`` flag for out-of-limit input.
    """
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    qc, clamped = clamp_joints(np.atleast_2d(q))
    R, tcp, _, _ = _chain(qc)
    lateral = R[:, :, 1]
    half = 0.5 * np.broadcast_to(np.asarray(gap, dtype=float), (qc.shape[0],))[:, None]
    out = {
        "eef": tcp,
        "rot": R,
        "quat": Rotation.from_matrix(R).as_quat(),
        "left": tcp + half * lateral,
        "right": tcp - half * lateral,
        "clamped": clamped,
    }
    if single:
        out = {k: v[0] for k, v in out.items()}
    return out


def jacobian(q):
    """Geometric Jacobian (B, 6, 6) of the tool centre point: rows [v; w]."""
    R, tcp, axes, points = _chain(q)
    lin = np.cross(axes, tcp[:, None, :] - points)
    return np.concatenate([lin, axes], axis=2).transpose(0, 2, 1)


def dls_joint_step(q, twist, damping=0.05, max_step=0.05):
    """Joint increment realising ``twist`` (B, 6) via damped least squares, capped at ``max_step``."""
    J = jacobian(q)
    JJt = J @ J.transpose(0, 2, 1) + damping**2 * np.eye(6)
    dq = np.einsum("bji,bj->bi", J, np.linalg.solve(JJt, twist[..., None])[..., 0])
    peak = np.max(np.abs(dq), axis=1, keepdims=True)
    scale = np.minimum(1.0, max_step / np.maximum(peak, 1e-12))
    return dq * scale


# -- geometry ----------------------------------------------------------------------


@dataclass
class GeometryFeatures:
    d: np.ndarray
    d_lf: np.ndarray
    d_rf: np.ndarray
    d_align: np.ndarray
    d_mid: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    z_lf: np.ndarray
    z_rf: np.ndarray
    z_mid: np.ndarray
    z_cube: np.ndarray
    g: np.ndarray
    g_opt: np.ndarray
    eps_xy: np.ndarray
    nu_z: np.ndarray
    grasped: np.ndarray
    quat: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def names(cls) -> list:
        return [f.name for f in fields(cls) if f.name != "quat"]

    def row(self, i: int) -> dict:
        return {n: getattr(self, n)[i] for n in self.names()}

    def take(self, idx) -> "GeometryFeatures":
        vals = {f.name: (None if getattr(self, f.name) is None else getattr(self, f.name)[idx]) for f in fields(self)}
        return GeometryFeatures(**vals)


def grasp_check(geom: GeometryFeatures, cfg: EnvConfig) -> np.ndarray:
    """Geometric grasp: both fingers near the cube, gap near optimal, centred in XY.

    All inequalities are strict.
    """
    return (
        (np.asarray(geom.d_lf) < cfg.tau_finger)
        & (np.asarray(geom.d_rf) < cfg.tau_finger)
        & (np.abs(np.asarray(geom.g) - np.asarray(geom.g_opt)) < cfg.tau_gap)
        & (np.asarray(geom.eps_xy) < cfg.tau_align)
    )


def compute_geometry(q, gap, cube, cfg: EnvConfig) -> GeometryFeatures:
    fk = forward_kinematics(np.atleast_2d(q), np.atleast_1d(gap))
    cube = np.atleast_2d(cube)
    mid, left, right = fk["eef"], fk["left"], fk["right"]
    diff = cube - mid
    d_mid = np.linalg.norm(diff, axis=1)
    eps_xy = np.linalg.norm(diff[:, :2], axis=1)
    gap = np.broadcast_to(np.asarray(gap, dtype=float), d_mid.shape).copy()
    geom = GeometryFeatures(
        d=d_mid.copy(),
        d_lf=np.linalg.norm(cube - left, axis=1),
        d_rf=np.linalg.norm(cube - right, axis=1),
        d_align=eps_xy.copy(),
        d_mid=d_mid,
        dx=np.abs(diff[:, 0]),
        dy=np.abs(diff[:, 1]),
        z_lf=left[:, 2].copy(),
        z_rf=right[:, 2].copy(),
        z_mid=mid[:, 2].copy(),
        z_cube=cube[:, 2].copy(),
        g=gap,
        g_opt=np.full_like(d_mid, cfg.optimal_gap),
        eps_xy=eps_xy,
        nu_z=np.abs(fk["rot"][:, 2, 2]),
        grasped=np.zeros(d_mid.shape, dtype=bool),
        quat=fk["quat"],
    )
    geom.grasped = grasp_check(geom, cfg)
    return geom


# -- observations ------------------------------------------------------------------

_WORK_LOW = np.array([-0.2, -0.6, -0.1])
_WORK_HIGH = np.array([1.0, 0.6, 1.2])
_DELTA = 0.6


def observation_bounds(cfg: EnvConfig) -> NormalizationBounds:
    """Fixed per-feature min/max for the 18-dim observation."""
    low = np.concatenate(
        [JOINT_LIMITS[:, 0], _WORK_LOW, _WORK_LOW, np.full(3, -_DELTA), [0.0, 0.0, 0.0]]
    )
    high = np.concatenate(
        [JOINT_LIMITS[:, 1], _WORK_HIGH, _WORK_HIGH, np.full(3, _DELTA), [cfg.g_max, 1.0, 1.2]]
    )
    return NormalizationBounds(low, high)


OBS_LAYOUT = (
    [f"q{i}" for i in range(1, 7)]
    + ["eef_x", "eef_y", "eef_z", "cube_x", "cube_y", "cube_z"]
    + ["delta_x", "delta_y", "delta_z", "gap", "nu_z", "d_mid"]
)


def build_observation(q, eef, cube, gap, nu_z, d_mid) -> np.ndarray:
    """Raw (unnormalized) observation rows of length 18.

    Layout: q (6), eef position (3), cube position (3), cube - eef (3), gap,
    verticality score, midpoint-to-cube distance.
    """
    q, eef, cube = np.atleast_2d(q), np.atleast_2d(eef), np.atleast_2d(cube)
    cols = [q, eef, cube, cube - eef, np.atleast_1d(gap)[:, None], np.atleast_1d(nu_z)[:, None], np.atleast_1d(d_mid)[:, None]]
    return np.concatenate(cols, axis=1)


# -- the environment -----------------------------------------------------------------


class ArmEnv:
    """Batch of independent reach-and-grasp environments sharing one config."""

    def __init__(self, cfg: EnvConfig = EnvConfig(), rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        n = cfg.num_envs
        self.q = np.zeros((n, N_JOINTS))
        self.gap = np.full(n, cfg.g_max)
        self.cube = np.zeros((n, 3))
        self.steps = np.zeros(n, dtype=np.int64)
        self.reach_count = np.zeros(n, dtype=np.int64)
        self.reached = np.zeros(n, dtype=bool)
        self.bounds = observation_bounds(cfg)
        self.spawn_log: list = []
        self.reset()

    @property
    def num_envs(self) -> int:
        return self.cfg.num_envs

    def reset(self, indices=None) -> np.ndarray:
        """Home the arm, open the gripper and respawn the cube for ``indices`` (default all)."""
        idx = np.arange(self.num_envs) if indices is None else np.asarray(indices, dtype=np.int64)
        if idx.size:
            lo, hi = np.asarray(self.cfg.spawn_low), np.asarray(self.cfg.spawn_high)
            cubes = self.rng.uniform(lo, hi, size=(idx.size, 3))
            self.cube[idx] = cubes
            self.spawn_log.extend(map(tuple, cubes))
            self.q[idx] = 0.0
            self.gap[idx] = self.cfg.g_max
            self.steps[idx] = 0
            self.reach_count[idx] = 0
            self.reached[idx] = False
        return self.observe()

    def geometry(self) -> GeometryFeatures:
        return compute_geometry(self.q, self.gap, self.cube, self.cfg)

    def observe(self, geom: Optional[GeometryFeatures] = None) -> np.ndarray:
        fk = forward_kinematics(self.q, self.gap)
        if geom is None:
            geom = self.geometry()
        return build_observation(self.q, fk["eef"], self.cube, self.gap, geom.nu_z, geom.d_mid)

    def step(self, actions):
        """Apply a (num_envs, 7) action batch in [-1, 1].

        Returns ``(raw_obs, geometry, done, info)``.  Finished environments
        are not reset here; call ``reset(indices)``.
        """
        a = np.asarray(actions, dtype=float)
        if a.shape != (self.num_envs, ACTION_DIM):
            raise ValueError(f"actions must have shape {(self.num_envs, ACTION_DIM)}, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite action")
        a = np.clip(a, -1.0, 1.0)
        cfg = self.cfg
        twist = np.concatenate([a[:, :3] * cfg.max_linear_step, a[:, 3:6] * cfg.max_angular_step], axis=1)
        moving = np.any(twist != 0.0, axis=1)
        if np.any(moving):
            dq = dls_joint_step(self.q[moving], twist[moving], cfg.ik_damping, cfg.max_joint_step)
            self.q[moving], clamped = clamp_joints(self.q[moving] + dq)
        else:
            clamped = np.zeros(0, dtype=bool)
        limit_hit = np.zeros(self.num_envs, dtype=bool)
        limit_hit[moving] = clamped
        self.gap = np.clip(self.gap + a[:, 6] * cfg.gripper_rate, 0.0, cfg.g_max)
        self.steps += 1

        geom = self.geometry()
        near = geom.d_mid < cfg.reach_radius
        self.reach_count = np.where(near, self.reach_count + 1, 0)
        self.reached |= self.reach_count >= cfg.reach_hold
        timeout = self.steps >= cfg.episode_length
        done = geom.grasped | timeout
        info = {
            "grasped": geom.grasped.copy(),
            "reached": self.reached.copy(),
            "timeout": timeout & ~geom.grasped,
            "joint_limit": limit_hit,
        }
        return self.observe(geom), geom, done, info


def write_trajectory_csv(path, rows) -> None:
    """Write per-step trajectory rows (dicts with step, env, geometry and reward fields)."""
    rows = list(rows)
    if not rows:
        raise ValueError("no trajectory rows to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (int(v) if isinstance(v, (bool, np.bool_)) else v) for k, v in r.items()})
