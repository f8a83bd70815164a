"""Training loop, evaluation and metrics logging for one experiment arm."""

from __future__ import annotations

import csv
import ctypes
import logging
import math
import time
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import config as config_mod
from .config import ExperimentConfig
from .policy import save_checkpoint
from .ppo import ActorCritic, Adam, RolloutState, collect_rollout, evaluate, ppo_update
from .reward import COMPONENTS
from .tasks import EvalGraspTask, GraspTask

log = logging.getLogger(__name__)

# named random substreams derived from the root seed
STREAMS = {"env": 0, "policy-init": 1, "action-sampling": 2, "minibatch": 3, "eval": 4}

METRIC_COLUMNS = [
    "update",
    "global_env_steps",
    "mean_reward",
    "success_rate",
    "reach_rate",
    "eval_return",
    "actor_loss",
    "critic_loss",
    "entropy",
    "spike_rate_r",
    *[f"reward_{c}" for c in COMPONENTS],
    "stage",
    "deadzone_fraction",
]


def keep_heap_allocations() -> None:
    """Stop glibc from mmap-ing the large per-minibatch temporaries.

    Without this every forward/backward pass page-faults its arrays in
    afresh, which roughly doubles the cost of an update.
    """
    try:
        libc = ctypes.CDLL("libc.so.6")
    except OSError:
        return
    libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
    libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, STREAMS[name], *extra]))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


class MetricsWriter:
    def __init__(self, path, columns=METRIC_COLUMNS):
        self.path = Path(path)
        self.columns = columns
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(columns)
        self._fh.flush()

    def write(self, row: dict) -> None:
        self._w.writerow([_fmt(row.get(c, float("nan"))) for c in self.columns])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def build_task(cfg: ExperimentConfig) -> GraspTask:
    return GraspTask(cfg.env, cfg.schedule(), cfg.scales, cfg.deadzone_params(), substream(cfg.seed, "env"))


def build_agent(cfg: ExperimentConfig) -> ActorCritic:
    return ActorCritic(cfg.network_spec(), cfg.model, substream(cfg.seed, "policy-init"))


def run_evaluation(agent: ActorCritic, cfg: ExperimentConfig, episode_rows=None, seed: Optional[int] = None) -> dict:
    """Deterministic evaluation on ``cfg.eval.episodes`` fresh cube placements.

    The evaluation reward uses the fixed stage-two weights so that arms trained
    under different schedules are scored on one scale.
    """
    env_cfg = replace(cfg.env, num_envs=cfg.eval.episodes)
    rng = substream(cfg.seed if seed is None else seed, "eval")
    task = EvalGraspTask(env_cfg, cfg.curriculum.stage_two.to_weights(), cfg.scales, rng)
    return evaluate(agent, task, cfg.env.episode_length, episode_rows)


def train(
    cfg: ExperimentConfig,
    out_dir=None,
    task=None,
    progress: Optional[Callable[[dict], None]] = None,
    write_checkpoints: bool = True,
):
    """Collect -> GAE -> PPO update, ``cfg.ppo.total_updates`` times.

    Writes ``config.yaml``, ``metrics.csv`` and actor/critic checkpoints into
    ``out_dir`` (defaults to ``cfg.out_dir``).  Returns ``(agent, rows)``.
    A custom ``task`` may replace the arm task built from ``cfg``; periodic
    evaluation only runs when it is a ``GraspTask``.
    """
    keep_heap_allocations()
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_mod.snapshot(cfg, out / "config.yaml")

    if task is None:
        task = build_task(cfg)
    arm_task = isinstance(task, GraspTask)
    if arm_task:
        agent = build_agent(cfg)
    else:
        spec = cfg.network.spec(n0=task.obs_dim, n2=task.action_dim)
        agent = ActorCritic(spec, cfg.model, substream(cfg.seed, "policy-init"))
    optimizer = Adam(agent.param_arrays(), cfg.ppo.lr, cfg.ppo.adam_betas, cfg.ppo.adam_eps)
    act_rng = substream(cfg.seed, "action-sampling")
    mb_rng = substream(cfg.seed, "minibatch")
    state = RolloutState(task)

    writer = MetricsWriter(out / "metrics.csv")
    rows = []
    latest_eval = {"success_rate": float("nan"), "reach_rate": float("nan"), "mean_return": float("nan")}
    env_steps = 0
    started = time.perf_counter()
    try:
        for update in range(1, cfg.ppo.total_updates + 1):
            # curriculum is indexed by completed updates
            task.global_update = update - 1
            buffer = collect_rollout(agent, state, cfg.ppo.horizon, act_rng)
            env_steps += buffer.horizon * buffer.num_envs
            stats = ppo_update(agent, buffer, cfg.ppo, optimizer, mb_rng)

            last = update == cfg.ppo.total_updates
            if arm_task and (update % cfg.eval.every == 0 or last):
                latest_eval = run_evaluation(agent, cfg)
            row = {
                "update": update,
                "global_env_steps": env_steps,
                "mean_reward": float(buffer.rewards.mean()),
                "success_rate": latest_eval["success_rate"],
                "reach_rate": latest_eval["reach_rate"],
                "eval_return": latest_eval["mean_return"],
                "actor_loss": stats["actor_loss"],
                "critic_loss": stats["critic_loss"],
                "entropy": stats["entropy"],
                "spike_rate_r": buffer.spike_rate,
                "stage": buffer.info["stage"],
                "deadzone_fraction": buffer.info["deadzone_fraction"],
            }
            for c in COMPONENTS:
                row[f"reward_{c}"] = buffer.info["components"].get(c, float("nan"))
            writer.write(row)
            rows.append(row)
            if progress is not None:
                progress(row)
            if write_checkpoints and (update % cfg.checkpoint_every == 0 or last):
                save_checkpoint(out / "actor.ckpt", agent.actor, agent.spec, agent.kind)
                save_checkpoint(out / "critic.ckpt", agent.critic, agent.critic_spec, agent.kind)
            log.debug("update %d: %s (%.1fs)", update, row, time.perf_counter() - started)
    except Exception:
        log.exception("training aborted after %d completed updates; partial log in %s", len(rows), out)
        raise
    finally:
        writer.close()
    return agent, rows
