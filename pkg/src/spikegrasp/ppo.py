"""
PPO with a clipped surrogate objective and GAE for the spiking actor-critic.

Actor and critic are separate two-layer networks (spiking or ReLU).  All
gradients are assembled by hand: the policy/value losses give dL/d(readout)
and the networks' own backward passes (surrogate BPTT for the SNN) give the
weight gradients.  Parameters are updated with Adam after global-norm
clipping.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .encoding import minmax_normalize
from .policy import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    NetworkSpec,
    gaussian_entropy,
    gaussian_log_prob,
    init_params,
    readout,
    readout_backward,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PPOConfig:
    clip: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    lr: float = 3e-4
    epochs: int = 4
    minibatches: int = 4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    horizon: int = 32
    total_updates: int = 1000
    max_grad_norm: float = 1.0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 0 < self.clip < 1:
            raise ValueError("clip epsilon must lie in (0, 1)")
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.epochs < 1 or self.minibatches < 1 or self.horizon < 1 or self.total_updates < 0:
            raise ValueError("epochs, minibatches and horizon must be >= 1")
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")


class NonFiniteLoss(FloatingPointError):
    pass


# -- actor-critic ------------------------------------------------------------------


class ActorCritic:
    """Separate actor (n2 = action dim) and critic (n2 = 1) networks of one model kind."""

    def __init__(self, spec: NetworkSpec, kind: str = "snn", seed=0, actor=None, critic=None):
        if kind not in ("snn", "ann"):
            raise ValueError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.spec = spec
        self.critic_spec = spec.critic()
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.actor = actor if actor is not None else init_params(spec, rng)
        self.critic = critic if critic is not None else init_params(self.critic_spec, rng, with_log_std=False)

    def param_arrays(self) -> dict:
        return {
            "actor.W_in": self.actor.W_in,
            "actor.W_out": self.actor.W_out,
            "actor.log_std": self.actor.log_std,
            "critic.W_in": self.critic.W_in,
            "critic.W_out": self.critic.W_out,
        }

    def policy(self, obs_hat):
        """Action mean (tanh-squashed readout), readout cache and hidden spike rate."""
        v, cache = readout(self.actor, obs_hat, self.spec, self.kind)
        mean = np.tanh(v)
        rate = float(cache.spikes.mean()) if self.kind == "snn" else float(np.mean(cache[2] > 0))
        return mean, cache, rate

    def value(self, obs_hat):
        v, cache = readout(self.critic, obs_hat, self.critic_spec, self.kind)
        return v[:, 0], cache

    def act(self, obs_hat, rng: np.random.Generator, deterministic: bool = False):
        mean, _, rate = self.policy(obs_hat)
        value, _ = self.value(obs_hat)
        if deterministic:
            return np.clip(mean, -1, 1), mean, None, value, rate
        std = np.exp(self.actor.log_std)
        raw = mean + std * rng.standard_normal(mean.shape)
        logp = gaussian_log_prob(raw, mean, self.actor.log_std)
        return np.clip(raw, -1.0, 1.0), raw, logp, value, rate

    def log_prob(self, obs_hat, raw_actions):
        mean, _, _ = self.policy(obs_hat)
        return gaussian_log_prob(raw_actions, mean, self.actor.log_std)


class Adam:
    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        """In-place update of the arrays in ``params``."""
        if self.lr == 0:
            return
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


# -- rollouts ------------------------------------------------------------------------


@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (H, N, obs_dim), normalized
    actions: np.ndarray  # (H, N, act_dim), raw pre-clamp samples
    log_probs: np.ndarray  # (H, N)
    rewards: np.ndarray  # (H, N)
    values: np.ndarray  # (H, N)
    dones: np.ndarray  # (H, N)
    last_value: np.ndarray  # (N,)
    spike_rate: float = 0.0
    info: Optional[dict] = None

    def __post_init__(self):
        lead = self.obs.shape[:2]
        for name in ("actions", "log_probs", "rewards", "values", "dones"):
            if getattr(self, name).shape[:2] != lead:
                raise ValueError(f"buffer field {name} does not share the {lead} leading shape")

    @property
    def horizon(self) -> int:
        return self.obs.shape[0]

    @property
    def num_envs(self) -> int:
        return self.obs.shape[1]


class RolloutState:
    """Carries the current observations of a task between rollouts."""

    def __init__(self, task):
        self.task = task
        self.obs = task.reset()
        self.episode_return = np.zeros(task.num_envs)
        self.finished_returns: list = []
        self.finished_success: list = []
        self.finished_reached: list = []


def collect_rollout(agent: ActorCritic, state: RolloutState, horizon: int, rng: np.random.Generator) -> RolloutBuffer:
    """Run ``horizon`` steps on every environment; finished environments auto-reset."""
    task = state.task
    n = task.num_envs
    obs_buf = np.empty((horizon, n, task.obs_dim))
    act_buf = np.empty((horizon, n, task.action_dim))
    logp_buf = np.empty((horizon, n))
    rew_buf = np.empty((horizon, n))
    val_buf = np.empty((horizon, n))
    done_buf = np.empty((horizon, n))
    rates = []
    comp_sums: dict = {}
    deadzone_hits = 0.0
    stage = None
    for t in range(horizon):
        obs_hat = minmax_normalize(state.obs, task.bounds)
        action, raw, logp, value, rate = agent.act(obs_hat, rng)
        next_obs, reward, done, info = task.step(action)
        obs_buf[t], act_buf[t], logp_buf[t] = obs_hat, raw, logp
        rew_buf[t], val_buf[t], done_buf[t] = reward, value, done
        rates.append(rate)
        for k, v in info.get("components", {}).items():
            comp_sums[k] = comp_sums.get(k, 0.0) + float(np.mean(v))
        deadzone_hits += float(np.mean(info.get("deadzone", 0.0)))
        stage = info.get("stage")

        state.episode_return += reward
        if np.any(done):
            idx = np.flatnonzero(done)
            state.finished_returns.extend(state.episode_return[idx].tolist())
            state.finished_success.extend(np.asarray(info["grasped"])[idx].tolist())
            if "reached" in info:
                state.finished_reached.extend(np.asarray(info["reached"])[idx].tolist())
            state.episode_return[idx] = 0.0
            reset_obs = task.reset(idx)
            next_obs = next_obs.copy()
            next_obs[idx] = reset_obs[idx]
        state.obs = next_obs

    last_value, _ = agent.value(minmax_normalize(state.obs, task.bounds))
    info = {
        "components": {k: v / horizon for k, v in comp_sums.items()},
        "deadzone_fraction": deadzone_hits / horizon,
        "stage": stage,
    }
    return RolloutBuffer(obs_buf, act_buf, logp_buf, rew_buf, val_buf, done_buf, last_value, float(np.mean(rates)), info)


def compute_gae(rewards, values, dones, last_value, gamma: float, lam: float):
    """Advantages and returns for (H, N) arrays; ``last_value`` bootstraps step H."""
    rewards, values, dones = (np.asarray(a, dtype=float) for a in (rewards, values, dones))
    if not (rewards.shape == values.shape == dones.shape):
        raise ValueError("rewards, values and dones must share a shape")
    last_value = np.broadcast_to(np.asarray(last_value, dtype=float), rewards.shape[1:])
    adv = np.zeros_like(rewards)
    next_adv = np.zeros(rewards.shape[1:])
    next_value = last_value
    for t in range(rewards.shape[0] - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


# -- update ---------------------------------------------------------------------------


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=float)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_losses(agent: ActorCritic, obs, raw_actions, old_logp, adv, returns, cfg: PPOConfig):
    """Loss values and hand-derived gradients for one minibatch.

    Returns ``(stats, grads)`` where ``grads`` is keyed like ``agent.param_arrays()``.
    """
    n = obs.shape[0]
    log_std = agent.actor.log_std
    v_act, cache_a = readout(agent.actor, obs, agent.spec, agent.kind)
    mean = np.tanh(v_act)
    logp = gaussian_log_prob(raw_actions, mean, log_std)
    ratio = np.exp(logp - old_logp)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv
    actor_loss = -np.mean(np.minimum(surr1, surr2))
    entropy = gaussian_entropy(log_std)

    value, cache_c = readout(agent.critic, obs, agent.critic_spec, agent.kind)
    value = value[:, 0]
    critic_loss = np.mean((value - returns) ** 2)
    total = actor_loss + cfg.value_coef * critic_loss - cfg.entropy_coef * entropy
    if not np.isfinite(total):
        raise NonFiniteLoss(
            f"non-finite PPO loss: actor={actor_loss} critic={critic_loss} entropy={entropy} "
            f"max|ratio|={np.max(np.abs(ratio))}"
        )

    # d(actor_loss)/d(logp): only where the unclipped branch is the active minimum
    g_logp = -(adv * ratio) * (surr1 <= surr2) / n
    inv_var = np.exp(-2.0 * log_std)
    diff = raw_actions - mean
    g_mean = g_logp[:, None] * diff * inv_var
    g_readout = g_mean * (1.0 - mean**2)
    g_log_std = np.sum(g_logp[:, None] * (diff**2 * inv_var - 1.0), axis=0) - cfg.entropy_coef
    ga_in, ga_out = readout_backward(agent.actor, cache_a, g_readout, agent.kind)

    g_value = (2.0 * cfg.value_coef / n) * (value - returns)
    gc_in, gc_out = readout_backward(agent.critic, cache_c, g_value[:, None], agent.kind)

    grads = {
        "actor.W_in": ga_in,
        "actor.W_out": ga_out,
        "actor.log_std": g_log_std,
        "critic.W_in": gc_in,
        "critic.W_out": gc_out,
    }
    stats = {
        "actor_loss": float(actor_loss),
        "critic_loss": float(critic_loss),
        "entropy": entropy,
        "ratio_mean": float(np.mean(ratio)),
        "ratio_max_dev": float(np.max(np.abs(ratio - 1.0))),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip)),
        "unclipped_objective": float(np.mean(surr1)),
        "clipped_objective": float(np.mean(np.minimum(surr1, surr2))),
    }
    return stats, grads


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return norm


def ppo_update(agent: ActorCritic, buffer: RolloutBuffer, cfg: PPOConfig, optimizer: Adam, rng: np.random.Generator):
    """Several epochs of minibatch PPO on one rollout. Mutates ``agent`` in place."""
    adv, returns = compute_gae(buffer.rewards, buffer.values, buffer.dones, buffer.last_value, cfg.gamma, cfg.gae_lambda)
    size = buffer.horizon * buffer.num_envs
    obs = buffer.obs.reshape(size, -1)
    actions = buffer.actions.reshape(size, -1)
    old_logp = buffer.log_probs.reshape(size)
    adv = normalize_advantages(adv.reshape(size))
    returns = returns.reshape(size)

    params = agent.param_arrays()
    history = []
    mb = max(1, size // cfg.minibatches)
    for _ in range(cfg.epochs):
        order = rng.permutation(size)
        for start in range(0, size, mb):
            idx = order[start : start + mb]
            stats, grads = ppo_losses(agent, obs[idx], actions[idx], old_logp[idx], adv[idx], returns[idx], cfg)
            stats["grad_norm"] = clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(params, grads)
            np.clip(agent.actor.log_std, LOG_STD_MIN, LOG_STD_MAX, out=agent.actor.log_std)
            history.append(stats)
    summary = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    summary["first_ratio_max_dev"] = history[0]["ratio_max_dev"]
    summary["advantage_mean"] = float(adv.mean())
    summary["advantage_std"] = float(adv.std())
    return summary


# -- evaluation -------------------------------------------------------------------------


def evaluate(agent: ActorCritic, task, max_steps: int, episode_rows: Optional[list] = None):
    """Deterministic (action = mean) rollout of one episode per environment of ``task``.

    Returns a dict with success rate, reach rate and mean episodic return.
    """
    n = task.num_envs
    obs = task.reset()
    returns = np.zeros(n)
    success = np.zeros(n, dtype=bool)
    reached = np.zeros(n, dtype=bool)
    alive = np.ones(n, dtype=bool)
    lengths = np.zeros(n, dtype=np.int64)
    for _ in range(max_steps):
        mean, _, _ = agent.policy(minmax_normalize(obs, task.bounds))
        action = np.where(alive[:, None], np.clip(mean, -1, 1), 0.0)
        obs, reward, done, info = task.step(action)
        returns += np.where(alive, reward, 0.0)
        lengths += alive
        success |= alive & np.asarray(info["grasped"], dtype=bool)
        if "reached" in info:
            reached |= alive & np.asarray(info["reached"], dtype=bool)
        alive &= ~np.asarray(done, dtype=bool)
        if not alive.any():
            break
    if episode_rows is not None:
        for i in range(n):
            episode_rows.append(
                {"episode": i, "return": float(returns[i]), "success": int(success[i]), "reached": int(reached[i]), "length": int(lengths[i])}
            )
    return {
        "success_rate": float(success.mean()),
        "reach_rate": float(reached.mean()),
        "mean_return": float(returns.mean()),
    }
