# %% [markdown]
# # PPO on a one-step bandit
#
# Reward is -(a - 0.4)^2 for a constant observation. The spiking actor
# should learn to output 0.4 as its deterministic action.

# %%
import numpy as np

from spikegrasp.config import ExperimentConfig
from spikegrasp.ppo import PPOConfig
from spikegrasp.tasks import QuadraticToyTask
from spikegrasp.train import train

cfg = ExperimentConfig(ppo=PPOConfig(horizon=8, total_updates=200))
import tempfile

agent, rows = train(cfg, tempfile.mkdtemp(), task=QuadraticToyTask(64), write_checkpoints=False)

mean, _, _ = agent.policy(np.ones((1, 4)))
print("learned action:", float(mean[0, 0]))
print("mean reward, first vs last update:", rows[0]["mean_reward"], rows[-1]["mean_reward"])
