# %% [markdown]
# # Shaped reward, curriculum and the dead zone
#
# Stage one pays mostly for getting close and aligned; stage two shifts the
# weight to grip geometry and the grasp bonus. Within a stage, an environment
# that drifts away from its best distance gets its approach terms boosted
# for a fixed window.

# %%
import numpy as np

from spikegrasp.env import ArmEnv, EnvConfig
from spikegrasp.reward import (
    STAGE_ONE,
    STAGE_TWO,
    CurriculumSchedule,
    DeadZoneTracker,
    RewardScales,
    deadzone_update,
    schedule_weights,
    total_reward,
)

env = ArmEnv(EnvConfig(num_envs=4, seed=3))
env.reset()
_, geom, _, _ = env.step(np.zeros((4, 7)))

for name, w in (("stage one", STAGE_ONE), ("stage two", STAGE_TWO)):
    total, parts = total_reward(geom, w, RewardScales())
    print(name, total.round(3), {k: v.round(3).tolist() for k, v in parts.items()})

# %%
sched = CurriculumSchedule(t1=2000)
print("update 1999 ->", sched.stage(1999), " update 2000 ->", sched.stage(2000))

# %% [markdown]
# Walk one environment towards the cube and then back out.

# %%
tracker = DeadZoneTracker.fresh(1)
for d in (0.30, 0.20, 0.10, 0.15, 0.15, 0.15):
    tracker = deadzone_update(tracker, [d], [False], [0.0])
    w = schedule_weights(0, sched, tracker)
    print(f"d_mid={d:.2f} active={bool(tracker.active[0])} alpha={w.alpha[0].round(3)}")
