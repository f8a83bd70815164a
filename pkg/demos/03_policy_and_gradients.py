# %% [markdown]
# # The spiking actor and its gradients
#
# The actor is input -> LIF hidden layer -> non-spiking output layer, unrolled
# over T steps. Action means are tanh of the final output membrane.
# Backprop uses a rectangular surrogate in place of the spike derivative.

# %%
import numpy as np

from spikegrasp.policy import NetworkSpec, actor_forward, init_params, readout_backward, snn_readout

spec = NetworkSpec()  # 18 -> 256 -> 7, T = 8
params = init_params(spec, seed=0)
obs = np.random.default_rng(0).uniform(0, 1, (4, spec.n0))

mean, stats = actor_forward(params, obs, spec)
print("action means:\n", mean.round(3))
print("hidden spike rate:", float(stats.spikes.mean()).__round__(3))

# %% [markdown]
# The output weights see no spike nonlinearity, so their surrogate gradient
# is exact. A quick finite-difference spot check:

# %%
v, cache = snn_readout(params, obs, spec)
g = np.ones_like(v)
_, g_out = readout_backward(params, cache, g)

eps = 1e-6
params.W_out[3, 2] += eps
up = snn_readout(params, obs, spec)[0].sum()
params.W_out[3, 2] -= 2 * eps
down = snn_readout(params, obs, spec)[0].sum()
params.W_out[3, 2] += eps
print("analytic", g_out[3, 2], "numeric", (up - down) / (2 * eps))
