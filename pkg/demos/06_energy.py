# %% [markdown]
# # Counting operations and energy
#
# Spiking hidden layers only pay for accumulates when a spike arrives; the
# ANN pays a multiply-accumulate for every connection. Costs are 45 nm
# CMOS figures in picojoules.

# %%
import numpy as np

from spikegrasp.energy import TABLE_ONE_ANN, TABLE_ONE_SNN, EnergyConfig, energy_report, measure_snn_rates
from spikegrasp.policy import NetworkSpec, init_params

print(energy_report(TABLE_ONE_SNN, TABLE_ONE_ANN).table())

# %% [markdown]
# The same model with the rates of a freshly initialised network:

# %%
spec = NetworkSpec()
obs = np.random.default_rng(1).uniform(0, 1, (256, spec.n0))
r, r_mem = measure_snn_rates(init_params(spec, seed=1), spec, obs)
snn = EnergyConfig(8192, 500, 18, 256, 7, r=r, r_mem=r_mem)
print(f"r={r:.3f} r_mem={r_mem:.2f}")
print(energy_report(snn, TABLE_ONE_ANN).table())
