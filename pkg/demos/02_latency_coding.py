# %% [markdown]
# # Turning observations into spikes
#
# Latency coding fires each feature exactly once; bigger values fire sooner.
# Current injection, the default in the policy, feeds the normalized value
# in as a constant current on every step.

# %%
import numpy as np

from spikegrasp.encoding import NormalizationBounds, current_encode, latency_encode, minmax_normalize

bounds = NormalizationBounds(low=np.array([-1.0, 0.0, 0.0]), high=np.array([1.0, 10.0, 2.0]))
obs = np.array([0.5, 2.0, 2.0])
x_hat = minmax_normalize(obs, bounds)
print("normalized:", x_hat)

spikes = latency_encode(x_hat, 8)
for value, row in zip(x_hat, spikes):
    print(f"{value:4.2f}  " + "".join("|" if s else "." for s in row))

# %%
print("current-injection sequence shape (T, d):", current_encode(x_hat, 8).shape)
