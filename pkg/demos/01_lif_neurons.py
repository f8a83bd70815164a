# %% [markdown]
# # Leaky integrate-and-fire neurons
#
# A hidden LIF neuron integrates current, fires when its membrane crosses
# threshold and resets to zero. The output neurons never fire; they just leak
# and integrate, and their membrane is clamped.

# %%
import numpy as np

from spikegrasp.snn import LayerState, LIFParams, NLIFParams, lif_step, nlif_step

p = LIFParams(lam=0.2, threshold=1.0)
state = LayerState.zeros(3)
currents = np.array([0.8, 1.5, 3.0])  # below, just above, far above threshold

trace, raster = [], []
for _ in range(20):
    state, s = lif_step(state, currents, p)
    trace.append(state.v.copy())
    raster.append(s)

raster = np.array(raster)
print("spike counts over 20 steps:", raster.sum(axis=0))
print("membrane of the sub-threshold neuron approaches", np.array(trace)[-1, 0].round(3))

# %% [markdown]
# A constant current of 0.8 settles at 0.8 and never fires. Stronger input
# fires periodically, and the period shrinks as the current grows.

# %%
for row in raster.T:
    print("".join("|" if s else "." for s in row))

# %%
q = NLIFParams(lam=0.2, v_clip=10.0)
out = LayerState(np.zeros(2))
for _ in range(50):
    out = nlif_step(out, np.array([4.0, 80.0]), q)
print("output membranes after 50 steps:", out.v)  # the second one sits on the clamp
