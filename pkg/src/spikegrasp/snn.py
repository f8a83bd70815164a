"""
Discrete-time LIF / non-spiking LIF dynamics and surrogate-gradient BPTT.

The hidden layer integrates

    v' = v + lam * dt * (-v + R * I)

and emits a binary spike wherever ``v' >= theta``, after which the membrane is
hard-reset to ``v_reset``.  The output layer uses the same leaky integration
but never spikes; its membrane is clamped to ``[-v_clip, v_clip]`` and read
out as a continuous value.

Backpropagation through time is written out by hand.  The Heaviside spike
function is replaced by a surrogate pseudo-derivative in the backward pass
and the reset multiplication is treated as a constant (detached).  For
verification, ``unroll_forward`` can instead run a "smooth twin" whose spike
function is a genuine sigmoid; its backward pass is then the exact gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Optional

import numpy as np
from numba import njit


class NumericalDivergence(FloatingPointError):
    """Raised when non-finite values enter the neuron dynamics."""


@dataclass(frozen=True)
class LIFParams:
    lam: float = 0.2
    resistance: float = 1.0
    threshold: float = 1.0
    dt: float = 1.0
    v_reset: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.lam * self.dt <= 1.0:
            raise ValueError(f"lam*dt must lie in (0, 1], got {self.lam * self.dt}")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class NLIFParams:
    lam: float = 0.2
    v_clip: float = 10.0
    dt: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.lam * self.dt <= 1.0:
            raise ValueError(f"lam*dt must lie in (0, 1], got {self.lam * self.dt}")
        if self.v_clip <= 0:
            raise ValueError("v_clip must be positive")


@dataclass(frozen=True)
class SurrogateSpec:
    """Pseudo-derivative used in place of dH/dv.

    ``width`` is the half-width of the rectangular window or the steepness
    ``k`` of the fast sigmoid, depending on ``kind``.
    """

    kind: Literal["rectangular", "fast-sigmoid"] = "rectangular"
    width: float = 0.5

    def __post_init__(self):
        if self.kind not in ("rectangular", "fast-sigmoid"):
            raise ValueError(f"unknown surrogate kind {self.kind!r}")
        if self.width <= 0:
            raise ValueError("surrogate width must be positive")


@dataclass
class LayerState:
    v: np.ndarray
    s: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, shape, spiking: bool = True) -> "LayerState":
        v = np.zeros(shape)
        return cls(v=v, s=np.zeros(shape) if spiking else None)


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalDivergence(f"non-finite {what}")


def lif_step(state: LayerState, current, p: LIFParams = LIFParams()):
    """Advance one LIF layer by one step. Returns ``(new_state, spikes)``."""
    current = np.asarray(current, dtype=float)
    if current.shape != state.v.shape:
        raise ValueError(f"current shape {current.shape} != layer shape {state.v.shape}")
    _check_finite(current, "input current")
    v = state.v + p.lam * p.dt * (-state.v + p.resistance * current)
    spikes = (v >= p.threshold).astype(float)
    v = np.where(spikes > 0, p.v_reset, v)
    return LayerState(v=v, s=spikes), spikes


def nlif_step(state: LayerState, current, p: NLIFParams = NLIFParams()) -> LayerState:
    current = np.asarray(current, dtype=float)
    if current.shape != state.v.shape:
        raise ValueError(f"current shape {current.shape} != layer shape {state.v.shape}")
    _check_finite(current, "input current")
    v = state.v + p.lam * p.dt * (-state.v + current)
    return LayerState(v=np.clip(v, -p.v_clip, p.v_clip))


def surrogate_grad(v_minus_theta, spec: SurrogateSpec = SurrogateSpec()) -> np.ndarray:
    x = np.abs(np.asarray(v_minus_theta, dtype=float))
    if spec.kind == "rectangular":
        return np.where(x <= spec.width, 1.0 / (2.0 * spec.width), 0.0)
    # fast sigmoid, scaled so it integrates to one like the rectangle
    k = spec.width
    return 0.5 * k / (1.0 + k * x) ** 2


_RECT, _FAST_SIGMOID, _SMOOTH = 0, 1, 2


@njit(cache=True, error_model="numpy", fastmath=True)
def _forward_kernel(drive, w_out, a1, theta, v_reset, smooth_k, a2, v_clip, u1_out, s_out, u2_out, v2_out):
    # drive is (Td, B, N1) with Td == 1 for time-constant input; loops are
    # time-outer so every inner access is contiguous.  The output layer only
    # accumulates rows of w_out for neurons that spiked.
    n_steps, batch, n1 = u1_out.shape
    n2 = w_out.shape[1]
    const = drive.shape[0] == 1
    v1 = np.zeros((batch, n1))
    v2 = np.zeros((batch, n2))
    acc = np.empty(n2)
    for t in range(n_steps):
        td = 0 if const else t
        for b in range(batch):
            acc[:] = 0.0
            for i in range(n1):
                u = v1[b, i] + a1 * (drive[td, b, i] - v1[b, i])
                if smooth_k > 0.0:
                    s = 0.5 * (1.0 + np.tanh(0.5 * smooth_k * (u - theta)))
                else:
                    s = 1.0 if u >= theta else 0.0
                u1_out[t, b, i] = u
                s_out[t, b, i] = s
                v1[b, i] = u * (1.0 - s) + v_reset * s
                if s != 0.0:
                    for k in range(n2):
                        acc[k] += s * w_out[i, k]
            for k in range(n2):
                u2 = v2[b, k] + a2 * (acc[k] - v2[b, k])
                u2_out[t, b, k] = u2
                v2[b, k] = min(max(u2, -v_clip), v_clip)
                v2_out[t, b, k] = v2[b, k]


@njit(cache=True, error_model="numpy", fastmath=True)
def _backward_kernel(g_u2, u1, spikes, w_out_t, a1, theta, v_reset, a2, mode, width, smooth_k, detach, g_drive, g_w_out):
    # g_drive is (Td, B, N1): per-step dL/d(drive), summed over time when Td == 1.
    # w_out_t is W_out transposed (N2, N1) so the spike-gradient pass runs over contiguous rows.
    n_steps, batch, n1 = u1.shape
    n2 = w_out_t.shape[0]
    const = g_drive.shape[0] == 1
    g_v = np.zeros((batch, n1))
    g_s = np.empty(n1)
    for t in range(n_steps - 1, -1, -1):
        td = 0 if const else t
        for b in range(batch):
            g_s[:] = 0.0
            for k in range(n2):
                gk = a2 * g_u2[t, b, k]
                for i in range(n1):
                    g_s[i] += gk * w_out_t[k, i]
            for i in range(n1):
                u = u1[t, b, i]
                x = u - theta
                if mode == 2:
                    s = spikes[t, b, i] * 1.0
                    ds = smooth_k * s * (1.0 - s)
                else:
                    s = 1.0 if u >= theta else 0.0
                    if mode == 0:
                        ds = 1.0 / (2.0 * width) if abs(x) <= width else 0.0
                    else:
                        ds = 0.5 * width / (1.0 + width * abs(x)) ** 2
                if s != 0.0:
                    for k in range(n2):
                        g_w_out[i, k] += a2 * s * g_u2[t, b, k]
                gs = g_s[i]
                if not detach:
                    gs += g_v[b, i] * (v_reset - u)
                g_u = g_v[b, i] * (1.0 - s) + gs * ds
                g_drive[td, b, i] += a1 * g_u
                g_v[b, i] = (1.0 - a1) * g_u


@dataclass
class UnrollCache:
    """Everything ``unroll_backward`` needs from a forward pass.

    Arrays are stacked along a leading time axis: ``inputs`` is (T, B, N0)
    or (1, B, N0) when the input is constant over time, ``u_hidden`` and
    ``spikes`` are (T, B, N1), ``u_out`` is (T, B, N2).  ``u_*`` hold
    pre-reset / pre-clamp membranes.
    """

    inputs: np.ndarray
    u_hidden: np.ndarray
    spikes: np.ndarray
    u_out: np.ndarray
    weights_in: np.ndarray
    weights_out: np.ndarray
    lif: LIFParams
    nlif: NLIFParams
    surrogate: SurrogateSpec
    smooth_steepness: Optional[float] = None
    extras: dict = field(default_factory=dict)


class UnrollResult(NamedTuple):
    membranes: np.ndarray  # (T, B, N2) output membrane trace
    spikes: np.ndarray  # (T, B, N1) hidden spikes
    cache: UnrollCache


def unroll_forward(
    weights_in,
    weights_out,
    input_sequence,
    lif: LIFParams = LIFParams(),
    nlif: NLIFParams = NLIFParams(),
    surrogate: SurrogateSpec = SurrogateSpec(),
    smooth_steepness: Optional[float] = None,
) -> UnrollResult:
    """Run the input -> LIF -> N-LIF network for ``len(input_sequence)`` steps.

    ``input_sequence`` has shape (T, B, N0) or (T, N0).  With
    ``smooth_steepness`` set, hidden "spikes" are ``sigmoid(k * (u - theta))``
    instead of a hard threshold (smooth twin used for gradient checks).
    """
    w_in = np.asarray(weights_in, dtype=float)
    w_out = np.asarray(weights_out, dtype=float)
    x = np.asarray(input_sequence, dtype=float)
    if x.ndim == 2:
        x = x[:, None, :]
    if x.ndim != 3:
        raise ValueError("input_sequence must be (T, N0) or (T, B, N0)")
    n_steps, batch, n0 = x.shape
    if w_in.ndim != 2 or w_in.shape[0] != n0:
        raise ValueError(f"weights_in shape {w_in.shape} incompatible with N0={n0}")
    if w_out.ndim != 2 or w_out.shape[0] != w_in.shape[1]:
        raise ValueError(f"weights_out shape {w_out.shape} incompatible with N1={w_in.shape[1]}")
    _check_finite(x, "input sequence")
    n1, n2 = w_out.shape

    a1 = lif.lam * lif.dt
    a2 = nlif.lam * nlif.dt
    # current injection repeats one input vector; compute its drive once
    x_drive = x[:1] if n_steps > 1 and np.array_equal(x, np.broadcast_to(x[:1], x.shape)) else x
    drive = lif.resistance * (x_drive.reshape(-1, n0) @ w_in).reshape(x_drive.shape[0], batch, n1)
    u_hidden = np.empty((n_steps, batch, n1))
    # binary spikes are stored as bool to cut memory traffic; the smooth twin needs floats
    spikes = np.empty((n_steps, batch, n1), dtype=bool if smooth_steepness is None else float)
    u_out = np.empty((n_steps, batch, n2))
    v_out_trace = np.empty((n_steps, batch, n2))
    _forward_kernel(
        drive, np.ascontiguousarray(w_out), a1, lif.threshold, lif.v_reset, smooth_steepness or 0.0,
        a2, nlif.v_clip, u_hidden, spikes, u_out, v_out_trace,
    )
    cache = UnrollCache(x_drive, u_hidden, spikes, u_out, w_in, w_out, lif, nlif, surrogate, smooth_steepness)
    return UnrollResult(v_out_trace, spikes, cache)


def unroll_backward(cache: UnrollCache, upstream_grad, detach_reset: Optional[bool] = None):
    """Reverse-mode gradients of the final-step readout w.r.t. both weight matrices.

    ``upstream_grad`` is dL/dv_out[T-1] with shape (B, N2).  The reset path
    is detached by default for the spiking network and attached for the smooth
    twin (where the full chain rule is exact).
    """
    g = np.asarray(upstream_grad, dtype=float)
    n_steps, batch, n1 = cache.spikes.shape
    n2 = cache.u_out.shape[2]
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != (batch, n2):
        raise ValueError(f"upstream grad shape {g.shape} != readout shape {(batch, n2)}")
    if detach_reset is None:
        detach_reset = cache.smooth_steepness is None

    lif, nlif = cache.lif, cache.nlif
    a1 = lif.lam * lif.dt
    a2 = nlif.lam * nlif.dt

    g_u2 = np.empty_like(cache.u_out)
    g_v2 = g
    for t in range(n_steps - 1, -1, -1):
        gu2 = g_v2 * (np.abs(cache.u_out[t]) < nlif.v_clip)
        g_u2[t] = gu2
        g_v2 = (1.0 - a2) * gu2

    if cache.smooth_steepness is not None:
        mode, k = _SMOOTH, cache.smooth_steepness
    else:
        mode, k = (_RECT if cache.surrogate.kind == "rectangular" else _FAST_SIGMOID), 0.0
    x = cache.inputs
    g_drive = np.zeros((x.shape[0], batch, n1))
    grad_out = np.zeros((n1, n2))
    _backward_kernel(
        g_u2, cache.u_hidden, cache.spikes, np.ascontiguousarray(cache.weights_out.T), a1, lif.threshold,
        lif.v_reset, a2, mode, cache.surrogate.width, k, bool(detach_reset), g_drive, grad_out,
    )
    n0 = x.shape[2]
    grad_in = lif.resistance * x.reshape(-1, n0).T @ g_drive.reshape(-1, n1)
    return grad_in, grad_out
