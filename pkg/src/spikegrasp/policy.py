"""
Two-layer spiking actor/critic networks and the matched ReLU baseline.

Both model kinds share the parameter layout ``W_in`` (n0 x n1) and ``W_out``
(n1 x n2), so checkpoints, optimizers and the energy audit treat them alike.
Inputs are observations already min-max normalized to [0, 1].
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, NamedTuple, Optional

import numpy as np

from .encoding import encode_sequence
from .snn import (
    LIFParams,
    NLIFParams,
    NumericalDivergence,
    SurrogateSpec,
    unroll_backward,
    unroll_forward,
)

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
LOG_STD_INIT = -0.5
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class NetworkSpec:
    n0: int = 18
    n1: int = 256
    n2: int = 7
    T: int = 8
    encoder: Literal["current", "latency"] = "current"
    lif: LIFParams = field(default_factory=LIFParams)
    nlif: NLIFParams = field(default_factory=NLIFParams)
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    init_scale: float = 5.0  # gain on W_in only; keeps the hidden layer spiking at init

    def __post_init__(self):
        if min(self.n0, self.n1, self.n2) < 1:
            raise ValueError("layer sizes must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.encoder not in ("current", "latency"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.encoder == "latency" and self.T < 2:
            raise ValueError("latency encoder needs T >= 2")

    def critic(self) -> "NetworkSpec":
        return replace(self, n2=1)


@dataclass
class PolicyParams:
    W_in: np.ndarray
    W_out: np.ndarray
    log_std: Optional[np.ndarray] = None

    def arrays(self) -> dict:
        out = {"W_in": self.W_in, "W_out": self.W_out}
        if self.log_std is not None:
            out["log_std"] = self.log_std
        return out

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            self.W_in.copy(),
            self.W_out.copy(),
            None if self.log_std is None else self.log_std.copy(),
        )


class ForwardStats(NamedTuple):
    spike_counts: np.ndarray  # (B, n1), spikes per hidden neuron over the window
    membranes: np.ndarray  # (T, B, n2), output membrane trace
    batch_size: int
    spikes: Optional[np.ndarray] = None  # (T, B, n1)


class ActivationStats(NamedTuple):
    hidden: np.ndarray  # (B, n1) post-ReLU activations
    r_in: float
    r_out: float


def init_params(spec: NetworkSpec, seed=0, with_log_std: bool = True) -> PolicyParams:
    """Uniform(-a, a) weights with ``a = gain / sqrt(fan_in)``.

    The gain is ``spec.init_scale`` for ``W_in`` and 1 for ``W_out``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a_in = spec.init_scale / np.sqrt(spec.n0)
    a_out = 1.0 / np.sqrt(spec.n1)
    w_in = rng.uniform(-a_in, a_in, size=(spec.n0, spec.n1))
    w_out = rng.uniform(-a_out, a_out, size=(spec.n1, spec.n2))
    log_std = np.full(spec.n2, LOG_STD_INIT) if with_log_std else None
    return PolicyParams(w_in, w_out, log_std)


def _as_batch(obs) -> np.ndarray:
    obs = np.asarray(obs, dtype=float)
    return obs[None, :] if obs.ndim == 1 else obs


# -- raw readouts (no output squashing) with caches for backprop ---------------


def snn_readout(params: PolicyParams, obs, spec: NetworkSpec):
    """Final-step N-LIF membrane, shape (B, n2), plus the unroll cache."""
    x = _as_batch(obs)
    seq = encode_sequence(x, spec.T, spec.encoder)
    res = unroll_forward(params.W_in, params.W_out, seq, spec.lif, spec.nlif, spec.surrogate)
    readout = res.membranes[-1]
    if not np.all(np.isfinite(readout)):
        raise NumericalDivergence("non-finite output membrane")
    return readout, res


def ann_readout(params: PolicyParams, obs):
    x = _as_batch(obs)
    pre = x @ params.W_in
    hidden = np.maximum(pre, 0.0)
    out = hidden @ params.W_out
    return out, (x, pre, hidden)


def readout(params: PolicyParams, obs, spec: NetworkSpec, kind: str = "snn"):
    if kind == "snn":
        out, res = snn_readout(params, obs, spec)
        return out, res
    if kind == "ann":
        return ann_readout(params, obs)
    raise ValueError(f"unknown model kind {kind!r}")


def readout_backward(params: PolicyParams, cache, grad_out, kind: str = "snn"):
    """Gradients (dW_in, dW_out) of a scalar loss given dL/d(readout)."""
    if kind == "snn":
        return unroll_backward(cache.cache, grad_out)
    x, pre, hidden = cache
    g_out = hidden.T @ grad_out
    g_hidden = (grad_out @ params.W_out.T) * (pre > 0)
    return x.T @ g_hidden, g_out


# -- public forward passes ------------------------------------------------------


def actor_forward(params: PolicyParams, obs_batch, spec: NetworkSpec):
    """Action means in (-1, 1) from the final-step output membrane."""
    v, res = snn_readout(params, obs_batch, spec)
    stats = ForwardStats(res.spikes.sum(axis=0), res.membranes, v.shape[0], res.spikes)
    return np.tanh(v), stats


def critic_forward(params: PolicyParams, obs_batch, spec: NetworkSpec) -> np.ndarray:
    v, _ = snn_readout(params, obs_batch, spec)
    return v


def ann_forward(params: PolicyParams, obs_batch, spec: Optional[NetworkSpec] = None):
    """``relu(obs @ W_in) @ W_out`` with activation-rate bookkeeping."""
    out, (x, _, hidden) = ann_readout(params, obs_batch)
    return out, ActivationStats(hidden, float(np.mean(x > 0)), float(np.mean(hidden > 0)))


def sample_action(mean, log_std, rng: np.random.Generator):
    """Diagonal Gaussian sample.

    Returns ``(clamped_action, raw_action, log_prob)``; the log density is
    evaluated at the raw (pre-clamp) sample.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.exp(np.asarray(log_std, dtype=float))
    raw = mean + std * rng.standard_normal(mean.shape)
    return np.clip(raw, -1.0, 1.0), raw, gaussian_log_prob(raw, mean, log_std)


def gaussian_log_prob(x, mean, log_std) -> np.ndarray:
    log_std = np.asarray(log_std, dtype=float)
    z = (np.asarray(x) - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z**2 - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(log_std) -> float:
    log_std = np.asarray(log_std, dtype=float)
    return float(np.sum(log_std + 0.5 * np.log(2.0 * np.pi * np.e)))


# -- checkpoints ------------------------------------------------------------------
#
# Little-endian layout:
#   8s   magic b"SPKGRSP1"
#   I    format version (1)
#   I    model kind (0 = snn, 1 = ann)
#   I    encoder (0 = current, 1 = latency)
#   5I   n0, n1, n2, T, has_log_std
#   7d   lif lam, resistance, threshold, dt, v_reset; nlif lam, v_clip
#   I    surrogate kind (0 = rectangular, 1 = fast-sigmoid)
#   d    surrogate width
#   d    init_scale
#   then float64 C-order arrays: W_in (n0*n1), W_out (n1*n2), log_std (n2, if present)

MAGIC = b"SPKGRSP1"
VERSION = 1
_HEADER = struct.Struct("<8sIII5I7dIdd")
_KINDS = ("snn", "ann")
_ENCODERS = ("current", "latency")
_SURROGATES = ("rectangular", "fast-sigmoid")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: PolicyParams, spec: NetworkSpec, kind: str = "snn") -> None:
    has_std = params.log_std is not None
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        _KINDS.index(kind),
        _ENCODERS.index(spec.encoder),
        spec.n0,
        spec.n1,
        spec.n2,
        spec.T,
        int(has_std),
        spec.lif.lam,
        spec.lif.resistance,
        spec.lif.threshold,
        spec.lif.dt,
        spec.lif.v_reset,
        spec.nlif.lam,
        spec.nlif.v_clip,
        _SURROGATES.index(spec.surrogate.kind),
        spec.surrogate.width,
        spec.init_scale,
    )
    buf = io.BytesIO()
    buf.write(header)
    for arr in params.arrays().values():
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path):
    """Returns ``(params, spec, kind)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    fields = _HEADER.unpack_from(data)
    magic, version, kind_i, enc_i, n0, n1, n2, T, has_std = fields[:9]
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    lam1, res, theta, dt1, v_reset, lam2, v_clip = fields[9:16]
    sur_i, sur_w, init_scale = fields[16:19]
    try:
        spec = NetworkSpec(
            n0=n0,
            n1=n1,
            n2=n2,
            T=T,
            encoder=_ENCODERS[enc_i],
            lif=LIFParams(lam1, res, theta, dt1, v_reset),
            nlif=NLIFParams(lam2, v_clip, 1.0),
            surrogate=SurrogateSpec(_SURROGATES[sur_i], sur_w),
            init_scale=init_scale,
        )
        kind = _KINDS[kind_i]
    except (IndexError, ValueError) as exc:
        raise CheckpointError(f"{path}: invalid header ({exc})") from exc

    sizes = [n0 * n1, n1 * n2] + ([n2] if has_std else [])
    expected = _HEADER.size + 8 * sum(sizes)
    if len(data) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(data)}")
    arrays, off = [], _HEADER.size
    for n in sizes:
        arrays.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(float))
        off += 8 * n
    params = PolicyParams(
        arrays[0].reshape(n0, n1),
        arrays[1].reshape(n1, n2),
        arrays[2] if has_std else None,
    )
    return params, spec, kind
