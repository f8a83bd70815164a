"""Observation normalization and conversion to network input sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NormalizationBounds:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.asarray(self.low, dtype=float)
        high = np.asarray(self.high, dtype=float)
        if low.shape != high.shape or low.ndim != 1:
            raise ValueError("bounds must be two 1-D arrays of equal length")
        if np.any(high <= low):
            bad = np.flatnonzero(high <= low)
            raise ValueError(f"degenerate bounds (max <= min) for features {bad.tolist()}")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @classmethod
    def unit(cls, d: int) -> "NormalizationBounds":
        return cls(np.zeros(d), np.ones(d))

    @property
    def dim(self) -> int:
        return self.low.size


def minmax_normalize(x, bounds: NormalizationBounds) -> np.ndarray:
    """Min-max scale the last axis of ``x`` into [0, 1], clamping out-of-range values."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != bounds.dim:
        raise ValueError(f"expected {bounds.dim} features, got {x.shape[-1]}")
    return np.clip((x - bounds.low) / (bounds.high - bounds.low), 0.0, 1.0)


def spike_times(x_hat, n_steps: int) -> np.ndarray:
    """Latency-code spike time per feature: floor((1 - x) * (T - 1))."""
    if n_steps < 2:
        raise ValueError("latency coding needs at least 2 time steps")
    x_hat = np.clip(np.asarray(x_hat, dtype=float), 0.0, 1.0)
    return np.floor((1.0 - x_hat) * (n_steps - 1)).astype(np.int64)


def latency_encode(x_hat, n_steps: int) -> np.ndarray:
    """Binary spike tensor of shape (..., d, T) with exactly one spike per feature row.

    Larger normalized values fire earlier.
    """
    times = spike_times(x_hat, n_steps)
    return (times[..., None] == np.arange(n_steps)).astype(float)


def current_encode(x_hat, n_steps: int) -> np.ndarray:
    """Constant current injection: the normalized vector repeated for T steps, shape (T, ...)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x_hat = np.asarray(x_hat, dtype=float)
    return np.broadcast_to(x_hat, (n_steps,) + x_hat.shape).copy()


def encode_sequence(x_hat, n_steps: int, mode: str = "current") -> np.ndarray:
    """Time-major input sequence (T, ..., d) for the network, in either encoder mode."""
    if mode == "current":
        return current_encode(x_hat, n_steps)
    if mode == "latency":
        return np.moveaxis(latency_encode(x_hat, n_steps), -1, 0)
    raise ValueError(f"unknown encoder mode {mode!r}")
