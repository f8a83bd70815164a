"""
Analytical inference-energy model for the spiking network and its ReLU twin.

Energies are accumulated in picojoules (float64) and reported in millijoules.
The SNN's first layer is billed as multiply-accumulate work gated by the
hidden spike rate; its output layer only accumulates incoming spikes.  The
ANN bills multiply-accumulates on both layers, gated by activation rates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

PJ_PER_MJ = 1e9


@dataclass(frozen=True)
class OpCosts:
    mult: float = 4.6  # pJ per multiply
    add: float = 0.9  # pJ per accumulate

    def __post_init__(self):
        if self.mult <= 0 or self.add <= 0:
            raise ValueError("operation costs must be positive")


@dataclass(frozen=True)
class EnergyConfig:
    B: int
    T: int
    N0: int
    N1: int
    N2: int
    r: Optional[float] = None
    r_mem: Optional[float] = None
    r_in: Optional[float] = None
    r_out: Optional[float] = None

    def __post_init__(self):
        if min(self.B, self.T, self.N0, self.N1, self.N2) < 1:
            raise ValueError("batch, steps and layer sizes must be >= 1")
        for name in ("r", "r_mem", "r_in", "r_out"):
            val = getattr(self, name)
            if val is not None and not 0.0 <= val <= 1.0:
                raise ValueError(f"rate {name}={val} outside [0, 1]")

    @property
    def dims(self):
        return (self.B, self.T, self.N0, self.N1, self.N2)


@dataclass(frozen=True)
class EnergyReport:
    e_snn_mj: float
    e_ann_mj: float
    saving: float
    snn_ops: dict
    ann_ops: dict
    snn: EnergyConfig
    ann: EnergyConfig

    def table(self) -> str:
        head = f"{'model':<6}{'r/r_in':>8}{'r_mem/r_out':>13}{'B':>7}{'T':>6}{'N0':>5}{'N1':>6}{'N2':>5}{'E (mJ)':>10}"
        rows = [head, "-" * len(head)]
        for name, cfg, rate_a, rate_b, e in (
            ("SNN", self.snn, self.snn.r, self.snn.r_mem, self.e_snn_mj),
            ("ANN", self.ann, self.ann.r_in, self.ann.r_out, self.e_ann_mj),
        ):
            rows.append(
                f"{name:<6}{rate_a:>8.4g}{rate_b:>13.4g}{cfg.B:>7}{cfg.T:>6}{cfg.N0:>5}{cfg.N1:>6}{cfg.N2:>5}{e:>10.2f}"
            )
        rows.append(f"energy saving: {100.0 * self.saving:.2f}%")
        return "\n".join(rows)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "r", "r_mem_or_r_out", "B", "T", "N0", "N1", "N2", "E_mJ", "saving"])
            w.writerow(["snn", self.snn.r, self.snn.r_mem, *self.snn.dims, f"{self.e_snn_mj:.6f}", f"{self.saving:.6f}"])
            w.writerow(["ann", self.ann.r_in, self.ann.r_out, *self.ann.dims, f"{self.e_ann_mj:.6f}", f"{self.saving:.6f}"])


def input_spike_rate(spikes) -> float:
    """Mean firing of the hidden LIF layer over a (B, N1) record of binary spikes.

    Any leading axes (e.g. time) are folded into the batch axis.
    """
    s = np.asarray(spikes, dtype=float)
    if s.size == 0:
        raise ValueError("empty spike record")
    return float(s.mean())


def membrane_activation_rate(traces) -> float:
    """Fraction of output neurons whose membrane is nonzero at some step; traces are (N2, T)."""
    v = np.asarray(traces, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return float(np.mean(np.sum(np.abs(v), axis=1) > 0))


def ann_activation_rates(inputs, hidden):
    """(r_in, r_out): fractions of strictly positive inputs and hidden activations."""
    return float(np.mean(np.asarray(inputs) > 0)), float(np.mean(np.asarray(hidden) > 0))


def _mac_row(fan_in: int, costs: OpCosts) -> float:
    # one neuron's fan-in: fan_in multiplies and fan_in - 1 additions
    return fan_in * costs.mult + (fan_in - 1) * costs.add


def snn_operation_counts(cfg: EnergyConfig) -> dict:
    if cfg.r is None or cfg.r_mem is None:
        raise ValueError("SNN energy needs r and r_mem")
    bt = cfg.B * cfg.T
    return {
        "layer1_mult": bt * cfg.N1 * cfg.r * cfg.N0,
        "layer1_add": bt * cfg.N1 * cfg.r * (cfg.N0 - 1),
        "layer2_mult": 0.0,
        "layer2_add": bt * cfg.N2 * cfg.r_mem * cfg.N1,
    }


def ann_operation_counts(cfg: EnergyConfig) -> dict:
    if cfg.r_in is None or cfg.r_out is None:
        raise ValueError("ANN energy needs r_in and r_out")
    bt = cfg.B * cfg.T
    return {
        "layer1_mult": bt * cfg.N1 * cfg.r_in * cfg.N0,
        "layer1_add": bt * cfg.N1 * cfg.r_in * (cfg.N0 - 1),
        "layer2_mult": bt * cfg.N2 * cfg.r_out * cfg.N1,
        "layer2_add": bt * cfg.N2 * cfg.r_out * (cfg.N1 - 1),
    }


def snn_energy(cfg: EnergyConfig, costs: OpCosts = OpCosts()) -> float:
    """Energy in pJ."""
    if cfg.r is None or cfg.r_mem is None:
        raise ValueError("SNN energy needs r and r_mem")
    per_step = cfg.N1 * cfg.r * _mac_row(cfg.N0, costs) + cfg.N2 * cfg.r_mem * cfg.N1 * costs.add
    return cfg.B * cfg.T * per_step


def ann_energy(cfg: EnergyConfig, costs: OpCosts = OpCosts()) -> float:
    """Energy in pJ."""
    if cfg.r_in is None or cfg.r_out is None:
        raise ValueError("ANN energy needs r_in and r_out")
    per_step = cfg.N1 * cfg.r_in * _mac_row(cfg.N0, costs) + cfg.N2 * cfg.r_out * _mac_row(cfg.N1, costs)
    return cfg.B * cfg.T * per_step


def energy_report(snn: EnergyConfig, ann: EnergyConfig, costs: OpCosts = OpCosts()) -> EnergyReport:
    if snn.dims != ann.dims:
        raise ValueError(f"SNN dims {snn.dims} and ANN dims {ann.dims} differ")
    e_snn = snn_energy(snn, costs)
    e_ann = ann_energy(ann, costs)
    saving = 1.0 - e_snn / e_ann if e_ann > 0 else math.nan
    return EnergyReport(
        e_snn / PJ_PER_MJ,
        e_ann / PJ_PER_MJ,
        saving,
        snn_operation_counts(snn),
        ann_operation_counts(ann),
        snn,
        ann,
    )


TABLE_ONE_SNN = EnergyConfig(B=8192, T=500, N0=18, N1=256, N2=7, r=0.31, r_mem=1.0)
TABLE_ONE_ANN = EnergyConfig(B=8192, T=500, N0=18, N1=256, N2=7, r_in=1.0, r_out=0.48)


# -- live measurement ----------------------------------------------------------------


def measure_snn_rates(params, spec, obs_hat):
    """(r, r_mem) of a spiking network on a batch of normalized observations.

    ``r`` averages hidden spikes over samples, neurons and timesteps; ``r_mem``
    counts (sample, output neuron) pairs whose membrane trace is ever nonzero.
    """
    from .policy import snn_readout

    _, res = snn_readout(params, obs_hat, spec)
    r = input_spike_rate(res.spikes)
    traces = np.moveaxis(res.membranes, 0, -1).reshape(-1, res.membranes.shape[0])
    return r, membrane_activation_rate(traces)


def measure_ann_rates(params, obs_hat):
    """(r_in, r_out) of the ReLU network on a batch of normalized observations."""
    from .policy import ann_readout

    _, (x, _, hidden) = ann_readout(params, obs_hat)
    return ann_activation_rates(x, hidden)
