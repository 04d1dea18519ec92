"""Layered quantized spiking core: weight planes, control registers, and the
cycle-stepping engine.

Layers are indexed 0..K-1 over the LIF layers; sizes[0] is the input width
and weight plane k connects sizes[k] -> sizes[k+1].  All neurons of a layer
share one register file (one decoder per layer).  Stepping is vectorized
over neurons with raw integer arrays; results are bit-identical to scalar
per-neuron evaluation and independent of the worker-thread count.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fixedpoint import (
    WRAP,
    OverflowPolicy,
    QFormat,
    QWord,
    add_raw,
    encode_raw,
    fit_raw,
    mul_raw,
    raw_dtype,
    sub_raw,
)
from .neuron import NeuronRegisters, ResetMode
from .topology import Connectivity, ConnectivityKind, WeightMemory, build_mask

__all__ = [
    "RealRegisters",
    "CoreConfig",
    "SpikeRaster",
    "Core",
    "encode_register",
]

ALL_TO_ALL = Connectivity(ConnectivityKind.ALL_TO_ALL)


def encode_register(value: float, fmt: QFormat, clamp: bool = False) -> int:
    """Quantize a register/weight real; out-of-range is an error unless clamping."""
    wrapped = encode_raw(value, fmt, OverflowPolicy.WRAP)
    clamped = encode_raw(value, fmt, OverflowPolicy.SATURATE)
    if wrapped != clamped and not clamp:
        raise ValueError(
            f"value {value} not representable in {fmt} (range "
            f"[{fmt.min_value}, {fmt.max_value}])"
        )
    return clamped


@dataclass(frozen=True)
class RealRegisters:
    """Real-valued register file, as carried by config files."""

    decay_rate: float
    growth_rate: float
    v_threshold: float
    reset_mode: ResetMode = ResetMode.BY_SUBTRACTION
    v_reset: float = 0.0
    refractory_period: int = 0

    def __post_init__(self):
        if not 0.0 <= self.decay_rate <= 1.0:
            raise ValueError(f"decay_rate {self.decay_rate} outside [0, 1]")
        if self.refractory_period < 0:
            raise ValueError("refractory_period must be >= 0")

    def quantize(self, fmt: QFormat, clamp: bool = False) -> NeuronRegisters:
        return NeuronRegisters(
            decay_rate=QWord(fmt, encode_register(self.decay_rate, fmt, clamp)),
            growth_rate=QWord(fmt, encode_register(self.growth_rate, fmt, clamp)),
            v_threshold=QWord(fmt, encode_register(self.v_threshold, fmt, clamp)),
            reset_mode=self.reset_mode,
            v_reset=QWord(fmt, encode_register(self.v_reset, fmt, clamp)),
            refractory_period=self.refractory_period,
        )


@dataclass(frozen=True)
class CoreConfig:
    fmt: QFormat
    sizes: tuple[int, ...]                 # [N0 .. NK], N0 = input width
    connectivity: tuple[Connectivity, ...]  # one per LIF layer
    registers: tuple[RealRegisters, ...]    # one per LIF layer
    policy: OverflowPolicy = WRAP
    layer_latency: int = 0                 # 0: same-cycle cascade, 1: one cycle per layer
    n_ops_per_neuron: int = 4              # datapath ops per neuron update, for the ops model
    v_unit: float = 1e-3                   # volts per membrane unit
    i_unit: float = 1e-11                  # amps per activation unit

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ValueError("need an input width and at least one LIF layer")
        if any(n < 1 for n in self.sizes):
            raise ValueError("layer sizes must be >= 1")
        k = len(self.sizes) - 1
        if len(self.connectivity) != k or len(self.registers) != k:
            raise ValueError(
                f"{k} LIF layers need {k} connectivity and register entries, got "
                f"{len(self.connectivity)} and {len(self.registers)}"
            )
        if self.layer_latency not in (0, 1):
            raise ValueError("layer_latency must be 0 or 1")

    @classmethod
    def uniform(cls, fmt: QFormat, sizes, registers: RealRegisters,
                connectivity: Connectivity = ALL_TO_ALL, **kw) -> "CoreConfig":
        """Same registers and connectivity for every layer."""
        k = len(sizes) - 1
        return cls(fmt, tuple(sizes), (connectivity,) * k, (registers,) * k, **kw)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def neuron_count(self) -> int:
        # Hardware accounting counts the input layer as neurons.
        return sum(self.sizes)

    @property
    def synapse_count(self) -> int:
        total = 0
        for k, conn in enumerate(self.connectivity):
            total += int(build_mask(conn, self.sizes[k], self.sizes[k + 1]).sum())
        return total

    def with_format(self, fmt: QFormat) -> "CoreConfig":
        return replace(self, fmt=fmt)

    def config_hash(self) -> str:
        parts = [str(self.fmt), self.policy.value, str(self.layer_latency),
                 ",".join(map(str, self.sizes))]
        for conn, regs in zip(self.connectivity, self.registers):
            parts.append(
                f"{conn}|{regs.decay_rate!r}|{regs.growth_rate!r}|{regs.v_threshold!r}"
                f"|{regs.reset_mode.value}|{regs.v_reset!r}|{regs.refractory_period}"
            )
        return hashlib.sha256(";".join(parts).encode()).hexdigest()[:12]


@dataclass
class SpikeRaster:
    """Spike output of one sample: input stimulus plus every LIF layer."""

    input_spikes: np.ndarray            # [T, N0] bool
    layers: list[np.ndarray]            # K arrays, [T, Nk] bool
    meta: dict = field(default_factory=dict)

    @property
    def n_cycles(self) -> int:
        return self.input_spikes.shape[0]

    def spike_counts(self, layer: int = -1) -> np.ndarray:
        """Per-neuron spike totals for one LIF layer."""
        return self.layers[layer].sum(axis=0)

    def total_spikes(self) -> int:
        """Spikes emitted by LIF neurons (the stimulus is not counted)."""
        return int(sum(a.sum() for a in self.layers))

    def equals(self, other: "SpikeRaster") -> bool:
        return (
            np.array_equal(self.input_spikes, other.input_spikes)
            and len(self.layers) == len(other.layers)
            and all(np.array_equal(a, b) for a, b in zip(self.layers, other.layers))
        )


class _LayerRegs:
    """Raw register file of one layer (decoded views via `registers`)."""

    __slots__ = ("decay", "growth", "vth", "vreset", "mode", "refractory")

    def __init__(self, regs: NeuronRegisters):
        self.decay = regs.decay_rate.raw
        self.growth = regs.growth_rate.raw
        self.vth = regs.v_threshold.raw
        self.vreset = regs.v_reset.raw if regs.v_reset is not None else 0
        self.mode = regs.reset_mode
        self.refractory = regs.refractory_period


class Core:
    """One core instance: a single logical timeline of spike-clock cycles."""

    def __init__(self, cfg: CoreConfig, clamp_registers: bool = False, threads: int = 1):
        self.cfg = cfg
        self.fmt = cfg.fmt
        self.policy = cfg.policy
        self.threads = max(1, int(threads))
        self._regs = [
            _LayerRegs(r.quantize(cfg.fmt, clamp=clamp_registers)) for r in cfg.registers
        ]
        self.planes = [
            WeightMemory(cfg.fmt, build_mask(conn, cfg.sizes[k], cfg.sizes[k + 1]), layer=k)
            for k, conn in enumerate(cfg.connectivity)
        ]
        dt = raw_dtype(cfg.fmt)
        self._vmem = [np.zeros(n, dtype=dt) for n in cfg.sizes[1:]]
        self._act = [np.zeros(n, dtype=dt) for n in cfg.sizes[1:]]
        self._refr = [np.zeros(n, dtype=np.int64) for n in cfg.sizes[1:]]
        self._prev_out = [np.zeros(n, dtype=bool) for n in cfg.sizes[:-1]]
        self.cycle = 0
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None

    # -- configuration ------------------------------------------------------

    @property
    def n_layers(self) -> int:
        return self.cfg.n_layers

    def registers(self, layer: int) -> NeuronRegisters:
        r = self._regs[layer]
        f = self.fmt
        return NeuronRegisters(QWord(f, r.decay), QWord(f, r.growth), QWord(f, r.vth),
                               r.mode, QWord(f, r.vreset), r.refractory)

    def write_register(self, layer: int, name: str, value) -> None:
        """Program one control register; takes effect from the next cycle."""
        r = self._regs[layer]
        if name == "reset_mode":
            r.mode = value if isinstance(value, ResetMode) else ResetMode.from_name(value)
            return
        if name == "refractory_period":
            period = int(value)
            if period < 0:
                raise ValueError("refractory_period must be >= 0")
            r.refractory = period
            return
        if name not in ("decay_rate", "growth_rate", "v_threshold", "v_reset"):
            raise ValueError(f"unknown register {name!r}")
        raw = value.raw if isinstance(value, QWord) else encode_register(float(value), self.fmt)
        if name == "decay_rate":
            if not 0 <= raw * self.fmt.quantum <= 1.0:
                raise ValueError(f"decay_rate {raw * self.fmt.quantum} outside [0, 1]")
            r.decay = raw
        elif name == "growth_rate":
            r.growth = raw
        elif name == "v_threshold":
            r.vth = raw
        else:
            r.vreset = raw

    def write_weight(self, layer: int, pre: int, post: int, value) -> None:
        """Program one synapse; `value` is a signed real or QWord."""
        if isinstance(value, QWord):
            raw = value.raw
            if value.fmt != self.fmt:
                raise ValueError(f"weight format {value.fmt} != core format {self.fmt}")
        else:
            raw = encode_register(float(value), self.fmt)
        polarity = -1 if raw < 0 else 1
        mag = QWord(self.fmt, abs(raw)) if raw != self.fmt.min_raw else QWord(self.fmt, raw)
        if raw == self.fmt.min_raw:
            polarity = 1  # |min| is not representable; store the wrapped value directly
        self.planes[layer].write(pre, post, mag, polarity, self.policy)

    def decoded_registers(self) -> list[RealRegisters]:
        """Register values as the datapath sees them (decoded from the format)."""
        out = []
        q = self.fmt.quantum
        for r in self._regs:
            out.append(RealRegisters(r.decay * q, r.growth * q, r.vth * q,
                                     r.mode, r.vreset * q, r.refractory))
        return out

    def decoded_weights(self) -> list[np.ndarray]:
        return [p.raw.astype(np.float64) * self.fmt.quantum for p in self.planes]

    # -- stepping -------------------------------------------------------------

    def reset_state(self) -> None:
        """Between-sample reset: membranes, activations and counters to zero."""
        for a in (*self._vmem, *self._act):
            a[:] = 0
        for a in self._refr:
            a[:] = 0
        for a in self._prev_out:
            a[:] = False
        self.cycle = 0

    def _step_layer_slice(self, k: int, spikes_in: np.ndarray, out: np.ndarray,
                          lo: int, hi: int) -> None:
        fmt, policy = self.fmt, self.policy
        r = self._regs[k]
        w = self.planes[k].raw[:, lo:hi]
        vmem = self._vmem[k][lo:hi]
        refr = self._refr[k][lo:hi]

        # 1. activation: weighted sum of this cycle's input spikes.
        if policy is WRAP:
            act = fit_raw(spikes_in.astype(w.dtype) @ w, fmt, policy)
        else:
            # Saturation is order-sensitive: add in pre-synaptic index order.
            act = np.zeros(hi - lo, dtype=w.dtype)
            for i in np.flatnonzero(spikes_in):
                act = add_raw(act, w[i], fmt, policy)
        self._act[k][lo:hi] = act

        # 2./3. refractory hold, or membrane update + fire + reset.
        held = refr > 0
        leak = mul_raw(r.decay, vmem, fmt, policy)
        drive = mul_raw(r.growth, act, fmt, policy)
        updated = add_raw(sub_raw(vmem, leak, fmt, policy), drive, fmt, policy)
        updated = np.where(held, vmem, updated)
        spikes = (~held) & (updated >= r.vth)

        if r.mode is ResetMode.TO_CONSTANT:
            after = np.full_like(updated, r.vreset)
        elif r.mode is ResetMode.TO_ZERO:
            after = np.zeros_like(updated)
        elif r.mode is ResetMode.BY_SUBTRACTION:
            after = sub_raw(updated, r.vth, fmt, policy)
        else:  # DEFAULT: one more leak step, no discrete reset
            after = sub_raw(updated, mul_raw(r.decay, updated, fmt, policy), fmt, policy)

        self._vmem[k][lo:hi] = np.where(spikes, after, updated)
        self._refr[k][lo:hi] = np.where(held, refr - 1, np.where(spikes, r.refractory, 0))
        out[lo:hi] = spikes

    def _step_layer(self, k: int, spikes_in: np.ndarray) -> np.ndarray:
        n = self.cfg.sizes[k + 1]
        out = np.zeros(n, dtype=bool)
        if self._pool is None or n < 2 * self.threads:
            self._step_layer_slice(k, spikes_in, out, 0, n)
            return out
        bounds = np.linspace(0, n, self.threads + 1, dtype=int)
        futures = [
            self._pool.submit(self._step_layer_slice, k, spikes_in, out, int(lo), int(hi))
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if lo < hi
        ]
        for f in futures:
            f.result()
        return out

    def step_cycle(self, input_spikes) -> list[np.ndarray]:
        """Advance every layer by one spike-clock cycle; returns spike vectors."""
        stim = np.asarray(input_spikes, dtype=bool)
        if stim.shape != (self.cfg.sizes[0],):
            raise ValueError(f"input width {stim.shape} != ({self.cfg.sizes[0]},)")
        outs = []
        feed = stim
        for k in range(self.n_layers):
            if self.cfg.layer_latency == 1 and k > 0:
                feed = self._prev_out[k]  # previous cycle's output of layer k-1
            out = self._step_layer(k, feed)
            outs.append(out)
            feed = out
        if self.cfg.layer_latency == 1:
            self._prev_out = [stim] + outs[:-1]
        self.cycle += 1
        return outs

    def run_sample(self, stream, duration: int, watch=None):
        """Feed one sample for `duration` cycles from a fresh state.

        `stream` is a SpikeStream-like object (has to_dense) or a dense
        [T, N0] bool array.  `watch` selects membrane traces: a list of
        (layer, neuron) pairs, or "all".  Returns (SpikeRaster, traces)
        where traces maps (layer, neuron) -> float64[T] of decoded vmem
        at the end of each cycle.
        """
        n0 = self.cfg.sizes[0]
        if hasattr(stream, "to_dense"):
            dense = stream.to_dense(duration, n0)
        else:
            dense = np.asarray(stream, dtype=bool)
            if dense.ndim != 2 or dense.shape[1] != n0:
                raise ValueError(f"dense stream must be [T, {n0}], got {dense.shape}")
            if dense.shape[0] < duration:
                pad = np.zeros((duration - dense.shape[0], n0), dtype=bool)
                dense = np.vstack([dense, pad])
            dense = dense[:duration]

        watched = self._watch_list(watch)
        self.reset_state()
        rasters = [np.zeros((duration, n), dtype=bool) for n in self.cfg.sizes[1:]]
        traces = {key: np.zeros(duration) for key in watched}
        q = self.fmt.quantum
        for t in range(duration):
            outs = self.step_cycle(dense[t])
            for k, out in enumerate(outs):
                rasters[k][t] = out
            for (k, j) in watched:
                traces[(k, j)][t] = float(self._vmem[k][j]) * q
        meta = {
            "config": self.cfg.config_hash(),
            "format": str(self.fmt),
            "policy": self.policy.value,
            "layer_latency": self.cfg.layer_latency,
            "sizes": list(self.cfg.sizes),
            "v_unit": self.cfg.v_unit,
            "i_unit": self.cfg.i_unit,
        }
        return SpikeRaster(dense, rasters, meta), traces

    def _watch_list(self, watch):
        if watch is None:
            return []
        if watch == "all":
            return [(k, j) for k in range(self.n_layers) for j in range(self.cfg.sizes[k + 1])]
        for (k, j) in watch:
            if not (0 <= k < self.n_layers and 0 <= j < self.cfg.sizes[k + 1]):
                raise ValueError(f"watched neuron (layer={k}, neuron={j}) out of range")
        return list(watch)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
