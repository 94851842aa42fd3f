"""Analytical cycle model of a spatially mapped sparse dataflow accelerator.

Each layer is its own pipeline stage. A stage spends

    ceil(active_sites * mean_offsets * macs_per_offset / parallelism) + fifo_overhead

cycles per frame (``mean_offsets`` is 1 for 1x1 layers and pooling heads).
Stages overlap, so a frame costs the slowest stage plus the pipeline fill
(sum of per-stage overheads). The CPU-side GRU + FC head adds a fixed time
proportional to its MAC count.

First-order model: token FIFO stalls and line-buffer refills are folded into
the constant per-stage overhead.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import engine
from .errors import ArgumentError, ConfigError
from .model import LayerSpec, Model, ModelSpec, run_backbone

DEFAULT_PARALLELISM = {
    "conv1x1": 64,
    "subm_conv3x3": 64,
    "subm_dw3x3": 16,
    "strided_conv3x3": 64,
    "strided_dw3x3": 16,
    "max_pool2x2": 8,
    "global_avg_pool": 8,
}
QPARAM_BYTES = 5
# kinds whose work scales with the measured kernel-offset count
OFFSET_KINDS = ("subm_conv3x3", "subm_dw3x3", "strided_conv3x3", "strided_dw3x3", "max_pool2x2")


@dataclass(frozen=True)
class HwConfig:
    clock_hz: float = 200e6
    parallelism: dict = field(default_factory=lambda: dict(DEFAULT_PARALLELISM))
    weight_budget_bytes: int = 4 * 1024 * 1024
    fifo_overhead_cycles: int = 32
    cpu_macs_per_second: float = 2.0e8
    auto_balance: bool = False
    mac_budget: int = 1024  # total MACs/cycle shared across stages in auto-balance mode

    def __post_init__(self):
        if self.clock_hz <= 0 or self.cpu_macs_per_second <= 0:
            raise ConfigError("clock and CPU throughput must be positive")
        if self.weight_budget_bytes < 0 or self.fifo_overhead_cycles < 0:
            raise ConfigError("budget and overhead must be non-negative")
        if self.auto_balance and self.mac_budget < 1:
            raise ConfigError("auto-balance needs a positive MAC budget")

    def parallelism_for(self, kind: str) -> int:
        p = self.parallelism.get(kind)
        if p is None or p <= 0:
            raise ConfigError(f"no positive parallelism configured for {kind!r}")
        return int(p)

    @classmethod
    def from_dict(cls, d: dict) -> "HwConfig":
        d = dict(d)
        par = dict(DEFAULT_PARALLELISM)
        par.update(d.pop("parallelism", {}) or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown hardware config keys {sorted(unknown)}")
        return cls(parallelism=par, **d)


@dataclass(frozen=True)
class ProfileEntry:
    active_sites: float
    mean_offsets: float


@dataclass(frozen=True)
class SparsityProfile:
    entries: tuple[ProfileEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def scaled(self, factor: float, spec: ModelSpec | None = None) -> "SparsityProfile":
        """Active counts times ``factor`` (clipped to layer area when ``spec`` is given)."""
        caps = _layer_areas(spec) if spec is not None else [math.inf] * len(self.entries)
        return SparsityProfile(tuple(ProfileEntry(min(e.active_sites * factor, cap), e.mean_offsets)
                                     for e, cap in zip(self.entries, caps)))


@dataclass
class LayerRow:
    layer: int
    name: str
    kind: str
    active: float
    offsets: float
    parallelism: int
    cycles: int


@dataclass
class LatencyReport:
    layers: list[LayerRow]
    bottleneck: int
    total_cycles: int
    fill_cycles: int
    scnn_latency_s: float
    head_latency_s: float
    weight_bytes: int
    clock_hz: float

    @property
    def layer_cycles(self) -> list[int]:
        return [r.cycles for r in self.layers]

    @property
    def total_latency_s(self) -> float:
        return self.scnn_latency_s + self.head_latency_s

    def to_json(self) -> str:
        doc = {
            "layers": [asdict(r) for r in self.layers],
            "bottleneck": self.bottleneck,
            "total_cycles": self.total_cycles,
            "fill_cycles": self.fill_cycles,
            "clock_hz": self.clock_hz,
            "scnn_latency_s": self.scnn_latency_s,
            "head_latency_s": self.head_latency_s,
            "total_latency_s": self.total_latency_s,
            "weight_bytes": self.weight_bytes,
        }
        return json.dumps(doc, indent=1, sort_keys=True)


def _layers_of(model) -> list[LayerSpec]:
    if isinstance(model, ModelSpec):
        return model.layer_specs()
    return list(model)


def _layer_areas(spec: ModelSpec) -> list[int]:
    """Sites each layer iterates over at full density (output grid; input grid for pooling)."""
    areas = []
    for ls, (h, w) in zip(spec.layer_specs(), spec.layer_geometries()):
        if ls.stride == 2:
            h, w = engine.strided_geometry(h, w)
        areas.append(h * w)
    return areas


def weight_footprint(model) -> int:
    """Backbone bytes: int8 weights + int32 biases + 5 bytes per QuantParams record."""
    return sum(ls.weight_count + 4 * ls.bias_count + QPARAM_BYTES * ls.qparam_count
               for ls in _layers_of(model))


def _work(layer: LayerSpec, entry: ProfileEntry) -> float:
    offsets = entry.mean_offsets if layer.kind in OFFSET_KINDS else 1.0
    return entry.active_sites * offsets * layer.macs_per_offset


def layer_cycles(layer: LayerSpec, entry: ProfileEntry, hw: HwConfig, parallelism: int | None = None) -> int:
    par = hw.parallelism_for(layer.kind) if parallelism is None else int(parallelism)
    if par <= 0:
        raise ConfigError(f"parallelism must be positive for {layer.name or layer.kind}")
    if entry.active_sites < 0:
        raise ArgumentError("negative active-site count")
    return math.ceil(_work(layer, entry) / par) + hw.fifo_overhead_cycles


def head_macs(spec: ModelSpec) -> int:
    d, hd = spec.embedding_size, spec.gru_hidden
    return 3 * hd * (d + hd) + 2 * hd


def model_latency(model, profile: SparsityProfile, hw: HwConfig) -> LatencyReport:
    layers = _layers_of(model)
    if len(profile.entries) < len(layers):
        raise ArgumentError(f"profile covers {len(profile.entries)} layers, model has {len(layers)}")
    entries = profile.entries[:len(layers)]
    if hw.auto_balance:
        work = [_work(ls, e) for ls, e in zip(layers, entries)]
        total_work = sum(work) or 1.0
        pars = [max(1, int(hw.mac_budget * w // total_work)) for w in work]
    else:
        pars = [hw.parallelism_for(ls.kind) for ls in layers]
    rows = []
    for i, (ls, e, p) in enumerate(zip(layers, entries, pars)):
        rows.append(LayerRow(i, ls.name, ls.kind, e.active_sites, e.mean_offsets, p,
                             layer_cycles(ls, e, hw, p)))
    fill = hw.fifo_overhead_cycles * len(rows)
    if rows:
        bottleneck = max(range(len(rows)), key=lambda i: (rows[i].cycles, -i))
        total = rows[bottleneck].cycles + fill
    else:
        bottleneck, total = -1, 0
    head = head_macs(model) / hw.cpu_macs_per_second if isinstance(model, ModelSpec) else 0.0
    return LatencyReport(rows, bottleneck, total, fill, total / hw.clock_hz, head,
                         weight_footprint(layers), hw.clock_hz)


def measure_profile(model: Model, inputs: Sequence) -> SparsityProfile:
    """Run the engine on ``inputs`` and average each layer's active sites and kernel offsets."""
    if len(inputs) == 0:
        raise ArgumentError("measure_profile needs at least one input")
    n_layers = len(model.layers)
    active = np.zeros(n_layers)
    pairs = np.zeros(n_layers)
    for x in inputs:
        counter = engine.OpCounter()
        run_backbone(model, x, counter)
        for i, (lp, st) in enumerate(zip(model.layers, counter.layers)):
            sites = st.in_sites if lp.spec.kind == "global_avg_pool" else st.out_sites
            active[i] += sites
            pairs[i] += st.offsets_total if lp.spec.kind != "global_avg_pool" else sites
    entries = tuple(ProfileEntry(float(a / len(inputs)), float(p / a) if a else 0.0)
                    for a, p in zip(active, pairs))
    return SparsityProfile(entries)


def analytic_profile(spec: ModelSpec, density: float) -> SparsityProfile:
    """Expected profile for uniformly random input occupancy at ``density``.

    Submanifold layers keep the density; a stride-2 3x3 layer's output is
    active when any of its 9 receptive-field inputs is.
    """
    if not 0.0 <= density <= 1.0:
        raise ArgumentError("density must lie in [0, 1]")
    d = density
    entries = []
    for ls, (h, w) in zip(spec.layer_specs(), spec.layer_geometries()):
        if ls.kind in ("strided_conv3x3", "strided_dw3x3", "max_pool2x2"):
            window = 4 if ls.kind == "max_pool2x2" else 9
            ho, wo = engine.strided_geometry(h, w)
            d_out = 1.0 - (1.0 - d) ** window
            offs = min(float(window), max(1.0, window * d / d_out)) if d_out > 0 else 0.0
            entries.append(ProfileEntry(d_out * ho * wo, offs))
            d = d_out
        elif ls.kind in ("subm_conv3x3", "subm_dw3x3"):
            entries.append(ProfileEntry(d * h * w, 1.0 + 8.0 * d if d > 0 else 0.0))
        else:
            entries.append(ProfileEntry(d * h * w, 1.0 if d > 0 else 0.0))
    return SparsityProfile(tuple(entries))


def calibrate_cpu_macs(hidden: int = 128, repeats: int = 200) -> float:
    """Measure host float32 matrix-vector throughput (MACs/s) for the head constant."""
    rng = np.random.default_rng(0)
    a = rng.standard_normal((hidden, hidden)).astype(np.float32)
    v = rng.standard_normal(hidden).astype(np.float32)
    t0 = time.perf_counter()
    for _ in range(repeats):
        v = np.tanh(a @ v)
    dt = time.perf_counter() - t0
    return hidden * hidden * repeats / max(dt, 1e-9)
