"""Model description (searchable MobileNetV2-style backbone + GRU head) and backbone execution."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal

import numpy as np

from . import engine
from .errors import ArgumentError, LoadError
from .quant import (
    INT8_MAX,
    QuantParams,
    calibrate_scale,
    dyadic_approx,
    quantize_bias,
    quantize_weights,
    requantize,
    requantize_wide,
)
from .sparse import SparseTensor

LAYER_KINDS = ("conv1x1", "subm_conv3x3", "subm_dw3x3", "strided_conv3x3", "strided_dw3x3",
               "max_pool2x2", "global_avg_pool")
THREE_BY_THREE = ("subm_conv3x3", "subm_dw3x3", "strided_conv3x3", "strided_dw3x3")
DEPTHWISE = ("subm_dw3x3", "strided_dw3x3")
WEIGHTLESS = ("max_pool2x2", "global_avg_pool")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    stride: int = 1
    activation: str = "none"
    has_residual: bool = False  # set on the projection layer of a residual block
    block_start: bool = False
    name: str = ""

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ArgumentError(f"unknown layer kind {self.kind!r}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ArgumentError(f"{self.name}: channel counts must be positive")
        want = 2 if self.kind.startswith("strided") or self.kind == "max_pool2x2" else 1
        if self.stride != want:
            raise ArgumentError(f"{self.name}: {self.kind} requires stride {want}")
        if (self.kind in DEPTHWISE or self.kind in WEIGHTLESS) and self.in_channels != self.out_channels:
            raise ArgumentError(f"{self.name}: {self.kind} must keep the channel count")
        if self.activation not in ("none", "relu6"):
            raise ArgumentError(f"{self.name}: unknown activation {self.activation!r}")

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "conv1x1":
            return (self.in_channels, self.out_channels)
        if self.kind in DEPTHWISE:
            return (3, 3, self.in_channels)
        if self.kind in WEIGHTLESS:
            return (0,)
        return (3, 3, self.in_channels, self.out_channels)

    @property
    def weight_count(self) -> int:
        return int(np.prod(self.weight_shape)) if self.kind not in WEIGHTLESS else 0

    @property
    def bias_count(self) -> int:
        return 0 if self.kind in WEIGHTLESS else self.out_channels

    @property
    def qparam_count(self) -> int:
        if self.kind in WEIGHTLESS:
            return 0
        return 2 if self.has_residual else 1

    @property
    def macs_per_offset(self) -> int:
        """MACs one (output site, active kernel offset) pair costs."""
        if self.kind in DEPTHWISE:
            return self.in_channels
        if self.kind in WEIGHTLESS:
            return self.in_channels
        return self.in_channels * self.out_channels


@dataclass(frozen=True)
class BlockSpec:
    """Inverted bottleneck: 1x1 expand -> 3x3 depthwise -> 1x1 project (+ identity skip)."""

    expansion_ratio: int
    in_channels: int
    out_channels: int
    stride: int = 1

    def __post_init__(self):
        if self.expansion_ratio < 1:
            raise ArgumentError("expansion ratio must be >= 1")
        if self.stride not in (1, 2):
            raise ArgumentError("block stride must be 1 or 2")

    @property
    def hidden(self) -> int:
        return self.in_channels * self.expansion_ratio

    @property
    def has_residual(self) -> bool:
        return self.stride == 1 and self.in_channels == self.out_channels

    def layers(self, prefix: str) -> list[LayerSpec]:
        out = []
        if self.expansion_ratio > 1:
            out.append(LayerSpec("conv1x1", self.in_channels, self.hidden, activation="relu6",
                                 block_start=True, name=f"{prefix}.expand"))
        dw = "subm_dw3x3" if self.stride == 1 else "strided_dw3x3"
        out.append(LayerSpec(dw, self.hidden, self.hidden, stride=self.stride, activation="relu6",
                             block_start=self.expansion_ratio == 1, name=f"{prefix}.dw"))
        out.append(LayerSpec("conv1x1", self.hidden, self.out_channels, has_residual=self.has_residual,
                             name=f"{prefix}.project"))
        return out


@dataclass(frozen=True)
class ModelSpec:
    """Stem (submanifold 3x3 + ReLU6), inverted bottleneck blocks, global average pool, GRU."""

    input_channels: int
    stem_channels: int
    blocks: tuple[BlockSpec, ...]
    gru_hidden: int
    height: int = 64
    width: int = 64

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        prev = self.stem_channels
        for i, b in enumerate(self.blocks):
            if b.in_channels != prev:
                raise ArgumentError(f"block {i} input {b.in_channels} != previous output {prev}")
            prev = b.out_channels
        if self.gru_hidden < 1:
            raise ArgumentError("GRU hidden size must be positive")

    @property
    def embedding_size(self) -> int:
        return self.blocks[-1].out_channels if self.blocks else self.stem_channels

    def layer_specs(self) -> list[LayerSpec]:
        layers = [LayerSpec("subm_conv3x3", self.input_channels, self.stem_channels,
                            activation="relu6", name="stem")]
        for i, b in enumerate(self.blocks):
            layers.extend(b.layers(f"block{i}"))
        layers.append(LayerSpec("global_avg_pool", self.embedding_size, self.embedding_size, name="pool"))
        return layers

    def layer_geometries(self) -> list[tuple[int, int]]:
        """Input (H, W) seen by each layer of :meth:`layer_specs`."""
        h, w = self.height, self.width
        out = []
        for ls in self.layer_specs():
            out.append((h, w))
            if ls.stride == 2:
                h, w = engine.strided_geometry(h, w)
        return out

    @property
    def param_count(self) -> int:
        return sum(ls.weight_count + ls.bias_count for ls in self.layer_specs())

    def to_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "stem_channels": self.stem_channels,
            "blocks": [[b.expansion_ratio, b.in_channels, b.out_channels, b.stride] for b in self.blocks],
            "gru_hidden": self.gru_hidden,
            "height": self.height,
            "width": self.width,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        try:
            blocks = tuple(BlockSpec(*map(int, b)) for b in d["blocks"])
            return cls(int(d["input_channels"]), int(d["stem_channels"]), blocks, int(d["gru_hidden"]),
                       int(d.get("height", 64)), int(d.get("width", 64)))
        except (KeyError, TypeError, ValueError) as e:
            raise ArgumentError(f"malformed model spec: {e}") from e

    @property
    def spec_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def chain_blocks(stem: int, rows: Iterable[tuple[int, int, int]]) -> tuple[BlockSpec, ...]:
    """Blocks from (expansion, out_channels, stride) rows with consistent chaining."""
    blocks, prev = [], stem
    for t, c, s in rows:
        blocks.append(BlockSpec(t, prev, c, s))
        prev = c
    return tuple(blocks)


# -- parameters ---------------------------------------------------------------

@dataclass
class LayerParams:
    spec: LayerSpec
    weight: np.ndarray
    bias: np.ndarray
    q: QuantParams | None = None
    skip_q: QuantParams | None = None
    act_hi: int = INT8_MAX


@dataclass
class GruWeights:
    w_z: np.ndarray
    w_r: np.ndarray
    w_h: np.ndarray
    u_z: np.ndarray
    u_r: np.ndarray
    u_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray

    FIELDS = ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h")

    @property
    def input_size(self) -> int:
        return self.w_z.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w_z.shape[0]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return gru_shapes(self.input_size, self.hidden_size)


def gru_shapes(d: int, hd: int) -> dict[str, tuple[int, ...]]:
    return {"w_z": (hd, d), "w_r": (hd, d), "w_h": (hd, d),
            "u_z": (hd, hd), "u_r": (hd, hd), "u_h": (hd, hd),
            "b_z": (hd,), "b_r": (hd,), "b_h": (hd,)}


@dataclass
class Model:
    spec: ModelSpec
    layers: list[LayerParams]
    gru: GruWeights
    fc_w: np.ndarray
    fc_b: np.ndarray
    mode: Literal["float", "int8"] = "float"
    input_q: QuantParams | None = None
    output_scale: float = 1.0
    voxel: dict = field(default_factory=dict)

    def validate(self) -> None:
        specs = self.spec.layer_specs()
        if len(specs) != len(self.layers):
            raise LoadError(f"{len(self.layers)} layers given, spec has {len(specs)}")
        for ls, lp in zip(specs, self.layers):
            if lp.spec != ls:
                raise LoadError(f"layer spec mismatch: {lp.spec} != {ls}", ls.name)
            if ls.kind in WEIGHTLESS:
                continue
            if tuple(lp.weight.shape) != ls.weight_shape:
                raise LoadError(f"weight shape {lp.weight.shape} != {ls.weight_shape}", ls.name)
            if tuple(lp.bias.shape) != (ls.bias_count,):
                raise LoadError(f"bias shape {lp.bias.shape} != ({ls.bias_count},)", ls.name)
            if self.mode == "int8":
                if lp.weight.dtype != np.int8 or lp.bias.dtype != np.int32:
                    raise LoadError("integer model needs int8 weights and int32 bias", ls.name)
                if lp.q is None or (ls.has_residual and lp.skip_q is None):
                    raise LoadError("missing QuantParams", ls.name)
        d, hd = self.spec.embedding_size, self.spec.gru_hidden
        for name, shape in gru_shapes(d, hd).items():
            if getattr(self.gru, name).shape != shape:
                raise LoadError(f"{name} shape {getattr(self.gru, name).shape} != {shape}", "gru")
        if self.fc_w.shape != (2, hd) or self.fc_b.shape != (2,):
            raise LoadError(f"fc shapes {self.fc_w.shape}, {self.fc_b.shape} != (2, {hd}), (2,)", "fc")
        if self.mode == "int8" and self.input_q is None:
            raise LoadError("integer model needs input QuantParams", "input")


def init_float_model(spec: ModelSpec, rng: np.random.Generator, voxel: dict | None = None,
                     bias_scale: float = 0.05) -> Model:
    """Random float weights (He-normal backbone, small uniform head)."""
    layers = []
    for ls in spec.layer_specs():
        if ls.kind in WEIGHTLESS:
            layers.append(LayerParams(ls, np.zeros(0), np.zeros(0)))
            continue
        fan_in = ls.in_channels * (9 if ls.kind in THREE_BY_THREE else 1)
        if ls.kind in DEPTHWISE:
            fan_in = 9
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), ls.weight_shape)
        b = rng.normal(0.0, bias_scale, ls.bias_count)
        layers.append(LayerParams(ls, w, b))
    d, hd = spec.embedding_size, spec.gru_hidden
    lim = 1.0 / np.sqrt(hd)
    gru = GruWeights(**{k: rng.uniform(-lim, lim, s).astype(np.float32)
                        for k, s in gru_shapes(d, hd).items()})
    fc_w = rng.uniform(-lim, lim, (2, hd)).astype(np.float32)
    fc_b = np.zeros(2, np.float32)
    return Model(spec, layers, gru, fc_w, fc_b, "float", voxel=dict(voxel or {}))


# -- execution ------------------------------------------------------------------

def quantize_input(model: Model, x: SparseTensor) -> SparseTensor:
    """Raw voxel counts to the first layer's input representation."""
    if x.channels != model.spec.input_channels:
        raise ArgumentError(f"input has {x.channels} channels, model expects {model.spec.input_channels}")
    if model.mode == "int8":
        if not x.is_integer:
            raise ArgumentError("integer model needs integer voxel counts")
        return x.with_features(requantize(x.features, model.input_q, 0, INT8_MAX))
    return x.with_features(x.features.astype(np.float64))


def apply_layer(lp: LayerParams, x: SparseTensor, counter: engine.OpCounter | None = None,
                skip: SparseTensor | None = None):
    """Run one layer. ``skip`` is the block input for a residual projection."""
    ls = lp.spec
    if ls.kind == "global_avg_pool":
        return engine.global_avg_pool(x, counter)
    if ls.kind == "max_pool2x2":
        return engine.max_pool2x2(x, counter)
    if ls.kind == "conv1x1":
        acc = engine.conv1x1_acc(x, lp.weight, lp.bias, counter)
    elif ls.kind in ("subm_conv3x3", "subm_dw3x3"):
        acc = engine.subm3x3_acc(x, lp.weight, lp.bias, ls.kind == "subm_dw3x3", counter)
    else:
        keys, acc = engine.strided3x3_acc(x, lp.weight, lp.bias, ls.kind == "strided_dw3x3", counter)
        ho, wo = engine.strided_geometry(x.height, x.width)
        return SparseTensor.from_keys((ho, wo, ls.out_channels), keys,
                                      engine.finish(acc, lp.q, ls.activation, lp.act_hi))
    if ls.has_residual:
        if skip is None or not np.array_equal(skip.coords, x.coords):
            raise ArgumentError(f"{ls.name}: residual input has a different active set")
        out = residual_add(acc, skip.features, lp)
    else:
        out = engine.finish(acc, lp.q, ls.activation, lp.act_hi)
    return x.with_features(out, ls.out_channels)


def residual_add(acc: np.ndarray, skip: np.ndarray, lp: LayerParams) -> np.ndarray:
    """Projection accumulator + block input, both brought to the output scale first."""
    if np.issubdtype(acc.dtype, np.integer):
        lo, hi = engine.activation_bounds(lp.spec.activation, lp.act_hi)
        total = requantize_wide(acc, lp.q) + requantize_wide(skip, lp.skip_q)
        return np.clip(total, lo, hi).astype(np.int8)
    return engine.finish(acc + skip, None, lp.spec.activation)


def run_layers(model: Model, x: SparseTensor, counter: engine.OpCounter | None = None,
               trace: list | None = None):
    """Backbone forward on an already-quantized input; returns the pooled embedding."""
    skip = None
    for lp in model.layers:
        if lp.spec.block_start:
            skip = x
        x = apply_layer(lp, x, counter, skip if lp.spec.has_residual else None)
        if trace is not None:
            trace.append(x)
    return x


def run_backbone(model: Model, x: SparseTensor, counter: engine.OpCounter | None = None,
                 trace: list | None = None) -> np.ndarray:
    """Embedding of one voxel grid. Integer models return int64 on ``model.output_scale``."""
    return run_layers(model, quantize_input(model, x), counter, trace)


def embedding_to_float(model: Model, emb: np.ndarray) -> np.ndarray:
    if model.mode == "int8":
        return emb.astype(np.float64) * model.output_scale
    return np.asarray(emb, dtype=np.float64)


# -- dense execution (reference path for benchmarking) -----------------------

def run_backbone_dense(model: Model, x: SparseTensor, counter: engine.OpCounter | None = None) -> np.ndarray:
    """Same network computed over every pixel with the dense oracle, masked to the active set."""
    x = quantize_input(model, x)
    h, w = x.height, x.width
    act = np.zeros((h, w, x.channels), dtype=x.features.dtype)
    act[x.coords[:, 0], x.coords[:, 1]] = x.features
    mask = x.bitmap.copy()
    skip = None
    for lp in model.layers:
        ls = lp.spec
        if ls.block_start:
            skip = act
        if ls.kind == "global_avg_pool":
            n = int(mask.sum())
            sparse = SparseTensor((act.shape[0], act.shape[1], act.shape[2]), np.argwhere(mask), act[mask])
            return engine.global_avg_pool(sparse, counter) if n else np.zeros(act.shape[2], act.dtype)
        if ls.kind == "max_pool2x2":
            raise ArgumentError("dense path does not model pooling layers")
        if ls.kind.startswith("strided"):
            mask = engine.receptive_union(mask)
        if ls.has_residual:
            acc = engine.dense_oracle(ls.kind, act, lp.weight, lp.bias)
            out = residual_add(acc, skip, lp)
        else:
            out = engine.dense_oracle(ls.kind, act, lp.weight, lp.bias, lp.q, ls.activation, lp.act_hi)
        out = np.where(mask[..., None], out, 0).astype(out.dtype)
        if counter is not None:
            macs = engine.dense_macs(ls.kind, act.shape[0], act.shape[1], ls.in_channels, ls.out_channels)
            st = engine.LayerStats(ls.kind, act.shape[0] * act.shape[1], out.shape[0] * out.shape[1], 0, macs)
            if np.issubdtype(out.dtype, np.integer):
                st.int_ops = macs
            else:
                st.float_ops = macs
            counter.record(st)
        act = out
    raise ArgumentError("model has no pooling head")


# -- post-training quantization ------------------------------------------------

def quantize_model(model: Model, calibration: list[SparseTensor]) -> Model:
    """Per-tensor max-abs post-training quantization of a float backbone.

    Activation scales come from running the float model on ``calibration``.
    The head stays in float.
    """
    if model.mode != "float":
        raise ArgumentError("model is already quantized")
    if not calibration:
        raise ArgumentError("quantize_model needs at least one calibration input")
    n_layers = len(model.layers)
    peaks = np.zeros(n_layers)
    in_peak = 0.0
    for x in calibration:
        xin = quantize_input(model, x)
        if xin.nnz:
            in_peak = max(in_peak, float(np.abs(xin.features).max()))
        trace: list = []
        run_layers(model, xin, trace=trace)
        for i, out in enumerate(trace):
            vals = out.features if isinstance(out, SparseTensor) else out
            if np.size(vals):
                peaks[i] = max(peaks[i], float(np.abs(vals).max()))
    s_in = calibrate_scale([in_peak], "activation")
    input_q = dyadic_approx(1.0 / s_in)
    layers = []
    s_x = s_in
    block_in_scale = s_in
    for i, lp in enumerate(model.layers):
        ls = lp.spec
        if ls.block_start:
            block_in_scale = s_x
        if ls.kind in WEIGHTLESS:
            layers.append(LayerParams(ls, np.zeros(0, np.int8), np.zeros(0, np.int32)))
            continue  # same scale in and out
        s_w = calibrate_scale(lp.weight, "weight")
        s_y = calibrate_scale([peaks[i]], "activation")
        qw = quantize_weights(lp.weight, s_w)
        qb = quantize_bias(lp.bias, s_w * s_x)
        q = dyadic_approx(s_w * s_x / s_y)
        skip_q = dyadic_approx(block_in_scale / s_y) if ls.has_residual else None
        act_hi = min(INT8_MAX, int(np.floor(engine.RELU6 / s_y + 0.5))) if ls.activation == "relu6" else INT8_MAX
        layers.append(LayerParams(ls, qw, qb, q, skip_q, act_hi))
        s_x = s_y
    out = replace(model, layers=layers, mode="int8", input_q=input_q, output_scale=s_x)
    out.validate()
    return out
