"""Submanifold sparse convolution kernels and their dense reference.

Every kernel works on :class:`SparseTensor` activations in one of two modes:

* integer mode - int8 features, int8 weights, int32 bias; accumulation in
  int64 and a dyadic requantization epilogue (no floating point at all);
* float mode - float64 features and weights, optional ReLU6.

3x3 kernels gather neighbours through a padded index map, one GEMM per
kernel offset, so work is proportional to the number of (site, active
offset) pairs rather than to H * W.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ContractError, ShapeError
from .quant import INT8_MAX, INT8_MIN, QuantParams, requantize
from .sparse import SparseTensor

# Offset k = (dy + 1) * 3 + (dx + 1): row-major over the 3x3 window.
OFFSETS = tuple((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1))
CENTER = 4

RELU6 = 6.0


@dataclass
class LayerStats:
    kind: str
    in_sites: int = 0
    out_sites: int = 0
    offsets_total: int = 0
    macs: int = 0
    int_ops: int = 0
    float_ops: int = 0

    @property
    def mean_offsets(self) -> float:
        return self.offsets_total / self.out_sites if self.out_sites else 0.0


@dataclass
class OpCounter:
    """Per-layer work audit: MACs and how many of them ran on integer vs float data."""

    layers: list[LayerStats] = field(default_factory=list)

    def record(self, stats: LayerStats) -> None:
        self.layers.append(stats)

    @property
    def macs(self) -> int:
        return sum(s.macs for s in self.layers)

    @property
    def float_ops(self) -> int:
        return sum(s.float_ops for s in self.layers)

    @property
    def int_ops(self) -> int:
        return sum(s.int_ops for s in self.layers)


def _account(counter: OpCounter | None, stats: LayerStats, acc_dtype, extra_ops: int) -> None:
    if counter is None:
        return
    ops = stats.macs + extra_ops
    if np.issubdtype(acc_dtype, np.integer):
        stats.int_ops += ops
    else:
        stats.float_ops += ops
    counter.record(stats)


# -- epilogue --------------------------------------------------------------

def activation_bounds(act: str, act_hi: int = INT8_MAX) -> tuple[int, int]:
    if act == "relu6":
        return 0, min(INT8_MAX, act_hi)
    if act == "none":
        return INT8_MIN, INT8_MAX
    raise ArgumentError(f"unknown activation {act!r}")


def finish(acc: np.ndarray, q: QuantParams | None, act: str = "none", act_hi: int = INT8_MAX) -> np.ndarray:
    """Bias-added accumulator to layer output: requantize (integer mode) and activate."""
    if np.issubdtype(acc.dtype, np.integer):
        if q is None:
            raise ArgumentError("integer-mode layer needs QuantParams")
        lo, hi = activation_bounds(act, act_hi)
        return requantize(acc, q, lo, hi)
    if act == "relu6":
        return np.clip(acc, 0.0, RELU6)
    if act != "none":
        raise ArgumentError(f"unknown activation {act!r}")
    return acc


def _operands(x: SparseTensor, weights, bias):
    w = np.asarray(weights)
    b = np.asarray(bias)
    if x.is_integer:
        if not (np.issubdtype(w.dtype, np.integer) and np.issubdtype(b.dtype, np.integer)):
            raise ArgumentError("integer activations need integer weights and bias")
        return x.features.astype(np.int64), w.astype(np.int64), b.astype(np.int64)
    return x.features.astype(np.float64), w.astype(np.float64), b.astype(np.float64)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


# -- neighbourhood ------------------------------------------------------------

def neighbor_table(x: SparseTensor) -> np.ndarray:
    """(9, N) site indices of each site's 3x3 neighbours, -1 where inactive or off-grid."""
    idx = x.index_map()
    ys = x.coords[:, 0] + 1
    xs = x.coords[:, 1] + 1
    return np.stack([idx[ys + dy, xs + dx] for dy, dx in OFFSETS])


def kernel_offsets(x: SparseTensor, site: tuple[int, int]) -> list[int]:
    """Active neighbour offsets (0..8, row-major) of an active site."""
    y, xx = site
    if x.site_index(y, xx) < 0:
        raise ContractError(f"site {site} is not active")
    return [k for k, (dy, dx) in enumerate(OFFSETS) if x.site_index(y + dy, xx + dx) >= 0]


# -- accumulators -----------------------------------------------------------

def subm3x3_acc(x: SparseTensor, weights, bias, depthwise: bool, counter=None, kind="") -> np.ndarray:
    f, w, b = _operands(x, weights, bias)
    c_in = x.channels
    if depthwise:
        _check(w.shape == (3, 3, c_in), f"depthwise weights {w.shape} != (3, 3, {c_in})")
        c_out = c_in
    else:
        _check(w.ndim == 4 and w.shape[:3] == (3, 3, c_in), f"weights {w.shape} != (3, 3, {c_in}, Cout)")
        c_out = w.shape[3]
    _check(b.shape == (c_out,), f"bias {b.shape} != ({c_out},)")
    w = w.reshape(9, *w.shape[2:])
    n = x.nnz
    acc = np.empty((n, c_out), dtype=f.dtype)
    acc[:] = b
    nbr = neighbor_table(x) if n else np.zeros((9, 0), np.int64)
    pairs = 0
    for k in range(9):
        nb = nbr[k]
        if k == CENTER:
            src, dst = f, slice(None)
            cnt = n
        else:
            mask = nb >= 0
            cnt = int(mask.sum())
            if cnt == 0:
                continue
            src, dst = f[nb[mask]], mask
        pairs += cnt
        if depthwise:
            acc[dst] += src * w[k]
        else:
            acc[dst] += src @ w[k]
    stats = LayerStats(kind or ("subm_dw3x3" if depthwise else "subm_conv3x3"), n, n, pairs,
                       pairs * (c_in if depthwise else c_in * c_out))
    _account(counter, stats, acc.dtype, n * c_out)
    return acc


def conv1x1_acc(x: SparseTensor, weights, bias, counter=None) -> np.ndarray:
    f, w, b = _operands(x, weights, bias)
    _check(w.ndim == 2 and w.shape[0] == x.channels, f"weights {w.shape} != ({x.channels}, Cout)")
    _check(b.shape == (w.shape[1],), f"bias {b.shape} != ({w.shape[1]},)")
    acc = f @ w + b
    n = x.nnz
    stats = LayerStats("conv1x1", n, n, n, n * w.shape[0] * w.shape[1])
    _account(counter, stats, acc.dtype, n * w.shape[1])
    return acc


def strided_geometry(h: int, w: int) -> tuple[int, int]:
    return (h + 1) // 2, (w + 1) // 2


def strided_rulebook(x: SparseTensor):
    """Output keys of a stride-2 pad-1 3x3 convolution and per-offset (in, out) index pairs."""
    ho, wo = strided_geometry(x.height, x.width)
    ys, xs = x.coords[:, 0], x.coords[:, 1]
    cand = []
    for dy, dx in OFFSETS:
        oy2, ox2 = ys - dy, xs - dx  # = 2 * output coordinate
        ok = (oy2 % 2 == 0) & (ox2 % 2 == 0) & (oy2 >= 0) & (ox2 >= 0) & (oy2 < 2 * ho) & (ox2 < 2 * wo)
        ins = np.nonzero(ok)[0]
        cand.append((ins, (oy2[ok] // 2) * wo + ox2[ok] // 2))
    out_keys = np.unique(np.concatenate([c[1] for c in cand])) if x.nnz else np.zeros(0, np.int64)
    rules = [(ins, np.searchsorted(out_keys, keys)) for ins, keys in cand]
    return out_keys, rules


def strided3x3_acc(x: SparseTensor, weights, bias, depthwise: bool, counter=None):
    f, w, b = _operands(x, weights, bias)
    c_in = x.channels
    if depthwise:
        _check(w.shape == (3, 3, c_in), f"depthwise weights {w.shape} != (3, 3, {c_in})")
        c_out = c_in
    else:
        _check(w.ndim == 4 and w.shape[:3] == (3, 3, c_in), f"weights {w.shape} != (3, 3, {c_in}, Cout)")
        c_out = w.shape[3]
    _check(b.shape == (c_out,), f"bias {b.shape} != ({c_out},)")
    w = w.reshape(9, *w.shape[2:])
    out_keys, rules = strided_rulebook(x)
    acc = np.empty((len(out_keys), c_out), dtype=f.dtype)
    acc[:] = b
    pairs = 0
    for k, (ins, outs) in enumerate(rules):
        if len(ins) == 0:
            continue
        pairs += len(ins)
        # each output receives at most one input per offset, so plain fancy add is safe
        acc[outs] += f[ins] * w[k] if depthwise else f[ins] @ w[k]
    ho, wo = strided_geometry(x.height, x.width)
    stats = LayerStats("strided_dw3x3" if depthwise else "strided_conv3x3", x.nnz, len(out_keys), pairs,
                       pairs * (c_in if depthwise else c_in * c_out))
    _account(counter, stats, acc.dtype, len(out_keys) * c_out)
    return out_keys, acc


# -- public layer ops ---------------------------------------------------------

def subm_conv3x3(x: SparseTensor, weights, bias, q: QuantParams | None = None, act: str = "none",
                 act_hi: int = INT8_MAX, counter: OpCounter | None = None) -> SparseTensor:
    acc = subm3x3_acc(x, weights, bias, depthwise=False, counter=counter)
    return x.with_features(finish(acc, q, act, act_hi), acc.shape[1])


def subm_dw3x3(x: SparseTensor, weights, bias, q: QuantParams | None = None, act: str = "none",
               act_hi: int = INT8_MAX, counter: OpCounter | None = None) -> SparseTensor:
    acc = subm3x3_acc(x, weights, bias, depthwise=True, counter=counter)
    return x.with_features(finish(acc, q, act, act_hi))


def conv1x1(x: SparseTensor, weights, bias, q: QuantParams | None = None, act: str = "none",
            act_hi: int = INT8_MAX, counter: OpCounter | None = None) -> SparseTensor:
    acc = conv1x1_acc(x, weights, bias, counter=counter)
    return x.with_features(finish(acc, q, act, act_hi), acc.shape[1])


def strided_conv3x3(x: SparseTensor, weights, bias, q: QuantParams | None = None, act: str = "none",
                    act_hi: int = INT8_MAX, counter: OpCounter | None = None,
                    depthwise: bool = False) -> SparseTensor:
    """Stride-2, pad-1 sparse (non-submanifold) convolution.

    An output site is active iff its 3x3 receptive field holds an active input.
    """
    keys, acc = strided3x3_acc(x, weights, bias, depthwise, counter=counter)
    ho, wo = strided_geometry(x.height, x.width)
    return SparseTensor.from_keys((ho, wo, acc.shape[1]), keys, finish(acc, q, act, act_hi))


def strided_dw3x3(x: SparseTensor, weights, bias, q=None, act="none", act_hi=INT8_MAX, counter=None):
    return strided_conv3x3(x, weights, bias, q, act, act_hi, counter, depthwise=True)


def max_pool2x2(x: SparseTensor, counter: OpCounter | None = None) -> SparseTensor:
    """2x2 stride-2 max over active inputs only; output active iff any input in its window is."""
    ho, wo = strided_geometry(x.height, x.width)
    keys = (x.coords[:, 0] // 2) * wo + x.coords[:, 1] // 2
    out_keys, inv = np.unique(keys, return_inverse=True)
    f = x.features
    if np.issubdtype(f.dtype, np.integer):
        init = np.iinfo(f.dtype).min
    else:
        init = -np.inf
    out = np.full((len(out_keys), x.channels), init, dtype=f.dtype)
    np.maximum.at(out, inv.ravel(), f)
    if counter is not None:
        stats = LayerStats("max_pool2x2", x.nnz, len(out_keys), x.nnz, 0)
        _account(counter, stats, f.dtype, x.nnz * x.channels)
    return SparseTensor.from_keys((ho, wo, x.channels), out_keys, out)


def global_avg_pool(x: SparseTensor, counter: OpCounter | None = None) -> np.ndarray:
    """Per-channel mean over active sites; zeros when nothing is active.

    Integer tensors get an integer mean rounded half away from zero, on the
    input's scale.
    """
    c = x.channels
    n = x.nnz
    if x.is_integer:
        s = x.features.astype(np.int64).sum(axis=0) if n else np.zeros(c, np.int64)
        out = np.sign(s) * ((2 * np.abs(s) + n) // (2 * n)) if n else s
    else:
        out = x.features.mean(axis=0) if n else np.zeros(c, np.float64)
    if counter is not None:
        stats = LayerStats("global_avg_pool", n, 1 if n else 0, n, 0)
        _account(counter, stats, out.dtype, n * c)
    return out


# -- dense reference ------------------------------------------------------------

def dense_macs(kind: str, h: int, w: int, c_in: int, c_out: int) -> int:
    if kind == "conv1x1":
        return h * w * c_in * c_out
    if kind == "subm_conv3x3":
        return h * w * 9 * c_in * c_out
    if kind == "subm_dw3x3":
        return h * w * 9 * c_in
    ho, wo = strided_geometry(h, w)
    if kind == "strided_conv3x3":
        return ho * wo * 9 * c_in * c_out
    if kind == "strided_dw3x3":
        return ho * wo * 9 * c_in
    return 0


def dense_oracle(kind: str, dense_input: np.ndarray, weights, bias, q: QuantParams | None = None,
                 act: str = "none", act_hi: int = INT8_MAX) -> np.ndarray:
    """Textbook dense convolution (zero padding 1 for 3x3) followed by the same epilogue.

    Every output position is computed, active or not. In integer mode with
    ``q=None`` the raw bias-added accumulator is returned.
    """
    a = np.asarray(dense_input)
    integer = np.issubdtype(a.dtype, np.integer)
    dt = np.int64 if integer else np.float64
    a = a.astype(dt)
    w = np.asarray(weights).astype(dt)
    b = np.asarray(bias).astype(dt)
    _check(a.ndim == 3, f"dense input must be H x W x C, got {a.shape}")
    h, wd, c_in = a.shape
    if kind == "conv1x1":
        _check(w.shape[0] == c_in, f"weights {w.shape} do not match {c_in} input channels")
        return _dense_finish(a @ w + b, q, act, act_hi)
    if kind not in ("subm_conv3x3", "subm_dw3x3", "strided_conv3x3", "strided_dw3x3"):
        raise ArgumentError(f"no dense oracle for {kind!r}")
    depthwise = kind.endswith("dw3x3")
    _check(w.shape[:3] == (3, 3, c_in), f"weights {w.shape} do not match {c_in} input channels")
    stride = 2 if kind.startswith("strided") else 1
    ho, wo = (h, wd) if stride == 1 else strided_geometry(h, wd)
    pad = np.zeros((h + 2 + 1, wd + 2 + 1, c_in), dtype=dt)
    pad[1:h + 1, 1:wd + 1] = a
    c_out = c_in if depthwise else w.shape[3]
    out = np.empty((ho, wo, c_out), dtype=dt)
    out[:] = b
    for (dy, dx) in OFFSETS:
        win = pad[1 + dy: 1 + dy + stride * ho: stride, 1 + dx: 1 + dx + stride * wo: stride]
        tap = w[dy + 1, dx + 1]
        out += win * tap if depthwise else win @ tap
    return _dense_finish(out, q, act, act_hi)


def _dense_finish(acc, q, act, act_hi):
    if q is None and np.issubdtype(acc.dtype, np.integer):
        return acc
    return finish(acc, q, act, act_hi)


def receptive_union(bitmap: np.ndarray) -> np.ndarray:
    """Stride-2 pad-1 3x3 dilation of an occupancy bitmap (dense)."""
    h, w = bitmap.shape
    ho, wo = strided_geometry(h, w)
    pad = np.zeros((h + 3, w + 3), dtype=bool)
    pad[1:h + 1, 1:w + 1] = bitmap
    out = np.zeros((ho, wo), dtype=bool)
    for dy, dx in OFFSETS:
        out |= pad[1 + dy: 1 + dy + 2 * ho: 2, 1 + dx: 1 + dx + 2 * wo: 2]
    return out
