"""Symmetric int8 quantization with dyadic (multiply + shift) requantization.

A real rescale factor ``S_w * S_x / S_y`` is replaced by ``m / 2**n`` so that
inference needs only integer multiply, add and arithmetic shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ArgumentError, RangeError

INT8_MIN, INT8_MAX = -128, 127
WEIGHT_MAX = 127
INT32_MIN, INT32_MAX = -(1 << 31), (1 << 31) - 1
MAX_SHIFT = 31
DYADIC_REL_TOL = 2.0 ** -14


@dataclass(frozen=True)
class QuantParams:
    m: int
    n: int
    s_real: float

    @property
    def value(self) -> float:
        return self.m / (1 << self.n)

    @property
    def rel_error(self) -> float:
        return abs(self.s_real - self.value) / self.s_real


def calibrate_scale(values, kind: Literal["weight", "activation"] = "weight") -> float:
    """Max-abs symmetric scale so that ``127 * S`` covers every value."""
    if kind not in ("weight", "activation"):
        raise ArgumentError(f"unknown calibration kind {kind!r}")
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ArgumentError("cannot calibrate a scale from no values")
    peak = float(np.max(np.abs(v)))
    if peak == 0.0:
        return 1.0
    return peak / 127.0


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(v, scale: float, lo: int = INT8_MIN, hi: int = INT8_MAX):
    """Round half away from zero of ``v / scale``, clamped to [lo, hi]."""
    if scale <= 0:
        raise ArgumentError("scale must be positive")
    q = np.clip(_round_half_away(np.asarray(v, dtype=np.float64) / scale), lo, hi)
    if np.ndim(q) == 0:
        return int(q)
    return q.astype(np.int8 if lo >= INT8_MIN and hi <= INT8_MAX else np.int32)


def quantize_weights(w, scale: float) -> np.ndarray:
    return quantize(w, scale, -WEIGHT_MAX, WEIGHT_MAX).astype(np.int8)


def quantize_bias(b, scale: float) -> np.ndarray:
    return np.asarray(quantize(b, scale, INT32_MIN, INT32_MAX), dtype=np.int32).reshape(np.shape(b))


def dequantize(q, scale: float):
    return np.asarray(q, dtype=np.float64) * scale


def dyadic_approx(s_real: float) -> QuantParams:
    """Largest shift ``n <= 31`` keeping ``m = round(s_real * 2**n)`` below ``2**31``."""
    s_real = float(s_real)
    if not (s_real > 0 and math.isfinite(s_real)):
        raise ArgumentError(f"scale ratio must be positive and finite, got {s_real}")
    for n in range(MAX_SHIFT, -1, -1):
        m = math.floor(math.ldexp(s_real, n) + 0.5)
        if m < (1 << 31):
            break
    else:
        raise RangeError(f"scale ratio {s_real} needs a negative shift")
    if m == 0:
        raise RangeError(f"scale ratio {s_real} underflows the 31-bit multiplier")
    return QuantParams(int(m), n, s_real)


def requantize_wide(acc, q: QuantParams) -> np.ndarray:
    """``(acc * m + 2**(n-1)) >> n`` in int64, without clamping."""
    acc = np.asarray(acc, dtype=np.int64)
    prod = acc * np.int64(q.m)
    if q.n > 0:
        prod = prod + np.int64(1 << (q.n - 1))
    return prod >> np.int64(q.n)


def requantize(acc, q: QuantParams, lo: int = INT8_MIN, hi: int = INT8_MAX):
    """Integer-only rescale of an int32 accumulator to int8, rounding half up and saturating."""
    out = np.clip(requantize_wide(acc, q), lo, hi)
    if out.ndim == 0:
        return int(out)
    return out.astype(np.int8)
