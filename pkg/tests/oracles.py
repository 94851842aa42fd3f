"""Independent reference computations used by the tests.

Nothing here imports the code under test except plain data containers, so
agreement with these routines is evidence rather than tautology.
"""

import math

import numpy as np


def naive_conv3x3(a, w, b, stride=1, depthwise=False):
    """Nested-loop 3x3 convolution with zero padding 1 (int64 or float64 accumulators)."""
    h, wd, c_in = a.shape
    ho, wo = (h, wd) if stride == 1 else ((h + 1) // 2, (wd + 1) // 2)
    c_out = c_in if depthwise else w.shape[3]
    dt = np.int64 if np.issubdtype(a.dtype, np.integer) else np.float64
    out = np.zeros((ho, wo, c_out), dtype=dt)
    for oy in range(ho):
        for ox in range(wo):
            for co in range(c_out):
                s = dt(b[co])
                for ky in range(3):
                    for kx in range(3):
                        y = stride * oy + ky - 1
                        x = stride * ox + kx - 1
                        if 0 <= y < h and 0 <= x < wd:
                            if depthwise:
                                s += dt(a[y, x, co]) * dt(w[ky, kx, co])
                            else:
                                for ci in range(c_in):
                                    s += dt(a[y, x, ci]) * dt(w[ky, kx, ci, co])
                out[oy, ox, co] = s
    return out


def shifted_conv3x3_acc(a, w, b, depthwise=False):
    """Stride-1 3x3 accumulator via np.roll-free explicit padding; vectorised but independent."""
    dt = np.int64 if np.issubdtype(a.dtype, np.integer) else np.float64
    a = a.astype(dt)
    h, wd, c = a.shape
    p = np.pad(a, ((1, 1), (1, 1), (0, 0)))
    c_out = c if depthwise else w.shape[3]
    out = np.broadcast_to(np.asarray(b, dtype=dt), (h, wd, c_out)).copy()
    for ky in range(3):
        for kx in range(3):
            patch = p[ky:ky + h, kx:kx + wd]
            tap = np.asarray(w[ky, kx], dtype=dt)
            out += patch * tap if depthwise else np.tensordot(patch, tap, axes=([2], [0]))
    return out


def strided_acc(a, w, b, depthwise=False):
    """Stride-2 accumulator by subsampling a stride-1 result (same padding convention)."""
    return shifted_conv3x3_acc(a, w, b, depthwise)[::2, ::2]


def receptive_union_bruteforce(sites, h, w):
    """Active outputs of a stride-2 pad-1 3x3 conv by enumerating every output's receptive field."""
    act = set(map(tuple, sites))
    ho, wo = (h + 1) // 2, (w + 1) // 2
    out = []
    for oy in range(ho):
        for ox in range(wo):
            if any((y, x) in act for y in range(2 * oy - 1, 2 * oy + 2) for x in range(2 * ox - 1, 2 * ox + 2)):
                out.append((oy, ox))
    return out


def round_half_up_real(acc, s):
    """clamp(floor(acc * s + 1/2)) with exact rational arithmetic (s a Fraction)."""
    from fractions import Fraction
    v = Fraction(acc) * s + Fraction(1, 2)
    return max(-128, min(127, math.floor(v)))


def gru_direct(x, h, p):
    """Float64 GRU step written gate by gate with explicit loops."""
    hd = len(h)
    d = len(x)

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    out = []
    for i in range(hd):
        az = p["b_z"][i] + sum(p["w_z"][i][j] * x[j] for j in range(d)) + sum(p["u_z"][i][j] * h[j] for j in range(hd))
        ar = p["b_r"][i] + sum(p["w_r"][i][j] * x[j] for j in range(d)) + sum(p["u_r"][i][j] * h[j] for j in range(hd))
        z, r = sig(az), sig(ar)
        uh = sum(p["u_h"][i][j] * h[j] for j in range(hd))
        ah = p["b_h"][i] + sum(p["w_h"][i][j] * x[j] for j in range(d)) + r * uh
        out.append((1 - z) * h[i] + z * math.tanh(ah))
    return out


def nondominated_bruteforce(points):
    """Indices of points not dominated under (latency min, accuracy max), O(n^2)."""
    keep = []
    for i, (li, ai) in enumerate(points):
        dom = False
        for j, (lj, aj) in enumerate(points):
            if j != i and lj <= li and aj >= ai and (lj < li or aj > ai):
                dom = True
                break
        if not dom:
            keep.append(i)
    return keep


def nondominated_vectorised(lat, acc):
    """Same domination rule as above, vectorised row by row for large inputs."""
    lat = np.asarray(lat)
    acc = np.asarray(acc)
    keep = []
    for i in range(len(lat)):
        le = lat <= lat[i]
        ge = acc >= acc[i]
        strict = (lat < lat[i]) | (acc > acc[i])
        if not np.any(le & ge & strict):
            keep.append(i)
    return keep
