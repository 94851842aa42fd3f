"""Float32 GRU temporal fusion and eye-centre regression.

Gate equations (reset gate applied to the recurrent candidate term)::

    z  = sigmoid(W_z x + U_z h + b_z)
    r  = sigmoid(W_r x + U_r h + b_r)
    h~ = tanh(W_h x + r * (U_h h) + b_h)
    h' = (1 - z) * h + z * h~
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ArgumentError, ShapeError
from .model import GruWeights, Model, embedding_to_float, run_backbone, run_backbone_dense
from .sparse import SparseTensor

F32 = np.float32


def sigmoid(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=F32)
    # split by sign so exp never overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = F32(1) / (F32(1) + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (F32(1) + e)
    return out


def zero_state(hidden: int) -> np.ndarray:
    return np.zeros(hidden, dtype=F32)


def gru_step(x, h, w: GruWeights) -> np.ndarray:
    x = np.asarray(x, dtype=F32)
    h = np.asarray(h, dtype=F32)
    if x.shape != (w.input_size,) or h.shape != (w.hidden_size,):
        raise ShapeError(f"GRU expects x ({w.input_size},), h ({w.hidden_size},); "
                         f"got {x.shape}, {h.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h))):
        raise ArgumentError("non-finite value entering the GRU")
    z = sigmoid(w.w_z @ x + w.u_z @ h + w.b_z)
    r = sigmoid(w.w_r @ x + w.u_r @ h + w.b_r)
    cand = np.tanh(w.w_h @ x + r * (w.u_h @ h) + w.b_h)
    return ((F32(1) - z) * h + z * cand).astype(F32)


def fc_regress(h, fc_w, fc_b) -> tuple[float, float]:
    """Normalized eye centre (u, v) = sigmoid(W h + b), each in [0, 1]."""
    h = np.asarray(h, dtype=F32)
    fc_w = np.asarray(fc_w, dtype=F32)
    fc_b = np.asarray(fc_b, dtype=F32)
    if fc_w.shape != (2, h.shape[0]) or fc_b.shape != (2,):
        raise ShapeError(f"FC expects W (2, {h.shape[0]}) and b (2,); got {fc_w.shape}, {fc_b.shape}")
    u, v = sigmoid(fc_w @ h + fc_b)
    return float(u), float(v)


def denormalize(u: float, v: float, height: int, width: int) -> tuple[float, float]:
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise ArgumentError(f"normalized coordinates ({u}, {v}) outside [0, 1]")
    return u * width, v * height


def run_sequence(model: Model, clips: Sequence[SparseTensor], state: np.ndarray | None = None,
                 dense: bool = False, counter=None) -> tuple[list[tuple[float, float]], np.ndarray]:
    """Backbone + GRU + FC over consecutive clips; returns pixel predictions and the final state.

    Pass ``state`` to continue a stream; ``None`` starts from zeros.
    """
    h = zero_state(model.spec.gru_hidden) if state is None else np.asarray(state, dtype=F32)
    preds = []
    backbone = run_backbone_dense if dense else run_backbone
    for x in clips:
        emb = embedding_to_float(model, backbone(model, x, counter))
        h = gru_step(emb, h, model.gru)
        u, v = fc_regress(h, model.fc_w, model.fc_b)
        preds.append(denormalize(u, v, model.spec.height, model.spec.width))
    return preds, h
