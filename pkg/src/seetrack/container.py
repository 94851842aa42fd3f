"""Weight container: one file holding a JSON manifest and a little-endian tensor blob.

Layout::

    b"SEEW" | manifest length (u32 LE) | manifest (UTF-8 JSON) | blob

The blob has two sections. ``backbone`` holds, per layer in order, the weights
(row-major), the bias, and one 5-byte QuantParams record (m: u32, n: u8) per
requantization (two on residual projections). ``head`` holds the float32 GRU
and FC tensors. Every tensor is listed in the manifest with dtype, shape and
byte length; the lengths must add up to the blob length.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import LoadError
from .model import WEIGHTLESS, GruWeights, LayerParams, Model, ModelSpec, gru_shapes
from .quant import QuantParams

MAGIC = b"SEEW"
FORMAT_VERSION = 1
QPARAM_BYTES = 5

_DTYPES = {"int8": np.dtype("<i1"), "int32": np.dtype("<i4"), "float32": np.dtype("<f4")}


def _qp_bytes(q: QuantParams) -> bytes:
    return struct.pack("<IB", q.m, q.n)


def _tensor_entry(name: str, arr: np.ndarray, dtype: str) -> tuple[dict, bytes]:
    data = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
    return {"name": name, "dtype": dtype, "shape": list(arr.shape), "nbytes": len(data)}, data


def _qp_entry(name: str, q: QuantParams) -> tuple[dict, bytes]:
    return {"name": name, "dtype": "qparams", "s_real": q.s_real, "nbytes": QPARAM_BYTES}, _qp_bytes(q)


def serialize(model: Model) -> bytes:
    model.validate()
    intmode = model.mode == "int8"
    wdt, bdt = ("int8", "int32") if intmode else ("float32", "float32")
    layers_meta = []
    backbone = bytearray()
    for lp in model.layers:
        ls = lp.spec
        entries = []
        if ls.kind not in WEIGHTLESS:
            parts = [_tensor_entry("weight", lp.weight, wdt), _tensor_entry("bias", lp.bias, bdt)]
            if intmode:
                parts.append(_qp_entry("requant", lp.q))
                if ls.has_residual:
                    parts.append(_qp_entry("skip_requant", lp.skip_q))
            for meta, data in parts:
                entries.append(meta)
                backbone += data
        layers_meta.append({
            "name": ls.name, "kind": ls.kind, "in_channels": ls.in_channels,
            "out_channels": ls.out_channels, "stride": ls.stride, "activation": ls.activation,
            "has_residual": ls.has_residual, "act_hi": int(lp.act_hi), "tensors": entries,
        })
    head = bytearray()
    head_meta = []
    for name in GruWeights.FIELDS:
        meta, data = _tensor_entry(name, getattr(model.gru, name), "float32")
        head_meta.append(meta)
        head += data
    for name, arr in (("fc_w", model.fc_w), ("fc_b", model.fc_b)):
        meta, data = _tensor_entry(name, arr, "float32")
        head_meta.append(meta)
        head += data
    manifest = {
        "format_version": FORMAT_VERSION,
        "mode": model.mode,
        "spec": model.spec.to_dict(),
        "spec_hash": model.spec.spec_hash,
        "voxel": model.voxel,
        "input_quant": None if model.input_q is None else
        {"m": model.input_q.m, "n": model.input_q.n, "s_real": model.input_q.s_real},
        "output_scale": model.output_scale,
        "layers": layers_meta,
        "head": head_meta,
        "sections": {"backbone": len(backbone), "head": len(head)},
        "blob_length": len(backbone) + len(head),
    }
    text = json.dumps(manifest, indent=1, sort_keys=True).encode()
    return MAGIC + struct.pack("<I", len(text)) + text + bytes(backbone) + bytes(head)


def save(model: Model, path: str | Path) -> None:
    Path(path).write_bytes(serialize(model))


def read_manifest(data: bytes) -> tuple[dict, bytes]:
    if data[:4] != MAGIC:
        raise LoadError("not a weight container (bad magic)")
    if len(data) < 8:
        raise LoadError("truncated container header")
    (mlen,) = struct.unpack_from("<I", data, 4)
    if 8 + mlen > len(data):
        raise LoadError(f"manifest length {mlen} exceeds file size")
    try:
        manifest = json.loads(data[8:8 + mlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise LoadError(f"manifest is not valid JSON: {e}") from e
    if not isinstance(manifest, dict) or manifest.get("format_version") != FORMAT_VERSION:
        raise LoadError(f"unsupported format_version {manifest.get('format_version') if isinstance(manifest, dict) else None}")
    return manifest, data[8 + mlen:]


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, meta: dict, layer: str) -> np.ndarray | QuantParams:
        try:
            n = int(meta["nbytes"])
            dtype = meta["dtype"]
        except (KeyError, TypeError, ValueError) as e:
            raise LoadError(f"malformed tensor entry {meta!r}", layer) from e
        if self.pos + n > len(self.blob):
            raise LoadError(f"tensor {meta.get('name')} runs past the blob", layer)
        raw = self.blob[self.pos:self.pos + n]
        self.pos += n
        if dtype == "qparams":
            if n != QPARAM_BYTES:
                raise LoadError(f"QuantParams record of {n} bytes", layer)
            m, sh = struct.unpack("<IB", raw)
            return QuantParams(m, sh, float(meta.get("s_real", m / (1 << sh))))
        if dtype not in _DTYPES:
            raise LoadError(f"unknown dtype {dtype!r}", layer)
        shape = tuple(meta.get("shape", ()))
        want = int(np.prod(shape)) * _DTYPES[dtype].itemsize
        if want != n:
            raise LoadError(f"tensor {meta.get('name')}: shape {shape} needs {want} bytes, manifest says {n}", layer)
        arr = np.frombuffer(raw, dtype=_DTYPES[dtype]).reshape(shape)
        return arr.astype(dtype)


def deserialize(data: bytes) -> Model:
    manifest, blob = read_manifest(data)
    try:
        spec = ModelSpec.from_dict(manifest["spec"])
        mode = manifest["mode"]
        sections = manifest["sections"]
        declared = int(manifest["blob_length"])
        layers_meta = manifest["layers"]
        head_meta = manifest["head"]
    except (KeyError, TypeError, ValueError) as e:
        raise LoadError(f"manifest missing field: {e}") from e
    if mode not in ("int8", "float"):
        raise LoadError(f"unknown quantization mode {mode!r}")
    if spec.spec_hash != manifest.get("spec_hash"):
        raise LoadError(f"spec hash {manifest.get('spec_hash')} != recomputed {spec.spec_hash}")
    if declared != len(blob) or int(sections["backbone"]) + int(sections["head"]) != len(blob):
        raise LoadError(f"declared blob length {declared} does not match {len(blob)} bytes present")
    total = sum(int(t["nbytes"]) for lm in layers_meta for t in lm.get("tensors", []))
    total += sum(int(t["nbytes"]) for t in head_meta)
    if total != len(blob):
        raise LoadError(f"tensor byte lengths sum to {total}, blob has {len(blob)}")
    specs = spec.layer_specs()
    if len(layers_meta) != len(specs):
        raise LoadError(f"manifest lists {len(layers_meta)} layers, spec has {len(specs)}")
    reader = _Reader(blob)
    layers = []
    for ls, lm in zip(specs, layers_meta):
        if lm.get("kind") != ls.kind or lm.get("name") != ls.name:
            raise LoadError(f"manifest layer {lm.get('name')}/{lm.get('kind')} != spec {ls.kind}", ls.name)
        got = {t.get("name"): reader.take(t, ls.name) for t in lm.get("tensors", [])}
        if ls.kind in WEIGHTLESS:
            layers.append(LayerParams(ls, np.zeros(0, np.int8), np.zeros(0, np.int32)))
            continue
        if "weight" not in got or "bias" not in got:
            raise LoadError("missing weight or bias", ls.name)
        w, b = got["weight"], got["bias"]
        if mode == "float":
            w, b = w.astype(np.float64), b.astype(np.float64)
        layers.append(LayerParams(ls, w, b, got.get("requant"), got.get("skip_requant"),
                                  int(lm.get("act_hi", 127))))
    if reader.pos != int(sections["backbone"]):
        raise LoadError(f"backbone section is {sections['backbone']} bytes, layers use {reader.pos}")
    head = {t.get("name"): reader.take(t, "head") for t in head_meta}
    d, hd = spec.embedding_size, spec.gru_hidden
    missing = [k for k in (*gru_shapes(d, hd), "fc_w", "fc_b") if k not in head]
    if missing:
        raise LoadError(f"head tensors missing: {missing}", "head")
    gru = GruWeights(**{k: head[k] for k in GruWeights.FIELDS})
    iq = manifest.get("input_quant")
    input_q = None if iq is None else QuantParams(int(iq["m"]), int(iq["n"]), float(iq["s_real"]))
    model = Model(spec, layers, gru, head["fc_w"], head["fc_b"], mode, input_q,
                  float(manifest.get("output_scale", 1.0)), dict(manifest.get("voxel") or {}))
    model.validate()
    return model


def load(path: str | Path) -> Model:
    return deserialize(Path(path).read_bytes())


def backbone_bytes(data: bytes) -> int:
    """Size of the serialized backbone tensor section."""
    manifest, _ = read_manifest(data)
    return int(manifest["sections"]["backbone"])
