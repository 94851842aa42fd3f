"""Coordinate-ordered sparse activations with an occupancy bitmap.

Active sites are kept in row-major order (left to right, top to bottom),
which is the order the accelerator streams tokens between layers.
"""

from __future__ import annotations

from typing import Iterator, NamedTuple

import numpy as np

from .errors import ContractError, ShapeError


class Token(NamedTuple):
    x: int
    y: int
    end: bool


END_TOKEN = Token(-1, -1, True)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


class SparseTensor:
    """Active sites of an H x W grid, each carrying a C-channel feature vector.

    ``coords`` is an (N, 2) int array of (y, x) pairs sorted row-major and
    ``features`` is (N, C). Integer tensors hold int8 values (int32/int64 are
    accepted for raw inputs such as event counts); float tensors hold float64.
    """

    __slots__ = ("height", "width", "channels", "coords", "features", "_bitmap", "_index")

    def __init__(self, geometry: tuple[int, int, int], coords, features, *, validate: bool = True):
        h, w, c = (int(v) for v in geometry)
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
        features = np.asarray(features)
        if features.ndim == 1 and len(coords) == 0:
            features = features.reshape(0, c)
        self.height, self.width, self.channels = h, w, c
        self.coords = _frozen(coords)
        self.features = _frozen(features)
        self._bitmap = None
        self._index = None
        if validate:
            self.validate()

    # -- construction -------------------------------------------------
    @classmethod
    def empty(cls, geometry: tuple[int, int, int], dtype=np.int8) -> "SparseTensor":
        return cls(geometry, np.zeros((0, 2), np.int64), np.zeros((0, geometry[2]), dtype))

    @classmethod
    def from_keys(cls, geometry, keys: np.ndarray, features: np.ndarray) -> "SparseTensor":
        """Build from flat row-major keys ``y * W + x`` already sorted and unique."""
        w = geometry[1]
        coords = np.stack([keys // w, keys % w], axis=1)
        return cls(geometry, coords, features, validate=False)

    def validate(self) -> None:
        h, w, c = self.geometry
        if h < 1 or w < 1 or c < 1:
            raise ShapeError(f"invalid geometry {self.geometry}")
        n = len(self.coords)
        if self.features.shape != (n, c):
            raise ShapeError(f"features shape {self.features.shape} != ({n}, {c})")
        if n == 0:
            return
        ys, xs = self.coords[:, 0], self.coords[:, 1]
        if ys.min() < 0 or xs.min() < 0 or ys.max() >= h or xs.max() >= w:
            raise ShapeError("site coordinates outside geometry")
        keys = ys * w + xs
        if np.any(np.diff(keys) <= 0):
            raise ContractError("sites must be strictly increasing in row-major order")

    # -- views -----------------------------------------------------------
    @property
    def geometry(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    @property
    def nnz(self) -> int:
        return len(self.coords)

    @property
    def keys(self) -> np.ndarray:
        return self.coords[:, 0] * self.width + self.coords[:, 1]

    @property
    def is_integer(self) -> bool:
        return np.issubdtype(self.features.dtype, np.integer)

    @property
    def bitmap(self) -> np.ndarray:
        if self._bitmap is None:
            bm = np.zeros((self.height, self.width), dtype=bool)
            bm[self.coords[:, 0], self.coords[:, 1]] = True
            self._bitmap = _frozen(bm)
        return self._bitmap

    def index_map(self) -> np.ndarray:
        """(H+2) x (W+2) map from padded position to site index, -1 where inactive."""
        if self._index is None:
            idx = np.full((self.height + 2, self.width + 2), -1, dtype=np.int64)
            idx[self.coords[:, 0] + 1, self.coords[:, 1] + 1] = np.arange(self.nnz)
            self._index = _frozen(idx)
        return self._index

    def site_index(self, y: int, x: int) -> int:
        if not (0 <= y < self.height and 0 <= x < self.width):
            return -1
        return int(self.index_map()[y + 1, x + 1])

    def with_features(self, features: np.ndarray, channels: int | None = None) -> "SparseTensor":
        """Same active set, new features (the submanifold case)."""
        c = self.channels if channels is None else channels
        out = SparseTensor((self.height, self.width, c), self.coords, features, validate=False)
        out._bitmap = self._bitmap
        out._index = self._index
        if out.features.shape != (self.nnz, c):
            raise ShapeError(f"features shape {out.features.shape} != ({self.nnz}, {c})")
        return out

    def same_structure(self, other: "SparseTensor") -> bool:
        return self.geometry == other.geometry and np.array_equal(self.coords, other.coords)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseTensor):
            return NotImplemented
        return self.same_structure(other) and np.array_equal(self.features, other.features)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"SparseTensor(geometry={self.geometry}, nnz={self.nnz}, dtype={self.features.dtype})"


def from_dense(dense: np.ndarray, zero_tol: float = 0.0) -> SparseTensor:
    """Sparse view of an H x W x C array; a site is active if any channel exceeds ``zero_tol``."""
    dense = np.asarray(dense)
    if dense.ndim != 3:
        raise ShapeError(f"expected H x W x C array, got shape {dense.shape}")
    h, w, c = dense.shape
    active = np.any(np.abs(dense) > zero_tol, axis=2)
    ys, xs = np.nonzero(active)  # row-major already
    coords = np.stack([ys, xs], axis=1)
    return SparseTensor((h, w, c), coords, dense[ys, xs], validate=False)


def to_dense(t: SparseTensor) -> np.ndarray:
    out = np.zeros(t.geometry, dtype=t.features.dtype)
    out[t.coords[:, 0], t.coords[:, 1]] = t.features
    return out


def tokens(t: SparseTensor) -> Iterator[Token]:
    for y, x in t.coords.tolist():
        yield Token(x, y, False)
    yield END_TOKEN


def density(t: SparseTensor) -> float:
    return t.nnz / (t.height * t.width)


def check_token_stream(stream) -> int:
    """Validate ordering of a token stream; returns the number of non-end tokens."""
    prev = None
    count = 0
    ended = False
    for tok in stream:
        if ended:
            raise ContractError("token after end-of-stream")
        if tok.end:
            ended = True
            continue
        key = (tok.y, tok.x)
        if prev is not None and key <= prev:
            raise ContractError(f"token {key} not after {prev}")
        prev = key
        count += 1
    if not ended:
        raise ContractError("token stream missing end token")
    return count


def dump(t: SparseTensor) -> str:
    """Debug text: one ``y x c0 c1 ...`` line per site in stream order."""
    lines = []
    for (y, x), f in zip(t.coords.tolist(), t.features.tolist()):
        vals = " ".join(_fmt(v) for v in f)
        lines.append(f"{y} {x} {vals}")
    return "\n".join(lines) + ("\n" if lines else "")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
