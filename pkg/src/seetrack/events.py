"""Event stream parsing, fixed-window clip slicing and voxel-grid construction."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np

from .errors import ArgumentError, GeometryError, OrderingError, ParseError
from .sparse import SparseTensor

# Packed little-endian record: t u64, x u16, y u16, p u8 (13 bytes, no header).
EVENT_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
assert EVENT_DTYPE.itemsize == 13

FEATURE_SATURATION = 255


class Event(NamedTuple):
    t: int
    x: int
    y: int
    p: int


def as_events(arr: np.ndarray) -> list[Event]:
    return [Event(*map(int, r)) for r in arr.tolist()]


def make_events(records) -> np.ndarray:
    """Structured event array from an iterable of (t, x, y, p) tuples."""
    return np.array([tuple(r) for r in records], dtype=EVENT_DTYPE)


@dataclass(frozen=True)
class EventClip:
    events: np.ndarray
    t_start: int
    t_end: int
    geometry: tuple[int, int]

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class VoxelGridConfig:
    height: int = 64
    width: int = 64
    bins: int = 3
    polarity_mode: Literal["merged", "split"] = "merged"

    def __post_init__(self):
        if self.bins < 1:
            raise ArgumentError("bins must be >= 1")
        if self.height < 8 or self.width < 8:
            raise ArgumentError("voxel grid must be at least 8 x 8")
        if self.polarity_mode not in ("merged", "split"):
            raise ArgumentError(f"unknown polarity mode {self.polarity_mode!r}")

    @property
    def channels(self) -> int:
        return self.bins * (2 if self.polarity_mode == "split" else 1)

    def to_dict(self) -> dict:
        return {"height": self.height, "width": self.width, "bins": self.bins,
                "polarity_mode": self.polarity_mode}


def _check_events(ev: np.ndarray, geometry: tuple[int, int] | None, base: int = 0) -> None:
    if len(ev) == 0:
        return
    bad_p = np.nonzero(ev["p"] > 1)[0]
    if len(bad_p):
        i = int(bad_p[0])
        raise ParseError(f"polarity {int(ev['p'][i])} not in {{0, 1}}", base + i * EVENT_DTYPE.itemsize)
    if geometry is not None:
        h, w = geometry
        bad = np.nonzero((ev["x"] >= w) | (ev["y"] >= h))[0]
        if len(bad):
            i = int(bad[0])
            raise GeometryError(
                f"event ({int(ev['x'][i])}, {int(ev['y'][i])}) outside {w}x{h} sensor", i + 1)
    dec = np.nonzero(np.diff(ev["t"].astype(np.int64)) < 0)[0]
    if len(dec):
        i = int(dec[0]) + 1
        raise OrderingError(f"timestamp {int(ev['t'][i])} < {int(ev['t'][i - 1])}", i + 1)


_CSV_FIELD = re.compile(rb"^\s*\d+\s*$")


def _parse_csv(data: bytes) -> np.ndarray:
    rows = []
    offset = 0
    first = True
    for line in data.splitlines(keepends=True):
        start = offset
        offset += len(line)
        body = line.strip()
        if not body:
            continue
        parts = body.split(b",")
        if first and not body[:1].isdigit():
            first = False
            if [p.strip().lower() for p in parts] != [b"t", b"x", b"y", b"p"]:
                raise ParseError(f"unrecognised CSV header {body!r}", start)
            continue
        first = False
        if len(parts) != 4 or not all(_CSV_FIELD.match(p) for p in parts):
            raise ParseError(f"malformed CSV record {body!r}", start)
        t, x, y, p = (int(v) for v in parts)
        if t >= 1 << 64 or x >= 1 << 16 or y >= 1 << 16 or p >= 1 << 8:
            raise ParseError(f"field out of range in {body!r}", start)
        rows.append((t, x, y, p))
    return np.array(rows, dtype=EVENT_DTYPE)


def parse_events(data: bytes, fmt: Literal["binary", "csv"] = "binary",
                 geometry: tuple[int, int] | None = None) -> np.ndarray:
    """Decode an event file into a structured array ordered by timestamp.

    ``geometry`` is (H, W); when given, coordinates are range-checked.
    Record numbers in errors are 1-based.
    """
    if fmt == "binary":
        rem = len(data) % EVENT_DTYPE.itemsize
        if rem:
            raise ParseError(f"truncated record ({rem} trailing bytes)", len(data) - rem)
        ev = np.frombuffer(data, dtype=EVENT_DTYPE).copy()
    elif fmt == "csv":
        ev = _parse_csv(data)
    else:
        raise ArgumentError(f"unknown event format {fmt!r}")
    _check_events(ev, geometry)
    return ev


def encode_events(ev: np.ndarray, fmt: Literal["binary", "csv"] = "binary") -> bytes:
    ev = np.asarray(ev, dtype=EVENT_DTYPE)
    if fmt == "binary":
        return ev.tobytes()
    return "".join(f"{t},{x},{y},{p}\n" for t, x, y, p in ev.tolist()).encode()


def slice_clips(events: np.ndarray, window_us: int, t0: int, geometry: tuple[int, int],
                n_clips: int | None = None) -> list[EventClip]:
    """Split events into consecutive half-open windows starting at ``t0``.

    Without ``n_clips`` the span runs through the last event. Empty windows
    are kept because the recurrent head still has to step through them.
    """
    if window_us <= 0:
        raise ArgumentError("window_us must be positive")
    events = np.asarray(events, dtype=EVENT_DTYPE)
    t = events["t"].astype(np.int64) - int(t0)
    if len(t) and t.min() < 0:
        raise ArgumentError("events precede t0")
    if n_clips is None:
        n_clips = int(t[-1] // window_us) + 1 if len(t) else 0
    # events sorted by t, so each window is a contiguous run
    bounds = np.searchsorted(t, np.arange(n_clips + 1, dtype=np.int64) * window_us, side="left")
    clips = []
    for i in range(n_clips):
        lo, hi = bounds[i], bounds[i + 1]
        start = int(t0) + i * window_us
        clips.append(EventClip(events[lo:hi], start, start + window_us, tuple(geometry)))
    return clips


def voxelize(clip: EventClip, cfg: VoxelGridConfig) -> SparseTensor:
    """Count events per (pixel, temporal bin[, polarity]) with hard bin assignment.

    Features are int32 counts saturated at 255.
    """
    if tuple(clip.geometry) != (cfg.height, cfg.width):
        raise ArgumentError(f"clip geometry {clip.geometry} != voxel grid {(cfg.height, cfg.width)}")
    c = cfg.channels
    ev = clip.events
    if len(ev) == 0:
        return SparseTensor.empty((cfg.height, cfg.width, c), dtype=np.int32)
    window = clip.t_end - clip.t_start
    dt = ev["t"].astype(np.int64) - clip.t_start
    b = (dt * cfg.bins) // window
    if cfg.polarity_mode == "split":
        ch = b * 2 + ev["p"].astype(np.int64)
    else:
        ch = b
    key = ev["y"].astype(np.int64) * cfg.width + ev["x"].astype(np.int64)
    sites, inv = np.unique(key, return_inverse=True)
    feats = np.zeros((len(sites), c), dtype=np.int64)
    np.add.at(feats, (inv.ravel(), ch), 1)
    np.minimum(feats, FEATURE_SATURATION, out=feats)
    return SparseTensor.from_keys((cfg.height, cfg.width, c), sites, feats.astype(np.int32))
