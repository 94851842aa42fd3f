"""Subnet sampling from a MobileNetV2-style space, latency/budget filtering, Pareto selection."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArgumentError
from .model import BlockSpec, ModelSpec
from .sim import HwConfig, SparsityProfile, analytic_profile, model_latency, weight_footprint

CANDIDATE_HEADER = ["spec_hash", "latency_s", "weight_bytes", "accuracy"]


@dataclass(frozen=True)
class SearchSpace:
    block_count: tuple[int, int] = (2, 5)
    channel_choices: tuple[tuple[int, ...], ...] = ((16, 24, 32),)
    expansion_choices: tuple[tuple[int, ...], ...] = ((1, 2, 4, 6),)
    gru_hidden_choices: tuple[int, ...] = (32, 64, 128)
    stem_channel_choices: tuple[int, ...] = (16,)
    strides: tuple[int, ...] = (1, 2, 1, 2, 1)
    height: int = 64
    width: int = 64
    input_channels: int = 3
    granularity: int = 8

    def __post_init__(self):
        lo, hi = self.block_count
        if lo < 1 or hi < lo:
            raise ArgumentError(f"bad block count range {self.block_count}")
        lists = [*self.channel_choices, *self.expansion_choices, self.gru_hidden_choices,
                 self.stem_channel_choices]
        if not self.channel_choices or not self.expansion_choices or any(len(c) == 0 for c in lists):
            raise ArgumentError("every choice list must be nonempty")
        for c in (*(v for cs in self.channel_choices for v in cs), *self.stem_channel_choices):
            if c <= 0 or c % self.granularity:
                raise ArgumentError(f"channel {c} is not a positive multiple of {self.granularity}")
        if any(e < 1 for es in self.expansion_choices for e in es):
            raise ArgumentError("expansion ratios must be >= 1")
        if any(s not in (1, 2) for s in self.strides):
            raise ArgumentError("strides must be 1 or 2")

    def choices_for(self, table: tuple[tuple[int, ...], ...], i: int) -> tuple[int, ...]:
        return table[min(i, len(table) - 1)]

    def stride_for(self, i: int) -> int:
        return self.strides[i] if i < len(self.strides) else 1

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        def nested(v):
            if v and isinstance(v[0], (list, tuple)):
                return tuple(tuple(int(x) for x in row) for row in v)
            return (tuple(int(x) for x in v),)
        try:
            kw = {}
            for key in ("height", "width", "input_channels", "granularity"):
                if key in d:
                    kw[key] = int(d[key])
            if "block_count" in d:
                kw["block_count"] = tuple(int(x) for x in d["block_count"])
            for key in ("channel_choices", "expansion_choices"):
                if key in d:
                    kw[key] = nested(d[key])
            for key in ("gru_hidden_choices", "stem_channel_choices", "strides"):
                if key in d:
                    kw[key] = tuple(int(x) for x in d[key])
            unknown = set(d) - set(cls.__dataclass_fields__)
        except (TypeError, ValueError) as e:
            raise ArgumentError(f"malformed search space: {e}") from e
        if unknown:
            raise ArgumentError(f"unknown search space keys {sorted(unknown)}")
        return cls(**kw)


@dataclass(frozen=True)
class Candidate:
    spec: ModelSpec
    latency_est: float
    weight_bytes: int
    accuracy: float | None = None

    def __post_init__(self):
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise ArgumentError(f"accuracy {self.accuracy} outside [0, 1]")

    @property
    def spec_hash(self) -> str:
        return self.spec.spec_hash


def _pick(rng: np.random.Generator, choices: Sequence[int]) -> int:
    return int(choices[int(rng.integers(len(choices)))])


def sample_subnet(space: SearchSpace, seed) -> ModelSpec:
    """Uniform draw of every searchable field; deterministic per seed."""
    rng = np.random.default_rng(seed)
    lo, hi = space.block_count
    n_blocks = int(rng.integers(lo, hi + 1))
    stem = _pick(rng, space.stem_channel_choices)
    blocks, prev = [], stem
    for i in range(n_blocks):
        c = _pick(rng, space.choices_for(space.channel_choices, i))
        t = _pick(rng, space.choices_for(space.expansion_choices, i))
        blocks.append(BlockSpec(t, prev, c, space.stride_for(i)))
        prev = c
    gru = _pick(rng, space.gru_hidden_choices)
    return ModelSpec(space.input_channels, stem, tuple(blocks), gru, space.height, space.width)


def feasible(spec: ModelSpec, hw: HwConfig, latency_cap: float,
             profile: SparsityProfile) -> tuple[bool, Candidate]:
    """Weight footprint within the on-chip budget and simulated latency within the cap (both <=)."""
    report = model_latency(spec, profile, hw)
    wb = weight_footprint(spec)
    cand = Candidate(spec, report.total_latency_s, wb)
    return (wb <= hw.weight_budget_bytes and report.total_latency_s <= latency_cap), cand


def pareto_front(cands: Iterable[Candidate]) -> list[Candidate]:
    """Non-dominated set under (latency min, accuracy max), sorted by latency; ties kept."""
    cands = list(cands)
    for i, c in enumerate(cands):
        if c.accuracy is None:
            raise ArgumentError(f"candidate {i} ({c.spec_hash}) has no accuracy")
    order = sorted(range(len(cands)), key=lambda i: (cands[i].latency_est, -cands[i].accuracy, i))
    front = []
    best_before = -math.inf  # best accuracy among strictly lower latencies
    j = 0
    while j < len(order):
        lat = cands[order[j]].latency_est
        group = []
        while j < len(order) and cands[order[j]].latency_est == lat:
            group.append(order[j])
            j += 1
        top = cands[group[0]].accuracy
        if top > best_before:
            front.extend(cands[i] for i in group if cands[i].accuracy == top)
        best_before = max(best_before, top)
    return front


def profile_at(density: float) -> Callable[[ModelSpec], SparsityProfile]:
    return lambda spec: analytic_profile(spec, density)


def worker_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SEE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as e:
            raise ArgumentError(f"SEE_THREADS={env!r} is not an integer") from e
    return 1


def search_run(space: SearchSpace, hw: HwConfig, latency_cap: float,
               profile: Callable[[ModelSpec], SparsityProfile] | SparsityProfile,
               n_samples: int, seed: int, threads: int | None = None) -> list[Candidate]:
    """Sample ``n_samples`` subnets, dedupe by spec hash, keep the feasible ones in sample order.

    Sample ``i`` draws from its own seed derived from ``(seed, i)``, so the result
    does not depend on the worker count.
    """
    if n_samples < 0:
        raise ArgumentError("n_samples must be non-negative")
    specs, seen = [], set()
    for i in range(n_samples):
        spec = sample_subnet(space, np.random.SeedSequence([seed, i]))
        if spec.spec_hash not in seen:
            seen.add(spec.spec_hash)
            specs.append(spec)

    def evaluate(spec: ModelSpec):
        prof = profile(spec) if callable(profile) else profile
        return feasible(spec, hw, latency_cap, prof)

    n_workers = worker_count(threads)
    if n_workers == 1:
        results = [evaluate(s) for s in specs]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(evaluate, specs))
    return [c for ok, c in results if ok]


def synthetic_accuracy(spec: ModelSpec, seed: int = 0, noise: float = 0.01) -> float:
    """Stand-in accuracy: saturating in parameter count plus hash-seeded noise."""
    base = 0.55 + 0.4 * (1.0 - math.exp(-spec.param_count / 150_000))
    rng = np.random.default_rng([int(spec.spec_hash, 16), seed])
    return float(min(1.0, max(0.0, base + rng.normal(0.0, noise))))


def with_accuracy(cands: Iterable[Candidate], accuracy: dict[str, float]) -> list[Candidate]:
    """Join externally measured accuracies by spec hash; unmatched candidates are dropped."""
    return [replace(c, accuracy=float(accuracy[c.spec_hash])) for c in cands if c.spec_hash in accuracy]


# -- CSV I/O ---------------------------------------------------------------------

def format_candidates(cands: Iterable[Candidate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CANDIDATE_HEADER)
    for c in cands:
        acc = "" if c.accuracy is None else f"{c.accuracy:.6f}"
        w.writerow([c.spec_hash, f"{c.latency_est:.9e}", c.weight_bytes, acc])
    return buf.getvalue()


def read_accuracy_csv(text: str) -> dict[str, float]:
    """``spec_hash,accuracy`` rows (a full candidate CSV is accepted too)."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out = {}
    for i, r in enumerate(rows, start=2):
        try:
            h, a = r["spec_hash"].strip(), r["accuracy"].strip()
        except (KeyError, AttributeError) as e:
            raise ArgumentError(f"accuracy CSV needs spec_hash and accuracy columns (line {i})") from e
        if a == "":
            continue
        try:
            out[h] = float(a)
        except ValueError as e:
            raise ArgumentError(f"bad accuracy {a!r} on line {i}") from e
    return out
