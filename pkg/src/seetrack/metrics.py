"""Eye-centre evaluation: Euclidean distance, mean distance, p-k accuracy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ArgumentError


@dataclass(frozen=True)
class LabeledPrediction:
    gt: tuple[float, float]
    pred: tuple[float, float]
    valid: bool = True

    def __post_init__(self):
        for v in (*self.gt, *self.pred):
            if not math.isfinite(v) or v < 0:
                raise ArgumentError(f"coordinates must be finite and non-negative: {self}")


def euclidean(gt: Sequence[float], pred: Sequence[float]) -> float:
    return math.hypot(pred[0] - gt[0], pred[1] - gt[1])


def _valid(samples: Iterable[LabeledPrediction]) -> list[LabeledPrediction]:
    out = [s for s in samples if s.valid]
    if not out:
        raise ArgumentError("no valid samples")
    return out


def pk_accuracy(samples: Iterable[LabeledPrediction], k: float) -> float:
    """Fraction of valid samples whose error is strictly below ``k`` pixels."""
    valid = _valid(samples)
    hits = sum(1 for s in valid if euclidean(s.gt, s.pred) < k)
    return hits / len(valid)


def mean_distance(samples: Iterable[LabeledPrediction]) -> float:
    valid = _valid(samples)
    return math.fsum(euclidean(s.gt, s.pred) for s in valid) / len(valid)


def report(samples: Sequence[LabeledPrediction], ks: Sequence[float] = (5, 10)) -> str:
    """``p5=<v> p10=<v> dist=<v> n=<count>`` (count = valid samples)."""
    valid = _valid(samples)
    parts = [f"p{_k(k)}={pk_accuracy(valid, k):.6f}" for k in ks]
    parts.append(f"dist={mean_distance(valid):.6f}")
    parts.append(f"n={len(valid)}")
    return " ".join(parts)


def _k(k: float) -> str:
    return str(int(k)) if float(k).is_integer() else str(k)
