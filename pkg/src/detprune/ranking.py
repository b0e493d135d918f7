"""Aggregate object scores per image, rank images, and select a subset.

Ranking is deterministic: images are pre-sorted by ascending id, stably
sorted by score in the method's keep-first direction, and runs of exactly
equal scores are shuffled with a generator seeded from the run seed.  The
same inputs and seed therefore always produce the same order, regardless of
input ordering.

The keep count for a prune ratio ``p`` over ``N`` ranked images is
``ceil((1 - p) * N)`` evaluated in exact rational arithmetic, so a ratio
written as ``0.7`` never loses an image to float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .datamodel import ImageId, PruneManifest
from .errors import (
    EmptyObjectList,
    NonFiniteScore,
    RatioOutOfRange,
    UnknownAggregation,
)
from .scoring import Direction, ObjectScore

# ratios are snapped to 12 decimal places before exact arithmetic, so that
# float inputs like 0.7 mean the decimal 0.7
_RATIO_DECIMALS = 12


class Aggregation(Enum):
    MEAN = "mean"
    SUM = "sum"
    MAX = "max"


def resolve_aggregation(name: str) -> Aggregation:
    try:
        return Aggregation(name)
    except ValueError:
        raise UnknownAggregation(
            f"{name!r}; supported: mean, sum, max"
        ) from None


def aggregate(kind: Aggregation, values: Sequence[float]) -> float:
    """Collapse one image's object scores into a single image score."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptyObjectList("cannot aggregate an empty score list")
    if kind is Aggregation.MEAN:
        return float(np.mean(arr))
    if kind is Aggregation.SUM:
        return float(np.sum(arr))
    return float(np.max(arr))


def aggregate_scores(
    kind: Aggregation, object_scores: Iterable[ObjectScore]
) -> dict[ImageId, float]:
    """Group object scores by image and aggregate each group."""
    grouped: dict[ImageId, list[float]] = {}
    for score in object_scores:
        grouped.setdefault(score.image_id, []).append(score.value)
    return {
        image_id: aggregate(kind, values) for image_id, values in grouped.items()
    }


class RankedImage(NamedTuple):
    image_id: ImageId
    score: float
    rank: int


@dataclass(frozen=True)
class RankedList:
    """Images in keep-first order with contiguous ranks starting at 1."""

    entries: tuple[RankedImage, ...]
    direction: Direction
    seed: int

    def image_ids(self) -> list[ImageId]:
        return [e.image_id for e in self.entries]

    def rows(self) -> list[tuple[ImageId, float, int]]:
        return [(e.image_id, e.score, e.rank) for e in self.entries]


def rank(
    scores: Mapping[ImageId, float],
    direction: Direction,
    seed: int,
) -> RankedList:
    """Order images by score with seeded shuffling of exact ties."""
    for image_id, value in scores.items():
        if not math.isfinite(value):
            raise NonFiniteScore(f"image {image_id}: score {value}")

    items = sorted(scores.items())
    items.sort(key=lambda kv: kv[1], reverse=direction is Direction.HIGH_FIRST)

    rng = np.random.default_rng(seed)
    ordered: list[tuple[ImageId, float]] = []
    start = 0
    while start < len(items):
        stop = start + 1
        while stop < len(items) and items[stop][1] == items[start][1]:
            stop += 1
        block = items[start:stop]
        if len(block) > 1:
            block = [block[i] for i in rng.permutation(len(block))]
        ordered.extend(block)
        start = stop

    entries = tuple(
        RankedImage(image_id, value, position)
        for position, (image_id, value) in enumerate(ordered, start=1)
    )
    return RankedList(entries=entries, direction=direction, seed=seed)


def ranked_from_rows(
    rows: Sequence[tuple[ImageId, float, int]],
    direction: Direction,
    seed: int,
) -> RankedList:
    """Rebuild a RankedList from scores-file rows (already ordered)."""
    entries = tuple(RankedImage(i, s, r) for i, s, r in rows)
    return RankedList(entries=entries, direction=direction, seed=seed)


def _snap_ratio(prune_ratio: float) -> Fraction:
    try:
        value = float(prune_ratio)
    except (TypeError, ValueError):
        raise RatioOutOfRange(
            f"prune ratio must be a number, got {prune_ratio!r}"
        ) from None
    if not math.isfinite(value) or not 0.0 <= value < 1.0:
        raise RatioOutOfRange(f"prune ratio {value} outside [0, 1)")
    return round(Fraction(value), _RATIO_DECIMALS)


def keep_count(total: int, prune_ratio: float) -> int:
    """Images kept when pruning ``prune_ratio`` of ``total`` ranked images."""
    if total < 0:
        raise ValueError(f"total must be non-negative, got {total}")
    ratio = _snap_ratio(prune_ratio)
    return math.ceil((1 - ratio) * total)


def select(
    ranked: RankedList,
    prune_ratio: float,
    method: str,
    aggregation: str,
    *,
    unranked_image_ids: Sequence[ImageId] | None = None,
) -> PruneManifest:
    """Keep the top portion of a ranking and record it as a manifest."""
    count = keep_count(len(ranked.entries), prune_ratio)
    kept = tuple(entry.image_id for entry in ranked.entries[:count])
    return PruneManifest(
        method=method,
        aggregation=aggregation,
        prune_ratio=float(prune_ratio),
        seed=ranked.seed,
        kept_image_ids=kept,
        unranked_image_ids=(
            tuple(unranked_image_ids) if unranked_image_ids is not None else None
        ),
    )
