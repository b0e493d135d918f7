"""Subset diagnostics: class balance, overlap, correlation, schedules.

These operate on selection outcomes (manifests, id sets) rather than on
scores, and back the ``analyze`` CLI subcommands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import AbstractSet, Iterable, Mapping, Sequence

import numpy as np

from .datamodel import CategoryId, DatasetIndex, ImageId
from .errors import (
    DegenerateSchedule,
    EmptyDistribution,
    EmptySet,
    LengthMismatch,
    RatioOutOfRange,
    SupportMismatch,
    UnknownImageId,
    ZeroVariance,
)
from .ranking import _snap_ratio


@dataclass(frozen=True)
class ClassDistribution:
    """Per-category share of annotations over some image subset.

    Probabilities cover the dataset's full category set; categories absent
    from the subset carry probability 0.
    """

    probabilities: dict[CategoryId, float]

    def __post_init__(self) -> None:
        total = math.fsum(self.probabilities.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")

    @property
    def support(self) -> frozenset[CategoryId]:
        return frozenset(self.probabilities)


def class_distribution(
    dataset: DatasetIndex, image_ids: Iterable[ImageId]
) -> ClassDistribution:
    """Distribution of annotation categories over the given images."""
    counts = {category: 0 for category in dataset.categories}
    total = 0
    for image_id in image_ids:
        record = dataset.images.get(image_id)
        if record is None:
            raise UnknownImageId(f"image {image_id} not in dataset")
        for obj in record.objects:
            counts[obj.category] += 1
            total += 1
    if total == 0:
        raise EmptyDistribution("subset contains no annotations")
    return ClassDistribution(
        {category: count / total for category, count in counts.items()}
    )


def js_divergence(p: ClassDistribution, q: ClassDistribution) -> float:
    """Jensen-Shannon divergence in bits; 0 for equal distributions, at most 1."""
    if p.support != q.support:
        raise SupportMismatch("distributions cover different category sets")
    order = sorted(p.support)
    pv = np.asarray([p.probabilities[c] for c in order])
    qv = np.asarray([q.probabilities[c] for c in order])
    mv = 0.5 * (pv + qv)

    def _kl_bits(a: np.ndarray, b: np.ndarray) -> float:
        mask = a > 0.0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))

    value = 0.5 * _kl_bits(pv, mv) + 0.5 * _kl_bits(qv, mv)
    # clamp float dust so equal distributions report exactly 0
    return min(max(value, 0.0), 1.0)


def sample_iou(a: AbstractSet[ImageId], b: AbstractSet[ImageId]) -> float:
    """Jaccard overlap of two image-id sets."""
    a, b = set(a), set(b)
    if not a or not b:
        raise EmptySet("sample overlap needs two non-empty id sets")
    return len(a & b) / len(a | b)


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of two equal-length value lists."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"lengths {x.shape[0]} and {y.shape[0]} differ")
    if x.size < 2:
        raise LengthMismatch("correlation needs at least two pairs")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ZeroVariance("correlation is undefined for a constant vector")
    r = float(np.corrcoef(x, y)[0, 1])
    return min(max(r, -1.0), 1.0)


@dataclass(frozen=True)
class Schedule:
    """Training length and decay milestones, in iterations."""

    max_iter: int
    steps: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise DegenerateSchedule(f"max_iter must be positive, got {self.max_iter}")
        for step in self.steps:
            if step < 1:
                raise DegenerateSchedule(f"step {step} must be positive")
            if step >= self.max_iter:
                raise DegenerateSchedule(
                    f"step {step} must fall before max_iter {self.max_iter}"
                )
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise DegenerateSchedule(f"steps {self.steps} must be strictly increasing")


def scale_schedule(full: Schedule, prune_ratio: float) -> Schedule:
    """Shrink a schedule in proportion to the kept fraction of the data.

    Every field is multiplied by ``1 - prune_ratio`` and rounded to the
    nearest iteration (ties to even, exact rational arithmetic).  Raises
    DegenerateSchedule when rounding collapses the milestone ordering.
    """
    factor = 1 - _snap_ratio(prune_ratio)
    return Schedule(
        max_iter=round(factor * full.max_iter),
        steps=tuple(round(factor * step) for step in full.steps),
    )
