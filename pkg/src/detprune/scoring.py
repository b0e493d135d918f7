"""Score functions over matched series, and the method registry.

Twelve methods are supported.  Object-level methods consume per-object
series; image-level methods work from the dataset and log directly.

========== ======= ================================== ==========
name       level   score                              keep first
========== ======= ================================== ==========
vps_iou    object  population std of IoU series       high
vps_conf   object  population std of confidence       low
iou_mean   object  mean IoU                           low
conf_mean  object  mean confidence                    low
el2n       object  mean L2 gap to one-hot, epochs 1-10 high
aum        object  mean margin gt-prob vs best other  low
entropy    object  mean prediction entropy (nats)     high
forgetting object  correct-to-incorrect transitions   high
correctness object count of correct epochs            low
idp        image   number of annotated objects        high
loss       image   recorded loss at the window's end  high
random     image   seeded hash in [0, 1)              high
========== ======= ================================== ==========

The direction column is the default rank order (which end is kept first
under pruning); callers may override it per run.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .datamodel import CategoryId, DatasetIndex, ImageId, PredictionLog
from .errors import (
    EmptySeries,
    MissingEpochRecord,
    MissingLoss,
    MissingProbs,
    NonFiniteScore,
    SingleCategory,
    UnknownMethod,
    WindowExceedsLog,
)
from .matching import SeriesCollection

ProbRows = Sequence[Sequence[float] | None]


class Level(Enum):
    OBJECT = "object"
    IMAGE = "image"


class Direction(Enum):
    HIGH_FIRST = "high"
    LOW_FIRST = "low"


@dataclass(frozen=True, slots=True)
class ScoreMethod:
    """A resolved scoring method: what to compute and which end to keep."""

    name: str
    level: Level
    direction: Direction
    window: tuple[int, int] | None = None


_DEFAULTS: dict[str, tuple[Level, Direction, tuple[int, int] | None]] = {
    "vps_iou": (Level.OBJECT, Direction.HIGH_FIRST, None),
    "vps_conf": (Level.OBJECT, Direction.LOW_FIRST, None),
    "iou_mean": (Level.OBJECT, Direction.LOW_FIRST, None),
    "conf_mean": (Level.OBJECT, Direction.LOW_FIRST, None),
    "el2n": (Level.OBJECT, Direction.HIGH_FIRST, (1, 10)),
    "aum": (Level.OBJECT, Direction.LOW_FIRST, None),
    "entropy": (Level.OBJECT, Direction.HIGH_FIRST, None),
    "forgetting": (Level.OBJECT, Direction.HIGH_FIRST, None),
    "correctness": (Level.OBJECT, Direction.LOW_FIRST, None),
    "idp": (Level.IMAGE, Direction.HIGH_FIRST, None),
    "loss": (Level.IMAGE, Direction.HIGH_FIRST, None),
    "random": (Level.IMAGE, Direction.HIGH_FIRST, None),
}

METHOD_NAMES = tuple(_DEFAULTS)
OBJECT_METHODS = tuple(n for n, (lv, _, _) in _DEFAULTS.items() if lv is Level.OBJECT)
IMAGE_METHODS = tuple(n for n, (lv, _, _) in _DEFAULTS.items() if lv is Level.IMAGE)


def resolve_method(
    name: str,
    *,
    direction: Direction | str | None = None,
    window: tuple[int, int] | None = None,
) -> ScoreMethod:
    """Look up a method by name, with optional direction/window overrides."""
    if name not in _DEFAULTS:
        raise UnknownMethod(f"{name!r}; supported: {', '.join(METHOD_NAMES)}")
    level, default_dir, default_win = _DEFAULTS[name]
    if direction is None:
        direction = default_dir
    elif isinstance(direction, str):
        direction = Direction(direction)
    if window is None:
        window = default_win
    else:
        a, b = window
        if a < 1 or b < a:
            raise ValueError(f"window {a}:{b} is not a valid epoch range")
    return ScoreMethod(name=name, level=level, direction=direction, window=window)


# --- per-series score functions -------------------------------------------

def vps(series: Sequence[float]) -> float:
    """Population standard deviation of one per-epoch value series."""
    values = np.asarray(series, dtype=np.float64)
    if values.size == 0:
        raise EmptySeries("vps needs at least one epoch")
    return float(np.std(values))


def mean_value(series: Sequence[float]) -> float:
    values = np.asarray(series, dtype=np.float64)
    if values.size == 0:
        raise EmptySeries("mean needs at least one epoch")
    return float(np.mean(values))


def _probs_matrix(probs_series: ProbRows | np.ndarray) -> np.ndarray:
    """Normalize to a float (epochs, C) matrix; missing rows become NaN."""
    if isinstance(probs_series, np.ndarray):
        mat = probs_series.astype(np.float64, copy=False)
        if mat.ndim != 2:
            raise ValueError("probability series must be 2-dimensional")
        return mat
    rows = list(probs_series)
    if not rows:
        return np.empty((0, 0))
    width = next((len(r) for r in rows if r is not None), 0)
    mat = np.full((len(rows), width), np.nan)
    for k, row in enumerate(rows):
        if row is not None:
            mat[k] = row
    return mat


def _checked_probs(probs_series: ProbRows | np.ndarray, what: str) -> np.ndarray:
    mat = _probs_matrix(probs_series)
    if mat.shape[0] == 0:
        raise EmptySeries(f"{what} needs at least one epoch")
    if np.isnan(mat).any():
        epoch = int(np.argwhere(np.isnan(mat).any(axis=1))[0][0]) + 1
        raise MissingProbs(f"{what}: no probability vector at epoch {epoch}")
    return mat


def el2n(
    probs_series: ProbRows | np.ndarray,
    gt_index: int,
    window: int | None = None,
) -> float:
    """Mean L2 distance between probabilities and the one-hot truth.

    ``gt_index`` is the position of the true category in the vector;
    ``window`` limits the computation to the first so-many epochs.
    """
    mat = _probs_matrix(probs_series)
    if window is not None:
        if window < 1 or window > mat.shape[0]:
            raise WindowExceedsLog(
                f"el2n window {window} outside the {mat.shape[0]}-epoch series"
            )
        mat = mat[:window]
    mat = _checked_probs(mat, "el2n")
    diff = mat.copy()
    diff[:, gt_index] -= 1.0
    return float(np.mean(np.sqrt((diff * diff).sum(axis=-1))))


def aum(probs_series: ProbRows | np.ndarray, gt_index: int) -> float:
    """Mean margin between the true-category probability and the best other."""
    mat = _checked_probs(probs_series, "aum")
    if mat.shape[1] < 2:
        raise SingleCategory("aum needs at least two categories")
    others = mat.copy()
    others[:, gt_index] = -np.inf
    margins = mat[:, gt_index] - others.max(axis=-1)
    return float(np.mean(margins))


def entropy(probs_series: ProbRows | np.ndarray) -> float:
    """Mean Shannon entropy (natural log) of the per-epoch distributions."""
    mat = _checked_probs(probs_series, "entropy")
    safe = np.where(mat > 0.0, mat, 1.0)
    per_epoch = -(np.where(mat > 0.0, mat * np.log(safe), 0.0)).sum(axis=-1)
    return float(np.mean(per_epoch))


def forgetting(correct_series: Sequence[bool]) -> int:
    """Count of correct-to-incorrect transitions between adjacent epochs."""
    flags = np.asarray(correct_series, dtype=bool)
    if flags.size == 0:
        raise EmptySeries("forgetting needs at least one epoch")
    return int(np.sum(flags[:-1] & ~flags[1:]))


def correctness(correct_series: Sequence[bool]) -> int:
    """Count of epochs where the matched prediction had the right category."""
    flags = np.asarray(correct_series, dtype=bool)
    if flags.size == 0:
        raise EmptySeries("correctness needs at least one epoch")
    return int(np.sum(flags))


# --- collection scoring ---------------------------------------------------

@dataclass(frozen=True, slots=True)
class ObjectScore:
    object_id: int
    image_id: ImageId
    value: float


def _method_columns(method: ScoreMethod, series: SeriesCollection) -> tuple[int, int]:
    lo, hi = method.window if method.window is not None else (1, series.window)
    if hi > series.window:
        raise WindowExceedsLog(
            f"method {method.name} needs epochs {lo}..{hi} but the series "
            f"window is {series.window}"
        )
    return lo - 1, hi


def _window_probs(
    method: ScoreMethod, series: SeriesCollection, lo: int, hi: int
) -> np.ndarray:
    """Per-object probability rows over the window, or raise MissingProbs."""
    if series.probs is None:
        in_window = series.matched[:, lo:hi]
        bad = np.argwhere(in_window.any(axis=1))
        if bad.size:
            oid = int(series.object_ids[bad[0][0]])
            raise MissingProbs(
                f"object {oid}: {method.name} needs probability vectors but "
                f"the log has none"
            )
        shape = (len(series), hi - lo, series.num_categories)
        return np.full(shape, 1.0 / series.num_categories)
    window = series.probs[:, lo:hi, :]
    missing = np.isnan(window).any(axis=(1, 2))
    if missing.any():
        oid = int(series.object_ids[np.argwhere(missing)[0][0]])
        raise MissingProbs(
            f"object {oid}: no probability vector at a matched epoch "
            f"inside the {method.name} window"
        )
    return window


def score_objects(method: ScoreMethod, series: SeriesCollection) -> list[ObjectScore]:
    """Compute one score per object.  Result order follows the collection."""
    if method.level is not Level.OBJECT:
        raise ValueError(f"{method.name} is image-level; use image_level_score")
    lo, hi = _method_columns(method, series)
    if len(series) == 0:
        return []

    name = method.name
    if name == "vps_iou":
        values = np.std(series.iou[:, lo:hi], axis=1)
    elif name == "vps_conf":
        values = np.std(series.conf[:, lo:hi], axis=1)
    elif name == "iou_mean":
        values = np.mean(series.iou[:, lo:hi], axis=1)
    elif name == "conf_mean":
        values = np.mean(series.conf[:, lo:hi], axis=1)
    elif name == "forgetting":
        flags = series.correct[:, lo:hi]
        values = np.sum(flags[:, :-1] & ~flags[:, 1:], axis=1).astype(np.float64)
    elif name == "correctness":
        values = np.sum(series.correct[:, lo:hi], axis=1).astype(np.float64)
    elif name in ("el2n", "aum", "entropy"):
        values = _score_prob_methods(method, series, lo, hi)
    else:  # pragma: no cover - registry and dispatch kept in sync
        raise UnknownMethod(name)

    finite = np.isfinite(values)
    if not finite.all():
        oid = int(series.object_ids[np.argwhere(~finite)[0][0]])
        raise NonFiniteScore(f"object {oid}: {name} produced a non-finite value")
    return [
        ObjectScore(int(oid), int(img), float(v))
        for oid, img, v in zip(series.object_ids, series.image_ids, values)
    ]


def _score_prob_methods(
    method: ScoreMethod, series: SeriesCollection, lo: int, hi: int
) -> np.ndarray:
    probs = _window_probs(method, series, lo, hi)
    if method.name == "entropy":
        safe = np.where(probs > 0.0, probs, 1.0)
        per_epoch = -(np.where(probs > 0.0, probs * np.log(safe), 0.0)).sum(axis=-1)
        return np.mean(per_epoch, axis=1)

    index_of = {cat: k for k, cat in enumerate(series.category_order)}
    gt_idx = np.asarray(
        [index_of[int(c)] for c in series.gt_categories], dtype=np.intp
    )
    n, k, _ = probs.shape
    rows = np.arange(n)[:, None], np.arange(k)[None, :], gt_idx[:, None]
    if method.name == "el2n":
        diff = probs.copy()
        diff[rows] -= 1.0
        return np.mean(np.sqrt((diff * diff).sum(axis=-1)), axis=1)
    if series.num_categories < 2:
        raise SingleCategory("aum needs at least two categories")
    others = probs.copy()
    others[rows] = -np.inf
    margins = probs[rows] - others.max(axis=-1)
    return np.mean(margins, axis=1)


# --- image-level methods --------------------------------------------------

def hash_unit_score(seed: int, image_id: ImageId) -> float:
    """Deterministic hash of (seed, image_id) mapped into [0, 1).

    Independent of iteration order, so scores do not change when images are
    added or removed from a run.
    """
    digest = hashlib.blake2b(
        struct.pack(">QQ", seed & (2**64 - 1), image_id & (2**64 - 1)),
        digest_size=8,
    ).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def image_level_score(
    method: ScoreMethod,
    dataset: DatasetIndex,
    log: PredictionLog | None,
    seed: int,
) -> dict[ImageId, float]:
    """Score every annotated image.  Unannotated images are never scored."""
    if method.level is not Level.IMAGE:
        raise ValueError(f"{method.name} is object-level; use score_objects")
    annotated = dataset.annotated_ids()
    if method.name == "idp":
        return {i: float(len(dataset.images[i].objects)) for i in annotated}
    if method.name == "random":
        return {i: hash_unit_score(seed, i) for i in annotated}

    # loss: read the per-image loss at the window's closing epoch
    if log is None:
        raise ValueError("loss scoring needs the prediction log")
    last = method.window[1] if method.window is not None else log.max_epoch
    if last > log.max_epoch:
        raise WindowExceedsLog(
            f"loss window ends at epoch {last} but the log stops at {log.max_epoch}"
        )
    out: dict[ImageId, float] = {}
    for image_id in annotated:
        rec = log.get(last, image_id)
        if rec is None:
            raise MissingEpochRecord(
                f"image {image_id} has no record for epoch {last}"
            )
        if rec.loss is None:
            raise MissingLoss(f"image {image_id}, epoch {last}: no loss value")
        out[image_id] = float(rec.loss)
    for image_id, value in out.items():
        if not np.isfinite(value):
            raise NonFiniteScore(f"image {image_id}: loss {value}")
    return out
