"""Assign predictions to ground-truth objects and build per-epoch series.

The match rule, per ground-truth object and epoch:

1. Candidates are the predictions whose IoU with the object is strictly
   positive.
2. If any candidate shares the object's category, only those are considered.
3. Among the considered candidates the highest IoU wins; equal IoU goes to
   the lowest prediction index.
4. A prediction may serve several objects; there is no exclusivity.
5. An object with no candidate is unmatched for that epoch and its series
   entries are imputed: iou 0, confidence 0, correct false, uniform
   probability vector.

:func:`build_series` runs this rule over a log window and accumulates one
fixed-length series per object.  It accepts either a parsed
:class:`~detprune.datamodel.PredictionLog` or a streamed byte source, so logs
far larger than memory can be scored in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .datamodel import (
    DatasetIndex,
    EpochImageLog,
    ImageId,
    LogSource,
    Prediction,
    PredictionLog,
    _as_line_iter,
    iter_raw_log,
)
from .errors import (
    DuplicateRecord,
    MissingEpochRecord,
    ProbLengthMismatch,
    UnknownImageId,
    WindowExceedsLog,
)
from .datamodel import GroundTruthObject
from .geometry import iou

_FLUSH_EVERY = 65536


@dataclass(frozen=True, slots=True)
class MatchRecord:
    """Winning prediction for one object at one epoch."""

    prediction_index: int
    iou: float
    confidence: float
    category: int
    probs: tuple[float, ...] | None = None


@dataclass(frozen=True, slots=True)
class Assignment:
    object_id: int
    epoch: int
    matched: MatchRecord | None


def cipa_match(
    objects: Sequence[GroundTruthObject],
    predictions: Sequence[Prediction],
    epoch: int = 1,
) -> list[Assignment]:
    """Apply the match rule for one image at one epoch."""
    out: list[Assignment] = []
    for obj in objects:
        best_idx = -1
        best_iou = 0.0
        best_same = False
        for idx, pred in enumerate(predictions):
            overlap = iou(obj.bbox, pred.bbox)
            if overlap <= 0.0:
                continue
            same = pred.category == obj.category
            if best_idx < 0:
                better = True
            elif same != best_same:
                better = same
            else:
                better = overlap > best_iou
            if better:
                best_idx, best_iou, best_same = idx, overlap, same
        if best_idx < 0:
            out.append(Assignment(obj.object_id, epoch, None))
        else:
            pred = predictions[best_idx]
            out.append(
                Assignment(
                    obj.object_id,
                    epoch,
                    MatchRecord(
                        prediction_index=best_idx,
                        iou=best_iou,
                        confidence=pred.confidence,
                        category=pred.category,
                        probs=pred.probs,
                    ),
                )
            )
    return out


@dataclass(frozen=True)
class MatchedSeries:
    """Per-epoch series for one object over the build window.

    Arrays are read-only views of shared storage.  ``probs_series`` is None
    when the log carried no probability vectors; rows for unmatched epochs
    hold the uniform vector and rows for matched epochs without probs hold
    NaN.
    """

    object_id: int
    image_id: ImageId
    gt_category: int
    num_categories: int
    iou_series: np.ndarray
    conf_series: np.ndarray
    correct_series: np.ndarray
    matched_mask: np.ndarray
    probs_series: np.ndarray | None

    @property
    def window(self) -> int:
        return self.iou_series.shape[0]


class SeriesCollection:
    """Matched series for every annotated object of a dataset."""

    def __init__(
        self,
        *,
        window: int,
        category_order: tuple[int, ...],
        object_ids: np.ndarray,
        image_ids: np.ndarray,
        gt_categories: np.ndarray,
        iou: np.ndarray,
        conf: np.ndarray,
        correct: np.ndarray,
        matched: np.ndarray,
        pred_category: np.ndarray,
        probs: np.ndarray | None,
    ) -> None:
        self.window = window
        self.category_order = category_order
        self.object_ids = object_ids
        self.image_ids = image_ids
        self.gt_categories = gt_categories
        self.iou = iou
        self.conf = conf
        self.correct = correct
        self.matched = matched
        self.pred_category = pred_category
        self.probs = probs
        self.num_categories = len(category_order)
        for arr in (object_ids, image_ids, gt_categories, iou, conf, correct,
                    matched, pred_category):
            arr.flags.writeable = False
        if probs is not None:
            probs.flags.writeable = False

    def __len__(self) -> int:
        return self.object_ids.shape[0]

    def __getitem__(self, index: int) -> MatchedSeries:
        return MatchedSeries(
            object_id=int(self.object_ids[index]),
            image_id=int(self.image_ids[index]),
            gt_category=int(self.gt_categories[index]),
            num_categories=self.num_categories,
            iou_series=self.iou[index],
            conf_series=self.conf[index],
            correct_series=self.correct[index],
            matched_mask=self.matched[index],
            probs_series=self.probs[index] if self.probs is not None else None,
        )

    def __iter__(self) -> Iterator[MatchedSeries]:
        for index in range(len(self)):
            yield self[index]


class _Accumulator:
    """Chunked scatter of match results into the series arrays."""

    def __init__(self, num_objects: int, window: int) -> None:
        self.iou = np.zeros((num_objects, window))
        self.conf = np.zeros((num_objects, window))
        self.correct = np.zeros((num_objects, window), dtype=bool)
        self.matched = np.zeros((num_objects, window), dtype=bool)
        self.pred_category = np.full((num_objects, window), -1, dtype=np.int32)
        self.probs: np.ndarray | None = None
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._ious: list[float] = []
        self._confs: list[float] = []
        self._corrects: list[bool] = []
        self._cats: list[int] = []
        self._probs_rows: list[tuple[int, int, list[float] | None]] = []

    def ensure_probs(self, num_categories: int) -> None:
        # NaN until finalize(); unmatched cells become uniform there, so the
        # allocation moment does not matter.
        if self.probs is None:
            self.probs = np.full(
                (self.iou.shape[0], self.iou.shape[1], num_categories), np.nan
            )

    def add(
        self,
        row: int,
        col: int,
        overlap: float,
        confidence: float,
        correct: bool,
        category: int,
        probs: list[float] | None,
    ) -> None:
        self._rows.append(row)
        self._cols.append(col)
        self._ious.append(overlap)
        self._confs.append(confidence)
        self._corrects.append(correct)
        self._cats.append(category)
        if probs is not None:
            self._probs_rows.append((row, col, probs))
        if len(self._rows) >= _FLUSH_EVERY:
            self.flush()

    def flush(self) -> None:
        if not self._rows:
            return
        rows = np.asarray(self._rows, dtype=np.intp)
        cols = np.asarray(self._cols, dtype=np.intp)
        self.iou[rows, cols] = self._ious
        self.conf[rows, cols] = self._confs
        self.correct[rows, cols] = self._corrects
        self.matched[rows, cols] = True
        self.pred_category[rows, cols] = self._cats
        if self.probs is not None:
            for row, col, probs in self._probs_rows:
                self.probs[row, col] = probs
        self._rows.clear()
        self._cols.clear()
        self._ious.clear()
        self._confs.clear()
        self._corrects.clear()
        self._cats.clear()
        self._probs_rows.clear()


def _iter_plain_records(
    log: PredictionLog,
) -> Iterator[tuple[int, int, ImageId, Sequence, float | None]]:
    for rec in log.records.values():
        preds = [
            (
                p.bbox.x_min, p.bbox.y_min, p.bbox.x_max, p.bbox.y_max,
                p.category, p.confidence,
                list(p.probs) if p.probs is not None else None,
            )
            for p in rec.predictions
        ]
        yield 0, rec.epoch, rec.image_id, preds, rec.loss


def _iter_stream_records(
    source: LogSource,
) -> Iterator[tuple[int, int, ImageId, Sequence, float | None]]:
    for lineno, rec in iter_raw_log(_as_line_iter(source)):
        preds = [
            (p.bbox[0], p.bbox[1], p.bbox[2], p.bbox[3],
             p.category_id, p.score, p.probs)
            for p in rec.predictions
        ]
        yield lineno, rec.epoch, rec.image_id, preds, rec.loss


def build_series(
    dataset: DatasetIndex,
    log: PredictionLog | LogSource,
    window: int,
) -> SeriesCollection:
    """Match every object over epochs ``1..window`` and collect its series.

    Every image of the dataset must have a record for every epoch in the
    window; records beyond the window are read and counted toward the log's
    last epoch but otherwise ignored.
    """
    if window < 1:
        raise WindowExceedsLog(f"window must be at least 1, got {window}")

    image_index: dict[ImageId, int] = {}
    object_base: list[int] = []
    gt_rows: list[list[tuple[float, float, float, float, int]]] = []
    total = 0
    for image_id, rec in dataset.images.items():
        image_index[image_id] = len(object_base)
        object_base.append(total)
        gt_rows.append(
            [
                (o.bbox.x_min, o.bbox.y_min, o.bbox.x_max, o.bbox.y_max, o.category)
                for o in rec.objects
            ]
        )
        total += len(rec.objects)

    num_categories = dataset.num_categories
    acc = _Accumulator(total, window)
    coverage = np.zeros((len(object_base), window), dtype=bool)
    max_epoch = 0

    if isinstance(log, PredictionLog):
        max_epoch = log.max_epoch
        if window > max_epoch:
            raise WindowExceedsLog(
                f"window {window} exceeds last logged epoch {max_epoch}"
            )
        records = _iter_plain_records(log)
    else:
        records = _iter_stream_records(log)

    for lineno, epoch, image_id, preds, _loss in records:
        if epoch > max_epoch:
            max_epoch = epoch
        img = image_index.get(image_id)
        if img is None:
            where = f"line {lineno}" if lineno else f"epoch {epoch}"
            raise UnknownImageId(f"{where}: image {image_id} not in dataset")
        if epoch > window:
            continue
        col = epoch - 1
        if coverage[img, col]:
            raise DuplicateRecord(
                f"second record for epoch {epoch}, image {image_id}"
            )
        coverage[img, col] = True
        gts = gt_rows[img]
        if not gts:
            continue
        base = object_base[img]
        for j, (gx1, gy1, gx2, gy2, gcat) in enumerate(gts):
            garea = (gx2 - gx1) * (gy2 - gy1)
            best_iou = 0.0
            best_same = False
            best = None
            for pred in preds:
                px1, py1, px2, py2, pcat, _, _ = pred
                if px1 >= gx2 or px2 <= gx1 or py1 >= gy2 or py2 <= gy1:
                    continue
                iw = (px2 if px2 < gx2 else gx2) - (px1 if px1 > gx1 else gx1)
                if iw <= 0.0:
                    continue
                ih = (py2 if py2 < gy2 else gy2) - (py1 if py1 > gy1 else gy1)
                if ih <= 0.0:
                    continue
                inter = iw * ih
                union = garea + (px2 - px1) * (py2 - py1) - inter
                if union <= 0.0:
                    continue
                overlap = inter / union
                if overlap <= 0.0:
                    continue
                same = pcat == gcat
                if best is None:
                    better = True
                elif same != best_same:
                    better = same
                else:
                    better = overlap > best_iou
                if better:
                    best_iou, best_same, best = overlap, same, pred
            if best is not None:
                probs = best[6]
                if probs is not None:
                    if len(probs) != num_categories:
                        raise ProbLengthMismatch(
                            f"epoch {epoch}, image {image_id}: probs length "
                            f"{len(probs)} but dataset has {num_categories} categories"
                        )
                    acc.ensure_probs(num_categories)
                acc.add(base + j, col, best_iou, best[5], best_same, best[4], probs)

    if window > max_epoch:
        raise WindowExceedsLog(
            f"window {window} exceeds last logged epoch {max_epoch}"
        )
    if not coverage.all():
        img, col = np.argwhere(~coverage)[0]
        image_id = list(dataset.images)[img]
        raise MissingEpochRecord(f"image {image_id} has no record for epoch {col + 1}")

    acc.flush()
    if acc.probs is not None:
        acc.probs[~acc.matched] = 1.0 / num_categories
    object_ids = np.empty(total, dtype=np.int64)
    image_ids = np.empty(total, dtype=np.int64)
    gt_categories = np.empty(total, dtype=np.int64)
    pos = 0
    for rec in dataset.images.values():
        for obj in rec.objects:
            object_ids[pos] = obj.object_id
            image_ids[pos] = rec.image_id
            gt_categories[pos] = obj.category
            pos += 1

    return SeriesCollection(
        window=window,
        category_order=tuple(dataset.categories),
        object_ids=object_ids,
        image_ids=image_ids,
        gt_categories=gt_categories,
        iou=acc.iou,
        conf=acc.conf,
        correct=acc.correct,
        matched=acc.matched,
        pred_category=acc.pred_category,
        probs=acc.probs,
    )


def match_table(series: SeriesCollection) -> Iterator[tuple]:
    """Rows for the debug dump: one per (object, epoch).

    Yields ``(image_id, object_id, epoch, matched, iou, confidence,
    pred_category)`` with ``pred_category`` None for unmatched epochs.
    """
    for idx in range(len(series)):
        image_id = int(series.image_ids[idx])
        object_id = int(series.object_ids[idx])
        for col in range(series.window):
            matched = bool(series.matched[idx, col])
            yield (
                image_id,
                object_id,
                col + 1,
                matched,
                float(series.iou[idx, col]),
                float(series.conf[idx, col]),
                int(series.pred_category[idx, col]) if matched else None,
            )
