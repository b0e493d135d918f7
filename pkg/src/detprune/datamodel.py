"""Dataset, prediction-log, manifest, and scores-file handling.

External formats:

* Annotations: COCO-style JSON object with ``images``, ``annotations``
  (boxes in ``[x, y, width, height]``), and ``categories``.  Extra keys are
  ignored.  Images without annotations are kept and can be listed via
  :meth:`DatasetIndex.unannotated_ids`.
* Prediction log: JSON Lines, one record per (epoch, image) with boxes in
  ``[x1, y1, x2, y2]``, a confidence ``score`` in [0, 1], optional per-class
  ``probs`` (sum to 1 within 1e-6), and an optional per-image ``loss``.
* Prune manifest: single-line JSON with a fixed key order so identical
  selections serialize to identical bytes.
* Scores file: CSV ``image_id,score,rank`` with ranks contiguous from 1.

Parsers raise coded errors from :mod:`detprune.errors`; line numbers are
included for log files.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

import msgspec

from .errors import (
    DanglingReference,
    DuplicateRecord,
    MalformedDocument,
    MalformedLine,
    NegativeExtent,
    NonFiniteScore,
    OutOfRange,
    ProbLengthMismatch,
    UnsortedOrDuplicateIds,
    UnsupportedVersion,
)
from .geometry import BBox

ImageId = int
CategoryId = int

MANIFEST_VERSION = 1
SCORES_HEADER = "image_id,score,rank"
PROB_SUM_TOLERANCE = 1e-6

LogSource = Union[bytes, str, Iterable[bytes], IO[bytes]]


# --- dataset --------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class GroundTruthObject:
    """One annotated object."""

    object_id: int
    bbox: BBox
    category: CategoryId


@dataclass(frozen=True, slots=True)
class ImageRecord:
    image_id: ImageId
    file_name: str
    objects: tuple[GroundTruthObject, ...]
    width: int | None = None
    height: int | None = None


@dataclass(slots=True)
class DatasetIndex:
    """All images and categories of one dataset, in document order."""

    images: dict[ImageId, ImageRecord]
    categories: dict[CategoryId, str]

    @property
    def num_images(self) -> int:
        return len(self.images)

    @property
    def num_categories(self) -> int:
        return len(self.categories)

    @property
    def num_annotations(self) -> int:
        return sum(len(rec.objects) for rec in self.images.values())

    def annotated_ids(self) -> list[ImageId]:
        return [i for i, rec in self.images.items() if rec.objects]

    def unannotated_ids(self) -> list[ImageId]:
        return [i for i, rec in self.images.items() if not rec.objects]


# --- annotation parsing ---------------------------------------------------

class _CocoImage(msgspec.Struct):
    id: int
    file_name: str
    width: int | None = None
    height: int | None = None


class _CocoAnnotation(msgspec.Struct):
    id: int
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]


class _CocoCategory(msgspec.Struct):
    id: int
    name: str


class _CocoDocument(msgspec.Struct):
    images: list[_CocoImage]
    annotations: list[_CocoAnnotation]
    categories: list[_CocoCategory]


_coco_decoder = msgspec.json.Decoder(_CocoDocument)


def parse_annotations(data: bytes | str) -> DatasetIndex:
    """Build a :class:`DatasetIndex` from a COCO-style JSON document."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        doc = _coco_decoder.decode(data)
    except (msgspec.DecodeError, msgspec.ValidationError) as exc:
        raise MalformedDocument(str(exc)) from None

    categories: dict[CategoryId, str] = {}
    for cat in doc.categories:
        if cat.id in categories:
            raise MalformedDocument(f"duplicate category id {cat.id}")
        categories[cat.id] = cat.name

    images: dict[ImageId, list[GroundTruthObject]] = {}
    meta: dict[ImageId, _CocoImage] = {}
    for img in doc.images:
        if img.id in images:
            raise MalformedDocument(f"duplicate image id {img.id}")
        images[img.id] = []
        meta[img.id] = img

    seen_ann: set[int] = set()
    for ann in doc.annotations:
        if ann.id in seen_ann:
            raise MalformedDocument(f"duplicate annotation id {ann.id}")
        seen_ann.add(ann.id)
        if ann.image_id not in images:
            raise DanglingReference(
                f"annotation {ann.id} references missing image {ann.image_id}"
            )
        if ann.category_id not in categories:
            raise DanglingReference(
                f"annotation {ann.id} references missing category {ann.category_id}"
            )
        x, y, w, h = ann.bbox
        if w < 0 or h < 0:
            raise NegativeExtent(f"annotation {ann.id} has bbox extent {w}x{h}")
        images[ann.image_id].append(
            GroundTruthObject(ann.id, BBox.from_xywh(x, y, w, h), ann.category_id)
        )

    records = {
        image_id: ImageRecord(
            image_id=image_id,
            file_name=meta[image_id].file_name,
            objects=tuple(objs),
            width=meta[image_id].width,
            height=meta[image_id].height,
        )
        for image_id, objs in images.items()
    }
    return DatasetIndex(images=records, categories=categories)


def load_annotations(path: str | Path) -> DatasetIndex:
    return parse_annotations(Path(path).read_bytes())


# --- prediction log -------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Prediction:
    bbox: BBox
    category: CategoryId
    confidence: float
    probs: tuple[float, ...] | None = None


@dataclass(frozen=True, slots=True)
class EpochImageLog:
    epoch: int
    image_id: ImageId
    predictions: tuple[Prediction, ...]
    loss: float | None = None


@dataclass(slots=True)
class PredictionLog:
    """All log records, keyed by (epoch, image_id).

    Equality compares the keyed records, so two logs built from the same
    lines in different order compare equal.
    """

    records: dict[tuple[int, ImageId], EpochImageLog] = field(default_factory=dict)

    @property
    def max_epoch(self) -> int:
        return max((e for e, _ in self.records), default=0)

    def get(self, epoch: int, image_id: ImageId) -> EpochImageLog | None:
        return self.records.get((epoch, image_id))

    def image_ids(self) -> list[ImageId]:
        return sorted({i for _, i in self.records})

    def epochs_for(self, image_id: ImageId) -> list[int]:
        return sorted(e for e, i in self.records if i == image_id)

    def epoch_gaps(self) -> list[tuple[ImageId, int]]:
        """(image_id, epoch) pairs missing from a contiguous 1..max_epoch grid."""
        top = self.max_epoch
        gaps = [
            (image_id, epoch)
            for image_id in self.image_ids()
            for epoch in range(1, top + 1)
            if (epoch, image_id) not in self.records
        ]
        return gaps


class RawPrediction(msgspec.Struct):
    """Schema-validated log prediction, pre conversion to :class:`Prediction`."""

    bbox: tuple[float, float, float, float]
    category_id: int
    score: float
    probs: list[float] | None = None


class RawLogRecord(msgspec.Struct):
    epoch: int
    image_id: int
    predictions: list[RawPrediction]
    loss: float | None = None


_log_decoder = msgspec.json.Decoder(RawLogRecord)


def iter_raw_log(
    lines: Iterable[bytes], *, start_line: int = 1
) -> Iterator[tuple[int, RawLogRecord]]:
    """Validate a JSONL byte stream one line at a time.

    Yields ``(line_number, record)``.  Structural and range checks happen
    here; duplicate detection is left to the consumer so this stays O(1)
    in memory.
    """
    probs_len: int | None = None
    for lineno, line in enumerate(lines, start=start_line):
        stripped = line.strip()
        if not stripped:
            raise MalformedLine(f"line {lineno}: blank line")
        try:
            rec = _log_decoder.decode(stripped)
        except (msgspec.DecodeError, msgspec.ValidationError) as exc:
            raise MalformedLine(f"line {lineno}: {exc}") from None
        if rec.epoch < 1:
            raise MalformedLine(f"line {lineno}: epoch {rec.epoch} < 1")
        for k, pred in enumerate(rec.predictions):
            x1, y1, x2, y2 = pred.bbox
            if x2 < x1 or y2 < y1:
                raise MalformedLine(
                    f"line {lineno}: prediction {k} has inverted bbox"
                )
            if not 0.0 <= pred.score <= 1.0:
                raise OutOfRange(
                    f"line {lineno}: prediction {k} score {pred.score}"
                )
            if pred.probs is not None:
                if not pred.probs:
                    raise MalformedLine(f"line {lineno}: prediction {k} empty probs")
                if probs_len is None:
                    probs_len = len(pred.probs)
                elif len(pred.probs) != probs_len:
                    raise ProbLengthMismatch(
                        f"line {lineno}: prediction {k} has {len(pred.probs)} probs, "
                        f"log uses {probs_len}"
                    )
                total = 0.0
                for p in pred.probs:
                    if not 0.0 <= p <= 1.0:
                        raise OutOfRange(
                            f"line {lineno}: prediction {k} prob {p}"
                        )
                    total += p
                if abs(total - 1.0) > PROB_SUM_TOLERANCE:
                    raise MalformedLine(
                        f"line {lineno}: prediction {k} probs sum to {total}"
                    )
        yield lineno, rec


def _as_line_iter(source: LogSource) -> Iterable[bytes]:
    if isinstance(source, str):
        source = source.encode("utf-8")
    if isinstance(source, bytes):
        return io.BytesIO(source)
    return source


def _record_from_raw(rec: RawLogRecord) -> EpochImageLog:
    preds = tuple(
        Prediction(
            bbox=BBox(*p.bbox),
            category=p.category_id,
            confidence=p.score,
            probs=tuple(p.probs) if p.probs is not None else None,
        )
        for p in rec.predictions
    )
    return EpochImageLog(rec.epoch, rec.image_id, preds, rec.loss)


def iter_log_records(source: LogSource) -> Iterator[EpochImageLog]:
    """Stream validated records without holding the whole log in memory."""
    for _, rec in iter_raw_log(_as_line_iter(source)):
        yield _record_from_raw(rec)


def parse_logs(source: LogSource) -> PredictionLog:
    """Read a whole JSONL log into a :class:`PredictionLog`."""
    records: dict[tuple[int, ImageId], EpochImageLog] = {}
    for lineno, raw in iter_raw_log(_as_line_iter(source)):
        key = (raw.epoch, raw.image_id)
        if key in records:
            raise DuplicateRecord(
                f"line {lineno}: second record for epoch {raw.epoch}, "
                f"image {raw.image_id}"
            )
        records[key] = _record_from_raw(raw)
    return PredictionLog(records)


def load_logs(path: str | Path) -> PredictionLog:
    with open(path, "rb") as fh:
        return parse_logs(fh)


# --- prune manifest -------------------------------------------------------

@dataclass(frozen=True)
class PruneManifest:
    """Outcome of a selection run.  kept ids are normalized to ascending."""

    method: str
    aggregation: str
    prune_ratio: float
    seed: int
    kept_image_ids: tuple[ImageId, ...]
    unranked_image_ids: tuple[ImageId, ...] | None = None
    format_version: int = MANIFEST_VERSION

    def __post_init__(self) -> None:
        kept = tuple(sorted(self.kept_image_ids))
        if len(set(kept)) != len(kept):
            raise ValueError("kept_image_ids contains duplicates")
        object.__setattr__(self, "kept_image_ids", kept)
        if self.unranked_image_ids is not None:
            extra = tuple(sorted(self.unranked_image_ids))
            if len(set(extra)) != len(extra):
                raise ValueError("unranked_image_ids contains duplicates")
            object.__setattr__(self, "unranked_image_ids", extra)
        if not 0.0 <= self.prune_ratio < 1.0:
            raise ValueError(f"prune_ratio {self.prune_ratio} outside [0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed {self.seed} not a 64-bit unsigned value")

    @property
    def keep_count(self) -> int:
        return len(self.kept_image_ids)


def manifest_to_bytes(manifest: PruneManifest) -> bytes:
    """Canonical single-line JSON; equal manifests give equal bytes."""
    obj: dict = {
        "format_version": manifest.format_version,
        "method": manifest.method,
        "aggregation": manifest.aggregation,
        "prune_ratio": manifest.prune_ratio,
        "seed": manifest.seed,
        "kept_image_ids": list(manifest.kept_image_ids),
    }
    if manifest.unranked_image_ids is not None:
        obj["unranked_image_ids"] = list(manifest.unranked_image_ids)
    return json.dumps(obj, separators=(",", ":")).encode("utf-8") + b"\n"


_AGGREGATION_NAMES = {"mean", "sum", "max", "n/a"}


def _require_int(obj: dict, key: str) -> int:
    value = obj.get(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise MalformedDocument(f"manifest field {key!r} must be an integer")
    return value


def parse_manifest(data: bytes | str) -> PruneManifest:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedDocument("manifest must be a JSON object")
    version = _require_int(obj, "format_version")
    if version != MANIFEST_VERSION:
        raise UnsupportedVersion(f"format_version {version}, expected {MANIFEST_VERSION}")

    method = obj.get("method")
    if not isinstance(method, str) or not method:
        raise MalformedDocument("manifest field 'method' must be a non-empty string")
    aggregation = obj.get("aggregation")
    if aggregation not in _AGGREGATION_NAMES:
        raise MalformedDocument(
            f"manifest field 'aggregation' must be one of {sorted(_AGGREGATION_NAMES)}"
        )
    ratio = obj.get("prune_ratio")
    if isinstance(ratio, bool) or not isinstance(ratio, (int, float)):
        raise MalformedDocument("manifest field 'prune_ratio' must be a number")
    ratio = float(ratio)
    if not 0.0 <= ratio < 1.0 or math.isnan(ratio):
        raise MalformedDocument(f"prune_ratio {ratio} outside [0, 1)")
    seed = _require_int(obj, "seed")
    if not 0 <= seed < 2**64:
        raise MalformedDocument(f"seed {seed} not a 64-bit unsigned value")

    def id_list(key: str) -> tuple[int, ...]:
        raw = obj[key]
        if not isinstance(raw, list):
            raise MalformedDocument(f"manifest field {key!r} must be a list")
        for v in raw:
            if not isinstance(v, int) or isinstance(v, bool):
                raise MalformedDocument(f"manifest field {key!r} must hold integers")
        if any(b <= a for a, b in zip(raw, raw[1:])):
            raise UnsortedOrDuplicateIds(f"{key} must be strictly ascending")
        return tuple(raw)

    if "kept_image_ids" not in obj:
        raise MalformedDocument("manifest field 'kept_image_ids' missing")
    kept = id_list("kept_image_ids")
    unranked = id_list("unranked_image_ids") if "unranked_image_ids" in obj else None
    return PruneManifest(
        method=method,
        aggregation=aggregation,
        prune_ratio=ratio,
        seed=seed,
        kept_image_ids=kept,
        unranked_image_ids=unranked,
    )


def save_manifest(manifest: PruneManifest, path: str | Path) -> None:
    Path(path).write_bytes(manifest_to_bytes(manifest))


def load_manifest(path: str | Path) -> PruneManifest:
    return parse_manifest(Path(path).read_bytes())


# --- scores CSV -----------------------------------------------------------

def scores_to_csv(rows: Iterable[tuple[ImageId, float, int]]) -> str:
    """Render ``(image_id, score, rank)`` rows; floats keep full precision."""
    out = [SCORES_HEADER]
    for image_id, score, rank in rows:
        out.append(f"{image_id},{score!r},{rank}")
    return "\n".join(out) + "\n"


def parse_scores_csv(text: str | bytes) -> list[tuple[ImageId, float, int]]:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != SCORES_HEADER:
        raise MalformedDocument(f"scores file must start with '{SCORES_HEADER}'")
    rows: list[tuple[ImageId, float, int]] = []
    seen: set[ImageId] = set()
    for pos, line in enumerate(lines[1:], start=1):
        parts = line.split(",")
        if len(parts) != 3:
            raise MalformedDocument(f"row {pos}: expected 3 fields, got {len(parts)}")
        try:
            image_id = int(parts[0])
            score = float(parts[1])
            rank = int(parts[2])
        except ValueError:
            raise MalformedDocument(f"row {pos}: non-numeric field") from None
        if not math.isfinite(score):
            raise NonFiniteScore(f"row {pos}: score {parts[1]}")
        if rank != pos:
            raise MalformedDocument(f"row {pos}: rank {rank} breaks 1..N ordering")
        if image_id in seen:
            raise MalformedDocument(f"row {pos}: duplicate image id {image_id}")
        seen.add(image_id)
        rows.append((image_id, score, rank))
    return rows


def save_scores(rows: Iterable[tuple[ImageId, float, int]], path: str | Path) -> None:
    Path(path).write_bytes(scores_to_csv(rows).encode("utf-8"))


def load_scores(path: str | Path) -> list[tuple[ImageId, float, int]]:
    return parse_scores_csv(Path(path).read_bytes())
