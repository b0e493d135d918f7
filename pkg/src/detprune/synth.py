"""Synthetic detection corpora with known per-object statistics.

Each object gets a two-level IoU series: a high value on ``k`` epochs and a
low value on the rest, shuffled.  The emitted prediction box shares the
ground-truth box's left edge and full height, with its width scaled so the
realized IoU is exactly the targeted level (a zero target emits no
prediction, exercising the unmatched-epoch imputation).  Confidence follows
the same high/low epoch pattern with its own levels.

Recorded truth is computed from the very boxes and rounded confidences that
get serialized, through the same IoU arithmetic the pipeline uses, so a
correct implementation reproduces the truth to float precision after a full
file round trip.

Difficulty profiles:

* ``easy``: high IoU, small spread, always the right category.
* ``hard``: low IoU, sometimes undetected, always the wrong category.
* ``ambiguous``: wide IoU spread, category flips between epochs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import msgspec
import numpy as np

from .datamodel import (
    DatasetIndex,
    EpochImageLog,
    ImageRecord,
    Prediction,
    PredictionLog,
    GroundTruthObject,
)
from .errors import InfeasibleProfile
from .geometry import BBox, iou

_SPACING = 256
_MARGIN = 64
_BOX_MIN, _BOX_MAX = 40, 128

DIFFICULTIES = ("easy", "hard", "ambiguous")


@dataclass(frozen=True)
class DifficultyMix:
    """Fractions of each difficulty profile; must sum to 1."""

    easy: float = 0.4
    hard: float = 0.3
    ambiguous: float = 0.3

    def __post_init__(self) -> None:
        parts = (self.easy, self.hard, self.ambiguous)
        if any(f < 0 for f in parts):
            raise InfeasibleProfile(f"difficulty fractions must be non-negative: {parts}")
        if abs(math.fsum(parts) - 1.0) > 1e-9:
            raise InfeasibleProfile(f"difficulty fractions sum to {math.fsum(parts)}")


@dataclass(frozen=True)
class SynthConfig:
    num_images: int
    num_classes: int
    epochs: int
    objects_per_image: tuple[int, int] = (1, 8)
    mix: DifficultyMix = DifficultyMix()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_images < 1:
            raise ValueError("num_images must be at least 1")
        if self.num_classes < 1:
            raise ValueError("num_classes must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        lo, hi = self.objects_per_image
        if lo < 0 or hi < lo:
            raise ValueError(f"objects_per_image range {lo}..{hi} is invalid")


@dataclass(frozen=True)
class ObjectTruth:
    """Realized statistics for one generated object."""

    object_id: int
    image_id: int
    difficulty: str
    iou_mean: float
    iou_std: float
    conf_mean: float
    conf_std: float
    correct_pattern: tuple[bool, ...]

    @property
    def forgetting(self) -> int:
        return sum(
            1 for a, b in zip(self.correct_pattern, self.correct_pattern[1:])
            if a and not b
        )


@dataclass
class SynthTruth:
    objects: list[ObjectTruth]

    def by_object_id(self) -> dict[int, ObjectTruth]:
        return {t.object_id: t for t in self.objects}


TRUTH_HEADER = "object_id,iou_mean,iou_std,conf_mean,conf_std,forgetting"


def truth_to_csv(truth: SynthTruth) -> str:
    lines = [TRUTH_HEADER]
    for t in truth.objects:
        lines.append(
            f"{t.object_id},{t.iou_mean!r},{t.iou_std!r},"
            f"{t.conf_mean!r},{t.conf_std!r},{t.forgetting}"
        )
    return "\n".join(lines) + "\n"


def parse_truth_csv(text: str) -> dict[int, tuple[float, float, float, float, int]]:
    """object_id -> (iou_mean, iou_std, conf_mean, conf_std, forgetting)."""
    lines = text.splitlines()
    if not lines or lines[0] != TRUTH_HEADER:
        raise ValueError(f"truth file must start with '{TRUTH_HEADER}'")
    out: dict[int, tuple[float, float, float, float, int]] = {}
    for line in lines[1:]:
        oid, im, isd, cm, csd, forg = line.split(",")
        out[int(oid)] = (float(im), float(isd), float(cm), float(csd), int(forg))
    return out


# --- exact series construction --------------------------------------------

def _apply_pattern(
    hi: float, lo: float, k: int, length: int, rng: np.random.Generator
) -> np.ndarray:
    values = np.full(length, lo, dtype=np.float64)
    values[rng.permutation(length)[:k]] = hi
    return values


def two_point_series(
    mean: float, std: float, length: int, rng: np.random.Generator
) -> np.ndarray:
    """A [0, 1]-valued series with exactly this population mean and std.

    Uses two levels spread over a shuffled epoch split.  Raises
    InfeasibleProfile when no such series exists: the pair must satisfy
    ``std**2 <= mean * (1 - mean)``, and the split must land on a whole
    number of epochs.
    """
    if not 0.0 <= mean <= 1.0:
        raise InfeasibleProfile(f"series mean {mean} outside [0, 1]")
    if std < 0.0:
        raise InfeasibleProfile(f"series std {std} is negative")
    if std == 0.0:
        return np.full(length, mean, dtype=np.float64)
    if length < 2:
        raise InfeasibleProfile("a spread needs at least two epochs")
    if std * std > mean * (1.0 - mean) + 1e-15:
        raise InfeasibleProfile(
            f"std {std} exceeds the reachable bound sqrt(mean*(1-mean)) "
            f"= {math.sqrt(mean * (1.0 - mean)):.6f} for mean {mean}"
        )
    var = std * std
    p_min = var / (var + (1.0 - mean) ** 2)
    p_max = mean * mean / (var + mean * mean)
    k_lo = max(1, math.ceil(p_min * length - 1e-9))
    k_hi = min(length - 1, math.floor(p_max * length + 1e-9))
    if k_lo > k_hi:
        raise InfeasibleProfile(
            f"no whole-epoch split over {length} epochs realizes "
            f"mean {mean} with std {std}"
        )
    k = int(rng.integers(k_lo, k_hi + 1))
    p = k / length
    hi = min(mean + std * math.sqrt((1.0 - p) / p), 1.0)
    lo = max(mean - std * math.sqrt(p / (1.0 - p)), 0.0)
    return _apply_pattern(hi, lo, k, length, rng)


# --- generation core ------------------------------------------------------

def _draw_levels(
    difficulty: str, rng: np.random.Generator
) -> tuple[float, float, float, float]:
    """(iou_hi, iou_lo, conf_hi, conf_lo) for one object."""
    u = rng.uniform
    if difficulty == "easy":
        iou_hi = u(0.80, 0.95)
        iou_lo = iou_hi - u(0.02, 0.08)
        conf_hi = u(0.85, 0.99)
        conf_lo = conf_hi - u(0.02, 0.10)
    elif difficulty == "hard":
        iou_hi = u(0.12, 0.35)
        iou_lo = 0.0 if rng.random() < 0.3 else u(0.01, 0.08)
        conf_hi = u(0.10, 0.40)
        conf_lo = u(0.02, 0.10)
    else:
        iou_hi = u(0.60, 0.90)
        iou_lo = u(0.10, 0.35)
        conf_hi = u(0.50, 0.90)
        conf_lo = u(0.10, 0.40)
    if iou_lo == 0.0:
        conf_lo = 0.0
    return iou_hi, iou_lo, conf_hi, conf_lo


def _draw_correct(
    difficulty: str, epochs: int, num_classes: int, rng: np.random.Generator
) -> np.ndarray:
    if num_classes < 2:
        # a wrong category does not exist, so every match is correct
        return np.ones(epochs, dtype=bool)
    if difficulty == "easy":
        return np.ones(epochs, dtype=bool)
    if difficulty == "hard":
        return np.zeros(epochs, dtype=bool)
    return rng.random(epochs) < 0.5


class _GeneratedImage:
    __slots__ = ("record", "epoch_predictions", "truths")

    def __init__(
        self,
        record: ImageRecord,
        epoch_predictions: list[list[tuple[float, float, float, float, int, float]]],
        truths: list[ObjectTruth],
    ) -> None:
        self.record = record
        self.epoch_predictions = epoch_predictions
        self.truths = truths


def _generate_images(config: SynthConfig) -> Iterator[_GeneratedImage]:
    rng = np.random.default_rng(config.seed)
    epochs = config.epochs
    classes = config.num_classes
    mix = config.mix
    cut_easy = mix.easy
    cut_hard = mix.easy + mix.hard
    lo_n, hi_n = config.objects_per_image
    width = _MARGIN * 2 + _SPACING * max(hi_n, 1)
    height = _MARGIN * 2 + _BOX_MAX * 2
    next_object_id = 1

    for image_id in range(1, config.num_images + 1):
        n_objects = int(rng.integers(lo_n, hi_n + 1))
        objects: list[GroundTruthObject] = []
        epoch_preds: list[list[tuple[float, float, float, float, int, float]]] = [
            [] for _ in range(epochs)
        ]
        truths: list[ObjectTruth] = []

        for slot in range(n_objects):
            object_id = next_object_id
            next_object_id += 1
            category = int(rng.integers(1, classes + 1))
            pick = rng.random()
            difficulty = (
                "easy" if pick < cut_easy else "hard" if pick < cut_hard else "ambiguous"
            )
            w = int(rng.integers(_BOX_MIN, _BOX_MAX + 1))
            h = int(rng.integers(_BOX_MIN, _BOX_MAX + 1))
            x = _MARGIN + slot * _SPACING
            y = _MARGIN
            gt_box = BBox(x, y, x + w, y + h)
            objects.append(GroundTruthObject(object_id, gt_box, category))

            iou_hi, iou_lo, conf_hi, conf_lo = _draw_levels(difficulty, rng)
            if epochs == 1:
                k = 1
            else:
                k = int(rng.integers(1, epochs))
            pattern = np.zeros(epochs, dtype=bool)
            pattern[rng.permutation(epochs)[:k]] = True
            targets = np.where(pattern, iou_hi, iou_lo)
            confs = np.round(np.where(pattern, conf_hi, conf_lo), 6)
            correct = _draw_correct(difficulty, epochs, classes, rng)

            realized_iou = np.zeros(epochs)
            realized_conf = np.zeros(epochs)
            realized_correct = np.zeros(epochs, dtype=bool)
            for t in range(epochs):
                target = float(targets[t])
                if target <= 0.0:
                    continue
                u_width = round(target * w, 4)
                pred_box = (float(x), float(y), x + u_width, float(y + h))
                overlap = iou(gt_box, BBox(*pred_box))
                if overlap <= 0.0:
                    continue
                is_correct = bool(correct[t])
                if is_correct:
                    pred_cat = category
                else:
                    offset = int(rng.integers(1, classes))
                    pred_cat = 1 + (category - 1 + offset) % classes
                conf_t = float(confs[t])
                epoch_preds[t].append((*pred_box, pred_cat, conf_t))
                realized_iou[t] = overlap
                realized_conf[t] = conf_t
                realized_correct[t] = is_correct

            truths.append(
                ObjectTruth(
                    object_id=object_id,
                    image_id=image_id,
                    difficulty=difficulty,
                    iou_mean=float(np.mean(realized_iou)),
                    iou_std=float(np.std(realized_iou)),
                    conf_mean=float(np.mean(realized_conf)),
                    conf_std=float(np.std(realized_conf)),
                    correct_pattern=tuple(bool(v) for v in realized_correct),
                )
            )

        record = ImageRecord(
            image_id=image_id,
            file_name=f"synthetic/img_{image_id:06d}.jpg",
            objects=tuple(objects),
            width=width,
            height=height,
        )
        yield _GeneratedImage(record, epoch_preds, truths)


def _annotation_dicts(image: _GeneratedImage) -> Iterator[dict]:
    for obj in image.record.objects:
        b = obj.bbox
        w = b.x_max - b.x_min
        h = b.y_max - b.y_min
        yield {
            "id": obj.object_id,
            "image_id": image.record.image_id,
            "category_id": obj.category,
            "bbox": [b.x_min, b.y_min, w, h],
            "area": w * h,
            "iscrowd": 0,
        }


def _category_dicts(config: SynthConfig) -> list[dict]:
    return [
        {"id": cid, "name": f"class_{cid:02d}"}
        for cid in range(1, config.num_classes + 1)
    ]


def generate(config: SynthConfig) -> tuple[DatasetIndex, PredictionLog, SynthTruth]:
    """Build the corpus in memory.  Suited to datasets that fit in RAM."""
    images: dict[int, ImageRecord] = {}
    records: dict[tuple[int, int], EpochImageLog] = {}
    truths: list[ObjectTruth] = []
    for gen in _generate_images(config):
        images[gen.record.image_id] = gen.record
        truths.extend(gen.truths)
        for t, preds in enumerate(gen.epoch_predictions, start=1):
            records[(t, gen.record.image_id)] = EpochImageLog(
                epoch=t,
                image_id=gen.record.image_id,
                predictions=tuple(
                    Prediction(BBox(p[0], p[1], p[2], p[3]), p[4], p[5])
                    for p in preds
                ),
            )
    categories = {c["id"]: c["name"] for c in _category_dicts(config)}
    dataset = DatasetIndex(images=images, categories=categories)
    return dataset, PredictionLog(records), SynthTruth(truths)


def write_corpus(config: SynthConfig, out_dir: str | Path) -> SynthTruth:
    """Write annotations.json, predictions.jsonl, and truth.csv.

    Streams image by image, so corpus size is bounded by disk, not memory.
    Returns the truth table (also saved as CSV).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    encoder = msgspec.json.Encoder()
    image_dicts: list[dict] = []
    annotation_dicts: list[dict] = []
    truths: list[ObjectTruth] = []

    with open(out / "predictions.jsonl", "wb") as log_fh:
        for gen in _generate_images(config):
            rec = gen.record
            image_dicts.append(
                {
                    "id": rec.image_id,
                    "file_name": rec.file_name,
                    "width": rec.width,
                    "height": rec.height,
                }
            )
            annotation_dicts.extend(_annotation_dicts(gen))
            truths.extend(gen.truths)
            for t, preds in enumerate(gen.epoch_predictions, start=1):
                line = {
                    "epoch": t,
                    "image_id": rec.image_id,
                    "predictions": [
                        {
                            "bbox": [p[0], p[1], p[2], p[3]],
                            "category_id": p[4],
                            "score": p[5],
                        }
                        for p in preds
                    ],
                }
                log_fh.write(encoder.encode(line))
                log_fh.write(b"\n")

    doc = {
        "images": image_dicts,
        "annotations": annotation_dicts,
        "categories": _category_dicts(config),
    }
    (out / "annotations.json").write_bytes(encoder.encode(doc))
    truth = SynthTruth(truths)
    (out / "truth.csv").write_text(truth_to_csv(truth), encoding="utf-8")
    return truth
