"""Shared builders for datasets, logs, and log lines."""

from __future__ import annotations

import json

import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # acceptance tests report one pass/fail line per criterion (visible
    # with -s; failures also show through pytest's own summary)
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.name.startswith("test_criterion_"):
        number = int(item.name.split("_")[2])
        if report.failed:
            print(f"criterion {number}: FAIL")

from detprune.datamodel import (
    DatasetIndex,
    GroundTruthObject,
    ImageRecord,
    Prediction,
)
from detprune.geometry import BBox


def gt(object_id: int, x1: float, y1: float, x2: float, y2: float, cat: int) -> GroundTruthObject:
    return GroundTruthObject(object_id, BBox(x1, y1, x2, y2), cat)


def pred(
    x1: float, y1: float, x2: float, y2: float,
    cat: int, conf: float = 0.9, probs: tuple[float, ...] | None = None,
) -> Prediction:
    return Prediction(BBox(x1, y1, x2, y2), cat, conf, probs)


def dataset_of(
    objects_by_image: dict[int, list[GroundTruthObject]],
    categories: dict[int, str],
) -> DatasetIndex:
    images = {
        image_id: ImageRecord(
            image_id=image_id,
            file_name=f"img_{image_id}.jpg",
            objects=tuple(objs),
        )
        for image_id, objs in objects_by_image.items()
    }
    return DatasetIndex(images=images, categories=categories)


def log_line(
    epoch: int,
    image_id: int,
    predictions: list[dict],
    loss: float | None = None,
    **extra,
) -> bytes:
    obj: dict = {"epoch": epoch, "image_id": image_id, "predictions": predictions}
    if loss is not None:
        obj["loss"] = loss
    obj.update(extra)
    return json.dumps(obj).encode()


def pred_dict(
    bbox: list[float], cat: int, score: float = 0.9,
    probs: list[float] | None = None,
) -> dict:
    obj: dict = {"bbox": bbox, "category_id": cat, "score": score}
    if probs is not None:
        obj["probs"] = probs
    return obj


def coco_doc(
    images: list[dict], annotations: list[dict], categories: list[dict]
) -> bytes:
    return json.dumps(
        {"images": images, "annotations": annotations, "categories": categories}
    ).encode()


@pytest.fixture
def two_image_dataset() -> DatasetIndex:
    return dataset_of(
        {
            1: [gt(1, 0, 0, 10, 10, 1), gt(2, 20, 0, 30, 10, 2)],
            2: [gt(3, 0, 0, 10, 10, 2)],
        },
        {1: "cat", 2: "dog"},
    )
