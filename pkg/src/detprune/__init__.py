"""Dataset pruning for object detection from per-epoch prediction logs.

Workflow: parse annotations and a training-time prediction log, match
predictions to ground-truth objects per epoch, score each object or image,
aggregate and rank, then select the kept subset and record it as a
manifest.  The ``synth`` module generates corpora with known statistics
for validation, and ``analysis`` quantifies what a selection changed.
"""

__version__ = "0.1.0"

from .analysis import (
    ClassDistribution,
    Schedule,
    class_distribution,
    js_divergence,
    pearson_r,
    sample_iou,
    scale_schedule,
)
from .datamodel import (
    DatasetIndex,
    EpochImageLog,
    GroundTruthObject,
    ImageRecord,
    Prediction,
    PredictionLog,
    PruneManifest,
    iter_log_records,
    load_annotations,
    load_logs,
    load_manifest,
    load_scores,
    manifest_to_bytes,
    parse_annotations,
    parse_logs,
    parse_manifest,
    parse_scores_csv,
    save_manifest,
    save_scores,
    scores_to_csv,
)
from .geometry import BBox, iou
from .matching import (
    Assignment,
    MatchRecord,
    MatchedSeries,
    SeriesCollection,
    build_series,
    cipa_match,
)
from .ranking import (
    Aggregation,
    RankedImage,
    RankedList,
    aggregate,
    aggregate_scores,
    keep_count,
    rank,
    select,
)
from .scoring import (
    Direction,
    Level,
    METHOD_NAMES,
    ObjectScore,
    ScoreMethod,
    aum,
    correctness,
    el2n,
    entropy,
    forgetting,
    hash_unit_score,
    image_level_score,
    mean_value,
    resolve_method,
    score_objects,
    vps,
)
from .synth import (
    DifficultyMix,
    ObjectTruth,
    SynthConfig,
    SynthTruth,
    generate,
    two_point_series,
    write_corpus,
)

__all__ = [name for name in dir() if not name.startswith("_")]
