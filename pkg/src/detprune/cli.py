"""Command-line interface.

Subcommands: ``score`` (rank images from a prediction log), ``select``
(turn a scores file into a prune manifest), ``match`` (per-epoch match
dump), ``analyze`` (jsd, overlap, corr, schedule), ``synth`` (generate a
corpus).

Conventions: data goes to stdout or ``--out``; diagnostics go to stderr as
``ERROR <code>: <detail>``.  Exit status is 0 on success, 2 for input
errors, 3 for configuration errors.  Commands are deterministic: the same
inputs and seed give byte-identical outputs.

Profiles name a default epoch window (built in: ``voc`` = 17 epochs,
``coco`` = 12).  A JSON settings file named by ``--config`` or the
``DETPRUNE_CONFIG`` environment variable may add profiles::

    {"profiles": {"mine": {"window": 20}}, "default_profile": "mine"}
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    Schedule,
    class_distribution,
    js_divergence,
    pearson_r,
    sample_iou,
    scale_schedule,
)
from .datamodel import (
    DatasetIndex,
    load_annotations,
    load_logs,
    load_manifest,
    load_scores,
    manifest_to_bytes,
    scores_to_csv,
)
from .errors import (
    AggregationMismatch,
    DetpruneError,
    MalformedConfig,
    MalformedDocument,
    MissingInput,
    UnknownImageId,
    UnknownProfile,
)
from .matching import build_series, match_table
from .ranking import (
    ranked_from_rows,
    aggregate_scores,
    rank,
    resolve_aggregation,
    select,
)
from .scoring import (
    Direction,
    Level,
    METHOD_NAMES,
    image_level_score,
    resolve_method,
    score_objects,
)
from .synth import DifficultyMix, SynthConfig, write_corpus

BUILTIN_PROFILES: dict[str, dict] = {
    "voc": {"window": 17},
    "coco": {"window": 12},
}
DEFAULT_PROFILE = "voc"
CONFIG_ENV = "DETPRUNE_CONFIG"


# --- argument plumbing ----------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # usage problems are configuration errors: report on stderr, exit 3
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"ERROR UsageError: {message}", file=sys.stderr)
        raise SystemExit(3)


def _window_arg(text: str) -> tuple[int, int]:
    try:
        lo_s, hi_s = text.split(":")
        lo, hi = int(lo_s), int(hi_s)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"window must look like a:b, got {text!r}"
        ) from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"window {text!r} is not a valid epoch range")
    return lo, hi


def _range_arg(text: str) -> tuple[int, int]:
    try:
        lo_s, hi_s = text.split(":")
        lo, hi = int(lo_s), int(hi_s)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"range must look like min:max, got {text!r}"
        ) from None
    if lo < 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"range {text!r} is invalid")
    return lo, hi


def _mix_arg(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"mix must be three numbers, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("mix needs exactly three fractions")
    return parts


def _steps_arg(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"steps must be integers, got {text!r}") from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _seed_arg(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


# --- config and window resolution -----------------------------------------

def _load_profiles(config_path: str | None) -> tuple[dict[str, dict], str]:
    profiles = {name: dict(body) for name, body in BUILTIN_PROFILES.items()}
    default = DEFAULT_PROFILE
    path = config_path or os.environ.get(CONFIG_ENV)
    if not path:
        return profiles, default
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise MalformedConfig(f"cannot read settings file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise MalformedConfig(f"settings file {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise MalformedConfig(f"settings file {path} must hold a JSON object")
    extra = obj.get("profiles", {})
    if not isinstance(extra, dict):
        raise MalformedConfig("settings key 'profiles' must be an object")
    for name, body in extra.items():
        if (
            not isinstance(body, dict)
            or not isinstance(body.get("window"), int)
            or body["window"] < 1
        ):
            raise MalformedConfig(
                f"profile {name!r} must be an object with a positive integer 'window'"
            )
        profiles[name] = dict(body)
    default = obj.get("default_profile", default)
    if not isinstance(default, str) or default not in profiles:
        raise MalformedConfig(f"default_profile {default!r} is not a known profile")
    return profiles, default


def _profile_window(args) -> tuple[int, int]:
    profiles, default = _load_profiles(args.config)
    name = args.profile or default
    if name not in profiles:
        raise UnknownProfile(f"{name!r}; known: {', '.join(sorted(profiles))}")
    return (1, profiles[name]["window"])


def _check_subset(dataset: DatasetIndex, image_ids) -> None:
    for image_id in image_ids:
        if image_id not in dataset.images:
            raise UnknownImageId(f"image {image_id} not in dataset")


def _write_text(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_bytes(text.encode("utf-8"))


# --- subcommands ----------------------------------------------------------

def _cmd_score(args) -> int:
    method = resolve_method(args.method, direction=args.direction)
    window = args.window or method.window
    if window is None and method.level is Level.OBJECT:
        window = _profile_window(args)
    method = resolve_method(args.method, direction=args.direction, window=window)
    dataset = load_annotations(args.annotations)

    if method.level is Level.OBJECT:
        aggregation = resolve_aggregation(args.agg or "max")
        if args.log is None:
            raise MissingInput(f"{method.name} needs --log")
        with open(args.log, "rb") as fh:
            series = build_series(dataset, fh, method.window[1])
        object_scores = score_objects(method, series)
        image_scores = aggregate_scores(aggregation, object_scores)
    else:
        if args.agg is not None:
            raise AggregationMismatch(
                f"{method.name} is image-level; --agg does not apply"
            )
        log = None
        if method.name == "loss":
            if args.log is None:
                raise MissingInput("loss needs --log")
            log = load_logs(args.log)
        image_scores = image_level_score(method, dataset, log, args.seed)

    ranked = rank(image_scores, method.direction, args.seed)
    _write_text(scores_to_csv(ranked.rows()), args.out)
    return 0


def _cmd_select(args) -> int:
    method = resolve_method(args.method)
    if method.level is Level.OBJECT:
        aggregation = resolve_aggregation(args.agg or "max").value
    else:
        if args.agg is not None:
            raise AggregationMismatch(
                f"{method.name} is image-level; --agg does not apply"
            )
        aggregation = "n/a"

    rows = load_scores(args.scores)
    unranked = None
    if args.annotations is not None:
        dataset = load_annotations(args.annotations)
        _check_subset(dataset, (r[0] for r in rows))
        if args.include_unranked:
            unranked = sorted(dataset.unannotated_ids())
    elif args.include_unranked:
        raise MissingInput("--include-unranked needs --annotations")

    ranked = ranked_from_rows(rows, method.direction, args.seed)
    manifest = select(
        ranked,
        args.ratio,
        method.name,
        aggregation,
        unranked_image_ids=unranked,
    )
    Path(args.out).write_bytes(manifest_to_bytes(manifest))
    print(manifest.keep_count)
    return 0


def _cmd_match(args) -> int:
    window = args.window or _profile_window(args)
    dataset = load_annotations(args.annotations)
    with open(args.log, "rb") as fh:
        series = build_series(dataset, fh, window[1])
    buf = io.StringIO()
    buf.write("image_id,object_id,epoch,matched,iou,confidence,pred_category\n")
    for image_id, object_id, epoch, matched, overlap, conf, cat in match_table(series):
        flag = "true" if matched else "false"
        cat_text = "" if cat is None else str(cat)
        buf.write(
            f"{image_id},{object_id},{epoch},{flag},{overlap!r},{conf!r},{cat_text}\n"
        )
    _write_text(buf.getvalue(), args.out)
    return 0


def _cmd_analyze_jsd(args) -> int:
    dataset = load_annotations(args.annotations)
    full = class_distribution(dataset, dataset.images)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["manifest", "jsd_bits"])
    for path in args.manifests:
        manifest = load_manifest(path)
        _check_subset(dataset, manifest.kept_image_ids)
        kept = class_distribution(dataset, manifest.kept_image_ids)
        writer.writerow([path, repr(js_divergence(full, kept))])
    _write_text(buf.getvalue(), args.out)
    return 0


def _cmd_analyze_overlap(args) -> int:
    kept_sets = [set(load_manifest(p).kept_image_ids) for p in args.manifests]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["manifest", *args.manifests])
    for path, kept in zip(args.manifests, kept_sets):
        row = [path]
        for other in kept_sets:
            row.append(repr(sample_iou(kept, other)))
        writer.writerow(row)
    _write_text(buf.getvalue(), args.out)
    return 0


def _read_metrics(path: str) -> dict[str, float]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != "manifest,value":
        raise MalformedDocument("metrics file must start with 'manifest,value'")
    out: dict[str, float] = {}
    for pos, line in enumerate(lines[1:], start=1):
        parts = line.split(",")
        if len(parts) != 2:
            raise MalformedDocument(f"metrics row {pos}: expected 2 fields")
        try:
            out[parts[0]] = float(parts[1])
        except ValueError:
            raise MalformedDocument(f"metrics row {pos}: bad value {parts[1]!r}") from None
    return out


def _cmd_analyze_corr(args) -> int:
    dataset = load_annotations(args.annotations)
    metrics = _read_metrics(args.metrics)
    full = class_distribution(dataset, dataset.images)
    xs: list[float] = []
    ys: list[float] = []
    for path in args.manifests:
        label = Path(path).stem
        if label not in metrics:
            raise MalformedDocument(f"metrics file has no row for {label!r}")
        manifest = load_manifest(path)
        _check_subset(dataset, manifest.kept_image_ids)
        if args.stat == "annotations":
            value = float(
                sum(len(dataset.images[i].objects) for i in manifest.kept_image_ids)
            )
        else:
            kept = class_distribution(dataset, manifest.kept_image_ids)
            value = js_divergence(full, kept)
        xs.append(value)
        ys.append(metrics[label])
    print(repr(pearson_r(xs, ys)))
    return 0


def _cmd_analyze_schedule(args) -> int:
    scaled = scale_schedule(Schedule(args.max_iter, args.steps), args.ratio)
    print(" ".join(str(v) for v in (scaled.max_iter, *scaled.steps)))
    return 0


def _cmd_synth(args) -> int:
    config = SynthConfig(
        num_images=args.images,
        num_classes=args.classes,
        epochs=args.epochs,
        objects_per_image=args.objects,
        mix=DifficultyMix(*args.mix),
        seed=args.seed,
    )
    write_corpus(config, args.out_dir)
    for name in ("annotations.json", "predictions.jsonl", "truth.csv"):
        print(f"wrote {Path(args.out_dir) / name}", file=sys.stderr)
    return 0


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="detprune", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"detprune {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_io(p: argparse.ArgumentParser, log_required: bool = True) -> None:
        p.add_argument("--annotations", required=True, help="COCO-style JSON file")
        p.add_argument("--log", required=log_required, help="prediction JSONL file")
        p.add_argument("--window", type=_window_arg, default=None, metavar="A:B")
        p.add_argument("--profile", default=None, help="named epoch-window profile")
        p.add_argument("--config", default=None, help="JSON settings file")

    p_score = sub.add_parser("score", help="score and rank images")
    common_io(p_score, log_required=False)
    p_score.add_argument("--method", required=True, metavar="NAME",
                         help=f"one of: {', '.join(METHOD_NAMES)}")
    p_score.add_argument("--agg", choices=["mean", "sum", "max"], default=None)
    p_score.add_argument("--direction", choices=["high", "low"], default=None)
    p_score.add_argument("--seed", type=_seed_arg, required=True)
    p_score.add_argument("--out", default=None, help="scores CSV (default stdout)")
    p_score.set_defaults(func=_cmd_score)

    p_select = sub.add_parser("select", help="turn a scores file into a manifest")
    p_select.add_argument("--scores", required=True, help="CSV from the score command")
    p_select.add_argument("--ratio", type=float, required=True,
                          help="fraction of images to prune, in [0, 1)")
    p_select.add_argument("--method", required=True, metavar="NAME")
    p_select.add_argument("--agg", choices=["mean", "sum", "max"], default=None)
    p_select.add_argument("--seed", type=_seed_arg, required=True)
    p_select.add_argument("--annotations", default=None,
                          help="validate ids and find unannotated images")
    p_select.add_argument("--include-unranked", action="store_true",
                          help="record unannotated image ids in the manifest")
    p_select.add_argument("--out", required=True, help="manifest JSON path")
    p_select.set_defaults(func=_cmd_select)

    p_match = sub.add_parser("match", help="dump per-epoch match results")
    common_io(p_match)
    p_match.add_argument("--out", default=None, help="CSV (default stdout)")
    p_match.set_defaults(func=_cmd_match)

    p_analyze = sub.add_parser("analyze", help="inspect selections")
    asub = p_analyze.add_subparsers(dest="analysis", required=True)

    p_jsd = asub.add_parser("jsd", help="class-balance shift of manifests")
    p_jsd.add_argument("--annotations", required=True)
    p_jsd.add_argument("manifests", nargs="+")
    p_jsd.add_argument("--out", default=None)
    p_jsd.set_defaults(func=_cmd_analyze_jsd)

    p_overlap = asub.add_parser("overlap", help="pairwise kept-set overlap")
    p_overlap.add_argument("manifests", nargs="+")
    p_overlap.add_argument("--out", default=None)
    p_overlap.set_defaults(func=_cmd_analyze_overlap)

    p_corr = asub.add_parser("corr", help="correlate a subset statistic with metrics")
    p_corr.add_argument("--annotations", required=True)
    p_corr.add_argument("--metrics", required=True,
                        help="CSV 'manifest,value' keyed by manifest file stem")
    p_corr.add_argument("--stat", choices=["annotations", "jsd"], required=True)
    p_corr.add_argument("manifests", nargs="+")
    p_corr.set_defaults(func=_cmd_analyze_corr)

    p_sched = asub.add_parser("schedule", help="scale a training schedule")
    p_sched.add_argument("--max-iter", type=_positive_int, required=True)
    p_sched.add_argument("--steps", type=_steps_arg, default=())
    p_sched.add_argument("--ratio", type=float, required=True)
    p_sched.set_defaults(func=_cmd_analyze_schedule)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--images", type=_positive_int, required=True)
    p_synth.add_argument("--classes", type=_positive_int, required=True)
    p_synth.add_argument("--epochs", type=_positive_int, required=True)
    p_synth.add_argument("--objects", type=_range_arg, default=(1, 8), metavar="MIN:MAX")
    p_synth.add_argument("--mix", type=_mix_arg, default=(0.4, 0.3, 0.3),
                         help="easy,hard,ambiguous fractions")
    p_synth.add_argument("--seed", type=_seed_arg, default=0)
    p_synth.add_argument("--out-dir", required=True)
    p_synth.set_defaults(func=_cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DetpruneError as exc:
        detail = " ".join(str(exc).split())
        print(f"ERROR {exc.code}: {detail}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"ERROR IOError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
