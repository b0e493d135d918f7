import math

import numpy as np
import pytest

from detprune.datamodel import load_annotations, load_logs
from detprune.errors import InfeasibleProfile
from detprune.matching import build_series
from detprune.scoring import resolve_method, score_objects
from detprune.synth import (
    DifficultyMix,
    SynthConfig,
    generate,
    parse_truth_csv,
    truth_to_csv,
    two_point_series,
    write_corpus,
)

from oracles import two_pass_std


class TestTwoPointSeries:
    def test_boundary_half_half(self):
        rng = np.random.default_rng(0)
        series = two_point_series(0.5, 0.5, 4, rng)
        assert sorted(series.tolist()) == [0.0, 0.0, 1.0, 1.0]

    def test_zero_std_is_constant(self):
        rng = np.random.default_rng(0)
        series = two_point_series(0.3, 0.0, 5, rng)
        assert series.tolist() == [0.3] * 5

    def test_realizes_requested_moments(self):
        rng = np.random.default_rng(1234)
        produced = 0
        while produced < 300:
            mean = float(rng.uniform(0.05, 0.95))
            bound = math.sqrt(mean * (1.0 - mean))
            std = float(rng.uniform(0.0, bound * 0.95))
            length = int(rng.integers(2, 24))
            try:
                series = two_point_series(mean, std, length, rng)
            except InfeasibleProfile:
                continue
            produced += 1
            assert np.all((series >= 0.0) & (series <= 1.0))
            assert len(set(series.tolist())) <= 2
            assert np.mean(series) == pytest.approx(mean, abs=1e-12)
            assert two_pass_std(series.tolist()) == pytest.approx(std, abs=1e-12)

    def test_same_rng_state_reproduces(self):
        a = two_point_series(0.4, 0.2, 10, np.random.default_rng(9))
        b = two_point_series(0.4, 0.2, 10, np.random.default_rng(9))
        assert a.tolist() == b.tolist()

    @pytest.mark.parametrize(
        "mean,std",
        [
            (0.5, 0.6),  # above the sqrt(mean*(1-mean)) ceiling
            (0.9, 0.4),
            (1.2, 0.1),
            (0.5, -0.1),
        ],
    )
    def test_infeasible_pairs(self, mean, std):
        with pytest.raises(InfeasibleProfile):
            two_point_series(mean, std, 8, np.random.default_rng(0))

    def test_no_whole_epoch_split(self):
        # feasible in the reals, but the epoch split cannot land on an integer
        with pytest.raises(InfeasibleProfile, match="whole-epoch"):
            two_point_series(0.9, 0.29, 2, np.random.default_rng(0))

    def test_spread_needs_two_epochs(self):
        with pytest.raises(InfeasibleProfile):
            two_point_series(0.5, 0.1, 1, np.random.default_rng(0))


class TestConfigs:
    def test_mix_must_sum_to_one(self):
        with pytest.raises(InfeasibleProfile):
            DifficultyMix(0.5, 0.5, 0.5)
        with pytest.raises(InfeasibleProfile):
            DifficultyMix(-0.1, 0.6, 0.5)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"num_images": 0},
            {"num_classes": 0},
            {"epochs": 0},
            {"objects_per_image": (3, 1)},
            {"objects_per_image": (-1, 2)},
        ],
    )
    def test_config_validation(self, kwargs):
        base = dict(num_images=2, num_classes=2, epochs=2)
        with pytest.raises(ValueError):
            SynthConfig(**{**base, **kwargs})


SMALL = SynthConfig(num_images=12, num_classes=3, epochs=6, seed=7)


class TestGenerate:
    def test_shape(self):
        dataset, log, truth = generate(SMALL)
        assert dataset.num_images == 12
        assert dataset.categories == {1: "class_01", 2: "class_02", 3: "class_03"}
        assert log.max_epoch == 6
        for image_id in dataset.images:
            assert log.epochs_for(image_id) == list(range(1, 7))
        assert [t.object_id for t in truth.objects] == list(
            range(1, len(truth.objects) + 1)
        )
        per_image = {r.image_id: len(r.objects) for r in dataset.images.values()}
        assert all(1 <= n <= 8 for n in per_image.values())

    def test_truth_matches_pipeline_statistics(self):
        dataset, log, truth = generate(SMALL)
        series = build_series(dataset, log, SMALL.epochs)
        expected = truth.by_object_id()
        checks = {
            "vps_iou": lambda t: t.iou_std,
            "iou_mean": lambda t: t.iou_mean,
            "vps_conf": lambda t: t.conf_std,
            "conf_mean": lambda t: t.conf_mean,
            "forgetting": lambda t: float(t.forgetting),
        }
        for name, pick in checks.items():
            scores = score_objects(resolve_method(name), series)
            for s in scores:
                assert s.value == pick(expected[s.object_id]), (name, s.object_id)

    def test_correct_pattern_matches_pipeline(self):
        dataset, log, truth = generate(SMALL)
        series = build_series(dataset, log, SMALL.epochs)
        expected = truth.by_object_id()
        for matched in series:
            pattern = tuple(bool(v) for v in matched.correct_series)
            assert pattern == expected[matched.object_id].correct_pattern

    def test_difficulties_separate_iou_spread(self):
        config = SynthConfig(num_images=60, num_classes=4, epochs=8, seed=3)
        _, _, truth = generate(config)
        by_difficulty: dict[str, list[float]] = {}
        for t in truth.objects:
            by_difficulty.setdefault(t.difficulty, []).append(t.iou_mean)
        assert set(by_difficulty) == {"easy", "hard", "ambiguous"}
        assert np.mean(by_difficulty["easy"]) > np.mean(by_difficulty["ambiguous"])
        assert np.mean(by_difficulty["ambiguous"]) > np.mean(by_difficulty["hard"])

    def test_single_epoch(self):
        dataset, log, truth = generate(
            SynthConfig(num_images=4, num_classes=2, epochs=1, seed=1)
        )
        assert log.max_epoch == 1
        series = build_series(dataset, log, 1)
        for s in score_objects(resolve_method("vps_iou"), series):
            assert s.value == 0.0

    def test_single_class_is_always_correct_when_matched(self):
        dataset, log, truth = generate(
            SynthConfig(num_images=6, num_classes=1, epochs=4, seed=2)
        )
        series = build_series(dataset, log, 4)
        for matched in series:
            for ok, was_matched in zip(matched.correct_series, matched.matched_mask):
                assert ok == bool(was_matched)


class TestWriteCorpus:
    def test_files_round_trip_to_generate(self, tmp_path):
        truth_written = write_corpus(SMALL, tmp_path)
        dataset, log, truth_mem = generate(SMALL)
        assert load_annotations(tmp_path / "annotations.json") == dataset
        assert load_logs(tmp_path / "predictions.jsonl") == log
        assert truth_written.objects == truth_mem.objects
        parsed = parse_truth_csv((tmp_path / "truth.csv").read_text())
        for t in truth_mem.objects:
            assert parsed[t.object_id] == (
                t.iou_mean, t.iou_std, t.conf_mean, t.conf_std, t.forgetting,
            )

    def test_byte_deterministic(self, tmp_path):
        write_corpus(SMALL, tmp_path / "a")
        write_corpus(SMALL, tmp_path / "b")
        for name in ("annotations.json", "predictions.jsonl", "truth.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes(), name

    def test_seed_changes_content(self, tmp_path):
        write_corpus(SMALL, tmp_path / "a")
        other = SynthConfig(num_images=12, num_classes=3, epochs=6, seed=8)
        write_corpus(other, tmp_path / "b")
        assert (tmp_path / "a" / "predictions.jsonl").read_bytes() != (
            tmp_path / "b" / "predictions.jsonl"
        ).read_bytes()

    def test_truth_csv_round_trips_exactly(self):
        _, _, truth = generate(SMALL)
        parsed = parse_truth_csv(truth_to_csv(truth))
        for t in truth.objects:
            im, isd, cm, csd, forg = parsed[t.object_id]
            assert (im, isd, cm, csd) == (t.iou_mean, t.iou_std, t.conf_mean, t.conf_std)
            assert forg == t.forgetting
