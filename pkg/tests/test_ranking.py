import math

import pytest
from hypothesis import given, strategies as st

from detprune.errors import (
    EmptyObjectList,
    NonFiniteScore,
    RatioOutOfRange,
    UnknownAggregation,
)
from detprune.ranking import (
    Aggregation,
    aggregate,
    aggregate_scores,
    keep_count,
    rank,
    ranked_from_rows,
    resolve_aggregation,
    select,
)
from detprune.scoring import Direction, ObjectScore

from oracles import rational_keep_count


class TestAggregate:
    def test_mean(self):
        assert aggregate(Aggregation.MEAN, [0.2, 0.4]) == pytest.approx(0.3)

    def test_sum(self):
        assert aggregate(Aggregation.SUM, [0.2, 0.4, 0.1]) == pytest.approx(0.7)

    def test_max(self):
        assert aggregate(Aggregation.MAX, [0.2, 0.9, 0.4]) == 0.9

    def test_single_value_is_identity(self):
        for kind in Aggregation:
            assert aggregate(kind, [0.37]) == 0.37

    def test_empty(self):
        with pytest.raises(EmptyObjectList):
            aggregate(Aggregation.MAX, [])

    def test_resolve(self):
        assert resolve_aggregation("mean") is Aggregation.MEAN
        with pytest.raises(UnknownAggregation):
            resolve_aggregation("median")

    def test_grouping(self):
        scores = [
            ObjectScore(1, 10, 0.2),
            ObjectScore(2, 10, 0.8),
            ObjectScore(3, 20, 0.5),
        ]
        assert aggregate_scores(Aggregation.MAX, scores) == {10: 0.8, 20: 0.5}
        assert aggregate_scores(Aggregation.SUM, scores) == {10: 1.0, 20: 0.5}


class TestRank:
    def test_high_first_order(self):
        ranked = rank({1: 0.1, 2: 0.9, 3: 0.5}, Direction.HIGH_FIRST, 0)
        assert ranked.image_ids() == [2, 3, 1]
        assert [e.rank for e in ranked.entries] == [1, 2, 3]

    def test_low_first_order(self):
        ranked = rank({1: 0.1, 2: 0.9, 3: 0.5}, Direction.LOW_FIRST, 0)
        assert ranked.image_ids() == [1, 3, 2]

    def test_deterministic(self):
        scores = {i: float(i % 7) for i in range(50)}
        a = rank(scores, Direction.HIGH_FIRST, 42)
        b = rank(scores, Direction.HIGH_FIRST, 42)
        assert a == b

    def test_input_order_irrelevant(self):
        scores = {i: float(i % 7) for i in range(50)}
        reversed_scores = dict(reversed(list(scores.items())))
        assert rank(scores, Direction.HIGH_FIRST, 42) == rank(
            reversed_scores, Direction.HIGH_FIRST, 42
        )

    def test_tie_blocks_shuffled_by_seed(self):
        scores = {i: 0.5 for i in range(20)}
        a = rank(scores, Direction.HIGH_FIRST, 1)
        b = rank(scores, Direction.HIGH_FIRST, 2)
        assert set(a.image_ids()) == set(b.image_ids()) == set(range(20))
        assert a.image_ids() != b.image_ids()

    def test_ties_stay_contiguous(self):
        scores = {1: 0.9, 2: 0.5, 3: 0.5, 4: 0.5, 5: 0.1}
        ranked = rank(scores, Direction.HIGH_FIRST, 7)
        ids = ranked.image_ids()
        assert ids[0] == 1
        assert set(ids[1:4]) == {2, 3, 4}
        assert ids[4] == 5

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteScore, match="image 2"):
            rank({1: 0.5, 2: math.nan}, Direction.HIGH_FIRST, 0)
        with pytest.raises(NonFiniteScore):
            rank({1: math.inf}, Direction.HIGH_FIRST, 0)

    def test_empty_input(self):
        assert rank({}, Direction.HIGH_FIRST, 0).entries == ()

    @given(
        st.dictionaries(
            st.integers(1, 200),
            st.floats(-10, 10, allow_nan=False),
            max_size=60,
        ),
        st.integers(0, 2**32),
    )
    def test_ranks_contiguous_and_scores_monotone(self, scores, seed):
        ranked = rank(scores, Direction.HIGH_FIRST, seed)
        assert [e.rank for e in ranked.entries] == list(range(1, len(scores) + 1))
        values = [e.score for e in ranked.entries]
        assert values == sorted(values, reverse=True)
        assert sorted(ranked.image_ids()) == sorted(scores)

    def test_rows_round_trip(self):
        ranked = rank({1: 0.1, 2: 0.9, 3: 0.5}, Direction.HIGH_FIRST, 11)
        rebuilt = ranked_from_rows(ranked.rows(), Direction.HIGH_FIRST, 11)
        assert rebuilt == ranked


class TestKeepCount:
    def test_exact_decimal_ratios(self):
        assert keep_count(100, 0.7) == 30
        assert keep_count(100, 0.3) == 70
        assert keep_count(10, 0.25) == 8
        assert keep_count(3, 0.5) == 2

    def test_zero_ratio_keeps_all(self):
        assert keep_count(57, 0.0) == 57

    def test_never_zero_for_nonempty(self):
        assert keep_count(1, 0.999999) == 1
        assert keep_count(5, 0.9) == 1

    def test_empty_total(self):
        assert keep_count(0, 0.5) == 0

    def test_matches_rational_oracle_on_percent_grid(self):
        for total in (1, 2, 3, 7, 10, 99, 100, 101, 16551):
            for percent in range(0, 100):
                got = keep_count(total, percent / 100)
                assert got == rational_keep_count(total, percent, 100), (
                    total,
                    percent,
                )

    @given(st.integers(0, 10_000), st.integers(0, 998))
    def test_monotone_in_ratio(self, total, milli):
        # keeping more aggressively can only shrink the kept set
        assert keep_count(total, milli / 1000) >= keep_count(
            total, (milli + 1) / 1000
        )

    @pytest.mark.parametrize("bad", [-0.1, 1.0, 1.5, math.nan, math.inf, "x"])
    def test_bad_ratios(self, bad):
        with pytest.raises(RatioOutOfRange):
            keep_count(10, bad)

    def test_negative_total(self):
        with pytest.raises(ValueError):
            keep_count(-1, 0.5)


class TestSelect:
    def ranked(self, n=10, seed=3):
        return rank({i: float(i) for i in range(1, n + 1)}, Direction.HIGH_FIRST, seed)

    def test_keeps_top_block(self):
        manifest = select(self.ranked(), 0.7, "vps_iou", "max")
        assert manifest.kept_image_ids == (8, 9, 10)
        assert manifest.prune_ratio == 0.7
        assert manifest.seed == 3
        assert manifest.method == "vps_iou"
        assert manifest.aggregation == "max"

    def test_nested_selections(self):
        ranked = self.ranked(n=40)
        previous = None
        for ratio in (0.9, 0.7, 0.5, 0.3, 0.0):
            kept = set(select(ranked, ratio, "m", "max").kept_image_ids)
            if previous is not None:
                assert previous <= kept
            previous = kept

    def test_unranked_ids_recorded(self):
        manifest = select(
            self.ranked(), 0.5, "idp", "n/a", unranked_image_ids=[99, 98]
        )
        assert manifest.unranked_image_ids == (98, 99)

    def test_unranked_defaults_to_absent(self):
        assert select(self.ranked(), 0.5, "idp", "n/a").unranked_image_ids is None
