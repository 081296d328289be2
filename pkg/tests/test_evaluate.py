"""AP/mAP/PR protocol tests, including the exhaustive brute-force oracle."""

import itertools

import numpy as np
import pytest

from mqle.errors import DataError
from mqle.evaluate import (
    aggregate,
    average_precision,
    build_report,
    mean_ap,
    precision_recall_curve,
)
from mqle.retrieval import RankedList


def brute_force_ap(ids, relevant, junk, n):
    """Independent recount of the protocol formula.

    Deletes junk, then for each rank r up to n computes precision-at-r by a
    full recount and sums where the entry is relevant; divides by
    min(|relevant|, n).
    """
    kept = [p for p in ids if p not in junk]
    rel = set(relevant) - set(junk)
    total = 0.0
    for r in range(1, min(n, len(kept)) + 1):
        if kept[r - 1] in rel:
            hits_at_r = len([p for p in kept[:r] if p in rel])
            total += hits_at_r / r
    return total / min(len(rel), n)


class TestAveragePrecision:
    def test_formula_example(self):
        # [rel, nonrel, rel] with two relevant: (1*1 + 2/3)/2 = 5/6
        ap = average_precision(["r1", "x", "r2"], {"r1", "r2"}, set(), 3)
        assert ap == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_perfect_ranking(self):
        ap = average_precision(["a", "b", "c", "x"], {"a", "b", "c"}, set(), 4)
        assert ap == 1.0

    def test_junk_removed_before_rank_indexing(self):
        with_junk = average_precision(
            ["junk1", "r1", "x", "r2"], {"r1", "r2"}, {"junk1"}, 3
        )
        without = average_precision(["r1", "x", "r2"], {"r1", "r2"}, set(), 3)
        assert with_junk == without

    def test_junk_insertion_anywhere_leaves_ap_unchanged(self):
        ids = ["r1", "x", "r2", "y"]
        base = average_precision(ids, {"r1", "r2"}, set(), 4)
        for pos in range(5):
            padded = ids[:pos] + ["j"] + ids[pos:]
            assert average_precision(padded, {"r1", "r2"}, {"j"}, 4) == base

    def test_empty_relevant_rejected(self):
        with pytest.raises(DataError, match="relevant"):
            average_precision(["a"], set(), set(), 1)

    def test_capacity_capped_at_n(self):
        # ten relevant in db but n=2: a list with both top slots relevant is perfect
        relevant = {f"r{i}" for i in range(10)}
        ap = average_precision(["r0", "r1"], relevant, set(), 2)
        assert ap == 1.0

    def test_accepts_ranked_list_objects(self):
        ranked = RankedList("q", [("r1", 0.1), ("x", 0.2)], 2)
        assert average_precision(ranked, {"r1"}, set(), 2) == 1.0

    def test_permutation_below_last_relevant_irrelevant(self):
        ids = ["r1", "x", "r2", "a", "b", "c"]
        base = average_precision(ids, {"r1", "r2"}, set(), 6)
        for tail in itertools.permutations(["a", "b", "c"]):
            ids2 = ["r1", "x", "r2"] + list(tail)
            assert average_precision(ids2, {"r1", "r2"}, set(), 6) == base

    def test_exhaustive_small_oracle(self):
        # every ranking of 4 items x every relevant/junk labeling
        items = ["a", "b", "c", "d"]
        for perm in itertools.permutations(items):
            for labels in itertools.product(["rel", "non", "junk"], repeat=4):
                relevant = {i for i, l in zip(items, labels) if l == "rel"}
                junk = {i for i, l in zip(items, labels) if l == "junk"}
                if not relevant:
                    continue
                for n in (1, 2, 4):
                    assert average_precision(list(perm), relevant, junk, n) == \
                        brute_force_ap(list(perm), relevant, junk, n)


class TestAggregation:
    def test_mean_ap(self):
        assert mean_ap([1.0, 0.0]) == 0.5

    def test_mean_of_equal_aps_is_that_ap(self):
        aps = [0.8333333333333334] * 20
        assert mean_ap(aps) == pytest.approx(0.8333333333333334, abs=1e-12)

    def test_aggregate_landmark_maps(self):
        assert aggregate([0.5, 0.7]) == pytest.approx(0.6)

    def test_empty_inputs_rejected(self):
        with pytest.raises(DataError):
            mean_ap([])
        with pytest.raises(DataError):
            aggregate([])


class TestPrecisionRecall:
    def test_perfect_ranking_curve(self):
        ids = ["r1", "r2", "r3", "r4", "r5", "x", "x2", "x3", "x4", "x5"]
        relevant = {f"r{i}" for i in range(1, 6)}
        curve = precision_recall_curve(ids, relevant, set())
        assert curve[0] == (0.2, 1.0)
        # precision holds 1.0 through recall 1.0
        for recall, precision in curve[:5]:
            assert precision == 1.0
        assert curve[4] == (1.0, 1.0)

    def test_zero_hits_all_precisions_zero(self):
        curve = precision_recall_curve(["x", "y"], {"r"}, set())
        assert all(p == 0.0 for _, p in curve)
        assert all(r == 0.0 for r, _ in curve)

    def test_recall_non_decreasing(self):
        rng = np.random.default_rng(0)
        ids = [f"p{i}" for i in range(30)]
        relevant = set(rng.choice(ids, 10, replace=False))
        curve = precision_recall_curve(ids, relevant, set())
        recalls = [r for r, _ in curve]
        assert recalls == sorted(recalls)

    def test_matches_exhaustive_recount(self):
        rng = np.random.default_rng(1)
        ids = [f"p{i}" for i in range(25)]
        relevant = set(rng.choice(ids, 8, replace=False))
        junk = set(rng.choice(sorted(set(ids) - relevant), 3, replace=False))
        curve = precision_recall_curve(ids, relevant, junk)
        kept = [p for p in ids if p not in junk]
        for r, (recall, precision) in enumerate(curve, 1):
            hits = len([p for p in kept[:r] if p in relevant])
            assert recall == hits / len(relevant)
            assert precision == hits / r


class TestReport:
    def test_report_aggregates_and_renders(self):
        results = [
            ("q1", "L1", 1.0),
            ("q2", "L1", 0.5),
            ("q3", "L2", 0.25),
        ]
        report = build_report(results, protocol_n=100, queries_per_landmark=2)
        assert report.per_landmark["L1"] == 0.75
        assert report.per_landmark["L2"] == 0.25
        assert report.overall == 0.5
        text = report.render_text()
        assert "L1" in text and "average" in text
        payload = report.to_json()
        assert payload["average_map"] == 0.5
