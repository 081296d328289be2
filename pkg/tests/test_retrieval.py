"""Compaction, exact ranking, and average query expansion."""

import numpy as np
import pytest

from mqle.errors import DataError
from mqle.retrieval import (
    RankedList,
    aqe_requery,
    compact_multiquery,
    rank,
    ranked_list_json,
    read_ranked_list,
    write_ranked_list,
)


class TestCompact:
    def test_nearest_two_of_three(self):
        query = np.zeros(2)
        ids = ["far", "mid", "near"]
        vecs = np.array([[3.0, 0.0], [2.0, 0.0], [1.0, 0.0]])
        assert compact_multiquery(query, ids, vecs, 2) == ["near", "mid"]

    def test_pool_smaller_than_s_identity(self):
        query = np.zeros(2)
        ids = ["a", "b"]
        vecs = np.array([[1.0, 0.0], [2.0, 0.0]])
        assert compact_multiquery(query, ids, vecs, 10) == ["a", "b"]

    def test_contains_single_nearest(self):
        rng = np.random.default_rng(0)
        ids = [f"p{i}" for i in range(30)]
        vecs = rng.normal(size=(30, 4))
        query = rng.normal(size=4)
        nearest = ids[int(np.linalg.norm(vecs - query, axis=1).argmin())]
        chosen = compact_multiquery(query, ids, vecs, 5)
        assert nearest in chosen
        assert set(chosen) <= set(ids)

    def test_tie_break_by_photo_id(self):
        query = np.zeros(1)
        ids = ["b", "a"]
        vecs = np.array([[1.0], [1.0]])
        assert compact_multiquery(query, ids, vecs, 1) == ["a"]


class TestRank:
    def test_identical_vector_ranks_first_distance_zero(self):
        rng = np.random.default_rng(1)
        db = rng.normal(size=(20, 3))
        query = db[7].copy()
        result = rank(query, [f"p{i}" for i in range(20)], db, 5, query_photo_id="q")
        assert result.entries[0][0] == "p7"
        assert result.entries[0][1] == 0.0

    def test_matches_brute_force_sort_oracle(self):
        rng = np.random.default_rng(2)
        db = rng.normal(size=(1000, 8))
        ids = [f"p{i:04d}" for i in range(1000)]
        query = rng.normal(size=8)
        result = rank(query, ids, db, 1000, query_photo_id="")
        # oracle: exhaustive sort of exact distances
        oracle = sorted(
            ((float(np.sqrt(((db[i] - query) ** 2).sum())), ids[i]) for i in range(1000)),
            key=lambda t: (t[0], t[1]),
        )
        assert [pid for _, pid in oracle] == result.ids()

    def test_query_own_entry_excluded(self):
        db = np.zeros((3, 2))
        result = rank(np.zeros(2), ["q", "a", "b"], db, 3, query_photo_id="q")
        assert "q" not in result.ids()

    def test_distances_non_decreasing_no_duplicates(self):
        rng = np.random.default_rng(3)
        db = rng.normal(size=(50, 4))
        result = rank(rng.normal(size=4), [f"p{i}" for i in range(50)], db, 50)
        dists = [d for _, d in result.entries]
        assert dists == sorted(dists)
        assert len(set(result.ids())) == len(result.ids())

    def test_order_invariant_under_common_affine_transform(self):
        rng = np.random.default_rng(4)
        db = rng.normal(size=(40, 5))
        query = rng.normal(size=5)
        ids = [f"p{i}" for i in range(40)]
        base = rank(query, ids, db, 40).ids()
        shifted = rank(query + 3.0, ids, db + 3.0, 40).ids()
        scaled = rank(query * 2.5, ids, db * 2.5, 40).ids()
        assert base == shifted == scaled

    def test_deterministic_with_ties(self):
        db = np.zeros((5, 2))
        ids = ["e", "c", "a", "d", "b"]
        a = rank(np.ones(2), ids, db, 5)
        b = rank(np.ones(2), ids, db, 5)
        assert a.entries == b.entries
        assert a.ids() == sorted(ids)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(DataError, match="dimension"):
            rank(np.ones(3), ["a"], np.ones((1, 2)), 1)


class TestAqe:
    def test_identical_top_hit_leaves_query_unchanged(self):
        query = np.array([1.0, 2.0])
        ranked = RankedList("q", [("a", 0.0)], 1)
        out = aqe_requery(ranked, {"a": query.copy()}, query, 1)
        np.testing.assert_allclose(out, query, atol=1e-15)

    def test_mean_of_three_vectors(self):
        # query (0,0) with hits (2,0) and (0,2): mean is (2/3, 2/3)
        ranked = RankedList("q", [("a", 1.0), ("b", 1.0)], 2)
        index = {"a": np.array([2.0, 0.0]), "b": np.array([0.0, 2.0])}
        out = aqe_requery(ranked, index, np.zeros(2), 2)
        np.testing.assert_allclose(out, [2.0 / 3.0, 2.0 / 3.0], atol=1e-15)

    def test_requery_produces_valid_ranked_list(self):
        rng = np.random.default_rng(5)
        db = rng.normal(size=(30, 3))
        ids = [f"p{i}" for i in range(30)]
        first = rank(rng.normal(size=3), ids, db, 10, query_photo_id="q")
        index = {pid: db[i] for i, pid in enumerate(ids)}
        new_query = aqe_requery(first, index, rng.normal(size=3), 5)
        second = rank(new_query, ids, db, 10, query_photo_id="q")
        dists = [d for _, d in second.entries]
        assert dists == sorted(dists)
        assert len(second.entries) == 10

    def test_k_zero_rejected(self):
        ranked = RankedList("q", [("a", 0.0)], 1)
        with pytest.raises(DataError, match="k"):
            aqe_requery(ranked, {}, np.zeros(2), 0)

    def test_k_beyond_list_rejected(self):
        ranked = RankedList("q", [("a", 0.0)], 1)
        with pytest.raises(DataError, match="exceeds"):
            aqe_requery(ranked, {"a": np.zeros(2)}, np.zeros(2), 3)


class TestRankedListIO:
    def test_text_round_trip_with_nine_significant_digits(self, tmp_path):
        entries = [("a", 0.123456789123), ("b", 1.0), ("c", 22.5)]
        ranked = RankedList("q7", entries, 3)
        path = tmp_path / "ranked.tsv"
        write_ranked_list(path, ranked, config_hash="ff" * 8)
        text = path.read_text()
        assert "\t0.123456789\n" in text
        loaded = read_ranked_list(path)
        assert loaded.query_photo_id == "q7"
        assert loaded.ids() == ["a", "b", "c"]

    def test_json_fields_match_text(self):
        ranked = RankedList("q", [("a", 0.5)], 1)
        payload = ranked_list_json(ranked)
        assert payload["entries"][0] == {"rank": 1, "photo_id": "a", "distance": 0.5}
