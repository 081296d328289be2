"""Manifest ingestion, album grouping, and stratified splitting."""

import collections

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mqle.corpus import (
    SPLIT_NAMES,
    ingest_manifest,
    ingest_records,
    manifest_lines,
    parse_manifest_lines,
    read_split,
    split_corpus,
    write_manifest,
    write_split,
)
from mqle.errors import DataError


def make_manifest(tmp_path, rows, name="manifest.tsv"):
    path = tmp_path / name
    path.write_text("\n".join("\t".join(r) for r in rows) + "\n")
    return path


def synthetic_rows(n_landmarks=3, photos_per_landmark=10, n_users=5):
    rows = []
    counter = 0
    for lm in range(n_landmarks):
        for j in range(photos_per_landmark):
            user = f"u{(counter * 7 + j) % n_users}"
            rows.append(
                (f"p{counter:04d}", user, f"a_{user}", f"L{lm}", "-", "-")
            )
            counter += 1
    return rows


class TestIngest:
    def test_counts_match(self, tmp_path):
        rows = synthetic_rows(4, 25, 13)
        corpus = ingest_manifest(make_manifest(tmp_path, rows))
        counts = corpus.counts()
        assert counts["photos"] == 100
        assert counts["landmarks"] == 4
        assert counts["users"] == 13

    def test_empty_manifest_rejected(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("# only a comment\n")
        with pytest.raises(DataError, match="empty corpus"):
            ingest_manifest(path)

    def test_duplicate_photo_id_named(self, tmp_path):
        rows = [
            ("p1", "u1", "a1", "L1", "-", "-"),
            ("p1", "u2", "a2", "L1", "-", "-"),
        ]
        with pytest.raises(DataError, match="p1"):
            ingest_manifest(make_manifest(tmp_path, rows))

    def test_parse_error_carries_line_number(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("p1\tu1\ta1\tL1\t-\t-\nonly-two\tfields\n")
        with pytest.raises(DataError, match="line 2"):
            ingest_manifest(path)

    def test_junk_must_reference_known_photo(self):
        records = parse_manifest_lines(
            ["p1\tu1\ta1\tL1\t-\t-", "p2\tu1\ta1\tL1\t-\tmissing"]
        )
        with pytest.raises(DataError, match="missing"):
            ingest_records(records)

    def test_round_trip_identity(self, tmp_path):
        rows = synthetic_rows(3, 6, 4)
        rows[5] = ("p0005", "u2", "-", "L0", "img/p5.png", "p0004")
        path = make_manifest(tmp_path, rows)
        corpus = ingest_manifest(path)
        out = tmp_path / "rewritten.tsv"
        write_manifest(out, corpus)
        again = ingest_manifest(out)
        assert manifest_lines(again) == manifest_lines(corpus)
        assert again.photos == corpus.photos

    def test_albums_group_by_manifest_id(self, tmp_path):
        rows = [
            ("p1", "u1", "trip1", "L1", "-", "-"),
            ("p2", "u1", "trip2", "L1", "-", "-"),
            ("p3", "u1", "trip1", "L2", "-", "-"),
        ]
        corpus = ingest_manifest(make_manifest(tmp_path, rows))
        assert sorted(corpus.albums) == ["trip1", "trip2"]
        assert corpus.albums["trip1"].photo_ids == ["p1", "p3"]

    def test_missing_album_id_defaults_to_user_album(self, tmp_path):
        rows = [
            ("p1", "u1", "-", "L1", "-", "-"),
            ("p2", "u1", "-", "L2", "-", "-"),
        ]
        corpus = ingest_manifest(make_manifest(tmp_path, rows))
        assert len(corpus.albums) == 1
        album = next(iter(corpus.albums.values()))
        assert album.photo_ids == ["p1", "p2"]

    def test_user_landmark_album_mode(self, tmp_path):
        rows = [
            ("p1", "u1", "x", "L1", "-", "-"),
            ("p2", "u1", "x", "L2", "-", "-"),
        ]
        corpus = ingest_manifest(make_manifest(tmp_path, rows), album_mode="user-landmark")
        assert len(corpus.albums) == 2

    def test_album_cannot_span_users(self, tmp_path):
        rows = [
            ("p1", "u1", "shared", "L1", "-", "-"),
            ("p2", "u2", "shared", "L1", "-", "-"),
        ]
        with pytest.raises(DataError, match="spans users"):
            ingest_manifest(make_manifest(tmp_path, rows))


class TestSplit:
    def test_seventy_ten_twenty(self, tmp_path):
        rows = synthetic_rows(1, 100, 9)
        corpus = ingest_manifest(make_manifest(tmp_path, rows))
        split = split_corpus(corpus, (0.7, 0.1, 0.2), seed=0)
        sizes = collections.Counter(split.assignment.values())
        assert sizes == {"train": 70, "validation": 10, "test": 20}

    def test_identity_split(self, tmp_path):
        rows = synthetic_rows(2, 10, 3)
        corpus = ingest_manifest(make_manifest(tmp_path, rows))
        split = split_corpus(corpus, (1.0, 0.0, 0.0), seed=1)
        assert set(split.assignment.values()) == {"train"}

    def test_deterministic(self, tmp_path):
        rows = synthetic_rows(3, 20, 7)
        corpus = ingest_manifest(make_manifest(tmp_path, rows))
        a = split_corpus(corpus, (0.7, 0.1, 0.2), seed=5)
        b = split_corpus(corpus, (0.7, 0.1, 0.2), seed=5)
        assert a.assignment == b.assignment

    def test_seed_changes_assignment(self, tmp_path):
        rows = synthetic_rows(3, 40, 7)
        corpus = ingest_manifest(make_manifest(tmp_path, rows))
        a = split_corpus(corpus, (0.7, 0.1, 0.2), seed=5)
        b = split_corpus(corpus, (0.7, 0.1, 0.2), seed=6)
        assert a.assignment != b.assignment

    def test_small_stratum_rejected(self, tmp_path):
        rows = synthetic_rows(1, 2, 2)
        corpus = ingest_manifest(make_manifest(tmp_path, rows))
        with pytest.raises(DataError, match="3"):
            split_corpus(corpus, (0.7, 0.1, 0.2), seed=0)

    def test_bad_ratios_rejected(self, tmp_path):
        rows = synthetic_rows(1, 10, 3)
        corpus = ingest_manifest(make_manifest(tmp_path, rows))
        with pytest.raises(DataError, match="sum to 1"):
            split_corpus(corpus, (0.7, 0.1, 0.1), seed=0)
        with pytest.raises(DataError, match="non-negative"):
            split_corpus(corpus, (1.2, -0.1, -0.1), seed=0)

    @given(
        st.integers(3, 37),
        st.integers(1, 4),
        st.integers(0, 10_000),
    )
    @settings(max_examples=40, deadline=None)
    def test_split_invariants(self, photos_per_landmark, n_landmarks, seed):
        rows = synthetic_rows(n_landmarks, photos_per_landmark, 5)
        corpus = ingest_records(parse_manifest_lines("\t".join(r) for r in rows))
        ratios = (0.7, 0.1, 0.2)
        split = split_corpus(corpus, ratios, seed=seed)
        # exhaustive and disjoint partition
        assert set(split.assignment) == set(corpus.photos)
        # per-landmark strata within 1 of the exact ratio products
        for lm in corpus.landmarks:
            members = corpus.photos_of_landmark(lm)
            sizes = collections.Counter(split.assignment[p] for p in members)
            for ratio, name in zip(ratios, SPLIT_NAMES):
                assert abs(sizes.get(name, 0) - ratio * len(members)) <= 1

    def test_split_file_round_trip(self, tmp_path):
        rows = synthetic_rows(2, 12, 4)
        corpus = ingest_manifest(make_manifest(tmp_path, rows))
        split = split_corpus(corpus, (0.7, 0.1, 0.2), seed=3)
        path = tmp_path / "split.tsv"
        write_split(path, split, header="config_hash=test")
        loaded = read_split(path)
        assert loaded.assignment == split.assignment
