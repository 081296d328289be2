"""Corpus data model: users, albums, photos, landmark labels, splits.

Manifest format: UTF-8 text, one record per line, tab-separated
``photo_id  user_id  album_id  landmark_id  image_path  junk_of`` with ``-``
for absent optionals; ``#``-prefixed lines are comments. Split files are
``photo_id  split_name`` lines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .errors import DataError
from .rng import generator

SPLIT_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class PhotoRecord:
    photo_id: str
    user_id: str
    album_id: str
    landmark_id: str
    image_path: str | None = None
    is_junk_of: str | None = None


@dataclass
class UserAlbum:
    album_id: str
    user_id: str
    photo_ids: list[str]


@dataclass
class Corpus:
    """Immutable after ingestion; safe to share across threads."""

    photos: dict[str, PhotoRecord]
    albums: dict[str, UserAlbum]
    photo_order: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.photo_order:
            self.photo_order = list(self.photos)

    @property
    def users(self) -> list[str]:
        return sorted({p.user_id for p in self.photos.values()})

    @property
    def landmarks(self) -> list[str]:
        return sorted({p.landmark_id for p in self.photos.values()})

    def photos_of_user(self, user_id: str) -> list[str]:
        return [pid for pid in self.photo_order if self.photos[pid].user_id == user_id]

    def photos_of_landmark(self, landmark_id: str) -> list[str]:
        return [
            pid for pid in self.photo_order
            if self.photos[pid].landmark_id == landmark_id
        ]

    def junk_of(self, photo_id: str) -> set[str]:
        return {
            pid for pid, rec in self.photos.items() if rec.is_junk_of == photo_id
        }

    def counts(self) -> dict[str, int]:
        return {
            "photos": len(self.photos),
            "users": len(self.users),
            "albums": len(self.albums),
            "landmarks": len(self.landmarks),
        }


def _parse_optional(token: str) -> str | None:
    return None if token == "-" else token


def parse_manifest_lines(lines: Iterable[str]) -> list[PhotoRecord]:
    records = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise DataError(
                f"manifest line {lineno}: expected 6 tab-separated fields, got {len(fields)}"
            )
        photo_id, user_id, album_id, landmark_id, image_path, junk_of = fields
        if not photo_id or photo_id == "-":
            raise DataError(f"manifest line {lineno}: missing photo_id")
        if photo_id in seen:
            raise DataError(f"manifest line {lineno}: duplicate photo_id {photo_id!r}")
        if not landmark_id or landmark_id == "-":
            raise DataError(f"manifest line {lineno}: empty landmark_id for {photo_id!r}")
        if not user_id or user_id == "-":
            raise DataError(f"manifest line {lineno}: missing user_id for {photo_id!r}")
        seen.add(photo_id)
        records.append(
            PhotoRecord(
                photo_id=photo_id,
                user_id=user_id,
                album_id=album_id,
                landmark_id=landmark_id,
                image_path=_parse_optional(image_path),
                is_junk_of=_parse_optional(junk_of),
            )
        )
    return records


def build_albums(records: list[PhotoRecord], album_mode: str = "manifest") -> dict[str, UserAlbum]:
    """Group photos into albums (the LDA documents).

    album_mode: "manifest" uses the manifest's album_id (rows with "-" fall
    back to one album per user); "user" forces one album per user;
    "user-landmark" one album per (user, landmark) pair.
    """
    if album_mode not in ("manifest", "user", "user-landmark"):
        raise DataError(f"unknown album_mode {album_mode!r}")
    albums: dict[str, UserAlbum] = {}
    for rec in records:
        if album_mode == "user":
            key = f"user:{rec.user_id}"
        elif album_mode == "user-landmark":
            key = f"user:{rec.user_id}:lm:{rec.landmark_id}"
        elif rec.album_id and rec.album_id != "-":
            key = rec.album_id
        else:
            key = f"user:{rec.user_id}"
        album = albums.get(key)
        if album is None:
            albums[key] = UserAlbum(album_id=key, user_id=rec.user_id, photo_ids=[rec.photo_id])
        else:
            if album.user_id != rec.user_id:
                raise DataError(
                    f"album {key!r} spans users {album.user_id!r} and {rec.user_id!r}"
                )
            album.photo_ids.append(rec.photo_id)
    return albums


def ingest_manifest(path, album_mode: str = "manifest") -> Corpus:
    """Parse and validate a manifest file into a Corpus."""
    with open(path, "r", encoding="utf-8") as fp:
        records = parse_manifest_lines(fp)
    return ingest_records(records, album_mode=album_mode)


def ingest_records(records: list[PhotoRecord], album_mode: str = "manifest") -> Corpus:
    if not records:
        raise DataError("empty corpus")
    photos = {r.photo_id: r for r in records}
    for rec in records:
        if rec.is_junk_of is not None and rec.is_junk_of not in photos:
            raise DataError(
                f"photo {rec.photo_id!r} marked junk of unknown photo {rec.is_junk_of!r}"
            )
    albums = build_albums(records, album_mode)
    for album in albums.values():
        if not album.photo_ids:
            raise DataError(f"album {album.album_id!r} has no photos")
        for pid in album.photo_ids:
            if pid not in photos:
                raise DataError(f"album {album.album_id!r} references unknown photo {pid!r}")
    return Corpus(photos=photos, albums=albums, photo_order=[r.photo_id for r in records])


def manifest_lines(corpus: Corpus) -> list[str]:
    """Serialize back to manifest text (round-trips through ingest)."""
    lines = []
    for pid in corpus.photo_order:
        rec = corpus.photos[pid]
        lines.append(
            "\t".join(
                [
                    rec.photo_id,
                    rec.user_id,
                    rec.album_id or "-",
                    rec.landmark_id,
                    rec.image_path if rec.image_path is not None else "-",
                    rec.is_junk_of if rec.is_junk_of is not None else "-",
                ]
            )
        )
    return lines


def write_manifest(path, corpus: Corpus, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        if header:
            fp.write(f"# {header}\n")
        for line in manifest_lines(corpus):
            fp.write(line + "\n")


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

@dataclass
class SplitAssignment:
    assignment: dict[str, str]  # photo_id -> train | validation | test
    seed: int

    def members(self, split: str) -> list[str]:
        return [pid for pid, s in self.assignment.items() if s == split]


def split_corpus(
    corpus: Corpus, ratios: tuple[float, float, float], seed: int
) -> SplitAssignment:
    """Stratified per-landmark split, deterministic for a fixed seed.

    Largest-remainder apportionment keeps every per-landmark stratum within
    one photo of the exact ratio product; ties favour train, then validation.
    """
    if len(ratios) != 3:
        raise DataError("ratios must have three entries (train, validation, test)")
    if any(r < 0 for r in ratios):
        raise DataError("ratios must be non-negative")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {sum(ratios)}")

    assignment: dict[str, str] = {}
    for landmark in corpus.landmarks:
        pids = sorted(corpus.photos_of_landmark(landmark))
        n = len(pids)
        if n < 3:
            raise DataError(
                f"landmark {landmark!r} has {n} photos; need >= 3 to stratify"
            )
        rng = generator(seed, f"split:{landmark}")
        rng.shuffle(pids)
        quotas = [n * r for r in ratios]
        base = [int(q) for q in quotas]
        leftover = n - sum(base)
        remainders = sorted(
            range(3), key=lambda i: (-(quotas[i] - base[i]), i)
        )
        for i in remainders[:leftover]:
            base[i] += 1
        start = 0
        for size, name in zip(base, SPLIT_NAMES):
            for pid in pids[start : start + size]:
                assignment[pid] = name
            start += size
    return SplitAssignment(assignment=assignment, seed=seed)


def write_split(path, split: SplitAssignment, header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        if header:
            fp.write(f"# {header}\n")
        for pid in sorted(split.assignment):
            fp.write(f"{pid}\t{split.assignment[pid]}\n")


def read_split(path) -> SplitAssignment:
    assignment = {}
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or parts[1] not in SPLIT_NAMES:
                raise DataError(f"split file line {lineno}: malformed record {line!r}")
            assignment[parts[0]] = parts[1]
    if not assignment:
        raise DataError("empty split file")
    return SplitAssignment(assignment=assignment, seed=-1)
