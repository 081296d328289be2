"""Seeded synthetic corpora with planted landmark structure and biased queries.

Landmarks are well-separated Gaussian prototypes in descriptor space; users
upload from topic-correlated landmark subsets (per-user Dirichlet affinity),
so the topic/community machinery has real structure to find. A "biased" query
is a landmark sample whose contiguous block of descriptor dimensions is
replaced by uninformative noise, modeling an occluded or badly-framed shot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, PhotoRecord, ingest_records
from .errors import DataError
from .features import FeatureSet
from .rng import generator


@dataclass
class SynthSpec:
    n_landmarks: int = 16
    photos_per_landmark: int = 256
    n_users: int = 577
    n_topics: int = 4
    noise_sigma: float = 0.6
    bias_strength: float = 0.5
    seed: int = 0
    descriptor_dim: int = 128
    biased_per_landmark: int = 4
    junk_per_landmark: int = 0
    affinity_concentration: float = 0.3
    landmark_concentration: float = 0.3
    prototype_norm: float = 8.0
    views_per_landmark: int = 1
    view_spread: float = 4.0
    noise_tail: float = 0.0
    variance_profile: float = 0.0
    contiguous_bias: bool = True

    def validate(self) -> None:
        counts = {
            "n_landmarks": self.n_landmarks,
            "photos_per_landmark": self.photos_per_landmark,
            "n_users": self.n_users,
            "n_topics": self.n_topics,
            "descriptor_dim": self.descriptor_dim,
        }
        for name, value in counts.items():
            if value < 1:
                raise DataError(f"{name} must be >= 1, got {value}")
        if not 0.0 <= self.bias_strength <= 1.0:
            raise DataError(f"bias_strength must be in [0, 1], got {self.bias_strength}")
        if self.n_topics > self.n_landmarks:
            raise DataError(
                f"infeasible spec: {self.n_topics} topics for {self.n_landmarks} landmarks"
            )
        if self.biased_per_landmark > self.photos_per_landmark:
            raise DataError("more biased queries than photos per landmark")
        if self.noise_sigma < 0:
            raise DataError("noise_sigma must be >= 0")
        if self.views_per_landmark < 1:
            raise DataError("views_per_landmark must be >= 1")


@dataclass
class GroundTruth:
    prototypes: np.ndarray          # (n_landmarks, d)
    landmark_ids: list[str]
    query_photo_ids: list[str]      # the designated biased queries
    topic_of_landmark: dict[str, int] = field(default_factory=dict)


@dataclass
class SynthResult:
    corpus: Corpus
    features: FeatureSet
    truth: GroundTruth


def generate(spec: SynthSpec) -> SynthResult:
    """Deterministic corpus + descriptors + ground truth for one spec/seed."""
    spec.validate()
    d = spec.descriptor_dim
    rng_proto = generator(spec.seed, "synth-prototypes")
    rng_users = generator(spec.seed, "synth-users")
    rng_photos = generator(spec.seed, "synth-photos")

    landmark_ids = [f"L{i:02d}" for i in range(spec.n_landmarks)]
    prototypes = rng_proto.normal(size=(spec.n_landmarks, d))
    prototypes *= spec.prototype_norm / np.linalg.norm(prototypes, axis=1, keepdims=True)
    topic_of_landmark = {lm: i % spec.n_topics for i, lm in enumerate(landmark_ids)}

    # within-landmark viewpoint modes: sub-centers around each prototype, so a
    # landmark's photos are multimodal the way different shooting angles are
    view_offsets = rng_proto.normal(size=(spec.n_landmarks, spec.views_per_landmark, d))
    view_offsets *= spec.view_spread / np.linalg.norm(view_offsets, axis=2, keepdims=True)
    if spec.views_per_landmark == 1:
        view_offsets[:] = 0.0
    view_centers = prototypes[:, None, :] + view_offsets

    # per-landmark texture statistics: lognormal per-dimension noise scales,
    # so scenes differ in their descriptor variance pattern as well as in mean
    sigma_profile = np.exp(
        spec.variance_profile * rng_proto.normal(size=(spec.n_landmarks, d))
    )

    user_ids = [f"u{i:03d}" for i in range(spec.n_users)]
    # users favor a few topics, and within a topic a few specific landmarks
    # (tourists photograph particular places, not abstract themes); this is
    # the co-upload structure the factorization stage later exploits
    topic_affinity = rng_users.dirichlet(
        [spec.affinity_concentration] * spec.n_topics, size=spec.n_users
    )
    affinity = np.zeros((spec.n_users, spec.n_landmarks))
    landmarks_of_topic = {
        t: [i for i, lm in enumerate(landmark_ids) if topic_of_landmark[lm] == t]
        for t in range(spec.n_topics)
    }
    for t, members in landmarks_of_topic.items():
        within = rng_users.dirichlet(
            [spec.landmark_concentration] * len(members), size=spec.n_users
        )
        affinity[:, members] = topic_affinity[:, t : t + 1] * within

    # marginal scale of a clean descriptor entry, reused for replacement noise
    entry_scale = float(
        np.sqrt(spec.prototype_norm**2 / d + spec.noise_sigma**2)
    )

    records: list[PhotoRecord] = []
    vectors: list[np.ndarray] = []
    query_ids: list[str] = []
    counter = 0
    for li, landmark in enumerate(landmark_ids):
        weights = affinity[:, li]
        weights = weights / weights.sum()
        uploaders = rng_photos.choice(
            spec.n_users, size=spec.photos_per_landmark, p=weights
        )
        for j in range(spec.photos_per_landmark):
            pid = f"p{counter:05d}"
            counter += 1
            view = int(rng_photos.integers(spec.views_per_landmark))
            # lognormal per-photo noise scale: some shots are much noisier
            # (blur, lighting), giving descriptors their heavy-tailed character
            scale = float(np.exp(spec.noise_tail * rng_photos.normal()))
            vec = view_centers[li, view] + (
                scale * spec.noise_sigma * sigma_profile[li] * rng_photos.normal(size=d)
            )
            if j < spec.biased_per_landmark and spec.bias_strength > 0:
                width = int(round(spec.bias_strength * d))
                if width > 0:
                    if spec.contiguous_bias:
                        start = int(rng_photos.integers(0, d - width + 1))
                        idx = np.arange(start, start + width)
                    else:
                        idx = rng_photos.permutation(d)[:width]
                    vec[idx] = entry_scale * rng_photos.normal(size=width)
                query_ids.append(pid)
            elif j < spec.biased_per_landmark:
                query_ids.append(pid)
            user = user_ids[int(uploaders[j])]
            records.append(
                PhotoRecord(
                    photo_id=pid,
                    user_id=user,
                    album_id=f"a_{user}",
                    landmark_id=landmark,
                    image_path=None,
                    is_junk_of=None,
                )
            )
            vectors.append(vec)

        # exact duplicates of this landmark's first biased queries
        row_of = {r.photo_id: i for i, r in enumerate(records)}
        lm_queries = [q for q in query_ids if records[row_of[q]].landmark_id == landmark]
        for target in lm_queries[: spec.junk_per_landmark]:
            src = records[row_of[target]]
            pid = f"p{counter:05d}"
            counter += 1
            records.append(
                PhotoRecord(
                    photo_id=pid,
                    user_id=src.user_id,
                    album_id=src.album_id,
                    landmark_id=src.landmark_id,
                    image_path=None,
                    is_junk_of=target,
                )
            )
            vectors.append(vectors[row_of[target]].copy())

    corpus = ingest_records(records)
    features = FeatureSet(
        [r.photo_id for r in records],
        np.asarray(vectors, dtype=np.float32),
    )
    truth = GroundTruth(
        prototypes=prototypes,
        landmark_ids=landmark_ids,
        query_photo_ids=query_ids,
        topic_of_landmark=topic_of_landmark,
    )
    return SynthResult(corpus=corpus, features=features, truth=truth)


def rasterize_blobs(
    result: SynthResult, out_dir, image_size: int = 64
) -> list[Path]:
    """Optional tiny blob images per photo, for descriptor-path and exporter
    testing. Landmark identity controls blob hue and placement."""
    from PIL import Image, ImageDraw

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lm_index = {lm: i for i, lm in enumerate(result.truth.landmark_ids)}
    n_lm = len(lm_index)
    paths = []
    base_seed = int(np.abs(result.truth.prototypes[0, 0] * 1000)) % 100000
    rng = generator(base_seed, "synth-raster")
    for pid in result.corpus.photo_order:
        rec = result.corpus.photos[pid]
        li = lm_index[rec.landmark_id]
        hue = int(255 * li / max(n_lm, 1))
        color = ((hue * 3) % 256, (255 - hue) % 256, (hue * 7 + 64) % 256)
        bg = ((hue * 5 + 128) % 256, (hue * 11) % 256, (255 - hue * 3) % 256)
        img = Image.new("RGB", (image_size, image_size), bg)
        draw = ImageDraw.Draw(img)
        cx = image_size * (0.3 + 0.4 * ((li * 37) % 16) / 16.0)
        cy = image_size * (0.3 + 0.4 * ((li * 53) % 16) / 16.0)
        radius = image_size * (0.15 + 0.1 * (li % 5) / 5.0)
        jitter = rng.normal(0, image_size * 0.02, 2)
        box = [
            cx - radius + jitter[0],
            cy - radius + jitter[1],
            cx + radius + jitter[0],
            cy + radius + jitter[1],
        ]
        draw.ellipse(box, fill=color)
        path = out / f"{pid}.png"
        img.save(path)
        paths.append(path)
    return paths


def write_queries(path, query_ids: list[str], header: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        if header:
            fp.write(f"# {header}\n")
        for pid in query_ids:
            fp.write(pid + "\n")


def read_queries(path) -> list[str]:
    out = []
    with open(path, "r", encoding="utf-8") as fp:
        for line in fp:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line)
    if not out:
        raise DataError("empty queries file")
    return out
