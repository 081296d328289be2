"""Per-photo descriptors, PCA decorrelation, and the binary feature codec.

The codec (magic ``MQLF``) is the interchange format between pipeline stages
and with the external deep-feature exporter: little-endian, header of
magic / version u32 / count u32 / dimension u32, then count*dimension float32
values row-major, then one (u16 length, UTF-8 bytes) photo-id record per row.
A producing stage may append an optional ``MQCH`` trailer carrying the config
hash; readers ignore its absence.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .errors import DataError, FormatError

MAGIC = b"MQLF"
HASH_MAGIC = b"MQCH"
CODEC_VERSION = 1

COLOR_BINS = 8          # per channel; joint histogram is 8*8*8 = 512 dims
GRAD_CELLS = 4          # 4x4 spatial grid
GRAD_BINS = 8           # orientation bins per cell
RAW_DIM = COLOR_BINS**3 + GRAD_CELLS * GRAD_CELLS * GRAD_BINS  # 640


@dataclass
class FeatureSet:
    """A matrix of per-photo feature rows with aligned photo ids."""

    photo_ids: list[str]
    values: np.ndarray  # (n, d) float32
    config_hash: str | None = None

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DataError("feature matrix must be 2-D")
        if len(self.photo_ids) != self.values.shape[0]:
            raise DataError(
                f"{len(self.photo_ids)} ids for {self.values.shape[0]} feature rows"
            )

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def index(self) -> dict[str, int]:
        return {pid: i for i, pid in enumerate(self.photo_ids)}

    def subset(self, photo_ids: Sequence[str]) -> "FeatureSet":
        idx = self.index()
        try:
            rows = [idx[p] for p in photo_ids]
        except KeyError as exc:
            raise DataError(f"no feature row for photo {exc.args[0]!r}") from None
        return FeatureSet(list(photo_ids), self.values[rows], self.config_hash)


def write_features(
    path_or_fp, feature_set: FeatureSet, config_hash: str | None = None
) -> None:
    """Write a FeatureSet in the binary codec (float32, bit-exact round trip)."""
    values = np.ascontiguousarray(feature_set.values, dtype="<f4")
    n, d = values.shape
    if config_hash is None:
        config_hash = feature_set.config_hash

    def emit(fp: BinaryIO):
        fp.write(MAGIC)
        fp.write(struct.pack("<III", CODEC_VERSION, n, d))
        fp.write(values.tobytes(order="C"))
        for pid in feature_set.photo_ids:
            raw = pid.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise DataError(f"photo id too long: {pid[:32]}...")
            fp.write(struct.pack("<H", len(raw)))
            fp.write(raw)
        if config_hash is not None:
            fp.write(HASH_MAGIC)
            fp.write(config_hash[:16].ljust(16, "0").encode("ascii"))

    if hasattr(path_or_fp, "write"):
        emit(path_or_fp)
    else:
        with open(path_or_fp, "wb") as fp:
            emit(fp)


def _read_exact(fp: BinaryIO, n: int, what: str) -> bytes:
    buf = fp.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated feature file: expected {n} bytes of {what}")
    return buf


def read_features(path_or_fp) -> FeatureSet:
    """Read a codec file; raises FormatError on magic/size violations."""

    def parse(fp: BinaryIO) -> FeatureSet:
        magic = fp.read(4)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, n, d = struct.unpack("<III", _read_exact(fp, 12, "header"))
        if version != CODEC_VERSION:
            raise FormatError(f"unsupported codec version {version}")
        values = np.frombuffer(
            _read_exact(fp, 4 * n * d, "values"), dtype="<f4"
        ).reshape(n, d)
        ids = []
        for _ in range(n):
            (length,) = struct.unpack("<H", _read_exact(fp, 2, "id record"))
            ids.append(_read_exact(fp, length, "id bytes").decode("utf-8"))
        config_hash = None
        trailer = fp.read(4)
        if trailer == HASH_MAGIC:
            config_hash = _read_exact(fp, 16, "config hash").decode("ascii")
        elif trailer:
            # not a trailer: another codec block follows, rewind for the caller
            fp.seek(-len(trailer), 1)
        return FeatureSet(ids, values.copy(), config_hash)

    if hasattr(path_or_fp, "read"):
        return parse(path_or_fp)
    with open(path_or_fp, "rb") as fp:
        return parse(fp)


def concat_features(parts: Sequence[FeatureSet]) -> FeatureSet:
    """Merge feature sets; dimensions must agree."""
    if not parts:
        raise DataError("nothing to merge")
    dims = {p.dim for p in parts}
    if len(dims) != 1:
        raise FormatError(f"dimension mismatch on merge: {sorted(dims)}")
    ids = [pid for p in parts for pid in p.photo_ids]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate photo ids across merged feature sets")
    return FeatureSet(ids, np.vstack([p.values for p in parts]))


# ---------------------------------------------------------------------------
# Baseline descriptor
# ---------------------------------------------------------------------------

def compute_baseline_descriptor(image: np.ndarray) -> np.ndarray:
    """Fixed 640-dim descriptor of a decoded RGB raster.

    Concatenation of an 8x8x8 joint RGB color histogram (512 dims,
    l1-normalized) and a 4x4-cell, 8-bin gradient-orientation histogram
    (128 dims, l2-normalized as one block). The color half is invariant to
    pixel order; the gradient half carries coarse spatial structure.
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"expected an RGB raster (h, w, 3), got shape {img.shape}")
    h, w = img.shape[:2]
    if h < 8 or w < 8:
        raise DataError(f"image too small ({h}x{w}), need at least 8x8")
    px = img.astype(np.float64)
    if not np.isfinite(px).all():
        raise DataError("image contains non-finite values")

    # color half: quantize each channel to 8 levels, count joint bins
    q = np.clip((px * COLOR_BINS / 256.0).astype(np.int64), 0, COLOR_BINS - 1)
    joint = (q[..., 0] * COLOR_BINS + q[..., 1]) * COLOR_BINS + q[..., 2]
    color = np.bincount(joint.ravel(), minlength=COLOR_BINS**3).astype(np.float64)
    color /= color.sum()

    # gradient half: orientation histogram of the luma channel per cell
    luma = 0.299 * px[..., 0] + 0.587 * px[..., 1] + 0.114 * px[..., 2]
    gy, gx = np.gradient(luma)
    mag = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx)  # [-pi, pi]
    obin = np.clip(
        ((theta + np.pi) * (GRAD_BINS / (2.0 * np.pi))).astype(np.int64),
        0,
        GRAD_BINS - 1,
    )
    grad = np.zeros((GRAD_CELLS, GRAD_CELLS, GRAD_BINS))
    row_edges = np.linspace(0, h, GRAD_CELLS + 1).astype(int)
    col_edges = np.linspace(0, w, GRAD_CELLS + 1).astype(int)
    for ci in range(GRAD_CELLS):
        for cj in range(GRAD_CELLS):
            sl = (slice(row_edges[ci], row_edges[ci + 1]),
                  slice(col_edges[cj], col_edges[cj + 1]))
            grad[ci, cj] = np.bincount(
                obin[sl].ravel(), weights=mag[sl].ravel(), minlength=GRAD_BINS
            )
    grad = grad.ravel()
    norm = np.linalg.norm(grad)
    if norm > 0:
        grad = grad / norm
    return np.concatenate([color, grad])


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

@dataclass
class PcaModel:
    """Orthonormal projection fitted to decorrelate descriptors."""

    mean: np.ndarray                # (d_raw,)
    basis: np.ndarray               # (d_raw, d_pca), orthonormal columns
    explained_variance: np.ndarray  # (d_pca,)


def fit_pca(values: np.ndarray, n_components: int) -> PcaModel:
    """Fit PCA by SVD of the centered sample matrix.

    Sign convention: each basis column's largest-magnitude entry is positive,
    which makes the fit deterministic across LAPACK builds.
    """
    x = np.asarray(values, dtype=np.float64)
    n, d = x.shape
    if n_components < 1:
        raise DataError("n_components must be >= 1")
    if n_components > d:
        raise DataError(f"n_components {n_components} exceeds dimension {d}")
    if n <= n_components:
        raise DataError(f"need more than {n_components} samples, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-10)) if s.size and s[0] > 0 else 0
    if rank < n_components:
        raise DataError(
            f"data rank {rank} below requested {n_components} components"
        )
    basis = vt[:n_components].T.copy()
    # deterministic sign: dominant entry of each column positive
    flips = np.sign(basis[np.abs(basis).argmax(axis=0), np.arange(n_components)])
    basis *= flips
    explained = (s[:n_components] ** 2) / (n - 1)
    return PcaModel(mean=mean, basis=basis, explained_variance=explained)


def project_pca(model: PcaModel, values: np.ndarray) -> np.ndarray:
    """Project one vector or a matrix of rows onto the PCA basis."""
    x = np.asarray(values, dtype=np.float64)
    if x.shape[-1] != model.mean.shape[0]:
        raise DataError(
            f"dimension {x.shape[-1]} does not match PCA input {model.mean.shape[0]}"
        )
    return (x - model.mean) @ model.basis


def save_pca(path, model: PcaModel, config_hash: str | None = None) -> None:
    """Serialize a PcaModel as three codec blocks: mean, variance, basis rows."""
    with open(path, "wb") as fp:
        write_features(fp, FeatureSet(["mean"], model.mean[None, :].astype(np.float32)))
        write_features(
            fp,
            FeatureSet(
                ["explained_variance"],
                model.explained_variance[None, :].astype(np.float32),
            ),
        )
        basis = FeatureSet(
            [f"pc{i}" for i in range(model.basis.shape[1])],
            model.basis.T.astype(np.float32),
        )
        write_features(fp, basis, config_hash=config_hash)


def load_pca(path) -> PcaModel:
    with open(path, "rb") as fp:
        mean = read_features(fp).values[0].astype(np.float64)
        variance = read_features(fp).values[0].astype(np.float64)
        basis = read_features(fp).values.astype(np.float64).T
    return PcaModel(mean=mean, basis=basis, explained_variance=variance)
