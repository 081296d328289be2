"""User-photo matrix construction, projected-SGD factorization, query
expansion scoring, and pseudo-class minting over photo latent factors.

The factorization minimizes ``||M - PV||_F^2 + reg*(||P||_F^2 + ||V||_F^2)``
with non-negativity enforced by clamping after every update. The epoch loop
backtracks (revert and halve the step, deterministically) whenever the full
objective would increase, so the recorded trace is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import cluster, kernels
from .errors import DataError, NumericalError
from .features import FeatureSet, read_features, write_features
from .rng import SplitMix64, child_seed, generator

MAX_BACKTRACKS = 12


@dataclass
class InteractionMatrix:
    """Sparse binary user-photo uploads over a user community."""

    user_ids: list[str]
    photo_ids: list[str]
    rows: np.ndarray  # int32 user index per 1-cell
    cols: np.ndarray  # int32 photo index per 1-cell

    def __post_init__(self):
        self.user_index = {u: i for i, u in enumerate(self.user_ids)}
        self.photo_index = {p: i for i, p in enumerate(self.photo_ids)}
        if len(self.rows) != len(self.cols):
            raise DataError("row/col index arrays differ in length")
        if len(self.rows) and (
            self.rows.max() >= len(self.user_ids) or self.cols.max() >= len(self.photo_ids)
        ):
            raise DataError("interaction indices out of bounds")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.user_ids), len(self.photo_ids)

    @property
    def nnz(self) -> int:
        return len(self.rows)

    def dense(self) -> np.ndarray:
        m = np.zeros(self.shape)
        m[self.rows, self.cols] = 1.0
        return m


def build_matrix(
    corpus,
    community: Iterable[str],
    topic_set,
    photo_topics: dict[str, int],
    restrict_photos: set[str] | None = None,
) -> InteractionMatrix:
    """Rows are community users; columns their photos with dominant topic in
    the set (optionally restricted, e.g. to exclude the query photo)."""
    users = sorted(set(community))
    if not users:
        raise DataError("empty user community")
    topics = topic_set.topics if hasattr(topic_set, "topics") else set(topic_set)
    user_set = set(users)
    cells: list[tuple[str, str]] = []
    for pid in corpus.photo_order:
        rec = corpus.photos[pid]
        if rec.user_id not in user_set:
            continue
        if photo_topics.get(pid) not in topics:
            continue
        if restrict_photos is not None and pid not in restrict_photos:
            continue
        cells.append((rec.user_id, pid))
    photos = sorted({pid for _, pid in cells})
    if len(users) < 2 or len(photos) < 2:
        raise DataError(
            f"degenerate interaction matrix ({len(users)} users x "
            f"{len(photos)} photos); lower the topic threshold to widen the community"
        )
    uidx = {u: i for i, u in enumerate(users)}
    pidx = {p: i for i, p in enumerate(photos)}
    rows = np.array([uidx[u] for u, _ in cells], dtype=np.int32)
    cols = np.array([pidx[p] for _, p in cells], dtype=np.int32)
    return InteractionMatrix(users, photos, rows, cols)


@dataclass
class FactorModel:
    """Non-negative factor matrices with the recorded objective trace."""

    user_ids: list[str]
    photo_ids: list[str]
    p: np.ndarray        # (n_users, L)
    v: np.ndarray        # (L, n_photos)
    reg: float
    trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.user_index = {u: i for i, u in enumerate(self.user_ids)}
        self.photo_index = {p: i for i, p in enumerate(self.photo_ids)}

    @property
    def n_factors(self) -> int:
        return self.p.shape[1]


def _blocked_csr(
    n_users: int, rows: np.ndarray, cols: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """CSR over cells the negative sampler must not draw."""
    order = np.lexsort((cols, rows))
    sorted_rows = rows[order]
    sorted_cols = cols[order].astype(np.int32)
    row_ptr = np.zeros(n_users + 1, dtype=np.int64)
    np.add.at(row_ptr, sorted_rows + 1, 1)
    return np.cumsum(row_ptr), sorted_cols


def _objective(
    p: np.ndarray,
    vt: np.ndarray,
    pos_rows: np.ndarray,
    pos_cols: np.ndarray,
    holdout_rows: np.ndarray,
    holdout_cols: np.ndarray,
    reg: float,
    neg_weight: float,
) -> float:
    """Sampling-weighted reconstruction objective over training cells.

    sum_pos (1 - pred)^2 + neg_weight * sum_zero pred^2 + reg*(||P||^2+||V||^2),
    where neg_weight is each zero cell's expected per-epoch sampling coverage
    (neg_per_pos * nnz / n_zero_cells). At coverage 1 this is exactly the
    dense Frobenius objective; below 1 it is the objective the sampled SGD
    actually minimizes. Holdout cells are excluded entirely.
    """
    gram = (p.T @ p) * (vt.T @ vt)
    zero_sq = float(gram.sum())  # ||PV||_F^2 over every cell
    pos_pred = np.einsum("ij,ij->i", p[pos_rows], vt[pos_cols])
    zero_sq -= float((pos_pred**2).sum())
    if len(holdout_rows):
        hold_pred = np.einsum("ij,ij->i", p[holdout_rows], vt[holdout_cols])
        zero_sq -= float((hold_pred**2).sum())
    total = float(((1.0 - pos_pred) ** 2).sum()) + neg_weight * zero_sq
    total += reg * (float((p**2).sum()) + float((vt**2).sum()))
    return total


def factorize(
    matrix: InteractionMatrix,
    n_factors: int,
    reg: float,
    lr0: float = 0.05,
    epochs: int = 60,
    seed: int = 0,
    neg_per_pos: int = 1,
    holdout: Iterable[tuple[int, int]] | None = None,
    eval_hook: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
    objective_mode: str = "sampled",
) -> FactorModel:
    """Projected SGD with a decaying step, lr_t = lr0 / (1 + t/epochs).

    holdout cells (user idx, photo idx) are excluded from both the positive
    pass and negative sampling; eval_hook(epoch, P, V) fires at epoch 0
    (initialization) and after every accepted epoch.

    objective_mode selects the guarded/reported trace: "sampled" weights each
    zero cell by its per-epoch sampling coverage (what the sampled SGD
    actually minimizes; right for sparse matrices), "dense" is the full
    Frobenius objective with every zero cell at weight 1 (pair it with a
    neg_per_pos near n_zeros/nnz so the SGD direction tracks it).
    """
    if n_factors < 1:
        raise DataError("latent dimension must be >= 1")
    if reg < 0:
        raise DataError("regularization weight must be >= 0")
    if epochs < 1:
        raise DataError("epochs must be >= 1")
    if objective_mode not in ("sampled", "dense"):
        raise DataError(f"unknown objective_mode {objective_mode!r}")

    n_users, n_photos = matrix.shape
    hold = sorted(set(holdout)) if holdout else []
    hold_rows = np.array([h[0] for h in hold], dtype=np.int32)
    hold_cols = np.array([h[1] for h in hold], dtype=np.int32)
    hold_set = set(hold)
    train_mask = np.array(
        [
            (int(r), int(c)) not in hold_set
            for r, c in zip(matrix.rows, matrix.cols)
        ],
        dtype=bool,
    )
    pos_rows = matrix.rows[train_mask].astype(np.int32)
    pos_cols = matrix.cols[train_mask].astype(np.int32)
    if len(pos_rows) == 0:
        raise DataError("no observed cells left to train on")

    blocked_rows = np.concatenate([pos_rows, hold_rows])
    blocked_cols = np.concatenate([pos_cols, hold_cols])
    row_ptr, csr_cols = _blocked_csr(n_users, blocked_rows, blocked_cols)
    n_zero_cells = n_users * n_photos - len(blocked_rows)
    if objective_mode == "dense":
        neg_weight = 1.0
    else:
        neg_weight = (
            neg_per_pos * len(pos_rows) / n_zero_cells if n_zero_cells > 0 else 0.0
        )

    rng = generator(seed, "mf-init")
    scale = np.sqrt(1.0 / n_factors)
    p = rng.uniform(0.0, scale, (n_users, n_factors))
    vt = rng.uniform(0.0, scale, (n_photos, n_factors))
    state = SplitMix64(child_seed(seed, "mf-sgd")).state

    if eval_hook is not None:
        eval_hook(0, p, np.ascontiguousarray(vt.T))
    trace = [
        _objective(p, vt, pos_rows, pos_cols, hold_rows, hold_cols, reg, neg_weight)
    ]
    if not np.isfinite(trace[0]):
        raise NumericalError("non-finite objective at initialization")

    for t in range(epochs):
        lr = lr0 / (1.0 + t / epochs)
        accepted = False
        p_start, vt_start, state_start = p.copy(), vt.copy(), state
        for _ in range(MAX_BACKTRACKS):
            state = kernels.sgd_epoch(
                p, vt, pos_rows, pos_cols, row_ptr, csr_cols,
                lr, reg, neg_per_pos, state_start,
            )
            obj = _objective(
                p, vt, pos_rows, pos_cols, hold_rows, hold_cols, reg, neg_weight
            )
            if not np.isfinite(obj):
                raise NumericalError(
                    f"objective diverged at epoch {t}; try a smaller initial step"
                )
            if obj <= trace[-1]:
                accepted = True
                break
            p[:], vt[:] = p_start, vt_start
            lr *= 0.5
        if not accepted:
            # no step length makes progress this epoch: keep the iterate,
            # advance the stream, record an unchanged objective
            p[:], vt[:] = p_start, vt_start
            obj = trace[-1]
        trace.append(obj)
        if eval_hook is not None:
            eval_hook(t + 1, p, np.ascontiguousarray(vt.T))

    return FactorModel(
        user_ids=list(matrix.user_ids),
        photo_ids=list(matrix.photo_ids),
        p=p,
        v=np.ascontiguousarray(vt.T),
        reg=reg,
        trace=trace,
    )


def confidence_scores(model: FactorModel, query_user: str) -> np.ndarray:
    """Inner-product relevance of every photo to the query user, aligned with
    model.photo_ids."""
    idx = model.user_index.get(query_user)
    if idx is None:
        raise DataError(f"unknown user {query_user!r}")
    return model.p[idx] @ model.v


@dataclass
class MultiQuerySet:
    query_photo_id: str
    expanded_ids: list[str]
    scores: list[float]
    short_pool: bool = False

    def all_ids(self) -> list[str]:
        """Query anchor first, then the expansion in score order."""
        return [self.query_photo_id] + self.expanded_ids


def expand_query(
    photo_ids: list[str],
    scores: np.ndarray,
    k: int,
    query_photo_id: str,
) -> MultiQuerySet:
    """Top-k photos by confidence score (ties by photo id), query excluded
    from the k then prepended as the set's anchor."""
    if k < 1:
        raise DataError("expansion size k must be >= 1")
    if len(photo_ids) != len(scores):
        raise DataError("scores are not aligned with photo ids")
    score_of = {pid: float(s) for pid, s in zip(photo_ids, scores)}
    ranked = sorted(
        (pid for pid in photo_ids if pid != query_photo_id),
        key=lambda pid: (-score_of[pid], pid),
    )
    chosen = ranked[:k]
    return MultiQuerySet(
        query_photo_id=query_photo_id,
        expanded_ids=chosen,
        scores=[score_of[pid] for pid in chosen],
        short_pool=len(chosen) < k,
    )


@dataclass
class PseudoClassAssignment:
    labels: dict[str, int]  # photo_id -> class index in [0, n_classes)
    n_classes: int
    centroids: np.ndarray   # (n_classes, L)


def pseudo_classes(model: FactorModel, n_classes: int, seed: int) -> PseudoClassAssignment:
    """k-means over photo latent factors; clusters become supervision labels."""
    points = model.v.T  # (n_photos, L)
    if n_classes > points.shape[0]:
        raise DataError(
            f"cannot mint {n_classes} pseudo-classes from {points.shape[0]} photos"
        )
    result = cluster.kmeans(points, n_classes, seed=child_seed(seed, "pseudo"))
    labels = {pid: int(l) for pid, l in zip(model.photo_ids, result.labels)}
    return PseudoClassAssignment(
        labels=labels, n_classes=n_classes, centroids=result.centroids
    )


def write_pseudo_labels(path, assignment: PseudoClassAssignment, header: str | None = None) -> None:
    """Pseudo-label export: ``photo_id\\tclass_index`` lines."""
    with open(path, "w", encoding="utf-8") as fp:
        if header:
            fp.write(f"# {header}\n")
        for pid in sorted(assignment.labels):
            fp.write(f"{pid}\t{assignment.labels[pid]}\n")


def read_pseudo_labels(path) -> dict[str, int]:
    labels: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"pseudo-label line {lineno}: malformed record")
            labels[parts[0]] = int(parts[1])
    if not labels:
        raise DataError("empty pseudo-label file")
    return labels


def save_factor_model(path, model: FactorModel, config_hash: str | None = None) -> None:
    """Two codec blocks: user rows of P, then photo columns of V (as rows)."""
    with open(path, "wb") as fp:
        write_features(
            fp, FeatureSet(list(model.user_ids), model.p.astype(np.float32))
        )
        write_features(
            fp,
            FeatureSet(list(model.photo_ids), model.v.T.astype(np.float32)),
            config_hash=config_hash,
        )


def load_factor_model(path, reg: float = 0.0) -> FactorModel:
    with open(path, "rb") as fp:
        p_set = read_features(fp)
        v_set = read_features(fp)
    return FactorModel(
        user_ids=list(p_set.photo_ids),
        photo_ids=list(v_set.photo_ids),
        p=p_set.values.astype(np.float64),
        v=v_set.values.astype(np.float64).T,
        reg=reg,
    )
