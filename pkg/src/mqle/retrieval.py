"""Multi-query compaction, Euclidean ranking, and the AQE baseline.

Ranking is an exact linear scan (desk scale; no approximate index), with ties
broken by photo id so identical inputs always yield identical lists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class RankedList:
    query_photo_id: str
    entries: list[tuple[str, float]]  # (photo_id, distance), ascending
    n: int

    def ids(self) -> list[str]:
        return [pid for pid, _ in self.entries]


def _check_dims(query: np.ndarray, matrix: np.ndarray) -> None:
    if query.shape[-1] != matrix.shape[1]:
        raise DataError(
            f"query dimension {query.shape[-1]} does not match database {matrix.shape[1]}"
        )


def compact_multiquery(
    query_vec: np.ndarray,
    expansion_ids: list[str],
    expansion_vecs: np.ndarray,
    s: int,
) -> list[str]:
    """The s expansion photos nearest the query in embedded space.

    Ties break by photo id; a pool smaller than s is kept whole.
    """
    if s < 1:
        raise DataError("compaction size s must be >= 1")
    if len(expansion_ids) != expansion_vecs.shape[0]:
        raise DataError("expansion ids are not aligned with vectors")
    if not expansion_ids:
        return []
    q = np.asarray(query_vec, dtype=np.float64)
    _check_dims(q, expansion_vecs)
    dists = np.linalg.norm(expansion_vecs - q[None, :], axis=1)
    order = sorted(range(len(expansion_ids)), key=lambda i: (dists[i], expansion_ids[i]))
    return [expansion_ids[i] for i in order[:s]]


def rank(
    query_vec: np.ndarray,
    db_ids: list[str],
    db_matrix: np.ndarray,
    n: int,
    query_photo_id: str = "",
    exclude: set[str] | None = None,
) -> RankedList:
    """Ascending Euclidean distances over the database, truncated to n.

    The query's own database entry (and any explicit exclusions) never appear.
    """
    if n < 1:
        raise DataError("cutoff n must be >= 1")
    if len(db_ids) != db_matrix.shape[0]:
        raise DataError("database ids are not aligned with the matrix")
    q = np.asarray(query_vec, dtype=np.float64)
    _check_dims(q, db_matrix)
    skip = set(exclude) if exclude else set()
    if query_photo_id:
        skip.add(query_photo_id)
    diffs = db_matrix - q[None, :]
    dists = np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
    order = sorted(
        (i for i, pid in enumerate(db_ids) if pid not in skip),
        key=lambda i: (dists[i], db_ids[i]),
    )
    entries = [(db_ids[i], float(dists[i])) for i in order[:n]]
    return RankedList(query_photo_id=query_photo_id, entries=entries, n=n)


def aqe_requery(
    initial: RankedList,
    db_index: dict[str, np.ndarray],
    query_vec: np.ndarray,
    k: int,
) -> np.ndarray:
    """Average-query-expansion: mean of the query vector and the top-k
    retrieved vectors, recast as a new query representation."""
    if k < 1:
        raise DataError("AQE depth k must be >= 1")
    if k > len(initial.entries):
        raise DataError(
            f"AQE depth {k} exceeds ranked list length {len(initial.entries)}"
        )
    stack = [np.asarray(query_vec, dtype=np.float64)]
    for pid, _ in initial.entries[:k]:
        stack.append(np.asarray(db_index[pid], dtype=np.float64))
    return np.mean(stack, axis=0)


def write_ranked_list(path, ranked: RankedList, config_hash: str | None = None) -> None:
    """Text lines ``rank  photo_id  distance`` with 9-significant-digit distances."""
    with open(path, "w", encoding="utf-8") as fp:
        if config_hash:
            fp.write(f"# config_hash={config_hash}\n")
        fp.write(f"# query={ranked.query_photo_id}\n")
        for r, (pid, dist) in enumerate(ranked.entries, 1):
            fp.write(f"{r}\t{pid}\t{dist:.9g}\n")


def ranked_list_json(ranked: RankedList) -> dict:
    return {
        "query": ranked.query_photo_id,
        "n": ranked.n,
        "entries": [
            {"rank": r, "photo_id": pid, "distance": float(f"{dist:.9g}")}
            for r, (pid, dist) in enumerate(ranked.entries, 1)
        ],
    }


def read_ranked_list(path) -> RankedList:
    entries: list[tuple[str, float]] = []
    query = ""
    with open(path, "r", encoding="utf-8") as fp:
        for line in fp:
            line = line.rstrip("\n")
            if line.startswith("# query="):
                query = line.split("=", 1)[1]
                continue
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"malformed ranked-list line: {line!r}")
            entries.append((parts[1], float(parts[2])))
    return RankedList(query_photo_id=query, entries=entries, n=len(entries))
