"""AP, mAP, and precision-recall under the junk-aware retrieval protocol.

AP(q) = (1/L_q) * sum_{r=1..n} P_q(r) * theta_q(r), where junk entries
(duplicates of the query) are deleted from the list before rank indexing,
theta flags relevant entries, P_q(r) is precision at rank r, and
L_q = min(|relevant in database|, n) so a short ranked list can still reach 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DataError
from .retrieval import RankedList


def _as_ids(ranked) -> list[str]:
    if isinstance(ranked, RankedList):
        return ranked.ids()
    return list(ranked)


def average_precision(
    ranked,
    relevant: Iterable[str],
    junk: Iterable[str] = (),
    n: int | None = None,
) -> float:
    """AP of one ranked list against a relevant set, junk removed first.

    ``relevant`` is the set of ground-truth neighbors present in the database;
    junk ids are excluded from it (and from the list) per the protocol.
    """
    ids = _as_ids(ranked)
    junk_set = set(junk)
    relevant_set = set(relevant) - junk_set
    if not relevant_set:
        raise DataError("empty relevant set")
    if n is None:
        n = len(ids)
    filtered = [pid for pid in ids if pid not in junk_set]
    capacity = min(len(relevant_set), n)
    hits = 0
    ap = 0.0
    for r, pid in enumerate(filtered[:n], 1):
        if pid in relevant_set:
            hits += 1
            ap += hits / r
    return ap / capacity


def mean_ap(aps: Sequence[float]) -> float:
    """Arithmetic mean of the per-query APs for one landmark."""
    if not aps:
        raise DataError("no AP values to average")
    return sum(aps) / len(aps)


def aggregate(landmark_maps: Sequence[float]) -> float:
    """Arithmetic mean over per-landmark mAPs."""
    if not landmark_maps:
        raise DataError("no landmark mAPs to aggregate")
    return sum(landmark_maps) / len(landmark_maps)


def precision_recall_curve(
    ranked,
    relevant: Iterable[str],
    junk: Iterable[str] = (),
) -> list[tuple[float, float]]:
    """One (recall, precision) point per rank after junk removal."""
    ids = _as_ids(ranked)
    junk_set = set(junk)
    relevant_set = set(relevant) - junk_set
    if not relevant_set:
        raise DataError("empty relevant set")
    filtered = [pid for pid in ids if pid not in junk_set]
    points = []
    hits = 0
    for r, pid in enumerate(filtered, 1):
        if pid in relevant_set:
            hits += 1
        points.append((hits / len(relevant_set), hits / r))
    return points


@dataclass
class EvalReport:
    per_query: list[tuple[str, str, float]]  # (query_id, landmark, AP)
    per_landmark: dict[str, float]           # landmark -> mAP
    overall: float
    protocol_n: int
    queries_per_landmark: int
    pool_mode: str = "fv"
    pr_curves: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    def render_text(self) -> str:
        """Landmark rows with mAP columns, mirroring a results table."""
        lines = [
            f"# protocol: n={self.protocol_n} queries_per_landmark={self.queries_per_landmark} pool={self.pool_mode}",
            f"{'landmark':<24}{'queries':>8}{'mAP':>12}",
        ]
        for landmark in sorted(self.per_landmark):
            count = sum(1 for _, lm, _ in self.per_query if lm == landmark)
            lines.append(
                f"{landmark:<24}{count:>8}{self.per_landmark[landmark]:>12.6f}"
            )
        lines.append(f"{'average':<24}{len(self.per_query):>8}{self.overall:>12.6f}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "protocol": {
                "n": self.protocol_n,
                "queries_per_landmark": self.queries_per_landmark,
                "pool_mode": self.pool_mode,
            },
            "per_query": [
                {"query": q, "landmark": lm, "ap": ap} for q, lm, ap in self.per_query
            ],
            "per_landmark_map": dict(sorted(self.per_landmark.items())),
            "average_map": self.overall,
        }


def build_report(
    query_results: list[tuple[str, str, float]],
    protocol_n: int,
    queries_per_landmark: int,
    pool_mode: str = "fv",
    pr_curves: dict[str, list[tuple[float, float]]] | None = None,
) -> EvalReport:
    per_landmark: dict[str, list[float]] = {}
    for _, landmark, ap in query_results:
        per_landmark.setdefault(landmark, []).append(ap)
    landmark_maps = {lm: mean_ap(aps) for lm, aps in per_landmark.items()}
    return EvalReport(
        per_query=list(query_results),
        per_landmark=landmark_maps,
        overall=aggregate(list(landmark_maps.values())),
        protocol_n=protocol_n,
        queries_per_landmark=queries_per_landmark,
        pool_mode=pool_mode,
        pr_curves=pr_curves or {},
    )
