"""Ranking metrics over a candidate ranking and a set of relevant ids.

Rankings may be :class:`~expertbench.rankers.Ranking` objects or plain id
sequences (then treated as strictly decreasing scores).
"""

from __future__ import annotations

from collections.abc import Collection
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .rankers import Ranking, restrict_to


def _as_ranking(ranking) -> Ranking:
    if isinstance(ranking, Ranking):
        return ranking
    ids = tuple(ranking)
    return Ranking(ids, -np.arange(len(ids), dtype=np.float64))


def relevance_vector(ranking, relevant: Collection[str]) -> np.ndarray:
    ranking = _as_ranking(ranking)
    return np.fromiter((c in relevant for c in ranking.ids), dtype=bool, count=len(ranking))


def precision_at_k(ranking, relevant: Collection[str], k: int = 10) -> float:
    """Relevant hits in the top ``k`` divided by ``k`` (even if fewer are ranked)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rel = relevance_vector(ranking, relevant)
    return float(rel[:k].sum()) / k


def average_precision(ranking, relevant: Collection[str]) -> float | None:
    """Mean precision at the rank of each relevant item; unranked ones count 0.

    Undefined (``None``) when ``relevant`` is empty.
    """
    if not relevant:
        return None
    rel = relevance_vector(ranking, relevant)
    positions = np.flatnonzero(rel) + 1
    hits = np.arange(1, len(positions) + 1)
    return float(np.sum(hits / positions)) / len(relevant)


def first_relevant_rank(ranking, relevant: Collection[str]) -> int | None:
    rel = relevance_vector(ranking, relevant)
    hits = np.flatnonzero(rel)
    return int(hits[0]) + 1 if len(hits) else None


def roc_auc(ranking, relevant: Collection[str]) -> float | None:
    """Probability that a random relevant item outscores a random irrelevant
    one, ties counting one half.  ``None`` if either class is empty."""
    ranking = _as_ranking(ranking)
    rel = relevance_vector(ranking, relevant)
    n_pos = int(rel.sum())
    n_neg = len(rel) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(ranking.scores, method="average")
    u = ranks[rel].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(ranking, relevant: Collection[str]) -> list[tuple[float, float]]:
    """ROC points ``(fpr, tpr)`` at each distinct score threshold."""
    ranking = _as_ranking(ranking)
    rel = relevance_vector(ranking, relevant)
    n_pos = int(rel.sum())
    n_neg = len(rel) - n_pos
    if n_pos == 0 or n_neg == 0:
        return []
    points = [(0.0, 0.0)]
    tp = fp = 0
    scores = ranking.scores
    for i, r in enumerate(rel):
        tp += r
        fp += not r
        if i + 1 == len(rel) or scores[i + 1] != scores[i]:
            points.append((fp / n_neg, tp / n_pos))
    return points


@dataclass
class QueryScore:
    query_id: str
    topic: str
    p_at_k: float
    average_precision: float | None
    first_relevant_rank: int | None
    reciprocal_rank: float | None
    roc_auc: float | None
    converged: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_ranking(ranking, experts_of_topic: Collection[str],
                     expert_pool: Collection[str], k: int = 10, *,
                     query_id: str = "", topic: str = "") -> QueryScore:
    """Score a ranking of the topic's experts among the whole expert pool."""
    ranking = restrict_to(_as_ranking(ranking), expert_pool)
    relevant = frozenset(experts_of_topic)
    frr = first_relevant_rank(ranking, relevant)
    return QueryScore(
        query_id=query_id,
        topic=topic,
        p_at_k=precision_at_k(ranking, relevant, k),
        average_precision=average_precision(ranking, relevant),
        first_relevant_rank=frr,
        reciprocal_rank=None if frr is None else 1.0 / frr,
        roc_auc=roc_auc(ranking, relevant),
        converged=ranking.converged,
    )
