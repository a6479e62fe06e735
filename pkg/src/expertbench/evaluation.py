"""Topic-query and document-query evaluation protocols and their reports."""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Dataset
from .metrics import QueryScore, evaluate_ranking
from .rankers import BaseRanker
from .validation import check_dataset

logger = logging.getLogger(__name__)

PROTOCOLS = ("topic", "document")

# report key -> QueryScore attribute, in table order
METRICS = {
    "auc": "roc_auc",
    "p_at_k": "p_at_k",
    "ap": "average_precision",
    "rr": "first_relevant_rank",
    "reciprocal_rank": "reciprocal_rank",
}


def aggregate(values: Sequence[float | None], topics: Sequence[str] | None = None) -> dict:
    """Mean and population STD of the defined values.

    With ``topics``, values are first averaged within each topic and the
    spread of those topic means is reported as ``topic_std``.
    """
    defined = [(v, i) for i, v in enumerate(values) if v is not None]
    out = {"n": len(defined), "excluded": len(values) - len(defined)}
    arr = np.array([v for v, _ in defined], dtype=np.float64)
    out["mean"] = float(arr.mean()) if len(arr) else None
    out["std"] = float(arr.std()) if len(arr) else None
    if topics is not None:
        groups: dict[str, list[float]] = {}
        for v, i in defined:
            groups.setdefault(topics[i], []).append(v)
        means = {t: float(np.mean(vs)) for t, vs in sorted(groups.items())}
        tm = np.array(list(means.values()), dtype=np.float64)
        out["topic_means"] = means
        out["topic_mean"] = float(tm.mean()) if len(tm) else None
        out["topic_std"] = float(tm.std()) if len(tm) else None
    return out


@dataclass
class EvalReport:
    protocol: str
    ranker: str
    representation: str
    k: int
    queries: list[QueryScore] = field(default_factory=list)
    skipped_topics: list[str] = field(default_factory=list)

    def summary(self) -> dict[str, dict]:
        topics = [q.topic for q in self.queries]
        return {
            key: aggregate([getattr(q, attr) for q in self.queries], topics)
            for key, attr in METRICS.items()
        }

    @property
    def non_converged(self) -> int:
        return sum(not q.converged for q in self.queries)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "ranker": self.ranker,
            "representation": self.representation,
            "k": self.k,
            "n_queries": len(self.queries),
            "non_converged": self.non_converged,
            "skipped_topics": list(self.skipped_topics),
            "summary": self.summary(),
            "queries": [q.to_dict() for q in self.queries],
        }

    @classmethod
    def from_dict(cls, data: dict) -> EvalReport:
        return cls(
            protocol=data["protocol"],
            ranker=data["ranker"],
            representation=data["representation"],
            k=data["k"],
            queries=[QueryScore(**q) for q in data["queries"]],
            skipped_topics=list(data.get("skipped_topics", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, ensure_ascii=False) + "\n"

    def write_json(self, path) -> Path:
        return write_atomic(path, self.to_json())


def load_report(path) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        return EvalReport.from_dict(json.load(fh))


def write_atomic(path, content: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)
    return path


def _ready(ranker: BaseRanker, dataset: Dataset) -> BaseRanker:
    check_dataset(dataset)
    if not hasattr(ranker, "doc_vectors_"):
        return ranker.fit(dataset)
    if ranker.dataset_ is not dataset and ranker.dataset_ != dataset:
        raise ValueError("ranker was fit on a different dataset")
    return ranker


def run_topic_query(dataset: Dataset, ranker: BaseRanker, k: int = 10) -> EvalReport:
    """One query per topic: the topic naming, scored against its experts."""
    ranker = _ready(ranker, dataset)
    pool = dataset.experts_all
    report = EvalReport("topic", ranker.name, ranker.representation_.describe(), k)
    for topic in sorted(dataset.topics):
        experts = dataset.topics[topic]
        if not experts:
            logger.warning("skipping topic %r: empty expert set", topic)
            report.skipped_topics.append(topic)
            continue
        ranking = ranker.rank(topic, candidates=pool)
        report.queries.append(
            evaluate_ranking(ranking, experts, pool, k, query_id=topic, topic=topic)
        )
    return report


def run_document_query(dataset: Dataset, ranker: BaseRanker, k: int = 10, *,
                       replace_left_out: Callable[[str], str] | None = None) -> EvalReport:
    """Every document of every expert of every topic becomes a query.

    The query document is left out of the ranker's data.  A document shared
    by several experts is queried once per (topic, expert) occurrence.

    ``replace_left_out`` maps a document id to a substitute text placed in
    the retrieval data for that document's own query (the query text itself
    is unchanged).  A ranker honouring the leave-out produces an identical
    report; this is the leave-out audit.
    """
    ranker = _ready(ranker, dataset)
    pool = dataset.experts_all
    rep = ranker.representation_
    report = EvalReport("document", ranker.name, rep.describe(), k)
    query_cache = {}
    for topic in sorted(dataset.topics):
        experts = dataset.topics[topic]
        if not experts:
            logger.warning("skipping topic %r: empty expert set", topic)
            report.skipped_topics.append(topic)
            continue
        for expert in sorted(experts):
            for doc in dataset.documents_of[expert]:
                if doc not in query_cache:
                    query_cache[doc] = rep.vectorize_query(dataset.text_of(doc), source=doc)
                active = ranker
                if replace_left_out is not None:
                    active = ranker.with_document_text(doc, replace_left_out(doc))
                ranking = active.rank(query_cache[doc], leave_out=doc, candidates=pool)
                report.queries.append(evaluate_ranking(
                    ranking, experts, pool, k, query_id=f"{topic}/{expert}/{doc}", topic=topic,
                ))
    return report


def run_protocol(protocol: str, dataset: Dataset, ranker: BaseRanker, k: int = 10) -> EvalReport:
    if protocol == "topic":
        return run_topic_query(dataset, ranker, k)
    if protocol == "document":
        return run_document_query(dataset, ranker, k)
    raise ValueError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")


# --------------------------------------------------------------------------
# Summary tables
# --------------------------------------------------------------------------

TABLE_METRICS = ("auc", "p_at_k", "ap", "rr")
REP_ORDER = ("tf", "tfidf", "lsi")


def _lower_is_better(metric: str) -> bool:
    return metric == "rr"


def summary_table(reports: Sequence[EvalReport]) -> tuple[str, list[str], list[dict]]:
    """Rows ``ranker x metric``, one column per representation.

    Returns ``(protocol, representations, rows)``; each row carries
    ``mean``/``std``/``topic_std`` per representation and a ``best`` flag
    marking the best ranker within that representation column.
    """
    if not reports:
        raise ValueError("no reports to tabulate")
    protocols = {r.protocol for r in reports}
    if len(protocols) > 1:
        raise ValueError(f"cannot merge reports from different protocols: {sorted(protocols)}")
    protocol = protocols.pop()
    cells: dict[tuple[str, str], dict] = {}
    for r in reports:
        key = (r.ranker, r.representation)
        if key in cells:
            raise ValueError(f"duplicate report for ranker {r.ranker!r}, rep {r.representation!r}")
        cells[key] = r.summary()
    reps = sorted({rep for _, rep in cells},
                  key=lambda x: (REP_ORDER.index(x) if x in REP_ORDER else len(REP_ORDER), x))
    rankers = list(dict.fromkeys(r.ranker for r in reports))
    rows = []
    for ranker in rankers:
        for metric in TABLE_METRICS:
            row = {"ranker": ranker, "metric": metric, "cells": {}}
            for rep in reps:
                s = cells.get((ranker, rep), {}).get(metric)
                if s is not None:
                    row["cells"][rep] = {"mean": s["mean"], "std": s["std"],
                                         "topic_std": s.get("topic_std"), "best": False}
            rows.append(row)
    for metric in TABLE_METRICS:
        for rep in reps:
            entries = [r["cells"][rep] for r in rows
                       if r["metric"] == metric and rep in r["cells"]
                       and r["cells"][rep]["mean"] is not None]
            if not entries:
                continue
            pick = min if _lower_is_better(metric) else max
            best = pick(e["mean"] for e in entries)
            for e in entries:
                e["best"] = e["mean"] == best
    return protocol, reps, rows


def _fmt(x) -> str:
    return "" if x is None else f"{x:.3f}"


def table_csv(reports: Sequence[EvalReport]) -> str:
    protocol, reps, rows = summary_table(reports)
    header = ["protocol", "ranker", "metric"]
    for rep in reps:
        header += [rep, f"{rep}_best", f"{rep}_topic_std"]
    lines = [",".join(header)]
    for row in rows:
        fields = [protocol, row["ranker"], row["metric"]]
        for rep in reps:
            c = row["cells"].get(rep)
            if c is None or c["mean"] is None:
                fields += ["", "", ""]
            else:
                fields += [f"{_fmt(c['mean'])}±{_fmt(c['std'])}", str(int(c["best"])),
                           _fmt(c["topic_std"])]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def table_markdown(reports: Sequence[EvalReport]) -> str:
    protocol, reps, rows = summary_table(reports)
    with_topic = protocol == "document"
    header = ["ranker", "metric"] + list(reps)
    if with_topic:
        header += [f"{rep} topic STD" for rep in reps]
    out = [f"### {protocol}-query evaluation", "",
           "| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for row in rows:
        fields = [row["ranker"], row["metric"]]
        for rep in reps:
            c = row["cells"].get(rep)
            if c is None or c["mean"] is None:
                fields.append("")
            else:
                mean = _fmt(c["mean"])
                fields.append(f"**{mean}**±{_fmt(c['std'])}" if c["best"]
                              else f"{mean}±{_fmt(c['std'])}")
        if with_topic:
            fields += [_fmt(row["cells"].get(rep, {}).get("topic_std")) for rep in reps]
        out.append("| " + " | ".join(fields) + " |")
    return "\n".join(out) + "\n"
