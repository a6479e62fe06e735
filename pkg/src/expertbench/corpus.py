"""Bipartite candidate/document datasets: parsing, filtering, persistence and
synthetic generation."""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

DOCUMENTS_FILE = "documents.jsonl"
EDGES_FILE = "edges.jsonl"
LABELS_FILE = "labels.json"


class DatasetError(ValueError):
    """Raised when a dataset violates its invariants or cannot be loaded."""


@dataclass(frozen=True)
class RawRecord:
    index: str
    title: str = ""
    authors: tuple[str, ...] = ()
    year: int | None = None
    venue: str | None = None
    abstract: str | None = None
    references: tuple[str, ...] = ()


@dataclass(frozen=True)
class Candidate:
    id: str
    name: str


@dataclass(frozen=True)
class Document:
    id: str
    text: str


@dataclass(frozen=True)
class Dataset:
    """Candidates, documents, authorship edges and topic expert labels.

    ``edges`` holds ``(document_id, candidate_id)`` pairs.  ``topics`` maps a
    topic naming to the ids of its annotated experts.  Invariants are checked
    on construction.
    """

    candidates: tuple[Candidate, ...]
    documents: tuple[Document, ...]
    edges: tuple[tuple[str, str], ...]
    topics: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        object.__setattr__(self, "documents", tuple(self.documents))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        object.__setattr__(
            self, "topics", {t: frozenset(ids) for t, ids in self.topics.items()}
        )
        self._validate()

    def _validate(self):
        cand_ids = set()
        for c in self.candidates:
            if c.id in cand_ids:
                raise DatasetError(f"duplicate candidate id {c.id!r}")
            cand_ids.add(c.id)
        doc_ids = set()
        for d in self.documents:
            if d.id in doc_ids:
                raise DatasetError(f"duplicate document id {d.id!r}")
            doc_ids.add(d.id)
        seen = set()
        for doc, cand in self.edges:
            if doc not in doc_ids:
                raise DatasetError(f"edge references unknown document {doc!r}")
            if cand not in cand_ids:
                raise DatasetError(f"edge references unknown candidate {cand!r}")
            if (doc, cand) in seen:
                raise DatasetError(f"duplicate edge ({doc!r}, {cand!r})")
            seen.add((doc, cand))
        for topic, experts in self.topics.items():
            missing = experts - cand_ids
            if missing:
                raise DatasetError(
                    f"topic {topic!r} lists unknown candidates {sorted(missing)[:5]}"
                )

    @property
    def experts_all(self) -> frozenset[str]:
        return frozenset().union(*self.topics.values()) if self.topics else frozenset()

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    @property
    def n_documents(self) -> int:
        return len(self.documents)

    @cached_property
    def candidate_index(self) -> dict[str, int]:
        return {c.id: i for i, c in enumerate(self.candidates)}

    @cached_property
    def document_index(self) -> dict[str, int]:
        return {d.id: i for i, d in enumerate(self.documents)}

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Binary |D| x |C| document/candidate incidence matrix."""
        rows = np.fromiter(
            (self.document_index[d] for d, _ in self.edges), dtype=np.int64,
            count=len(self.edges),
        )
        cols = np.fromiter(
            (self.candidate_index[c] for _, c in self.edges), dtype=np.int64,
            count=len(self.edges),
        )
        data = np.ones(len(self.edges), dtype=np.float64)
        return sp.csr_matrix(
            (data, (rows, cols)), shape=(self.n_documents, self.n_candidates)
        )

    @cached_property
    def candidate_degree(self) -> np.ndarray:
        return np.asarray(self.incidence.sum(axis=0)).ravel().astype(np.int64)

    @cached_property
    def document_degree(self) -> np.ndarray:
        return np.asarray(self.incidence.sum(axis=1)).ravel().astype(np.int64)

    @cached_property
    def documents_of(self) -> dict[str, tuple[str, ...]]:
        """Candidate id -> linked document ids in ascending id order."""
        out: dict[str, list[str]] = {c.id: [] for c in self.candidates}
        for doc, cand in self.edges:
            out[cand].append(doc)
        return {c: tuple(sorted(docs)) for c, docs in out.items()}

    @cached_property
    def authors_of(self) -> dict[str, tuple[str, ...]]:
        """Document id -> linked candidate ids in ascending id order."""
        out: dict[str, list[str]] = {d.id: [] for d in self.documents}
        for doc, cand in self.edges:
            out[doc].append(cand)
        return {d: tuple(sorted(cands)) for d, cands in out.items()}

    def text_of(self, doc_id: str) -> str:
        return self.documents[self.document_index[doc_id]].text

    def replace_text(self, doc_id: str, text: str) -> Dataset:
        """Copy of the dataset with one document's text substituted."""
        i = self.document_index[doc_id]
        docs = list(self.documents)
        docs[i] = Document(doc_id, text)
        return Dataset(self.candidates, docs, self.edges, self.topics)

    def fingerprint(self) -> str:
        """SHA-256 of the canonical serialization."""
        h = hashlib.sha256()
        for chunk in _serialize(self).values():
            h.update(chunk.encode("utf-8"))
            h.update(b"\0")
        return h.hexdigest()


# --------------------------------------------------------------------------
# AMiner citation dump
# --------------------------------------------------------------------------

@dataclass
class ParseResult:
    records: list[RawRecord]
    rejected: int = 0

    @property
    def blocks(self) -> int:
        return len(self.records) + self.rejected


_PREFIXES = ("#index", "#*", "#@", "#t", "#c", "#%", "#!")


def _parse_block(lines: list[str]) -> RawRecord | None:
    fields: dict = {"references": []}
    for line in lines:
        for prefix in _PREFIXES:
            if line.startswith(prefix):
                value = line[len(prefix):].strip()
                break
        else:
            continue
        if prefix == "#index":
            fields["index"] = value
        elif prefix == "#*":
            fields["title"] = value
        elif prefix == "#@":
            fields["authors"] = tuple(a.strip() for a in value.split(";") if a.strip())
        elif prefix == "#t":
            try:
                fields["year"] = int(value)
            except ValueError:
                fields["year"] = None
        elif prefix == "#c":
            fields["venue"] = value or None
        elif prefix == "#%":
            if value:
                fields["references"].append(value)
        elif prefix == "#!":
            fields["abstract"] = value
    if not fields.get("index"):
        return None
    fields["references"] = tuple(fields["references"])
    return RawRecord(**fields)


def parse_aminer(stream) -> ParseResult:
    """Parse an AMiner citation dump.

    ``stream`` is a path, a binary stream or a text stream.  Records are blocks
    of prefixed lines separated by blank lines.  Blocks lacking ``#index`` (or
    repeating an index already seen) are rejected and counted.
    """
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, "rb") as fh:
            return parse_aminer(fh)
    if isinstance(stream, (io.RawIOBase, io.BufferedIOBase)) or "b" in getattr(
        stream, "mode", ""
    ):
        stream = io.TextIOWrapper(stream, encoding="utf-8", errors="replace")

    result = ParseResult(records=[])
    seen: set[str] = set()

    def flush(block):
        if not block:
            return
        record = _parse_block(block)
        if record is None or record.index in seen:
            result.rejected += 1
            return
        seen.add(record.index)
        result.records.append(record)

    block: list[str] = []
    for raw in stream:
        line = raw.rstrip("\r\n")
        if line.strip():
            block.append(line)
        else:
            flush(block)
            block = []
    flush(block)
    return result


@dataclass
class BuildStats:
    dropped_experts: list[tuple[str, str]] = field(default_factory=list)
    empty_topics: list[str] = field(default_factory=list)


def build_dataset(
    records: Iterable[RawRecord], expert_list: Mapping[str, Iterable[str]]
) -> tuple[Dataset, BuildStats]:
    """Build a dataset from parsed records, one candidate per author name.

    Candidate ids are the author names themselves.  Expert names with no
    matching candidate are dropped and reported in the returned stats.
    """
    candidates: dict[str, Candidate] = {}
    documents = []
    edges = []
    for rec in records:
        text = rec.title if not rec.abstract else f"{rec.title} {rec.abstract}"
        documents.append(Document(rec.index, text))
        for name in dict.fromkeys(rec.authors):
            if name not in candidates:
                candidates[name] = Candidate(name, name)
            edges.append((rec.index, name))

    stats = BuildStats()
    topics = {}
    for topic, names in expert_list.items():
        resolved = set()
        for name in names:
            if name in candidates:
                resolved.add(name)
            else:
                stats.dropped_experts.append((topic, name))
        if not resolved:
            logger.warning("topic %r has no expert present in the corpus", topic)
            stats.empty_topics.append(topic)
        topics[topic] = frozenset(resolved)

    ds = Dataset(tuple(candidates.values()), tuple(documents), tuple(edges), topics)
    return ds, stats


# --------------------------------------------------------------------------
# Preprocessing
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PreprocessConfig:
    max_docs_per_author: int = 100
    min_docs_per_author: int = 1
    min_text_length: int = 50

    def __post_init__(self):
        if not self.max_docs_per_author > self.min_docs_per_author >= 0:
            raise ValueError(
                "need max_docs_per_author > min_docs_per_author >= 0, got "
                f"{self.max_docs_per_author} and {self.min_docs_per_author}"
            )
        if self.min_text_length < 0:
            raise ValueError("min_text_length must be >= 0")


def preprocess(dataset: Dataset, config: PreprocessConfig | None = None) -> Dataset:
    """Drop short documents, then authors whose degree is out of bounds.

    Degrees are measured after the text-length filter, so both bounds hold on
    the output.  Documents left without authors are kept.
    """
    config = config or PreprocessConfig()
    docs = tuple(d for d in dataset.documents if len(d.text) > config.min_text_length)
    kept_docs = {d.id for d in docs}
    edges = [(d, c) for d, c in dataset.edges if d in kept_docs]

    degree = dict.fromkeys((c.id for c in dataset.candidates), 0)
    for _, c in edges:
        degree[c] += 1
    kept = {
        c for c, deg in degree.items()
        if config.min_docs_per_author <= deg < config.max_docs_per_author
    }
    candidates = tuple(c for c in dataset.candidates if c.id in kept)
    edges = tuple((d, c) for d, c in edges if c in kept)
    topics = {t: experts & kept for t, experts in dataset.topics.items()}
    return Dataset(candidates, docs, edges, topics)


# --------------------------------------------------------------------------
# Synthetic datasets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    num_topics: int = 4
    experts_per_topic: int = 5
    docs_per_expert: int = 10
    noise_candidates: int = 20
    vocab_per_topic: int = 50
    shared_vocab: int = 100
    words_per_doc: int = 40
    rng_seed: int = 0
    topical_fraction: float = 0.8

    def __post_init__(self):
        for name in ("num_topics", "experts_per_topic", "docs_per_expert",
                     "vocab_per_topic", "words_per_doc"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("noise_candidates", "shared_vocab"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.topical_fraction <= 1.0:
            raise ValueError("topical_fraction must lie in [0, 1]")


def _zipf_weights(n: int) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1)
    return w / w.sum()


def generate_synthetic(config: SyntheticConfig | None = None) -> Dataset:
    """Generate a dataset with planted topical experts.

    Each topic owns a disjoint vocabulary (Zipf-weighted); topic namings are
    the topic's two most frequent words.  Expert documents draw
    ``topical_fraction`` of their words from the topic vocabulary and the
    rest from a shared pool.  Noise candidates write from the shared pool, or
    from the union of topical vocabularies when the pool is empty.  Every
    document has a single author; document ids are assigned in shuffled order
    so that id tie-breaking does not correlate with authorship.
    """
    cfg = config or SyntheticConfig()
    rng = np.random.default_rng(cfg.rng_seed)
    topic_words = [
        [f"t{t}w{j:03d}" for j in range(cfg.vocab_per_topic)]
        for t in range(cfg.num_topics)
    ]
    shared = [f"s{j:03d}" for j in range(cfg.shared_vocab)]
    topic_p = _zipf_weights(cfg.vocab_per_topic)
    shared_p = _zipf_weights(cfg.shared_vocab) if shared else None

    def draw_topical(t, n):
        return [topic_words[t][j] for j in rng.choice(cfg.vocab_per_topic, n, p=topic_p)]

    def draw_shared(n):
        return [shared[j] for j in rng.choice(cfg.shared_vocab, n, p=shared_p)]

    candidates = []
    texts: list[tuple[str, str]] = []  # (author id, text)
    topics = {}
    n_exp = cfg.num_topics * cfg.experts_per_topic
    width = max(4, len(str(n_exp + cfg.noise_candidates)))
    for t in range(cfg.num_topics):
        name = " ".join(topic_words[t][:2])
        members = []
        for j in range(cfg.experts_per_topic):
            cid = f"c{len(candidates):0{width}d}"
            candidates.append(Candidate(cid, f"expert {t}-{j}"))
            members.append(cid)
            for _ in range(cfg.docs_per_expert):
                if shared:
                    topical = rng.random(cfg.words_per_doc) < cfg.topical_fraction
                    n_top = int(topical.sum())
                    words = draw_topical(t, n_top) + draw_shared(cfg.words_per_doc - n_top)
                    words = [words[i] for i in rng.permutation(len(words))]
                else:
                    words = draw_topical(t, cfg.words_per_doc)
                texts.append((cid, " ".join(words)))
        topics[name] = frozenset(members)
    all_topical = [w for ws in topic_words for w in ws]
    for j in range(cfg.noise_candidates):
        cid = f"c{len(candidates):0{width}d}"
        candidates.append(Candidate(cid, f"noise {j}"))
        for _ in range(cfg.docs_per_expert):
            if shared:
                words = draw_shared(cfg.words_per_doc)
            else:
                idx = rng.choice(len(all_topical), cfg.words_per_doc)
                words = [all_topical[i] for i in idx]
            texts.append((cid, " ".join(words)))

    dwidth = max(5, len(str(len(texts))))
    ids = [f"d{i:0{dwidth}d}" for i in rng.permutation(len(texts))]
    pairs = sorted(zip(ids, texts))
    documents = tuple(Document(did, text) for did, (_, text) in pairs)
    edges = tuple((did, cid) for did, (cid, _) in pairs)
    return Dataset(tuple(candidates), documents, edges, topics)


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------

def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def _serialize(dataset: Dataset) -> dict[str, str]:
    docs = "".join(_dumps({"id": d.id, "text": d.text}) + "\n" for d in dataset.documents)
    edges = "".join(_dumps({"doc": d, "candidate": c}) + "\n" for d, c in dataset.edges)
    labels = {
        "candidates": [{"id": c.id, "name": c.name} for c in dataset.candidates],
        "topics": {t: sorted(ids) for t, ids in sorted(dataset.topics.items())},
    }
    return {
        DOCUMENTS_FILE: docs,
        EDGES_FILE: edges,
        LABELS_FILE: json.dumps(labels, ensure_ascii=False, sort_keys=True, indent=1) + "\n",
    }


def save_dataset(dataset: Dataset, path) -> Path:
    """Write the three canonical files into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name, content in _serialize(dataset).items():
        tmp = path / f".{name}.tmp"
        tmp.write_text(content, encoding="utf-8")
        os.replace(tmp, path / name)
    return path


def _read_jsonl(path: Path, keys: tuple[str, ...]) -> list[dict]:
    if not path.exists():
        raise DatasetError(f"{path}: file not found")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(row, dict) or any(k not in row for k in keys):
                raise DatasetError(f"{path}:{lineno}: expected object with keys {keys}")
            rows.append(row)
    return rows


def load_dataset(path) -> Dataset:
    path = Path(path)
    docs = _read_jsonl(path / DOCUMENTS_FILE, ("id", "text"))
    seen = set()
    for row in docs:
        if row["id"] in seen:
            raise DatasetError(f"{path / DOCUMENTS_FILE}: duplicate document id {row['id']!r}")
        seen.add(row["id"])
    edges = _read_jsonl(path / EDGES_FILE, ("doc", "candidate"))
    labels_path = path / LABELS_FILE
    if not labels_path.exists():
        raise DatasetError(f"{labels_path}: file not found")
    try:
        labels = json.loads(labels_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{labels_path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    try:
        candidates = tuple(Candidate(c["id"], c["name"]) for c in labels["candidates"])
        topics = {t: frozenset(ids) for t, ids in labels["topics"].items()}
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"{labels_path}: malformed labels ({exc})") from None
    return Dataset(
        candidates,
        tuple(Document(r["id"], r["text"]) for r in docs),
        tuple((r["doc"], r["candidate"]) for r in edges),
        topics,
    )


def load_expert_list(path) -> dict[str, list[str]]:
    """Read a JSON map of topic naming -> list of author names."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
        raise DatasetError(f"{path}: expected a JSON object mapping topics to name lists")
    return data
