"""Document representations (TF, TF-IDF, LSI) and cosine similarities."""

from __future__ import annotations

import io
import json
import re
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.extmath import randomized_svd
from sklearn.utils.validation import check_is_fitted

from .validation import check_choice, check_in_range

KINDS = ("tf", "tfidf", "lsi")
PHRASE_JOINER = "_"
_TOKEN_RE = re.compile(r"[^\W_]+")


def load_stopwords(path=None) -> frozenset[str]:
    """Read a one-term-per-line stopword file; the built-in English list by default."""
    if path is None:
        text = resources.files("expertbench").joinpath("data/stopwords.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


DEFAULT_STOPWORDS = load_stopwords()


@dataclass(frozen=True)
class VocabConfig:
    min_term_count: int = 3
    max_doc_fraction: float = 0.5
    phrase_passes: int = 2
    phrase_min_count: int = 5
    phrase_threshold: float = 10.0
    stopwords: frozenset[str] = DEFAULT_STOPWORDS

    def __post_init__(self):
        check_in_range(self.max_doc_fraction, "max_doc_fraction", 0.0, 1.0, low_closed=False)
        check_in_range(self.min_term_count, "min_term_count", 1, None)
        check_in_range(self.phrase_passes, "phrase_passes", 0, None)


# A phrase table is one set of mergeable pairs per pass, applied in order.
PhraseTable = tuple[frozenset[tuple[str, str]], ...]


def merge_phrases(tokens: list[str], pairs: frozenset[tuple[str, str]]) -> list[str]:
    """Greedy left-to-right merge of adjacent pairs found in ``pairs``."""
    if not pairs or len(tokens) < 2:
        return list(tokens)
    out = []
    i = 0
    n = len(tokens)
    while i < n:
        if i + 1 < n and (tokens[i], tokens[i + 1]) in pairs:
            out.append(tokens[i] + PHRASE_JOINER + tokens[i + 1])
            i += 2
        else:
            out.append(tokens[i])
            i += 1
    return out


def tokenize(text: str, config: VocabConfig | None = None,
             phrases: PhraseTable = ()) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop stopwords, merge phrases."""
    stopwords = (config or VocabConfig()).stopwords
    tokens = [t for t in _TOKEN_RE.findall(text.lower()) if t not in stopwords]
    for pairs in phrases:
        tokens = merge_phrases(tokens, pairs)
    return tokens


def phrase_score(count_ab: int, count_a: int, count_b: int, total: int, min_count: int) -> float:
    return (count_ab - min_count) * total / (count_a * count_b)


def learn_phrases(token_streams: Sequence[list[str]], config: VocabConfig | None = None) -> PhraseTable:
    """Learn mergeable token pairs from co-occurrence counts.

    Each pass counts unigrams and adjacent pairs over the (already merged)
    streams and keeps pairs with ``count(ab) >= phrase_min_count`` whose
    score exceeds ``phrase_threshold``.  Pass two sees pass-one merges, so it
    yields 3-grams.
    """
    config = config or VocabConfig()
    streams = [list(s) for s in token_streams]
    table = []
    for _ in range(config.phrase_passes):
        unigrams: Counter = Counter()
        bigrams: Counter = Counter()
        for s in streams:
            unigrams.update(s)
            bigrams.update(zip(s, s[1:]))
        total = sum(unigrams.values())
        pairs = frozenset(
            (a, b) for (a, b), n in bigrams.items()
            if n >= config.phrase_min_count
            and phrase_score(n, unigrams[a], unigrams[b], total, config.phrase_min_count)
            > config.phrase_threshold
        )
        table.append(pairs)
        streams = [merge_phrases(s, pairs) for s in streams]
    return tuple(table)


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    doc_freq: np.ndarray
    corpus_freq: np.ndarray
    phrases: PhraseTable = ()
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self):
        return len(self.terms)


def fit_vocabulary(token_streams: Sequence[list[str]], config: VocabConfig | None = None,
                   phrases: PhraseTable = ()) -> Vocabulary:
    """Keep terms seen at least ``min_term_count`` times and in at most
    ``max_doc_fraction`` of the documents; columns in lexicographic order."""
    config = config or VocabConfig()
    cf: Counter = Counter()
    df: Counter = Counter()
    for s in token_streams:
        cf.update(s)
        df.update(set(s))
    n_docs = len(token_streams)
    terms = sorted(
        t for t, c in cf.items()
        if c >= config.min_term_count and df[t] <= config.max_doc_fraction * n_docs
    )
    if not terms:
        raise ValueError("no term survives vocabulary pruning")
    return Vocabulary(
        tuple(terms),
        np.array([df[t] for t in terms], dtype=np.int64),
        np.array([cf[t] for t in terms], dtype=np.int64),
        phrases,
    )


def vectorize_tf(tokens: Iterable[str], vocab: Vocabulary) -> np.ndarray:
    """Raw term counts over the vocabulary; unknown tokens are ignored."""
    vec = np.zeros(len(vocab), dtype=np.float64)
    for t in tokens:
        j = vocab.index.get(t)
        if j is not None:
            vec[j] += 1.0
    return vec


def tf_matrix(token_streams: Sequence[list[str]], vocab: Vocabulary) -> sp.csr_matrix:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for s in token_streams:
        counts = Counter(j for j in (vocab.index.get(t) for t in s) if j is not None)
        for j in sorted(counts):
            indices.append(j)
            data.append(float(counts[j]))
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64),
         np.array(indptr, dtype=np.int64)),
        shape=(len(token_streams), len(vocab)),
    )


@dataclass
class DocMatrix:
    """Document feature matrix plus what is needed to map queries into it.

    ``components`` is the term projection (N x k) and ``singular_values`` the
    retained spectrum when ``kind == "lsi"``.
    """

    kind: str
    matrix: sp.csr_matrix | np.ndarray
    idf: np.ndarray | None = None
    components: np.ndarray | None = None
    singular_values: np.ndarray | None = None

    @property
    def n_documents(self) -> int:
        return self.matrix.shape[0]


def smooth_idf(doc_freq: np.ndarray, n_docs: int) -> np.ndarray:
    return np.log((1.0 + n_docs) / (1.0 + np.asarray(doc_freq, dtype=np.float64))) + 1.0


def fit_tfidf(tf: sp.spmatrix) -> DocMatrix:
    """Weight counts by ``ln((1 + |D|) / (1 + df)) + 1``."""
    tf = sp.csr_matrix(tf, dtype=np.float64)
    df = np.diff(sp.csc_matrix(tf).indptr)
    idf = smooth_idf(df, tf.shape[0])
    return DocMatrix("tfidf", sp.csr_matrix(tf @ sp.diags(idf)), idf=idf)


def truncated_svd(X, k: int, *, solver: str = "auto", n_iter: int = 2,
                  random_state: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rank-k SVD ``X ~ U diag(s) Vt`` with near-zero singular values dropped.

    ``solver="randomized"`` uses a seeded randomized range finder with
    ``n_iter`` power iterations; ``"full"`` uses dense LAPACK.  ``"auto"``
    picks the dense path for small matrices or when k covers most of the
    spectrum.
    """
    if k < 1:
        raise ValueError(f"SVD rank must be >= 1, got {k}")
    n, m = X.shape
    k = min(k, n, m)
    if solver == "auto":
        solver = "full" if max(n, m) <= 500 or k >= 0.8 * min(n, m) else "randomized"
    if solver == "full":
        dense = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=np.float64)
        U, s, Vt = np.linalg.svd(dense, full_matrices=False)
        U, s, Vt = U[:, :k], s[:k], Vt[:k]
    elif solver == "randomized":
        U, s, Vt = randomized_svd(X, k, n_iter=n_iter, random_state=random_state)
    else:
        raise ValueError(f"unknown SVD solver {solver!r}")
    # deterministic sign: largest-magnitude entry of each right vector positive
    signs = np.sign(Vt[np.arange(len(s)), np.argmax(np.abs(Vt), axis=1)])
    signs[signs == 0] = 1.0
    U, Vt = U * signs, Vt * signs[:, None]
    if len(s):
        tol = s[0] * max(n, m) * np.finfo(np.float64).eps
        keep = s > tol
        U, s, Vt = U[:, keep], s[keep], Vt[keep]
    return U, s, Vt


def fit_lsi(weighted: DocMatrix | sp.spmatrix, k: int = 300, *, solver: str = "auto",
            n_iter: int = 2, random_state: int = 0) -> DocMatrix:
    """Project documents onto the top-k singular directions.

    Document vectors are rows of ``U_k S_k``; ``V_k`` is kept so queries can
    be folded in as ``q V_k``.  The effective rank may be below ``k``.
    """
    if isinstance(weighted, DocMatrix):
        X, idf = weighted.matrix, weighted.idf
    else:
        X, idf = weighted, None
    U, s, Vt = truncated_svd(X, k, solver=solver, n_iter=n_iter, random_state=random_state)
    return DocMatrix("lsi", U * s, idf=idf, components=np.ascontiguousarray(Vt.T),
                     singular_values=s)


@dataclass
class Query:
    vector: np.ndarray
    text: str = ""
    source: str | None = None


def row_norms(X) -> np.ndarray:
    if sp.issparse(X):
        return np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    return np.linalg.norm(np.asarray(X), axis=1)


def similarities(query, doc_matrix, doc_norms: np.ndarray | None = None) -> np.ndarray:
    """Cosine similarity of a query against every row; zero vectors score 0."""
    q = query.vector if isinstance(query, Query) else np.asarray(query, dtype=np.float64)
    X = doc_matrix.matrix if isinstance(doc_matrix, DocMatrix) else doc_matrix
    if doc_norms is None:
        doc_norms = row_norms(X)
    qn = float(np.linalg.norm(q))
    dots = np.asarray(X @ q, dtype=np.float64).ravel()
    if qn == 0.0:
        return np.zeros(X.shape[0])
    denom = doc_norms * qn
    out = np.zeros_like(dots)
    nz = denom > 0
    out[nz] = dots[nz] / denom[nz]
    return np.clip(out, -1.0, 1.0)


class TextRepresentation(BaseEstimator, TransformerMixin):
    """Fit a TF, TF-IDF or LSI representation on a list of texts.

    ``transform`` maps texts into the fitted space: a sparse matrix for
    ``tf``/``tfidf`` and a dense one for ``lsi``.  ``lsi_input`` selects the
    matrix the SVD is fit on (``"tfidf"`` or ``"tf"``).
    """

    def __init__(self, kind="tfidf", lsi_rank=300, lsi_input="tfidf", min_term_count=3,
                 max_doc_fraction=0.5, phrase_passes=2, phrase_min_count=5,
                 phrase_threshold=10.0, stopwords=None, svd_solver="auto",
                 n_power_iter=2, random_state=0):
        self.kind = kind
        self.lsi_rank = lsi_rank
        self.lsi_input = lsi_input
        self.min_term_count = min_term_count
        self.max_doc_fraction = max_doc_fraction
        self.phrase_passes = phrase_passes
        self.phrase_min_count = phrase_min_count
        self.phrase_threshold = phrase_threshold
        self.stopwords = stopwords
        self.svd_solver = svd_solver
        self.n_power_iter = n_power_iter
        self.random_state = random_state

    def _vocab_config(self) -> VocabConfig:
        stop = DEFAULT_STOPWORDS if self.stopwords is None else frozenset(self.stopwords)
        return VocabConfig(self.min_term_count, self.max_doc_fraction, self.phrase_passes,
                           self.phrase_min_count, self.phrase_threshold, stop)

    def _check_params(self):
        check_choice(self.kind, "kind", KINDS)
        check_choice(self.lsi_input, "lsi_input", ("tf", "tfidf"))
        check_in_range(self.lsi_rank, "lsi_rank", 1, None)
        self._vocab_config()

    def fit(self, X, y=None):
        self._check_params()
        config = self._vocab_config()
        texts = list(X)
        raw = [tokenize(t, config) for t in texts]
        phrases = learn_phrases(raw, config)
        streams = [tokenize(t, config, phrases) for t in texts]
        self.vocabulary_ = fit_vocabulary(streams, config, phrases)
        tf = tf_matrix(streams, self.vocabulary_)
        weighted = fit_tfidf(tf)
        if self.kind == "tf":
            self.doc_matrix_ = DocMatrix("tf", tf)
        elif self.kind == "tfidf":
            self.doc_matrix_ = weighted
        else:
            base = weighted if self.lsi_input == "tfidf" else DocMatrix("tf", tf)
            self.doc_matrix_ = fit_lsi(base, self.lsi_rank, solver=self.svd_solver,
                                       n_iter=self.n_power_iter,
                                       random_state=self.random_state)
        self.idf_ = self.doc_matrix_.idf
        self.n_features_ = len(self.vocabulary_)
        return self

    @property
    def stopword_set(self) -> frozenset[str]:
        return DEFAULT_STOPWORDS if self.stopwords is None else frozenset(self.stopwords)

    def tokenize(self, text: str) -> list[str]:
        check_is_fitted(self, "vocabulary_")
        stop = self.stopword_set
        tokens = [t for t in _TOKEN_RE.findall(text.lower()) if t not in stop]
        for pairs in self.vocabulary_.phrases:
            tokens = merge_phrases(tokens, pairs)
        return tokens

    def _project(self, tf):
        dm = self.doc_matrix_
        if dm.idf is not None:
            tf = tf @ sp.diags(dm.idf) if sp.issparse(tf) else tf * dm.idf
        if dm.kind == "lsi":
            return np.asarray(tf @ dm.components)
        return tf

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        tf = tf_matrix([self.tokenize(t) for t in X], self.vocabulary_)
        out = self._project(tf)
        return sp.csr_matrix(out) if sp.issparse(out) else out

    def vectorize_query(self, text: str, source: str | None = None) -> Query:
        check_is_fitted(self, "vocabulary_")
        tf = vectorize_tf(self.tokenize(text), self.vocabulary_)
        return Query(np.asarray(self._project(tf), dtype=np.float64).ravel(), text, source)

    @property
    def dim(self) -> int:
        check_is_fitted(self, "vocabulary_")
        return self.doc_matrix_.matrix.shape[1]

    def describe(self) -> str:
        return self.kind


# --------------------------------------------------------------------------
# Binary cache
# --------------------------------------------------------------------------

CACHE_MAGIC = b"EXPERTBENCH-REP"
CACHE_VERSION = 1


def save_representation(rep: TextRepresentation, path, key: str = "") -> None:
    """Persist a fitted representation (and its document matrix) to ``path``.

    The file starts with a one-line header ``EXPERTBENCH-REP <version> <key>``
    followed by an ``.npz`` payload.
    """
    check_is_fitted(rep, "vocabulary_")
    dm = rep.doc_matrix_
    vocab = rep.vocabulary_
    params = rep.get_params()
    params["stopwords"] = sorted(params["stopwords"]) if params["stopwords"] is not None else None
    arrays = {
        "params": np.array(json.dumps(params, sort_keys=True)),
        "terms": np.array(vocab.terms, dtype=str),
        "doc_freq": vocab.doc_freq,
        "corpus_freq": vocab.corpus_freq,
        "phrases": np.array(json.dumps([sorted(map(list, p)) for p in vocab.phrases])),
        "kind": np.array(dm.kind),
    }
    if dm.idf is not None:
        arrays["idf"] = dm.idf
    if dm.components is not None:
        arrays["components"] = dm.components
        arrays["singular_values"] = dm.singular_values
    if sp.issparse(dm.matrix):
        m = sp.csr_matrix(dm.matrix)
        arrays.update(m_data=m.data, m_indices=m.indices, m_indptr=m.indptr,
                      m_shape=np.array(m.shape))
    else:
        arrays["m_dense"] = dm.matrix
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(b"%s %d %s\n" % (CACHE_MAGIC, CACHE_VERSION, key.encode("ascii")))
        fh.write(buf.getvalue())
    tmp.replace(path)


def load_representation(path, key: str | None = None) -> TextRepresentation:
    """Load a cached representation; ``key`` (if given) must match the header."""
    with open(path, "rb") as fh:
        header = fh.readline().split()
        if len(header) < 2 or header[0] != CACHE_MAGIC:
            raise ValueError(f"{path}: not a representation cache file")
        if int(header[1]) != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {header[1].decode()}")
        stored_key = header[2].decode("ascii") if len(header) > 2 else ""
        if key is not None and stored_key != key:
            raise ValueError(f"{path}: cache key mismatch")
        payload = np.load(io.BytesIO(fh.read()), allow_pickle=False)
    params = json.loads(str(payload["params"]))
    rep = TextRepresentation(**params)
    phrases = tuple(frozenset(tuple(p) for p in pairs)
                    for pairs in json.loads(str(payload["phrases"])))
    rep.vocabulary_ = Vocabulary(tuple(str(t) for t in payload["terms"]),
                                 payload["doc_freq"], payload["corpus_freq"], phrases)
    if "m_dense" in payload:
        matrix = payload["m_dense"]
    else:
        matrix = sp.csr_matrix(
            (payload["m_data"], payload["m_indices"], payload["m_indptr"]),
            shape=tuple(payload["m_shape"]),
        )
    rep.doc_matrix_ = DocMatrix(
        str(payload["kind"]), matrix,
        idf=payload["idf"] if "idf" in payload else None,
        components=payload["components"] if "components" in payload else None,
        singular_values=payload["singular_values"] if "singular_values" in payload else None,
    )
    rep.idf_ = rep.doc_matrix_.idf
    rep.n_features_ = len(rep.vocabulary_)
    return rep
