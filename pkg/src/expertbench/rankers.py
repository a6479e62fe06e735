"""Expert rankers: P@noptic meta-documents, document voting, and score
propagation over the candidate/document graph."""

from __future__ import annotations

import copy
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, clone

from .corpus import Dataset
from .textrep import Query, TextRepresentation, row_norms, similarities, tokenize
from .validation import check_choice, check_dataset, check_in_range, check_is_fitted

FUSIONS = ("rr", "combsum", "combmnz")


@dataclass
class Ranking:
    """Candidates by descending score, ties by ascending id."""

    ids: tuple[str, ...]
    scores: np.ndarray
    converged: bool = True
    iterations: int | None = None

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(zip(self.ids, self.scores.tolist()))

    def __eq__(self, other):
        if not isinstance(other, Ranking):
            return NotImplemented
        return (self.ids == other.ids and np.array_equal(self.scores, other.scores)
                and self.converged == other.converged)

    @classmethod
    def from_scores(cls, ids, scores, **kwargs) -> Ranking:
        ids = list(ids)
        scores = np.asarray(scores, dtype=np.float64)
        id_order = np.argsort(np.argsort(np.array(ids, dtype=object)))
        order = np.lexsort((id_order, -scores))
        return cls(tuple(ids[i] for i in order), scores[order], **kwargs)


def restrict_to(ranking: Ranking, candidate_set: Iterable[str]) -> Ranking:
    """Keep only candidates in ``candidate_set``, preserving relative order."""
    keep = set(candidate_set)
    mask = np.fromiter((c in keep for c in ranking.ids), dtype=bool, count=len(ranking))
    return Ranking(tuple(c for c, m in zip(ranking.ids, mask) if m), ranking.scores[mask],
                   ranking.converged, ranking.iterations)


def _id_rank(ids) -> np.ndarray:
    """Position of each id in ascending id order."""
    return np.argsort(np.argsort(np.array(list(ids), dtype=object), kind="stable"),
                      kind="stable")


def build_meta_documents(dataset: Dataset, tokenizer=None,
                         leave_out: str | None = None) -> dict[str, list[str]]:
    """Concatenate the token streams of each candidate's documents, in
    document-id order.  Candidates without documents get an empty stream."""
    tokenizer = tokenizer or tokenize
    cache: dict[str, list[str]] = {}
    out = {}
    for c in dataset.candidates:
        stream: list[str] = []
        for d in dataset.documents_of[c.id]:
            if d == leave_out:
                continue
            if d not in cache:
                cache[d] = tokenizer(dataset.text_of(d))
            stream.extend(cache[d])
        out[c.id] = stream
    return out


def build_transition(dataset: Dataset, leave_out: str | None = None) -> sp.csc_matrix:
    """Column-stochastic transition matrix over candidates then documents.

    ``A[u, v] = 1 / deg(v)`` for every edge; isolated columns stay zero.  A
    left-out document loses all its edges.
    """
    C, D = dataset.n_candidates, dataset.n_documents
    B = dataset.incidence.tocoo()
    keep = np.ones(B.nnz, dtype=bool)
    if leave_out is not None:
        keep = B.row != dataset.document_index[leave_out]
    doc, cand = B.row[keep], B.col[keep]
    deg_c = np.bincount(cand, minlength=C).astype(np.float64)
    deg_d = np.bincount(doc, minlength=D).astype(np.float64)
    # candidate -> document entries live in candidate columns and vice versa
    rows = np.concatenate([C + doc, cand])
    cols = np.concatenate([cand, C + doc])
    vals = np.concatenate([1.0 / deg_c[cand], 1.0 / deg_d[doc]])
    return sp.csc_matrix((vals, (rows, cols)), shape=(C + D, C + D))


class BaseRanker(BaseEstimator):
    """Shared fitting and leave-out plumbing.

    ``representation`` may be prefit (it is then used as is) or unfitted (a
    clone is fit on the dataset texts).  Subclasses implement
    ``_candidate_scores``.
    """

    def __init__(self, representation=None):
        self.representation = representation

    def _check_params(self):
        pass

    def fit(self, dataset: Dataset, y=None):
        check_dataset(dataset)
        self._check_params()
        rep = self.representation
        if rep is None:
            rep = TextRepresentation()
        if not hasattr(rep, "vocabulary_"):
            rep = clone(rep).fit([d.text for d in dataset.documents])
        self.representation_ = rep
        self.dataset_ = dataset
        self.candidate_ids_ = tuple(c.id for c in dataset.candidates)
        self._cand_order = _id_rank(self.candidate_ids_)
        self._doc_order = _id_rank(d.id for d in dataset.documents)
        self.incidence_ = dataset.incidence
        self._incidence_t = sp.csr_matrix(dataset.incidence.T)
        self.doc_vectors_ = rep.transform([d.text for d in dataset.documents])
        self._refresh()
        return self

    def _refresh(self):
        self.doc_norms_ = row_norms(self.doc_vectors_)

    @property
    def name(self) -> str:
        raise NotImplementedError

    def with_document_text(self, doc_id: str, text: str) -> BaseRanker:
        """Copy whose retrieval data holds ``text`` for ``doc_id``.

        The fitted representation is reused unchanged; only the document's
        feature row is recomputed.
        """
        check_is_fitted(self, "doc_vectors_")
        i = self.dataset_.document_index[doc_id]
        new_row = self.representation_.transform([text])
        other = copy.copy(self)
        X = self.doc_vectors_
        if sp.issparse(X):
            X = sp.vstack([X[:i], new_row, X[i + 1:]], format="csr")
        else:
            X = X.copy()
            X[i] = new_row[0]
        other.doc_vectors_ = X
        other.dataset_ = self.dataset_.replace_text(doc_id, text)
        other._refresh()
        return other

    def _as_query(self, query) -> Query:
        if isinstance(query, Query):
            return query
        if isinstance(query, str):
            return self.representation_.vectorize_query(query)
        return Query(np.asarray(query, dtype=np.float64).ravel())

    def _leave_out_index(self, leave_out):
        if leave_out is None:
            return None
        try:
            return self.dataset_.document_index[leave_out]
        except KeyError:
            raise KeyError(f"unknown leave-out document {leave_out!r}") from None

    def document_similarities(self, query) -> np.ndarray:
        check_is_fitted(self, "doc_vectors_")
        return similarities(self._as_query(query), self.doc_vectors_, self.doc_norms_)

    def candidate_scores(self, query, leave_out: str | None = None) -> tuple[np.ndarray, dict]:
        """Scores aligned with ``dataset.candidates`` plus run info."""
        check_is_fitted(self, "doc_vectors_")
        return self._candidate_scores(self._as_query(query), self._leave_out_index(leave_out))

    def rank(self, query, leave_out: str | None = None,
             candidates: Iterable[str] | None = None) -> Ranking:
        """Rank candidates for ``query`` (text, ``Query`` or vector).

        ``candidates`` restricts the output; the result equals
        ``restrict_to(rank(query), candidates)``.
        """
        scores, info = self.candidate_scores(query, leave_out)
        idx = np.arange(len(scores))
        if candidates is not None:
            index = self.dataset_.candidate_index
            idx = np.array(sorted(index[c] for c in set(candidates)), dtype=np.int64)
        order = idx[np.lexsort((self._cand_order[idx], -scores[idx]))]
        return Ranking(tuple(self.candidate_ids_[i] for i in order), scores[order], **info)

    def _candidate_scores(self, query: Query, leave_out: int | None):
        raise NotImplementedError


class PanopticRanker(BaseRanker):
    """Cosine between the query and each candidate's meta-document.

    Meta-document vectors are sums of the member documents' vectors, which
    equals vectorizing the concatenated token streams with the fixed fitted
    representation (all three representations are linear in term counts).
    """

    @property
    def name(self) -> str:
        return "panoptic"

    def _refresh(self):
        super()._refresh()
        meta = self._incidence_t @ self.doc_vectors_
        self.meta_vectors_ = sp.csr_matrix(meta) if sp.issparse(meta) else np.asarray(meta)
        self.meta_norms_ = row_norms(self.meta_vectors_)

    def _candidate_scores(self, query, leave_out):
        scores = similarities(query, self.meta_vectors_, self.meta_norms_)
        if leave_out is not None:
            for c in self.incidence_[leave_out].indices:
                docs = self._incidence_t[c].indices
                docs = docs[docs != leave_out]
                if len(docs) == 0:
                    scores[c] = 0.0
                    continue
                row = self.doc_vectors_[docs].sum(axis=0)
                row = np.asarray(row).reshape(1, -1)
                scores[c] = similarities(query, row)[0]
        return scores, {}


class VotingRanker(BaseRanker):
    """Rank documents, then fuse each candidate's document evidence.

    ``fusion="rr"`` sums reciprocal document ranks, ``"combsum"`` sums
    similarities and ``"combmnz"`` multiplies that sum by the number of
    strictly positive similarities.
    """

    def __init__(self, representation=None, fusion="rr"):
        super().__init__(representation)
        self.fusion = fusion

    def _check_params(self):
        check_choice(self.fusion, "fusion", FUSIONS)

    @property
    def name(self) -> str:
        return f"vote-{self.fusion}"

    def document_ranks(self, sims: np.ndarray, leave_out: int | None = None) -> np.ndarray:
        """1-based rank of each document (0 for the left-out one)."""
        keep = np.arange(len(sims))
        if leave_out is not None:
            keep = keep[keep != leave_out]
        order = keep[np.lexsort((self._doc_order[keep], -sims[keep]))]
        ranks = np.zeros(len(sims), dtype=np.int64)
        ranks[order] = np.arange(1, len(order) + 1)
        return ranks

    def _candidate_scores(self, query, leave_out):
        sims = similarities(query, self.doc_vectors_, self.doc_norms_)
        return self.scores_from_similarities(sims, leave_out), {}

    def scores_from_similarities(self, sims: np.ndarray, leave_out: int | None = None):
        """Fuse per-document similarities into candidate scores."""
        sims = np.asarray(sims, dtype=np.float64)
        if self.fusion == "rr":
            ranks = self.document_ranks(sims, leave_out)
            weights = np.zeros(len(sims))
            nz = ranks > 0
            weights[nz] = 1.0 / ranks[nz]
            return self._incidence_t @ weights
        weights = sims.copy()
        if leave_out is not None:
            weights[leave_out] = 0.0
        total = self._incidence_t @ weights
        if self.fusion == "combsum":
            return total
        return total * (self._incidence_t @ (weights > 0).astype(np.float64))


class PropagationRanker(BaseRanker):
    """Two-step random walk with restart seeded by document similarities.

    Iterates ``S <- (1 - eta) A (A S) + eta R`` until the L2 change drops
    below ``tol``, then takes one more step ``A S`` to land on candidates.
    Hitting ``max_iters`` returns the current state flagged as not converged.
    """

    def __init__(self, representation=None, eta=0.1, tol=1e-6, max_iters=1000):
        super().__init__(representation)
        self.eta = eta
        self.tol = tol
        self.max_iters = max_iters

    def _check_params(self):
        check_in_range(self.eta, "eta", 0.0, 1.0)
        check_in_range(self.tol, "tol", 0.0, None, low_closed=False)
        check_in_range(self.max_iters, "max_iters", 1, None)

    @property
    def name(self) -> str:
        return f"propagation-eta{self.eta:g}"

    def _refresh(self):
        super()._refresh()
        deg_c = np.asarray(self.incidence_.sum(axis=0), dtype=np.float64).ravel()
        deg_d = np.asarray(self.incidence_.sum(axis=1), dtype=np.float64).ravel()
        self._deg_c, self._deg_d = deg_c, deg_d

    @staticmethod
    def _inverse(deg):
        out = np.zeros_like(deg)
        nz = deg > 0
        out[nz] = 1.0 / deg[nz]
        return out

    def _candidate_scores(self, query, leave_out):
        sims = similarities(query, self.doc_vectors_, self.doc_norms_)
        scores, converged, iterations = self.scores_from_similarities(sims, leave_out)
        return scores, {"converged": converged, "iterations": iterations}

    def scores_from_similarities(self, sims: np.ndarray, leave_out: int | None = None):
        """Propagate document similarities; returns (scores, converged, iterations)."""
        sims = np.array(sims, dtype=np.float64)
        deg_c, deg_d = self._deg_c.copy(), self._deg_d.copy()
        doc_mask = np.ones(len(sims))
        if leave_out is not None:
            sims[leave_out] = 0.0
            deg_d[leave_out] = 0.0
            deg_c[self.incidence_[leave_out].indices] -= 1.0
            doc_mask[leave_out] = 0.0
        inv_c, inv_d = self._inverse(deg_c), self._inverse(deg_d)
        B, Bt = self.incidence_, self._incidence_t
        C = len(deg_c)

        def step(S):
            out = np.empty_like(S)
            out[:C] = Bt @ (S[C:] * inv_d)
            out[C:] = (B @ (S[:C] * inv_c)) * doc_mask
            return out

        R = np.concatenate([np.zeros(C), sims])
        S = R
        converged = False
        it = 0
        while it < self.max_iters:
            it += 1
            S_next = (1.0 - self.eta) * step(step(S)) + self.eta * R
            delta = np.linalg.norm(S_next - S)
            S = S_next
            if delta < self.tol:
                converged = True
                break
        return step(S)[:C], converged, it


def make_ranker(kind: str, representation=None, *, fusion="rr", eta=0.1, tol=1e-6,
                max_iters=1000) -> BaseRanker:
    check_choice(kind, "ranker", ("panoptic", "vote", "propagation"))
    if kind == "panoptic":
        return PanopticRanker(representation)
    if kind == "vote":
        return VotingRanker(representation, fusion=fusion)
    return PropagationRanker(representation, eta=eta, tol=tol, max_iters=max_iters)


def rank_panoptic(query, dataset, rep, leave_out=None) -> Ranking:
    return PanopticRanker(rep).fit(dataset).rank(query, leave_out)


def rank_vote(query, dataset, rep, fusion="rr", leave_out=None) -> Ranking:
    return VotingRanker(rep, fusion).fit(dataset).rank(query, leave_out)


def rank_propagation(query, dataset, rep, eta=0.1, tol=1e-6, max_iters=1000,
                     leave_out=None) -> Ranking:
    ranker = PropagationRanker(rep, eta=eta, tol=tol, max_iters=max_iters)
    return ranker.fit(dataset).rank(query, leave_out)
