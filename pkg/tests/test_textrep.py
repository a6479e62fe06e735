import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import permissive_rep
from expertbench.textrep import (
    DocMatrix,
    Query,
    VocabConfig,
    fit_lsi,
    fit_tfidf,
    fit_vocabulary,
    learn_phrases,
    load_representation,
    load_stopwords,
    save_representation,
    similarities,
    smooth_idf,
    tokenize,
    truncated_svd,
    vectorize_tf,
)

NO_STOP = VocabConfig(stopwords=frozenset())


def test_tokenize_lowercases_and_drops_stopwords():
    cfg = VocabConfig(stopwords=frozenset({"and", "the"}))
    assert tokenize("Data Mining, and the Web", cfg) == ["data", "mining", "web"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_merges_phrases():
    table = (frozenset({("data", "mining")}),)
    assert tokenize("data mining", NO_STOP, table) == ["data_mining"]


def test_builtin_stopwords():
    stop = load_stopwords()
    assert {"the", "and", "of"} <= stop and "mining" not in stop


# -- phrases -------------------------------------------------------------------

SV_CORPUS = [["support", "vector", w] for w in ("alpha", "beta", "gamma", "delta")]


def test_phrase_merged_when_score_exceeds_threshold():
    # count(sv)=4, count(s)=count(v)=4, T=12: (4 - 1) * 12 / 16 = 2.25
    cfg = VocabConfig(phrase_passes=1, phrase_min_count=1, phrase_threshold=2.0)
    assert learn_phrases(SV_CORPUS, cfg) == (frozenset({("support", "vector")}),)
    cfg = VocabConfig(phrase_passes=1, phrase_min_count=1, phrase_threshold=2.25)
    assert learn_phrases(SV_CORPUS, cfg) == (frozenset(),)


def test_phrase_second_pass_builds_trigrams():
    corpus = [["support", "vector", "machine", w] for w in "abcdefgh"]
    cfg = VocabConfig(phrase_passes=2, phrase_min_count=1, phrase_threshold=1.0)
    table = learn_phrases(corpus, cfg)
    # pass one merges the leftmost pair greedily; pass two attaches "machine"
    assert ("support", "vector") in table[0]
    assert ("support_vector", "machine") in table[1]
    assert tokenize("Support vector machine", NO_STOP, table) == ["support_vector_machine"]


def test_no_passes_empty_table():
    assert learn_phrases(SV_CORPUS, VocabConfig(phrase_passes=0)) == ()


def test_rare_pair_not_merged():
    cfg = VocabConfig(phrase_passes=1, phrase_min_count=5, phrase_threshold=0.0)
    assert learn_phrases([["a", "b"]], cfg) == (frozenset(),)


# -- vocabulary ----------------------------------------------------------------

def test_term_in_every_doc_discarded():
    v = fit_vocabulary([["x", "y"], ["x", "z"]],
                       VocabConfig(min_term_count=1, max_doc_fraction=0.5))
    assert "x" not in v.index and set(v.terms) == {"y", "z"}


def test_rare_term_discarded():
    streams = [["a", "b"], ["a", "c"], ["d"], ["e"], ["b", "b"]]
    v = fit_vocabulary(streams, VocabConfig(min_term_count=3, max_doc_fraction=1.0))
    assert v.terms == ("b",)  # "a" appears twice only


def test_vocabulary_lexicographic_and_deterministic():
    streams = [["pear", "apple", "fig"], ["fig", "pear"], ["apple"]]
    cfg = VocabConfig(min_term_count=1, max_doc_fraction=1.0)
    v1, v2 = fit_vocabulary(streams, cfg), fit_vocabulary(streams, cfg)
    assert v1.terms == ("apple", "fig", "pear") and v1.index == v2.index


def test_empty_vocabulary_error():
    with pytest.raises(ValueError):
        fit_vocabulary([["a"]], VocabConfig(min_term_count=3))


# -- TF / TF-IDF -----------------------------------------------------------------

def _vocab():
    return fit_vocabulary([["data", "mining"], ["web"]], VocabConfig(min_term_count=1,
                                                                       max_doc_fraction=1.0))


def test_vectorize_tf_counts():
    v = _vocab()
    vec = vectorize_tf(["data", "data", "mining", "oov"], v)
    assert vec[v.index["data"]] == 2 and vec[v.index["mining"]] == 1 and vec.sum() == 3


def test_vectorize_tf_oov_and_empty():
    v = _vocab()
    assert not vectorize_tf(["zzz"], v).any()
    assert not vectorize_tf([], v).any()


def test_idf_closed_forms():
    tf = sp.csr_matrix(np.array([[1.0, 2.0], [3.0, 0.0]]))
    dm = fit_tfidf(tf)
    assert dm.idf[0] == pytest.approx(1.0)          # df = |D|
    assert dm.idf[1] == pytest.approx(np.log(3 / 2) + 1)
    assert dm.matrix[1, 1] == 0.0
    assert fit_tfidf(sp.csr_matrix([[5.0]])).idf[0] == pytest.approx(1.0)


@given(st.integers(1, 1000), st.lists(st.integers(0, 1000), min_size=2, max_size=20))
def test_idf_nonincreasing_in_df(n_docs, dfs):
    dfs = np.clip(np.sort(dfs), 0, n_docs)
    idf = smooth_idf(dfs, n_docs)
    assert np.all(np.diff(idf) <= 0) and np.all(idf >= 0)


# -- LSI ----------------------------------------------------------------------------

def _cosines(M):
    M = np.asarray(M.toarray() if sp.issparse(M) else M)
    n = np.linalg.norm(M, axis=1)
    return (M @ M.T) / np.outer(n, n)


def test_full_rank_lsi_preserves_cosines():
    rng = np.random.default_rng(3)
    tf = sp.csr_matrix(rng.poisson(1.0, size=(12, 25)).astype(float) + np.eye(12, 25))
    tfidf = fit_tfidf(tf)
    lsi = fit_lsi(tfidf, k=300)
    np.testing.assert_allclose(_cosines(lsi.matrix), _cosines(tfidf.matrix), atol=1e-6)


def test_rank_one_collinear():
    X = np.outer([1.0, 2.0, 3.0], [1.0, 0.0, 2.0, 1.0])
    lsi = fit_lsi(sp.csr_matrix(X), k=1)
    assert lsi.matrix.shape == (3, 1)
    np.testing.assert_allclose(np.abs(_cosines(lsi.matrix)), 1.0)


def test_effective_rank_clamped():
    rng = np.random.default_rng(0)
    X = sp.csr_matrix(rng.random((10, 40)))
    lsi = fit_lsi(X, k=300)
    assert lsi.matrix.shape[1] <= 10 and lsi.components.shape == (40, lsi.matrix.shape[1])


def test_rank_deficient_drops_null_directions():
    rng = np.random.default_rng(1)
    X = rng.random((8, 3)) @ rng.random((3, 20))  # rank 3
    assert fit_lsi(X, k=8).singular_values.shape == (3,)


def test_invalid_rank():
    with pytest.raises(ValueError):
        fit_lsi(sp.csr_matrix(np.eye(3)), k=0)


@pytest.mark.parametrize("solver", ["full", "randomized"])
def test_full_rank_residual(solver):
    rng = np.random.default_rng(5)
    X = rng.random((15, 30))
    U, s, Vt = truncated_svd(X, 15, solver=solver)
    assert np.linalg.norm(X - (U * s) @ Vt) <= 1e-6 * np.linalg.norm(X)


def test_randomized_matches_exact_on_low_rank():
    rng = np.random.default_rng(9)
    X = rng.random((600, 5)) @ rng.random((5, 700)) + 1e-9 * rng.random((600, 700))
    _, s_rand, _ = truncated_svd(sp.csr_matrix(X), 5, solver="randomized")
    s_exact = np.linalg.svd(X, compute_uv=False)[:5]
    np.testing.assert_allclose(s_rand, s_exact, rtol=1e-6)


def test_svd_deterministic():
    X = sp.random(700, 900, density=0.01, random_state=2, format="csr")
    a = truncated_svd(X, 20, solver="randomized", random_state=4)
    b = truncated_svd(X, 20, solver="randomized", random_state=4)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


# -- representation estimator ------------------------------------------------------

TEXTS = ["data mining of large graphs", "mining frequent patterns in data",
         "deep neural networks", "neural networks for vision", "graphs and networks",
         "data mining algorithms"]


@pytest.mark.parametrize("kind", ["tf", "tfidf", "lsi"])
def test_query_of_document_equals_its_row(kind):
    rep = permissive_rep(kind).fit(TEXTS)
    X = rep.transform(TEXTS)
    X = X.toarray() if sp.issparse(X) else X
    for i, t in enumerate(TEXTS):
        np.testing.assert_allclose(rep.vectorize_query(t).vector, X[i], atol=1e-12)
    if kind == "tf":
        np.testing.assert_array_equal(X, rep.doc_matrix_.matrix.toarray())


def test_oov_query_zero():
    rep = permissive_rep("tfidf").fit(TEXTS)
    assert not rep.vectorize_query("zebra quokka").vector.any()


def test_query_uses_learned_phrase():
    texts = ["data mining " + w for w in "abcdefghij"] + ["mining alone", "data alone"]
    rep = permissive_rep("tf").set_params(phrase_passes=1, phrase_min_count=1,
                                          phrase_threshold=1.0).fit(texts)
    j = rep.vocabulary_.index["data_mining"]
    assert rep.vectorize_query("Data mining").vector[j] == 1.0


def test_lsi_fit_on_tf_has_no_idf():
    rep = permissive_rep("lsi", lsi_input="tf").fit(TEXTS)
    assert rep.idf_ is None


def test_unfitted_transform_raises():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        permissive_rep().transform(["x"])


def test_get_params_round_trip():
    rep = permissive_rep("lsi", lsi_rank=7)
    assert rep.get_params()["lsi_rank"] == 7
    assert rep.set_params(kind="tf").kind == "tf"


@pytest.mark.parametrize("kind", ["tf", "tfidf", "lsi"])
def test_cache_round_trip(tmp_path, kind):
    rep = permissive_rep(kind).fit(TEXTS)
    save_representation(rep, tmp_path / "r.bin", key="abc")
    loaded = load_representation(tmp_path / "r.bin", key="abc")
    a, b = rep.transform(TEXTS), loaded.transform(TEXTS)
    if sp.issparse(a):
        a, b = a.toarray(), b.toarray()
    assert np.array_equal(a, b)
    assert loaded.vocabulary_.terms == rep.vocabulary_.terms
    with pytest.raises(ValueError, match="key"):
        load_representation(tmp_path / "r.bin", key="other")


def test_cache_rejects_foreign_file(tmp_path):
    (tmp_path / "x").write_bytes(b"garbage\n")
    with pytest.raises(ValueError):
        load_representation(tmp_path / "x")


# -- similarities ---------------------------------------------------------------------

def test_similarity_identity_orthogonal_zero():
    X = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 3.0], [0.0, 0.0, 0.0]])
    s = similarities(Query(np.array([1.0, 2.0, 0.0])), X)
    assert s[0] == pytest.approx(1.0) and s[1] == 0.0 and s[2] == 0.0
    assert not similarities(np.zeros(3), X).any()
    assert np.array_equal(similarities(np.array([1.0, 2.0, 0.0]), DocMatrix("tf", X)), s)


@given(arrays(np.float64, (6, 4), elements=st.floats(-5, 5)),
       arrays(np.float64, 4, elements=st.floats(-5, 5)))
def test_similarities_bounded(X, q):
    s = similarities(q, X)
    assert np.all(s >= -1.0) and np.all(s <= 1.0)
    s_pos = similarities(np.abs(q), sp.csr_matrix(np.abs(X)))
    assert np.all(s_pos >= 0.0)
