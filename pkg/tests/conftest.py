import pytest

from expertbench.corpus import Candidate, Dataset, Document, SyntheticConfig, generate_synthetic
from expertbench.textrep import TextRepresentation

# (criterion, description, status) lines filled by test_acceptance.py
ACCEPTANCE_LOG: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for num, desc, status in sorted(ACCEPTANCE_LOG, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{status}] criterion {num}: {desc}")


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("EXPERTBENCH_CACHE", str(tmp_path / "cache"))


@pytest.fixture(scope="session")
def synthetic():
    return generate_synthetic(SyntheticConfig())


@pytest.fixture(scope="session")
def small_synthetic():
    return generate_synthetic(SyntheticConfig(
        num_topics=3, experts_per_topic=3, docs_per_expert=4, noise_candidates=4,
        vocab_per_topic=20, shared_vocab=20, words_per_doc=20, rng_seed=7,
    ))


@pytest.fixture(scope="session")
def fitted_reps(synthetic):
    texts = [d.text for d in synthetic.documents]
    return {kind: TextRepresentation(kind=kind).fit(texts) for kind in ("tf", "tfidf", "lsi")}


def permissive_rep(kind="tf", **kw):
    """Representation that keeps every token (tiny hand-built corpora)."""
    return TextRepresentation(kind=kind, min_term_count=1, max_doc_fraction=1.0,
                              phrase_passes=0, stopwords=(), **kw)


@pytest.fixture
def toy():
    """Two candidates sharing one document:

    a -- d1 "apple banana", d2 "apple cherry"
    b -- d2, d3 "durian"
    """
    return Dataset(
        candidates=(Candidate("a", "Ann"), Candidate("b", "Bo"), Candidate("z", "Zed")),
        documents=(Document("d1", "apple banana"), Document("d2", "apple cherry"),
                   Document("d3", "durian")),
        edges=(("d1", "a"), ("d2", "a"), ("d2", "b"), ("d3", "b")),
        topics={"fruit": {"a"}, "other": {"b"}},
    )
