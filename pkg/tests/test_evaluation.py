import statistics

import pytest

from conftest import permissive_rep
from expertbench.corpus import Candidate, Dataset, Document, SyntheticConfig, generate_synthetic
from expertbench.evaluation import (
    EvalReport,
    aggregate,
    load_report,
    run_document_query,
    run_protocol,
    run_topic_query,
    summary_table,
    table_csv,
    table_markdown,
)
from expertbench.metrics import QueryScore
from expertbench.rankers import PanopticRanker, PropagationRanker, VotingRanker


def test_aggregate_examples():
    assert aggregate([0.5, 0.5]) == {"n": 2, "excluded": 0, "mean": 0.5, "std": 0.0}
    assert aggregate([0.0, 1.0])["std"] == 0.5
    out = aggregate([1.0, 0.0, 0.5], ["A", "A", "B"])
    assert out["topic_means"] == {"A": 0.5, "B": 0.5}
    assert out["topic_std"] == 0.0
    assert out["mean"] == pytest.approx(0.5)


def test_aggregate_excludes_undefined():
    out = aggregate([None, 1.0, None, 0.0], ["a", "a", "b", "b"])
    assert out["n"] == 2 and out["excluded"] == 2 and out["mean"] == 0.5
    assert out["topic_means"] == {"a": 1.0, "b": 0.0}
    assert aggregate([None])["mean"] is None


def test_topic_std_not_above_query_std_when_within_topic_spread_dominates():
    values = {"A": [0.0, 1.0, 0.0, 1.0], "B": [0.1, 0.9, 0.2, 0.8]}
    flat = [v for vs in values.values() for v in vs]
    topics = [t for t, vs in values.items() for _ in vs]
    out = aggregate(flat, topics)
    assert out["std"] == pytest.approx(statistics.pstdev(flat))
    assert out["topic_std"] == pytest.approx(statistics.pstdev([0.5, 0.5]))
    assert out["topic_std"] <= out["std"]


def test_global_mean_is_query_weighted_topic_mean():
    values, topics = [0.2, 0.4, 0.9], ["x", "x", "y"]
    out = aggregate(values, topics)
    weighted = (2 * out["topic_means"]["x"] + 1 * out["topic_means"]["y"]) / 3
    assert out["mean"] == pytest.approx(weighted)


# -- protocols ----------------------------------------------------------------

@pytest.fixture(scope="module")
def thirteen():
    return generate_synthetic(SyntheticConfig(num_topics=13, experts_per_topic=2,
                                              docs_per_expert=3, noise_candidates=5, rng_seed=3))


def test_topic_query_one_score_per_topic(thirteen):
    report = run_topic_query(thirteen, VotingRanker())
    assert len(report.queries) == 13
    assert [q.query_id for q in report.queries] == sorted(thirteen.topics)


def test_single_topic_std_zero(thirteen):
    topic = sorted(thirteen.topics)[0]
    ds = Dataset(thirteen.candidates, thirteen.documents, thirteen.edges,
                 {topic: thirteen.topics[topic]})
    s = run_topic_query(ds, PanopticRanker()).summary()
    assert s["ap"]["std"] == 0.0 and s["ap"]["n"] == 1


def test_document_query_count(thirteen):
    report = run_document_query(thirteen, VotingRanker())
    # every expert has three single-author documents
    assert len(report.queries) == 13 * 2 * 3
    topic = sorted(thirteen.topics)[0]
    assert sum(q.topic == topic for q in report.queries) == 6


def test_shared_document_queried_per_expert_occurrence(toy):
    ds = Dataset(toy.candidates, toy.documents, toy.edges, {"both": {"a", "b"}})
    report = run_document_query(ds, VotingRanker(permissive_rep()))
    ids = [q.query_id for q in report.queries]
    assert ids == ["both/a/d1", "both/a/d2", "both/b/d2", "both/b/d3"]


def test_empty_topic_skipped(toy):
    ds = Dataset(toy.candidates, toy.documents, toy.edges, {"fruit": {"a"}, "none": set()})
    for run in (run_topic_query, run_document_query):
        report = run(ds, VotingRanker(permissive_rep()))
        assert report.skipped_topics == ["none"]
        assert all(q.topic == "fruit" for q in report.queries)


def test_ranker_fit_elsewhere_rejected(toy, small_synthetic):
    ranker = VotingRanker(permissive_rep()).fit(toy)
    with pytest.raises(ValueError, match="different dataset"):
        run_topic_query(small_synthetic, ranker)


def test_unknown_protocol(toy):
    with pytest.raises(ValueError):
        run_protocol("panel", toy, VotingRanker(permissive_rep()))


# -- leave-out audit ------------------------------------------------------------

class LeakyVote(VotingRanker):
    """Ignores the leave-out request."""

    def _candidate_scores(self, query, leave_out):
        return super()._candidate_scores(query, None)


def _poison(doc):
    return "unrelated filler words"


@pytest.mark.parametrize("cls", [PanopticRanker, VotingRanker, PropagationRanker])
def test_leave_out_audit_passes(small_synthetic, cls):
    ranker = cls().fit(small_synthetic)
    plain = run_document_query(small_synthetic, ranker)
    audited = run_document_query(small_synthetic, ranker, replace_left_out=_poison)
    assert plain.to_json() == audited.to_json()


def test_leave_out_audit_detects_leak():
    # a's only on-topic document is d1; with it left out, b's d3 wins
    ds = Dataset((Candidate("a", "a"), Candidate("b", "b")),
                 (Document("d1", "apple banana"), Document("d3", "apple banana cherry"),
                  Document("d4", "durian")),
                 (("d1", "a"), ("d4", "a"), ("d3", "b")), {"t1": {"a"}, "t2": {"b"}})
    honest = VotingRanker(permissive_rep()).fit(ds)
    assert (run_document_query(ds, honest).to_json()
            == run_document_query(ds, honest, replace_left_out=_poison).to_json())
    leaky = LeakyVote(permissive_rep()).fit(ds)
    plain = run_document_query(ds, leaky)
    audited = run_document_query(ds, leaky, replace_left_out=_poison)
    assert plain.to_json() != audited.to_json()
    assert plain.queries[0].average_precision == 1.0
    assert audited.queries[0].average_precision == 0.5


# -- reports and tables -------------------------------------------------------------

def _report(ranker, rep, aps, protocol="topic"):
    qs = [QueryScore(f"q{i}", f"t{i % 2}", 0.1, ap, 1 + i, 1 / (1 + i), ap, True)
          for i, ap in enumerate(aps)]
    return EvalReport(protocol, ranker, rep, 10, qs)


def test_json_round_trip(tmp_path, small_synthetic):
    report = run_document_query(small_synthetic, PropagationRanker(eta=0.5))
    path = report.write_json(tmp_path / "r.json")
    back = load_report(path)
    assert back == report
    assert back.to_json() == report.to_json()


def test_summary_recomputable_from_queries(small_synthetic):
    report = run_document_query(small_synthetic, VotingRanker())
    s = report.summary()["ap"]
    aps = [q.average_precision for q in report.queries]
    assert s["mean"] == pytest.approx(statistics.fmean(aps))
    assert s["std"] == pytest.approx(statistics.pstdev(aps))


def test_table_best_flags():
    reports = [_report("vote-rr", "tf", [0.2, 0.4]), _report("panoptic", "tf", [0.9, 0.7])]
    _, reps, rows = summary_table(reports)
    assert reps == ["tf"]
    best = {(r["ranker"], r["metric"]): r["cells"]["tf"]["best"] for r in rows}
    assert best[("panoptic", "ap")] and not best[("vote-rr", "ap")]
    # first relevant rank is lower-is-better; both reports share ranks 1, 2
    assert best[("panoptic", "rr")] and best[("vote-rr", "rr")]
    assert "**0.800**" in table_markdown(reports)
    csv = table_csv(reports).splitlines()
    assert csv[0] == "protocol,ranker,metric,tf,tf_best,tf_topic_std"
    assert "topic,panoptic,ap,0.800±0.100,1,0.100" in csv


def test_table_rejects_mixed_protocols_and_duplicates():
    with pytest.raises(ValueError, match="protocols"):
        summary_table([_report("a", "tf", [1.0]), _report("b", "tf", [1.0], "document")])
    with pytest.raises(ValueError, match="duplicate"):
        summary_table([_report("a", "tf", [1.0]), _report("a", "tf", [0.5])])


def test_document_table_has_topic_std_columns():
    md = table_markdown([_report("a", "lsi", [1.0, 0.5], "document")])
    assert "lsi topic STD" in md


def test_non_converged_counted():
    r = _report("p", "tf", [1.0])
    r.queries.append(QueryScore("x", "t", 0.0, 0.0, None, 0.0, None, False))
    assert r.non_converged == 1 and r.to_dict()["non_converged"] == 1
