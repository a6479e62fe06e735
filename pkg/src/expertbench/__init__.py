"""Evaluation toolkit for expert finding: datasets, document representations,
baseline rankers and the topic-query / document-query protocols."""

from .corpus import (
    Candidate,
    Dataset,
    Document,
    PreprocessConfig,
    RawRecord,
    SyntheticConfig,
    build_dataset,
    generate_synthetic,
    load_dataset,
    parse_aminer,
    preprocess,
    save_dataset,
)
from .evaluation import EvalReport, aggregate, run_document_query, run_topic_query
from .metrics import (
    QueryScore,
    average_precision,
    evaluate_ranking,
    first_relevant_rank,
    precision_at_k,
    roc_auc,
)
from .rankers import (
    PanopticRanker,
    PropagationRanker,
    Ranking,
    VotingRanker,
    build_transition,
    restrict_to,
)
from .textrep import TextRepresentation

__version__ = "0.1.0"
