"""Command-line front end: convert, preprocess, synth, evaluate, report."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import corpus
from .evaluation import (
    PROTOCOLS,
    EvalReport,
    load_report,
    run_protocol,
    table_csv,
    table_markdown,
    write_atomic,
)
from .rankers import FUSIONS, make_ranker
from .textrep import KINDS, TextRepresentation, load_representation, save_representation

logger = logging.getLogger("expertbench")

CACHE_ENV = "EXPERTBENCH_CACHE"

EVAL_DEFAULTS = {
    "rep": "tfidf",
    "lsi_rank": 300,
    "seed": 0,
    "ranker": "vote",
    "fusion": "rr",
    "eta": 0.5,
    "tol": 1e-6,
    "max_iters": 1000,
    "protocol": "topic",
    "k": 10,
    "min_term_count": 3,
    "max_doc_fraction": 0.5,
}

# (ranker kind, eta) cells of the full grid
SWEEP_RANKERS = (("panoptic", None), ("vote", None), ("propagation", 0.1), ("propagation", 0.5))


class CLIError(Exception):
    pass


def _cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else Path.home() / ".cache" / "expertbench"


def _representation(dataset, cfg, fingerprint, use_cache=True) -> TextRepresentation:
    rep = TextRepresentation(kind=cfg["rep"], lsi_rank=cfg["lsi_rank"],
                             random_state=cfg["seed"], min_term_count=cfg["min_term_count"],
                             max_doc_fraction=cfg["max_doc_fraction"])
    rep._check_params()
    params = json.dumps(rep.get_params(), sort_keys=True, default=str)
    key = hashlib.sha256(f"{fingerprint}\0{params}".encode()).hexdigest()
    path = _cache_dir() / f"{key}.rep"
    if use_cache and path.exists():
        try:
            return load_representation(path, key=key)
        except (ValueError, OSError) as exc:
            logger.warning("ignoring stale cache %s: %s", path, exc)
    rep.fit([d.text for d in dataset.documents])
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_representation(rep, path, key=key)
    return rep


def _report_name(report: EvalReport) -> str:
    return f"{report.protocol}__{report.ranker}__{report.representation}.json"


def _write_tables(reports, out: Path, stem: str):
    write_atomic(out / f"{stem}.csv", table_csv(reports))
    write_atomic(out / f"{stem}.md", table_markdown(reports))


def cmd_convert(args) -> int:
    for p in (args.aminer, args.experts):
        if not Path(p).is_file():
            raise CLIError(f"file not found: {p}")
    parsed = corpus.parse_aminer(args.aminer)
    experts = corpus.load_expert_list(args.experts)
    dataset, stats = corpus.build_dataset(parsed.records, experts)
    corpus.save_dataset(dataset, args.out)
    print(f"records={len(parsed.records)} rejected={parsed.rejected} "
          f"candidates={dataset.n_candidates} documents={dataset.n_documents} "
          f"edges={len(dataset.edges)} dropped_experts={len(stats.dropped_experts)} "
          f"empty_topics={len(stats.empty_topics)}")
    return 0


def cmd_preprocess(args) -> int:
    config = corpus.PreprocessConfig(args.max_docs, args.min_docs, args.min_text_length)
    dataset = corpus.load_dataset(args.input)
    out = corpus.preprocess(dataset, config)
    corpus.save_dataset(out, args.out)
    print(f"candidates={out.n_candidates} documents={out.n_documents} edges={len(out.edges)} "
          f"experts={len(out.experts_all)}")
    return 0


def cmd_synth(args) -> int:
    config = corpus.SyntheticConfig(
        num_topics=args.num_topics, experts_per_topic=args.experts_per_topic,
        docs_per_expert=args.docs_per_expert, noise_candidates=args.noise_candidates,
        vocab_per_topic=args.vocab_per_topic, shared_vocab=args.shared_vocab,
        words_per_doc=args.words_per_doc, rng_seed=args.seed,
        topical_fraction=args.topical_fraction,
    )
    dataset = corpus.generate_synthetic(config)
    corpus.save_dataset(dataset, args.out)
    print(f"candidates={dataset.n_candidates} documents={dataset.n_documents} "
          f"topics={len(dataset.topics)}")
    return 0


def _eval_config(args) -> dict:
    cfg = dict(EVAL_DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(file_cfg) - set(EVAL_DEFAULTS)
        if unknown:
            raise CLIError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in EVAL_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["rep"] not in KINDS:
        raise CLIError(f"--rep must be one of {KINDS}")
    if cfg["protocol"] not in PROTOCOLS:
        raise CLIError(f"--protocol must be one of {PROTOCOLS}")
    if cfg["fusion"] not in FUSIONS:
        raise CLIError(f"--fusion must be one of {FUSIONS}")
    if not 0.0 <= cfg["eta"] <= 1.0:
        raise CLIError(f"--eta must lie in [0, 1], got {cfg['eta']}")
    if cfg["k"] < 1:
        raise CLIError("--k must be >= 1")
    if cfg["lsi_rank"] < 1:
        raise CLIError("--lsi-rank must be >= 1")
    return cfg


def cmd_evaluate(args) -> int:
    cfg = _eval_config(args)
    dataset = corpus.load_dataset(args.dataset)
    fingerprint = dataset.fingerprint()
    out = Path(args.out)
    if args.sweep:
        cells = [(rep, kind, eta, proto) for proto in PROTOCOLS for rep in KINDS
                 for kind, eta in SWEEP_RANKERS]
    else:
        cells = [(cfg["rep"], cfg["ranker"], cfg["eta"], cfg["protocol"])]
    reps = {}
    by_protocol: dict[str, list[EvalReport]] = {}
    for rep_kind, kind, eta, proto in cells:
        if rep_kind not in reps:
            reps[rep_kind] = _representation(dataset, {**cfg, "rep": rep_kind}, fingerprint,
                                             use_cache=not args.no_cache)
        ranker = make_ranker(kind, reps[rep_kind], fusion=cfg["fusion"],
                             eta=cfg["eta"] if eta is None else eta, tol=cfg["tol"],
                             max_iters=cfg["max_iters"])
        ranker.fit(dataset)
        logger.info("evaluating %s / %s / %s", proto, ranker.name, rep_kind)
        report = run_protocol(proto, dataset, ranker, cfg["k"])
        if report.non_converged:
            logger.warning("%s: %d queries did not converge", ranker.name, report.non_converged)
        report.write_json(out / _report_name(report))
        by_protocol.setdefault(proto, []).append(report)
    for proto, reports in by_protocol.items():
        _write_tables(reports, out, f"table_{proto}")
        sys.stdout.write(table_markdown(reports))
    return 0


def cmd_report(args) -> int:
    reports = []
    for p in args.reports:
        if not Path(p).is_file():
            raise CLIError(f"file not found: {p}")
        reports.append(load_report(p))
    md = table_markdown(reports)
    if args.out:
        _write_tables(reports, Path(args.out), "table")
    sys.stdout.write(md)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expertbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="AMiner dump + expert list -> canonical dataset")
    p.add_argument("aminer")
    p.add_argument("experts", help="JSON map topic -> list of author names")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("preprocess", help="apply degree and text-length filters")
    p.add_argument("input", help="canonical dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--max-docs", type=int, default=100,
                   help="authors need strictly fewer linked documents (default 100)")
    p.add_argument("--min-docs", type=int, default=1)
    p.add_argument("--min-text-length", type=int, default=50,
                   help="documents need strictly longer text (default 50)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="generate a synthetic dataset with planted experts")
    d = corpus.SyntheticConfig()
    p.add_argument("--num-topics", type=int, default=d.num_topics)
    p.add_argument("--experts-per-topic", type=int, default=d.experts_per_topic)
    p.add_argument("--docs-per-expert", type=int, default=d.docs_per_expert)
    p.add_argument("--noise-candidates", type=int, default=d.noise_candidates)
    p.add_argument("--vocab-per-topic", type=int, default=d.vocab_per_topic)
    p.add_argument("--shared-vocab", type=int, default=d.shared_vocab)
    p.add_argument("--words-per-doc", type=int, default=d.words_per_doc)
    p.add_argument("--topical-fraction", type=float, default=d.topical_fraction)
    p.add_argument("--seed", type=int, default=d.rng_seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("evaluate", help="run one evaluation cell or the full sweep")
    p.add_argument("dataset", help="canonical dataset directory")
    p.add_argument("--config", help="JSON file of defaults (flags take precedence)")
    p.add_argument("--rep", choices=KINDS)
    p.add_argument("--lsi-rank", dest="lsi_rank", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ranker", choices=("panoptic", "vote", "propagation"))
    p.add_argument("--fusion", choices=FUSIONS)
    p.add_argument("--eta", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--k", type=int)
    p.add_argument("--min-term-count", dest="min_term_count", type=int)
    p.add_argument("--max-doc-fraction", dest="max_doc_fraction", type=float)
    p.add_argument("--sweep", action="store_true",
                   help="all representations x rankers x protocols")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="merge report JSON files into a summary table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (CLIError, corpus.DatasetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
