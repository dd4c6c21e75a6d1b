"""Command-line pipeline driver.

Subcommands: sample, build, oracle, eval, decompose, answer. All randomness
derives from one root seed; reruns with the same inputs and seed write
byte-identical files. Exit codes: 0 success, 1 validation failure, 2 I/O
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from cqkit.corpus import (
    BuildConfig,
    CorpusError,
    CurriculumSchedule,
    StageSpec,
    build_corpus,
    max_balanced_stage_count,
    read_corpus,
    schedule_stages,
    write_corpus,
    write_stages,
)
from cqkit.decompose import compile_query, difficulty, format_chain
from cqkit.executor import oracle_answer, split_answers
from cqkit.kg import KGError, SplitGraphs
from cqkit.queries import QUERY_TYPES, GroundedQuery, QueryError, parse, render
from cqkit.retrieval import PER_RELATION_CAP, TokenBudget
from cqkit.sampling import SamplingError, derived_seed, sample_queries
from cqkit.evaluate import EvalError, evaluate_predictions, format_report

log = logging.getLogger("cqkit")

SPLITS = ("train", "valid", "test")
DEFAULT_PER_TYPE = {"train": 20, "valid": 6, "test": 6}


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str
    out: str
    seed: int = 7
    budget: int = 4096
    mixes: tuple[tuple[int, int, int], ...] = ((80, 10, 10), (10, 80, 10), (10, 10, 80))
    types: tuple[str, ...] = QUERY_TYPES
    per_type: dict[str, int] | None = None
    stage_size: int | None = None
    per_relation_cap: int = PER_RELATION_CAP

    def __post_init__(self):
        if self.seed < 0 or self.budget <= 0 or self.per_relation_cap <= 0:
            raise ValueError("numeric config fields must be positive")
        for mix in self.mixes:
            if sum(mix) != 100:
                raise ValueError(f"stage mix {mix} does not sum to 100")
        unknown = set(self.types) - set(QUERY_TYPES)
        if unknown:
            raise ValueError(f"unknown query types: {sorted(unknown)}")


def parse_mixes(text: str) -> tuple[tuple[int, int, int], ...]:
    """``s1=80,10,10;s2=10,80,10;s3=10,10,80``"""
    mixes = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" in part:
            part = part.split("=", 1)[1]
        values = tuple(int(v) for v in part.split(","))
        if len(values) != 3:
            raise ValueError(f"mix needs 3 percentages, got {part!r}")
        mixes.append(values)
    if len(mixes) != 3:
        raise ValueError("expected exactly 3 stage mixes")
    return tuple(mixes)


def make_config(args) -> PipelineConfig:
    values = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            values.update(json.load(fh))
    if "mixes" in values:
        values["mixes"] = tuple(tuple(m) for m in values["mixes"])
    for key in ("dataset", "out", "seed", "budget", "stage_size", "per_relation_cap"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if getattr(args, "mix", None):
        values["mixes"] = parse_mixes(args.mix)
    if getattr(args, "types", None):
        values["types"] = tuple(t.strip() for t in args.types.split(",") if t.strip())
    if getattr(args, "per_type", None):
        values["per_type"] = {s: args.per_type for s in SPLITS}
    values.setdefault("out", "out")
    return PipelineConfig(**values)


def _load_graphs(config: PipelineConfig) -> SplitGraphs:
    dataset = Path(config.dataset)
    if not dataset.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {dataset}")
    return SplitGraphs.load(dataset)


def _query_file(out_dir: Path, split: str) -> Path:
    return out_dir / f"queries_{split}.tsv"


def write_queries(queries: list[GroundedQuery], path: Path):
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(f"{q.id}\t{q.type}\t{render(q.expr)}\n")


def read_queries(path: Path) -> list[GroundedQuery]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise KGError(f"{path}:{lineno}: expected 'id<TAB>type<TAB>query'")
            qid, tag, sexpr = parts
            out.append(GroundedQuery.from_expr(qid, parse(sexpr), tag))
    return out


def cmd_sample(args) -> int:
    config = make_config(args)
    graphs = _load_graphs(config)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_type = config.per_type or DEFAULT_PER_TYPE
    for split in SPLITS:
        _, smaller, larger = graphs.for_split(split)
        n = per_type.get(split, 0) if isinstance(per_type, dict) else per_type
        queries: list[GroundedQuery] = []
        for tag in config.types:
            queries.extend(
                sample_queries(
                    larger,
                    tag,
                    n,
                    seed=derived_seed(config.seed, "sample", split),
                    smaller=None if split == "train" else smaller,
                    id_prefix=split,
                )
            )
        queries.sort(key=lambda q: q.id)
        write_queries(queries, _query_file(out_dir, split))
        log.info("wrote %d %s queries", len(queries), split)
    return 0


def cmd_build(args) -> int:
    config = make_config(args)
    graphs = _load_graphs(config)
    out_dir = Path(config.out)
    tagged = []
    for split in SPLITS:
        path = _query_file(out_dir, split)
        if not path.exists():
            raise FileNotFoundError(f"missing query file {path}; run 'sample' first")
        tagged.extend((q, split) for q in read_queries(path))
    budget = TokenBudget(config.budget)
    samples, stats = build_corpus(
        graphs, tagged, budget, BuildConfig(per_relation_cap=config.per_relation_cap)
    )
    write_corpus(samples, out_dir / "corpus.jsonl")

    train_samples = [s for s in samples if s.split == "train"]
    stage_size = config.stage_size
    if stage_size is None:
        stage_size = max_balanced_stage_count(train_samples, config.mixes)
    if stage_size <= 0:
        raise CorpusError("train pools are too small for any curriculum stage")
    schedule = CurriculumSchedule(
        tuple(
            StageSpec(mix=mix, count=stage_size, seed=derived_seed(config.seed, "stage", k))
            for k, mix in enumerate(config.mixes, start=1)
        )
    )
    stages = schedule_stages(train_samples, schedule)
    write_stages(stages, out_dir)
    stats["stage_size"] = stage_size
    stats["stage_counts"] = [len(st) for st in stages]
    stats["seed"] = config.seed
    with open(out_dir / "stats.json", "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info(
        "emitted %d samples (%d discarded), stages of %d",
        stats["emitted_count"],
        stats["discarded_count"],
        stage_size,
    )
    return 0


def _rebuild_samples(config: PipelineConfig, graphs: SplitGraphs, out_dir: Path):
    from cqkit.corpus import build_sample

    corpus_ids = {row["id"] for row in read_corpus(out_dir / "corpus.jsonl")}
    budget = TokenBudget(config.budget)
    samples = []
    for split in SPLITS:
        path = _query_file(out_dir, split)
        if not path.exists():
            continue
        for q in read_queries(path):
            if q.id in corpus_ids:
                samples.append(
                    build_sample(q, split, graphs, budget, BuildConfig(config.per_relation_cap))
                )
    return samples


def cmd_oracle(args) -> int:
    config = make_config(args)
    graphs = _load_graphs(config)
    out_dir = Path(config.out)
    graph = graphs.train if args.graph == "train" else graphs.train_valid_test
    samples = _rebuild_samples(config, graphs, out_dir)
    out_path = Path(args.predictions or (out_dir / "predictions.jsonl"))
    with open(out_path, "w", encoding="utf-8") as fh:
        for s in sorted(samples, key=lambda s: s.id):
            text = oracle_answer(s, graph)
            fh.write(json.dumps({"id": s.id, "output_text": text}, ensure_ascii=False) + "\n")
    log.info("wrote %d oracle predictions to %s", len(samples), out_path)
    return 0


def cmd_eval(args) -> int:
    config = make_config(args)
    graphs = _load_graphs(config)
    out_dir = Path(config.out)
    from cqkit.evaluate import load_predictions

    corpus_rows = read_corpus(Path(args.corpus or (out_dir / "corpus.jsonl")))
    predictions = load_predictions(Path(args.predictions or (out_dir / "predictions.jsonl")))
    report = evaluate_predictions(
        corpus_rows, predictions, graphs.train_valid_test, exact_accuracy=args.exact_accuracy
    )
    report_path = Path(args.report or (out_dir / "report.json"))
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(format_report(report))
    if report.unknown_ids:
        print(f"unknown prediction ids: {', '.join(report.unknown_ids)}")
    return 0


def cmd_decompose(args) -> int:
    expr = parse(args.query)
    chain = compile_query(expr)
    count, level = difficulty(chain)
    entity_label = None
    if args.dataset:
        config = make_config(args)
        graphs = _load_graphs(config)
        entity_label = graphs.train_valid_test.entity_label
    print(format_chain(chain, entity_label))
    print(f"type={chain.source_type} subqueries={count} difficulty={level}")
    return 0


def cmd_answer(args) -> int:
    config = make_config(args)
    graphs = _load_graphs(config)
    _, smaller, larger = graphs.for_split(args.split)
    queries = read_queries(Path(args.queries))
    for q in queries:
        split = split_answers(q.expr, smaller, larger)
        easy = ",".join(str(e) for e in split.easy)
        hard = ",".join(str(e) for e in split.hard)
        print(f"{q.id}\teasy:{easy}\thard:{hard}")
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--dataset", help="dataset directory with train/valid/test.txt")
    p.add_argument("--out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="root seed for all randomness")
    p.add_argument("--budget", type=int, help="token budget (default: 4096)")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--per-relation-cap", dest="per_relation_cap", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample grounded queries per split")
    _add_common(p)
    p.add_argument("--types", help="comma-separated type tags (default: all 14)")
    p.add_argument("--per-type", dest="per_type", type=int, help="queries per type per split")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("build", help="build the corpus and curriculum stages")
    _add_common(p)
    p.add_argument("--mix", help="stage mixes, e.g. 's1=80,10,10;s2=10,80,10;s3=10,10,80'")
    p.add_argument("--stage-size", dest="stage_size", type=int, help="samples per stage")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("oracle", help="write perfect-executor predictions")
    _add_common(p)
    p.add_argument("--graph", choices=("train", "complete"), default="complete")
    p.add_argument("--predictions", help="output predictions JSONL path")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval", help="score predictions against the corpus")
    _add_common(p)
    p.add_argument("--corpus", help="corpus JSONL (default: <out>/corpus.jsonl)")
    p.add_argument("--predictions", help="predictions JSONL (default: <out>/predictions.jsonl)")
    p.add_argument("--report", help="report JSON output path")
    p.add_argument("--exact-accuracy", action="store_true", help="exact set match instead of hard recall")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decompose", help="print the subquery chain of one query")
    _add_common(p)
    p.add_argument("query", help="query s-expression, e.g. '(p 1 (e 2))'")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("answer", help="print easy/hard answer sets for a query file")
    _add_common(p)
    p.add_argument("--queries", required=True, help="queries TSV file")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.set_defaults(func=cmd_answer)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, OSError, KGError) as exc:
        log.error("%s", exc)
        return 2
    except (QueryError, SamplingError, CorpusError, EvalError, ValueError, TypeError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
