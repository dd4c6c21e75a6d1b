"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL
line (run with ``pytest tests/test_acceptance.py -v -s``).

The aggregate-reproduction criterion encodes one published reference score
row; two of that row's three printed aggregates are internally inconsistent
with the documented mean formulas (the formula reproduces every other row of
the same table), so those two assertions fail by design and are kept as
documentation of the discrepancy. Everything else must pass.
"""

import json
import time
from contextlib import contextmanager

import pytest

from conftest import make_random_graph
from cqkit.cli import main as cli_main
from cqkit.corpus import CurriculumSchedule, build_corpus, schedule_stages, write_stages
from cqkit.decompose import compile_query, difficulty, duplicate_union_branches, to_computation_tree
from cqkit.evaluate import (
    aggregate,
    build_label_index,
    display_score,
    mrr_filtered,
    parse_prediction,
    Prediction,
)
from cqkit.executor import AnswerSplit, answer, answer_chain, answer_tree, ordered_final
from cqkit.kg import Triple
from cqkit.prompts import render_completion
from cqkit.queries import QUERY_TYPES, parse, to_cnf, to_dnf, GroundedQuery, TEMPLATES
from cqkit.retrieval import RetrievedContext, TokenBudget, completeness, inference_path, retrieve
from cqkit.sampling import sample_queries


@contextmanager
def criterion(name):
    start = time.time()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL ({time.time() - start:.1f}s)")
        raise
    print(f"ACCEPTANCE {name}: PASS ({time.time() - start:.1f}s)")


SUBQUERY_TABLE = {
    "1p": (1, 1), "2p": (2, 1), "3p": (3, 2), "2i": (3, 2), "3i": (5, 3),
    "pi": (4, 3), "ip": (4, 3), "2u": (3, 2), "up": (4, 3),
    "2in": (3, 2), "3in": (5, 3), "inp": (4, 3), "pin": (4, 3), "pni": (4, 3),
}


def test_subquery_count_table():
    with criterion("subquery-count-table"):
        start = time.time()
        for tag, expected in SUBQUERY_TABLE.items():
            nr, ne, build = TEMPLATES[tag]
            chain = compile_query(build(list(range(nr)), list(range(100, 100 + ne))))
            assert difficulty(chain) == expected, tag
        assert time.time() - start < 1.0


@pytest.fixture(scope="module")
def sweep():
    graph = make_random_graph(100, 8, 600, seed=20240401)
    queries = {
        tag: sample_queries(graph, tag, 200, seed=97) for tag in QUERY_TYPES
    }
    return graph, queries


def test_chain_direct_equivalence(sweep):
    with criterion("chain-direct-equivalence"):
        start = time.time()
        graph, queries = sweep
        checked = 0
        for tag in QUERY_TYPES:
            for q in queries[tag]:
                direct = answer(q.expr, graph)
                _, final = answer_chain(compile_query(q.expr), graph)
                assert final == direct, f"{tag} {q.id}"
                checked += 1
        assert checked == 200 * 14
        assert time.time() - start < 30.0


def test_normal_form_soundness(sweep):
    with criterion("normal-form-soundness"):
        start = time.time()
        graph, queries = sweep
        for tag in QUERY_TYPES:
            for q in queries[tag]:
                direct = answer(q.expr, graph)
                assert answer(to_dnf(q.expr), graph) == direct, tag
                assert answer(to_cnf(q.expr), graph) == direct, tag
                rewritten = duplicate_union_branches(to_computation_tree(q.expr))
                assert answer_tree(rewritten, graph) == direct, tag
        assert time.time() - start < 30.0


def test_oracle_ceiling_full_pipeline(tmp_path, toy_dir):
    with criterion("oracle-ceiling"):
        start = time.time()
        out = tmp_path / "pipeline"
        base = ["--dataset", str(toy_dir), "--out", str(out), "--seed", "13"]
        assert cli_main(["sample", *base, "--per-type", "4"]) == 0
        assert cli_main(["build", *base]) == 0
        assert cli_main(["oracle", *base, "--graph", "complete"]) == 0
        assert cli_main(["eval", *base]) == 0
        report = json.loads((out / "report.json").read_text())
        assert set(report["per_type"]) == set(QUERY_TYPES)
        for tag, scores in report["per_type"].items():
            assert display_score(scores["mrr"]) == "100.0", tag
            assert display_score(scores["accuracy"]) == "100.0", tag
        assert time.time() - start < 120.0


def test_filtered_mrr_unit_truth():
    with criterion("filtered-mrr-unit-truth"):
        def pred(*ids):
            return Prediction("s", "", tuple(ids), parse_ok=True)

        # the hand-computed case: hard at raw positions 1 and 3, easy at 2
        answers = AnswerSplit(easy=(20,), hard=(10, 11))
        assert mrr_filtered(pred(10, 20, 11), answers) == 0.75
        # five sibling constructions, derived with the same rank rule
        assert mrr_filtered(pred(10), AnswerSplit((), (10,))) == 1.0
        assert mrr_filtered(pred(20, 99), AnswerSplit((20,), (10,))) == 0.0
        assert mrr_filtered(pred(20, 10), AnswerSplit((20,), (10,))) == 0.5
        assert mrr_filtered(pred(10, 11, 20), answers) == 1.0
        assert mrr_filtered(pred(99, 10, 20, 11), answers) == (0.5 + 1 / 3) / 2


# Published reference row (percent scores) and its printed aggregates.
REFERENCE_ROW = {
    "1p": 93.5, "2p": 73.5, "3p": 59.6, "2i": 92.3, "3i": 82.3,
    "pi": 76.8, "ip": 75.9, "2u": 74.6, "up": 60.4,
    "2in": 81.2, "3in": 61.6, "inp": 52.0, "pin": 43.5, "pni": 41.7,
}
REFERENCE_AGGREGATES = {"avg_p": 82.6, "avg_ood": 71.9, "avg_n": 56.9}


def _reference_report():
    records = [(tag, v / 100, v / 100, True) for tag, v in REFERENCE_ROW.items()]
    return aggregate(records)


@pytest.mark.parametrize("column", ["avg_p", "avg_ood", "avg_n"])
def test_aggregate_reproduction_reference_row(column):
    # avg_p and avg_n of this row do not recompute from its per-type scores
    # under the documented mean formula (which reproduces every other row of
    # the same table); those two assertions fail and are intentionally left
    # red rather than bending the formula to one inconsistent row.
    with criterion(f"aggregate-reproduction[{column}]"):
        report = _reference_report()
        computed = getattr(report, column) * 100
        expected = REFERENCE_AGGREGATES[column]
        assert abs(computed - expected) <= 0.1, (
            f"{column}: computed {computed:.2f} from the per-type scores, "
            f"row prints {expected}"
        )


def test_curriculum_mixes(tmp_path):
    with criterion("curriculum-mixes"):
        from test_corpus import make_pools

        samples = make_pools(1200, 1100, 1100)
        schedule = CurriculumSchedule.default(count=1000, seed=77)
        stages = schedule_stages(samples, schedule)
        stage1 = stages[0]
        got = {level: sum(1 for s in stage1 if s.difficulty == level) for level in (1, 2, 3)}
        for level, target in zip((1, 2, 3), (800, 100, 100)):
            assert abs(got[level] - target) <= 1, got
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        a_dir.mkdir(), b_dir.mkdir()
        write_stages(stages, a_dir)
        write_stages(schedule_stages(samples, schedule), b_dir)
        for k in (1, 2, 3):
            assert (a_dir / f"stage{k}.jsonl").read_bytes() == (b_dir / f"stage{k}.jsonl").read_bytes()


@pytest.fixture(scope="module")
def toy_tagged(toy_graphs):
    from cqkit.sampling import derived_seed

    tagged = []
    for split in ("train", "valid", "test"):
        _, smaller, larger = toy_graphs.for_split(split)
        for tag in QUERY_TYPES:
            qs = sample_queries(
                larger, tag, 3, seed=derived_seed(19, split),
                smaller=None if split == "train" else smaller, id_prefix=split,
            )
            tagged.extend((q, split) for q in qs)
    return tagged


def test_token_budget(toy_graphs, toy_tagged):
    with criterion("token-budget"):
        samples, stats = build_corpus(toy_graphs, toy_tagged, TokenBudget(4096))
        assert all(s.token_estimate <= 4096 for s in samples)
        assert sum(1 for s in samples if s.token_estimate > 4096) == 0
        tiny, tiny_stats = build_corpus(toy_graphs, toy_tagged, TokenBudget(10))
        assert tiny_stats["discarded_count"] == tiny_stats["input_count"] - tiny_stats["emitted_count"]
        assert tiny_stats["input_count"] == len(toy_tagged)
        assert len(tiny) == tiny_stats["emitted_count"]


def test_completeness_metric(toy_graphs, tiny3):
    with criterion("completeness-metric"):
        graph = toy_graphs.train
        for tag in QUERY_TYPES:
            for q in sample_queries(graph, tag, 4, seed=23):
                ctx = retrieve(q, graph)
                assert completeness(q, ctx, graph) == 1.0, tag
                if tag != "1p":
                    path = inference_path(q, graph)
                    gutted = RetrievedContext(
                        triples=tuple(t for t in ctx.triples if t not in path),
                        token_estimate=ctx.token_estimate,
                        truncated=False,
                    )
                    assert completeness(q, gutted, graph) == 0.0, tag
        # the worked half-path construction: a 2i with answer b and exactly
        # two branch triples, one of which is retrieved
        query = GroundedQuery.from_expr("c-2i", parse("(and (p 0 (e 0)) (p 1 (e 3)))"), "2i")
        assert inference_path(query, tiny3) == {Triple(0, 0, 1), Triple(3, 1, 1)}
        half = RetrievedContext(triples=(Triple(0, 0, 1),), token_estimate=0, truncated=False)
        assert completeness(query, half, tiny3) == 0.5


def test_round_trip_1000_oracle_completions(toy_graphs):
    with criterion("oracle-round-trip"):
        graph = toy_graphs.train_valid_test
        label_index = build_label_index(graph)
        checked = 0
        per_type = -(-1000 // len(QUERY_TYPES))  # ceil: 72 x 14 = 1008
        for tag in QUERY_TYPES:
            for q in sample_queries(graph, tag, per_type, seed=29):
                chain = compile_query(q.expr)
                bindings, final = answer_chain(chain, graph)
                text = render_completion(chain, bindings, ordered_final(final, set()), graph)
                pred = parse_prediction(q.id, text, label_index)
                assert pred.parse_ok
                assert set(pred.parsed) == final, f"{tag} {q.id}"
                checked += 1
        assert checked >= 1000
