import pytest

from cqkit.corpus import (
    CorpusError,
    CorpusSample,
    CurriculumSchedule,
    StageSpec,
    build_corpus,
    max_balanced_stage_count,
    read_corpus,
    schedule_stages,
    write_corpus,
    write_stages,
)
from cqkit.decompose import compile_query
from cqkit.evaluate import build_label_index, parse_prediction
from cqkit.executor import AnswerSplit, answer, answer_chain
from cqkit.prompts import render_prompt
from cqkit.queries import QUERY_TYPES, parse
from cqkit.retrieval import TokenBudget, estimate_tokens
from cqkit.sampling import derived_seed, sample_queries


def sample_tagged(graphs, per_type=2, seed=61):
    tagged = []
    for split in ("train", "valid", "test"):
        _, smaller, larger = graphs.for_split(split)
        for tag in QUERY_TYPES:
            qs = sample_queries(
                larger,
                tag,
                per_type,
                seed=derived_seed(seed, split),
                smaller=None if split == "train" else smaller,
                id_prefix=split,
            )
            tagged.extend((q, split) for q in qs)
    return tagged


def test_prompt_deterministic_and_parseable(toy_graphs):
    g = toy_graphs.train
    query = sample_queries(g, "2p", 1, seed=5)[0]
    from cqkit.retrieval import retrieve

    ctx = retrieve(query, g)
    p1 = render_prompt(query, ctx.triples, g)
    p2 = render_prompt(query, ctx.triples, g)
    assert p1 == p2
    query_line = next(l for l in p1.splitlines() if l.startswith("QUERY: "))
    assert parse(query_line[len("QUERY: "):]) == query.expr


def test_prompt_empty_context_marker(toy_graphs):
    g = toy_graphs.train
    query = sample_queries(g, "1p", 1, seed=6)[0]
    prompt = render_prompt(query, [], g)
    lines = prompt.splitlines()
    idx = lines.index("CONTEXT:")
    assert lines[idx + 1] == "(none)"


def test_completion_round_trip_and_step_consistency(toy_graphs):
    complete = toy_graphs.train_valid_test
    label_index = build_label_index(complete)
    tagged = sample_tagged(toy_graphs, per_type=2)
    budget = TokenBudget(10**6)
    samples, _ = build_corpus(toy_graphs, tagged, budget)
    assert samples
    for s in samples:
        _, _, larger = toy_graphs.for_split(s.split)
        chain = compile_query(s.query.expr)
        bindings, final = answer_chain(chain, larger)
        pred = parse_prediction(s.id, s.completion, build_label_index(larger))
        assert pred.parse_ok
        assert set(pred.parsed) == final == s.answers.all_set
        # every STEP line's entities are a subset of the executor binding
        for line, step in zip(s.completion.splitlines(), chain.steps):
            listing = line.split(" = {", 1)[1].rsplit("}", 1)[0]
            labels = [x.strip() for x in listing.split(",") if x.strip()]
            shown = {parse_prediction("x", "FINAL: {" + ", ".join(labels) + "}", build_label_index(larger)).parsed[i] for i in range(len(labels))} if labels else set()
            assert shown <= bindings[step.output]


def test_step_display_cap():
    from cqkit.kg import KnowledgeGraph, Triple
    from cqkit.queries import GroundedQuery

    g = KnowledgeGraph([Triple(0, 0, t) for t in range(1, 30)])
    query = GroundedQuery.from_expr("q-1", parse("(p 0 (e 0))"), "1p")
    chain = compile_query(query.expr)
    bindings, final = answer_chain(chain, g)
    from cqkit.executor import ordered_final
    from cqkit.prompts import render_completion

    text = render_completion(chain, bindings, ordered_final(final, set()), g)
    step_line, final_line = text.splitlines()
    assert "…+13 more" in step_line  # 29 results, cap 16
    assert final_line.count(",") == 28  # FINAL stays uncapped


def test_final_empty_renders_braces():
    from cqkit.kg import KnowledgeGraph, Triple
    from cqkit.prompts import render_completion

    g = KnowledgeGraph([Triple(0, 0, 1)])
    chain = compile_query(parse("(p 0 (e 1))"))
    bindings, final = answer_chain(chain, g)
    text = render_completion(chain, bindings, [], g)
    assert text.endswith("FINAL: {}")


def test_budget_discard_counting(toy_graphs):
    tagged = sample_tagged(toy_graphs, per_type=1)
    samples, stats = build_corpus(toy_graphs, tagged, TokenBudget(10))
    assert stats["discarded_count"] == stats["input_count"] - stats["emitted_count"]
    assert stats["emitted_count"] == len(samples) == 0  # tiny budget discards all
    samples, stats = build_corpus(toy_graphs, tagged, TokenBudget(10**6))
    assert stats["discarded_count"] == 0
    assert all(s.token_estimate == estimate_tokens(s.prompt + "\n" + s.completion) for s in samples)


def test_train_completions_use_train_graph_only(toy_graphs):
    tagged = [(q, "train") for q in sample_queries(toy_graphs.train, "1p", 5, seed=71, id_prefix="train")]
    samples, _ = build_corpus(toy_graphs, tagged, TokenBudget(10**6))
    for s in samples:
        assert s.answers.hard == ()
        assert set(s.answers.easy) == answer(s.query.expr, toy_graphs.train)


def test_corpus_jsonl_round_trip(tmp_path, toy_graphs):
    tagged = sample_tagged(toy_graphs, per_type=1)
    samples, _ = build_corpus(toy_graphs, tagged, TokenBudget(10**6))
    path = tmp_path / "corpus.jsonl"
    write_corpus(samples, path)
    rows = read_corpus(path)
    assert [r["id"] for r in rows] == sorted(s.id for s in samples)
    by_id = {s.id: s for s in samples}
    for r in rows:
        s = by_id[r["id"]]
        assert r["prompt"] == s.prompt and r["completion"] == s.completion
        assert r["difficulty"] == s.difficulty
        assert r["easy_answers"] == list(s.answers.easy)
        assert r["hard_answers"] == list(s.answers.hard)


_FAKE_QUERY = None


def fake_sample(i, level):
    global _FAKE_QUERY
    if _FAKE_QUERY is None:
        from cqkit.queries import GroundedQuery

        _FAKE_QUERY = GroundedQuery.from_expr("tmpl", parse("(p 0 (e 0))"), "1p")
    return CorpusSample(
        id=f"s-{i:05d}",
        query=_FAKE_QUERY,
        split="train",
        difficulty=level,
        prompt=f"prompt {i}",
        completion=f"completion {i}",
        answers=AnswerSplit((), ()),
        token_estimate=10,
    )


def make_pools(n_easy, n_med, n_hard):
    samples = []
    i = 0
    for level, n in ((1, n_easy), (2, n_med), (3, n_hard)):
        for _ in range(n):
            samples.append(fake_sample(i, level))
            i += 1
    return samples


def test_schedule_default_mix_exact_counts():
    samples = make_pools(1200, 1100, 1100)
    schedule = CurriculumSchedule.default(count=1000, seed=9)
    stages = schedule_stages(samples, schedule)
    counts = [
        {level: sum(1 for s in st if s.difficulty == level) for level in (1, 2, 3)}
        for st in stages
    ]
    assert counts[0] == {1: 800, 2: 100, 3: 100}
    assert counts[1] == {1: 100, 2: 800, 3: 100}
    assert counts[2] == {1: 100, 2: 100, 3: 800}


def test_schedule_deterministic_bytes(tmp_path):
    samples = make_pools(300, 300, 300)
    schedule = CurriculumSchedule.default(count=200, seed=42)
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    out1.mkdir()
    out2.mkdir()
    write_stages(schedule_stages(samples, schedule), out1)
    write_stages(schedule_stages(samples, schedule), out2)
    for k in (1, 2, 3):
        a = (out1 / f"stage{k}.jsonl").read_bytes()
        b = (out2 / f"stage{k}.jsonl").read_bytes()
        assert a == b and a


def test_schedule_disjoint_across_stages():
    samples = make_pools(400, 400, 400)
    stages = schedule_stages(samples, CurriculumSchedule.default(count=300, seed=3))
    ids = [s.id for st in stages for s in st]
    assert len(ids) == len(set(ids))


def test_schedule_pool_exhaustion_error():
    samples = make_pools(5, 500, 500)
    schedule = CurriculumSchedule.default(count=1000, seed=1)
    with pytest.raises(CorpusError, match="easy.*need 800.*have 5"):
        schedule_stages(samples, schedule)


def test_schedule_mix_within_one_of_target():
    samples = make_pools(200, 200, 200)
    schedule = CurriculumSchedule(
        (StageSpec((34, 33, 33), 100, 1), StageSpec((33, 34, 33), 100, 2), StageSpec((33, 33, 34), 100, 3))
    )
    for st, spec in zip(schedule_stages(samples, schedule), schedule.stages):
        for level, pct in zip((1, 2, 3), spec.mix):
            got = sum(1 for s in st if s.difficulty == level)
            assert abs(got - spec.count * pct / 100) <= 1


def test_stage_mix_must_sum_to_100():
    with pytest.raises(CorpusError, match="sum"):
        StageSpec((80, 10, 5), 100, 1)


def test_max_balanced_stage_count():
    samples = make_pools(60, 120, 240)
    # default mixes demand 100% of each class across the three stages
    assert max_balanced_stage_count(samples) == 60
