import pytest

from cqkit.kg import KnowledgeGraph, Triple
from cqkit.queries import GroundedQuery, QUERY_TYPES, parse
from cqkit.retrieval import (
    RetrievalError,
    RetrievedContext,
    TokenBudget,
    completeness,
    estimate_tokens,
    inference_path,
    retrieve,
)
from cqkit.sampling import sample_queries


def q(text, tag=None, qid="q-0"):
    return GroundedQuery.from_expr(qid, parse(text), tag)


def test_estimate_tokens_examples():
    assert estimate_tokens("") == 0
    assert estimate_tokens("a b c") == 4  # ceil(3.9)
    assert estimate_tokens("one") == 2  # ceil(1.3)
    # exact multiples must not pick up float noise: 10 words -> exactly 13
    assert estimate_tokens(" ".join(["w"] * 10)) == 13


def test_estimate_tokens_monotone_in_concatenation():
    a = "alpha beta gamma"
    b = "delta epsilon"
    assert estimate_tokens(a + " " + b) >= estimate_tokens(a)
    assert estimate_tokens(a + " " + b) >= estimate_tokens(b)


def test_budget_positive():
    with pytest.raises(ValueError):
        TokenBudget(0)


def test_1p_retrieval_is_brute_force_filter():
    # entity 0 has 3 incident triples; relation 1 labels 2 more elsewhere
    g = KnowledgeGraph(
        [
            Triple(0, 0, 1),
            Triple(2, 0, 0),
            Triple(0, 1, 3),
            Triple(4, 1, 5),
            Triple(6, 1, 7),
        ]
    )
    query = q("(p 1 (e 0))", "1p")
    ctx = retrieve(query, g)
    brute = {t for t in g.triples if 0 in (t.head, t.tail) or t.relation == 1}
    assert set(ctx.triples) == brute
    assert len(ctx.triples) == 5


def test_1p_relation_cap_keeps_anchor_triples_first():
    triples = [Triple(0, 0, 1)] + [Triple(i, 0, i + 1) for i in range(2, 40, 2)]
    g = KnowledgeGraph(triples)
    ctx = retrieve(q("(p 0 (e 0))", "1p"), g, per_relation_cap=3)
    assert Triple(0, 0, 1) in set(ctx.triples)
    assert len(ctx.triples) <= 1 + 3


def test_deep_retrieval_collects_per_step_and_stops_on_empty_frontier(tiny3):
    # 2p from entity 2: no outgoing edges, first hop empty, nothing collected
    ctx = retrieve(q("(p 0 (p 0 (e 2)))", "2p"), tiny3)
    assert ctx.triples == ()
    # 2p from entity 0: hop 1 collects (0,0,1) and (0,0,2); hop 2 collects
    # nothing since 1 and 2 have no outgoing r-edges
    ctx = retrieve(q("(p 0 (p 0 (e 0)))", "2p"), tiny3)
    assert set(ctx.triples) == {Triple(0, 0, 1), Triple(0, 0, 2)}
    assert set(ctx.per_step_triples[0]) == {Triple(0, 0, 1), Triple(0, 0, 2)}
    assert ctx.per_step_triples.get(1, ()) == ()


def test_retrieval_deterministic(toy_graphs):
    g = toy_graphs.train
    query = sample_queries(g, "pi", 1, seed=1)[0]
    a = retrieve(query, g)
    b = retrieve(query, g)
    assert a.triples == b.triples
    assert a.token_estimate == b.token_estimate


def test_truncated_flag():
    g = KnowledgeGraph([Triple(0, 0, 1)])
    ctx = retrieve(q("(p 0 (e 0))", "1p"), g, TokenBudget(10))
    assert ctx.truncated
    ctx = retrieve(q("(p 0 (e 0))", "1p"), g, TokenBudget(4096))
    assert not ctx.truncated


def test_2i_per_step_covers_both_branches(tiny3):
    query = q("(and (p 0 (e 0)) (p 1 (e 3)))", "2i")
    ctx = retrieve(query, tiny3)
    assert set(ctx.per_step_triples[0]) == {Triple(0, 0, 1), Triple(0, 0, 2)}
    assert set(ctx.per_step_triples[1]) == {Triple(3, 1, 1)}


def test_completeness_full_path(tiny3):
    query = q("(and (p 0 (e 0)) (p 1 (e 3)))", "2i")
    ctx = retrieve(query, tiny3)
    assert completeness(query, ctx, tiny3) == 1.0


def test_completeness_half_path(tiny3):
    # single answer 1; path triples are (0,0,1) and (3,1,1); drop one of two
    query = q("(and (p 0 (e 0)) (p 1 (e 3)))", "2i")
    path = inference_path(query, tiny3)
    assert path == {Triple(0, 0, 1), Triple(3, 1, 1)}
    ctx = RetrievedContext(triples=(Triple(0, 0, 1),), token_estimate=0, truncated=False)
    assert completeness(query, ctx, tiny3) == 0.5


def test_completeness_zero_and_error(tiny3):
    query = q("(and (p 0 (e 0)) (p 1 (e 3)))", "2i")
    empty = RetrievedContext(triples=(), token_estimate=0, truncated=False)
    assert completeness(query, empty, tiny3) == 0.0
    unanswerable = q("(and (p 0 (e 2)) (p 1 (e 3)))", "2i")
    with pytest.raises(RetrievalError, match="no answers"):
        completeness(unanswerable, empty, tiny3)


def test_completeness_1p_is_one_by_convention(tiny3):
    query = q("(p 0 (e 0))", "1p")
    empty = RetrievedContext(triples=(), token_estimate=0, truncated=False)
    assert completeness(query, empty, tiny3) == 1.0


def test_inference_path_excludes_negated_branch(tiny3):
    # 2in: positive r-neighbours of 0 minus s-neighbours of 3 => answer {2};
    # the path is only the positive-branch triple landing on 2.
    query = q("(and (p 0 (e 0)) (not (p 1 (e 3))))", "2in")
    path = inference_path(query, tiny3)
    assert path == {Triple(0, 0, 2)}


def test_union_path_only_through_producing_branch():
    g = KnowledgeGraph([Triple(0, 0, 5), Triple(1, 1, 6)])
    query = q("(or (p 0 (e 0)) (p 1 (e 1)))", "2u")
    path = inference_path(query, g)
    assert path == {Triple(0, 0, 5), Triple(1, 1, 6)}
    g2 = KnowledgeGraph([Triple(0, 0, 5), Triple(1, 1, 6), Triple(9, 1, 8)])
    query2 = q("(or (p 0 (e 0)) (p 1 (e 9)))", "2u")
    # branch 2 produces only 8; triple (1,1,6) is not on any answer's path
    assert inference_path(query2, g2) == {Triple(0, 0, 5), Triple(9, 1, 8)}


def test_completeness_complete_graph_sweep(toy_graphs):
    g = toy_graphs.train
    for tag in QUERY_TYPES:
        for query in sample_queries(g, tag, 5, seed=51):
            ctx = retrieve(query, g)
            assert completeness(query, ctx, g) == 1.0, tag
