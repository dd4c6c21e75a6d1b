"""Random query generation by backward template walks.

A query is grounded by drawing an answer entity uniformly, then walking the
template from the root towards the leaves: each projection edge picks a
uniform incoming (or outgoing, for inverse edges) triple of the current
target, fixing the relation and moving to the triple's other end. Negated
branches are grounded at a random co-located entity and accepted only when
the target survives the exclusion. Everything is driven by per-query seeds,
so output is independent of sampling order.
"""

from __future__ import annotations

import hashlib
import random

from cqkit.executor import answer, split_answers
from cqkit.kg import KnowledgeGraph
from cqkit.queries import (
    And,
    Entity,
    GroundedQuery,
    Or,
    Proj,
    QueryExpr,
    TEMPLATES,
)

RETRY_BUDGET = 1000
_NEG_TRIES = 64


class SamplingError(Exception):
    pass


def derived_seed(base_seed: int, *parts) -> int:
    text = ":".join([str(base_seed), *map(str, parts)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


def _walk(template: QueryExpr, target: int, graph: KnowledgeGraph, rng: random.Random) -> QueryExpr | None:
    """Ground the template so that ``target`` is one of its answers; returns
    None when the walk dead-ends and the caller should retry."""
    if isinstance(template, Entity):
        return Entity(target)
    if isinstance(template, Proj):
        if template.inverse:
            candidates = graph.outgoing(target)
        else:
            candidates = graph.incoming(target)
        if not candidates:
            return None
        triple = rng.choice(candidates)
        next_target = triple.tail if template.inverse else triple.head
        child = _walk(template.child, next_target, graph, rng)
        if child is None:
            return None
        return Proj(triple.relation, child, template.inverse)
    if isinstance(template, And):
        entity_ids = graph.entity_ids()
        grounded: list[QueryExpr] = []
        for child, neg in zip(template.children, template.negated):
            if not neg:
                g = _walk(child, target, graph, rng)
                if g is None:
                    return None
                grounded.append(g)
            else:
                # The excluded branch must have real support somewhere while
                # leaving the target untouched.
                for _ in range(_NEG_TRIES):
                    other = rng.choice(entity_ids)
                    g = _walk(child, other, graph, rng)
                    if g is not None and target not in answer(g, graph):
                        grounded.append(g)
                        break
                else:
                    return None
        return And(tuple(grounded), template.negated)
    if isinstance(template, Or):
        entity_ids = graph.entity_ids()
        grounded = []
        for i, child in enumerate(template.children):
            branch_target = target
            if i > 0:
                # Extra branches widen the union; any grounding keeps the
                # target an answer.
                branch_target = rng.choice(entity_ids)
            g = _walk(child, branch_target, graph, rng)
            if g is None and i > 0:
                g = _walk(child, target, graph, rng)
            if g is None:
                return None
            grounded.append(g)
        return Or(tuple(grounded))
    raise TypeError(f"not a query template: {template!r}")


def sample_queries(
    graph: KnowledgeGraph,
    type_tag: str,
    n: int,
    seed: int,
    smaller: KnowledgeGraph | None = None,
    id_prefix: str = "q",
    retry_budget: int = RETRY_BUDGET,
) -> list[GroundedQuery]:
    """n template instances with non-empty answer sets on ``graph``.

    With ``smaller`` given, instances follow the evaluation protocol: anchors
    must resolve on the smaller graph, the hard-answer set must be non-empty
    and the easy answers must stay inside the larger graph's answers, so easy
    and hard always partition them.
    """
    if type_tag not in TEMPLATES:
        raise SamplingError(f"cannot sample query type {type_tag!r}")
    if len(graph) == 0:
        raise SamplingError("graph is empty")
    n_rel, n_anchor, build = TEMPLATES[type_tag]
    template = build([-1] * n_rel, [-1] * n_anchor)
    entity_ids = graph.entity_ids()

    out: list[GroundedQuery] = []
    for i in range(n):
        rng = random.Random(derived_seed(seed, type_tag, i))
        expr = None
        for _ in range(retry_budget):
            target = rng.choice(entity_ids)
            candidate = _walk(template, target, graph, rng)
            if candidate is None:
                continue
            final = answer(candidate, graph)
            if not final:
                continue
            if smaller is not None:
                anchors = GroundedQuery.from_expr("tmp", candidate, type_tag).anchors
                if any(not smaller.has_entity(a) for a in anchors):
                    continue
                split = split_answers(candidate, smaller, graph)
                if not split.hard:
                    continue
                if not split.easy_set <= final:
                    # Non-monotone (negated) queries can lose answers when
                    # triples are added; keep only instances where easy and
                    # hard partition the larger graph's answers.
                    continue
            expr = candidate
            break
        if expr is None:
            raise SamplingError(
                f"could not realize query type {type_tag!r} after {retry_budget} retries"
            )
        out.append(GroundedQuery.from_expr(f"{id_prefix}-{type_tag}-{i:04d}", expr, type_tag))
    return out
