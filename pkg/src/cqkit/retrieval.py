"""Greedy depth-traversal context retrieval and the completeness metric.

For a single-hop query the context is every triple touching the anchor
entity or the query relation (the relation side is capped). For anything
deeper, the query's subquery chain is walked forward: each projection step
contributes every triple crossed from its input frontier, and join steps
filter the frontier without contributing triples. Traversal stops on its own
when a frontier empties, since later steps then cross nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from cqkit.decompose import PROJECTION, compile_query
from cqkit.executor import answer_chain
from cqkit.kg import KnowledgeGraph, Triple
from cqkit.prompts import render_prompt
from cqkit.queries import GroundedQuery

PER_RELATION_CAP = 512


class RetrievalError(Exception):
    pass


@dataclass(frozen=True)
class TokenBudget:
    max_tokens: int = 4096

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("token budget must be positive")


def estimate_tokens(text: str) -> int:
    """ceil(1.3 x whitespace word count), computed in integer arithmetic so
    the result never drifts with float rounding."""
    words = len(text.split())
    return (13 * words + 9) // 10


@dataclass(frozen=True)
class RetrievedContext:
    triples: tuple[Triple, ...]
    token_estimate: int
    truncated: bool
    per_step_triples: dict[int, tuple[Triple, ...]] = field(default_factory=dict)


def _one_hop_context(
    query: GroundedQuery, graph: KnowledgeGraph, per_relation_cap: int
) -> list[Triple]:
    anchor = query.anchors[0]
    relation = query.relations[0]
    entity_part = set(graph.neighbors(anchor))
    rel_triples = graph.relation_triples(relation)
    # Anchor-incident triples first, then id order, then cap: keeps frequent
    # relations from flooding the context.
    ranked = sorted(rel_triples, key=lambda t: (0 if anchor in (t.head, t.tail) else 1, t))
    relation_part = set(ranked[:per_relation_cap])
    return sorted(entity_part | relation_part)


def retrieve(
    query: GroundedQuery,
    graph: KnowledgeGraph,
    budget: TokenBudget = TokenBudget(),
    per_relation_cap: int = PER_RELATION_CAP,
) -> RetrievedContext:
    if query.type == "1p":
        ordered = _one_hop_context(query, graph, per_relation_cap)
        per_step = {0: tuple(ordered)}
    else:
        chain = compile_query(query.expr)
        _, _, step_triples = answer_chain(chain, graph, collect_triples=True)
        seen: set[Triple] = set()
        ordered = []
        per_step = {}
        for idx in sorted(step_triples):
            kept = []
            for t in step_triples[idx]:  # already sorted by (h, r, t)
                kept.append(t)
                if t not in seen:
                    seen.add(t)
                    ordered.append(t)
            per_step[idx] = tuple(kept)
    prompt = render_prompt(query, ordered, graph)
    est = estimate_tokens(prompt)
    return RetrievedContext(
        triples=tuple(ordered),
        token_estimate=est,
        truncated=est > budget.max_tokens,
        per_step_triples=per_step,
    )


def inference_path(query: GroundedQuery, reference: KnowledgeGraph) -> set[Triple]:
    """Triples that carry the reference-graph answers through the chain.

    Required entities flow backwards from the final answer set: an
    intersection needs them on both positive branches, a union only on the
    branches that actually produced them, and negated branches witness
    absence so they contribute no triples.
    """
    chain = compile_query(query.expr)
    bindings, final = answer_chain(chain, reference)
    if not final:
        raise RetrievalError("query has no answers on the reference graph; no inference path")

    required: dict[str, set[int]] = {chain.steps[-1].output: set(final)}
    path: set[Triple] = set()

    def resolve(ref) -> set[int]:
        if isinstance(ref, int):
            return {ref}
        return bindings[ref]

    def need(ref, entities: set[int]):
        if isinstance(ref, str) and entities:
            required.setdefault(ref, set()).update(entities)

    for idx in range(len(chain.steps) - 1, -1, -1):
        step = chain.steps[idx]
        out_req = required.get(step.output, set())
        if not out_req:
            continue
        if step.kind == PROJECTION:
            source = resolve(step.inputs[0])
            used_sources: set[int] = set()
            if step.inverse:
                for h in out_req:
                    for s in reference.tails(h, step.relation) & source:
                        path.add(Triple(h, step.relation, s))
                        used_sources.add(s)
            else:
                for t in out_req:
                    for h in reference.heads(t, step.relation) & source:
                        path.add(Triple(h, step.relation, t))
                        used_sources.add(h)
            need(step.inputs[0], used_sources)
        elif step.kind == "intersection":
            need(step.inputs[0], out_req)
            need(step.inputs[1], out_req)
        elif step.kind == "negated-intersection":
            need(step.inputs[0], out_req)
        elif step.kind == "union":
            need(step.inputs[0], out_req & resolve(step.inputs[0]))
            need(step.inputs[1], out_req & resolve(step.inputs[1]))
    return path


def completeness(
    query: GroundedQuery, context: RetrievedContext, reference: KnowledgeGraph
) -> float:
    """Fraction of the inference-path triples present in the context.
    Single-hop queries are complete by convention."""
    if query.type == "1p":
        return 1.0
    path = inference_path(query, reference)
    present = path & set(context.triples)
    return len(present) / len(path)
