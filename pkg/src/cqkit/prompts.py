"""Prompt and completion templates.

The wording below is versioned: tests pin exact bytes, so any edit must bump
PROMPT_VERSION and regenerate goldens.
"""

from __future__ import annotations

from typing import Iterable

from cqkit.decompose import DecompositionChain, format_step
from cqkit.kg import KnowledgeGraph, Triple
from cqkit.queries import GroundedQuery, describe, render

PROMPT_VERSION = "1"

TASK_DESCRIPTION = (
    "You are given facts from a knowledge graph and a structured query over it. "
    "Each fact is written as (head, relation, tail). Solve the query by "
    "decomposing it into simple steps: follow relation edges for each "
    "projection step, and combine intermediate results at intersection, union, "
    "or exclusion steps. Write one line per step in the form 'STEP k: ...', then "
    "finish with exactly one line 'FINAL: {answer, answer, ...}' listing every "
    "answer entity by name, or 'FINAL: {}' if there is none."
)

STEP_DISPLAY_CAP = 16


def triple_line(triple: Triple, graph: KnowledgeGraph) -> str:
    h, r, t = triple
    return f"({graph.entity_label(h)}, {graph.relation_label(r)}, {graph.entity_label(t)})"


def render_prompt(query: GroundedQuery, triples: Iterable[Triple], graph: KnowledgeGraph) -> str:
    lines = [TASK_DESCRIPTION, "", "CONTEXT:"]
    triples = list(triples)
    if triples:
        lines.extend(triple_line(t, graph) for t in triples)
    else:
        lines.append("(none)")
    lines.append("")
    lines.append(f"QUERY: {render(query.expr)}")
    lines.append(
        f"STRUCTURE: {describe(query.expr, graph.entity_label, graph.relation_label)}"
    )
    lines.append("ANSWER:")
    return "\n".join(lines)


def _entity_list(ids: Iterable[int], graph: KnowledgeGraph) -> str:
    return ", ".join(graph.entity_label(e) for e in ids)


def render_completion(
    chain: DecompositionChain,
    bindings: dict[str, set[int]],
    final_order: list[int],
    graph: KnowledgeGraph,
    step_display_cap: int = STEP_DISPLAY_CAP,
) -> str:
    """One STEP line per subquery with its (capped) output entities, then an
    uncapped FINAL line. FINAL is machine-parseable by the evaluator."""
    lines = []
    for idx, step in enumerate(chain.steps, start=1):
        shown = sorted(bindings[step.output])
        suffix = ""
        if len(shown) > step_display_cap:
            suffix = f" …+{len(shown) - step_display_cap} more"
            shown = shown[:step_display_cap]
        listing = _entity_list(shown, graph)
        lines.append(
            f"{format_step(idx, step, graph.entity_label)} = {{{listing}}}{suffix}"
        )
    lines.append(f"FINAL: {{{_entity_list(final_order, graph)}}}")
    return "\n".join(lines)
