"""Brute-force set evaluation of queries, trees, and subquery chains.

Evaluation is exact set semantics over the graph indexes. Negation is a
bounded set difference inside its intersection, never a complement over the
whole entity set. Empty intermediate sets propagate without error.
"""

from __future__ import annotations

from dataclasses import dataclass

from cqkit.decompose import (
    INTERSECTION,
    NEGATED_INTERSECTION,
    PROJECTION,
    UNION,
    ComputationTree,
    DecompositionChain,
    TreeNode,
    compile_query,
)
from cqkit.kg import KnowledgeGraph, Triple
from cqkit.queries import And, Entity, Or, Proj, QueryExpr


class ExecError(Exception):
    pass


def _check_entity(graph: KnowledgeGraph, e: int):
    if not graph.has_entity(e):
        raise ExecError(f"unknown entity id {e}")


def _check_relation(graph: KnowledgeGraph, r: int):
    if not graph.has_relation(r):
        raise ExecError(f"unknown relation id {r}")


def _project(graph: KnowledgeGraph, source: frozenset[int] | set[int], relation: int, inverse: bool) -> set[int]:
    out: set[int] = set()
    if inverse:
        for s in source:
            out |= graph.heads(s, relation)
    else:
        for s in source:
            out |= graph.tails(s, relation)
    return out


def answer(expr: QueryExpr, graph: KnowledgeGraph) -> set[int]:
    """Exact answer set of the expression on the graph."""
    if isinstance(expr, Entity):
        _check_entity(graph, expr.entity)
        return {expr.entity}
    if isinstance(expr, Proj):
        _check_relation(graph, expr.relation)
        return _project(graph, answer(expr.child, graph), expr.relation, expr.inverse)
    if isinstance(expr, And):
        positives = [answer(c, graph) for c, n in zip(expr.children, expr.negated) if not n]
        result = set.intersection(*positives)
        for c, n in zip(expr.children, expr.negated):
            if n:
                result -= answer(c, graph)
        return result
    if isinstance(expr, Or):
        result: set[int] = set()
        for c in expr.children:
            result |= answer(c, graph)
        return result
    raise TypeError(f"not a query expression: {expr!r}")


def answer_tree(tree: ComputationTree, graph: KnowledgeGraph) -> set[int]:
    """Evaluate a computation tree directly (used to cross-check compilation)."""

    def eval_node(node: TreeNode) -> set[int]:
        if node.is_leaf:
            _check_entity(graph, node.entity)
            return {node.entity}
        branch_sets = []
        for edge in node.edges:
            s = eval_node(edge.child)
            if edge.relation is not None:
                s = _project(graph, s, edge.relation, edge.inverse)
            branch_sets.append((s, edge.negated))
        if len(branch_sets) == 1:
            s, neg = branch_sets[0]
            if neg:
                raise ExecError("single-branch node cannot be negated")
            return s
        if node.join == UNION:
            out: set[int] = set()
            for s, _ in branch_sets:
                out |= s
            return out
        positives = [s for s, neg in branch_sets if not neg]
        out = set.intersection(*positives)
        for s, neg in branch_sets:
            if neg:
                out -= s
        return out

    return eval_node(tree.root)


def answer_chain(
    chain: DecompositionChain,
    graph: KnowledgeGraph,
    collect_triples: bool = False,
):
    """Evaluate steps in order; returns (bindings, final) or, when
    ``collect_triples`` is set, (bindings, final, per-step traversal triples).

    Per-step triples are every graph triple crossed while projecting the
    step's input frontier, which is what context retrieval collects.
    """
    bindings: dict[str, set[int]] = {}
    per_step: dict[int, list[Triple]] = {}

    def resolve(ref) -> set[int]:
        if isinstance(ref, int):
            _check_entity(graph, ref)
            return {ref}
        if ref not in bindings:
            raise ExecError(f"step references unbound variable {ref!r}")
        return bindings[ref]

    for idx, step in enumerate(chain.steps):
        if step.kind == PROJECTION:
            _check_relation(graph, step.relation)
            source = resolve(step.inputs[0])
            out = _project(graph, source, step.relation, step.inverse)
            if collect_triples:
                triples: set[Triple] = set()
                if step.inverse:
                    for s in source:
                        for h in graph.heads(s, step.relation):
                            triples.add(Triple(h, step.relation, s))
                else:
                    for s in source:
                        for t in graph.tails(s, step.relation):
                            triples.add(Triple(s, step.relation, t))
                per_step[idx] = sorted(triples)
        elif step.kind == INTERSECTION:
            out = resolve(step.inputs[0]) & resolve(step.inputs[1])
        elif step.kind == NEGATED_INTERSECTION:
            out = resolve(step.inputs[0]) - resolve(step.inputs[1])
        elif step.kind == UNION:
            out = resolve(step.inputs[0]) | resolve(step.inputs[1])
        else:
            raise ExecError(f"unknown step kind {step.kind!r}")
        bindings[step.output] = out

    final = bindings[chain.steps[-1].output]
    if collect_triples:
        return bindings, final, per_step
    return bindings, final


@dataclass(frozen=True)
class AnswerSplit:
    """Answers split by retrievability: ``easy`` holds on the smaller graph,
    ``hard`` only appears on the larger one. Stored sorted ascending."""

    easy: tuple[int, ...]
    hard: tuple[int, ...]

    @property
    def easy_set(self) -> frozenset[int]:
        return frozenset(self.easy)

    @property
    def hard_set(self) -> frozenset[int]:
        return frozenset(self.hard)

    @property
    def all_set(self) -> frozenset[int]:
        return frozenset(self.easy) | frozenset(self.hard)


def split_answers(expr: QueryExpr, smaller: KnowledgeGraph, larger: KnowledgeGraph) -> AnswerSplit:
    """easy = answers on the smaller graph; hard = answers gained on the
    larger graph."""
    if not smaller.triple_set <= larger.triple_set:
        raise ExecError("smaller graph is not a subset of the larger graph")
    easy = answer(expr, smaller)
    hard = answer(expr, larger) - easy
    return AnswerSplit(easy=tuple(sorted(easy)), hard=tuple(sorted(hard)))


def ordered_final(final: set[int], hard: frozenset[int] | set[int]) -> list[int]:
    """Presentation order for answer listings: hard answers first (ascending),
    then the rest (ascending). Scoring ranks answers by list position, so
    the reference output lists the scored answers first."""
    head = sorted(final & set(hard))
    rest = sorted(final - set(hard))
    return head + rest


def oracle_answer(sample, graph: KnowledgeGraph) -> str:
    """Perfect-executor prediction for a corpus sample, rendered through the
    same template as training completions."""
    from cqkit.prompts import render_completion

    chain = compile_query(sample.query.expr)
    bindings, final = answer_chain(chain, graph)
    return render_completion(
        chain,
        bindings,
        ordered_final(final, sample.answers.hard_set),
        graph,
    )
