"""Compile query expressions into binary computation trees and subquery chains.

The pipeline has four stages:

1. ``factor_unions``    -- merge union branches that share a conjunct,
                           rewriting (A and B) or (A and C) into
                           A and (B or C).
2. ``to_computation_tree`` -- rebuild the expression as a tree rooted at the
                           free variable ``v?``. Edges point child->parent
                           and carry either a relation (with inverse and
                           negation flags) or pass a child set through to a
                           join node unchanged.
3. ``binarize``         -- split every 1-to-n join into binary joins
                           (left-associative, declaration order) and give
                           each relational branch of a join its own named
                           projection node. Fresh nodes use primed names
                           v1', v2', ... in depth-first order.
4. ``reverse_level_traversal`` -- emit one step per non-leaf node, deepest
                           level first and left-to-right within a level.

The resulting chain has exactly (#projection edges + #binary join nodes)
steps, which is the difficulty count.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Union

from cqkit.queries import (
    And,
    Entity,
    Or,
    Proj,
    QueryExpr,
    StructureError,
    classify,
    make_and,
    make_or,
)

FREE_VAR = "v?"

INTERSECTION = "intersection"
UNION = "union"

EASY, MEDIUM, HARD = 1, 2, 3
DIFFICULTY_NAMES = {EASY: "easy", MEDIUM: "medium", HARD: "hard"}


@dataclass
class TreeEdge:
    """Child->parent edge: relational when ``relation`` is set, otherwise a
    pass-through into a join node. ``negated`` only under intersections."""

    child: "TreeNode"
    relation: int | None = None
    inverse: bool = False
    negated: bool = False


@dataclass
class TreeNode:
    name: str
    entity: int | None = None
    join: str = INTERSECTION  # meaningful when more than one edge joins here
    edges: list[TreeEdge] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.edges


@dataclass
class ComputationTree:
    root: TreeNode

    def nodes(self) -> list[tuple[TreeNode, int, tuple[int, ...]]]:
        """(node, depth, path) in pre-order; path is the child-index route
        from the root, which orders siblings left to right."""
        out: list[tuple[TreeNode, int, tuple[int, ...]]] = []

        def walk(node: TreeNode, depth: int, path: tuple[int, ...]):
            out.append((node, depth, path))
            for i, edge in enumerate(node.edges):
                walk(edge.child, depth + 1, path + (i,))

        walk(self.root, 0, ())
        return out


class BinaryComputationTree(ComputationTree):
    pass


# ---------------------------------------------------------------------------
# Union factoring
# ---------------------------------------------------------------------------

def factor_unions(expr: QueryExpr) -> QueryExpr:
    """Rewrite (A and B) or (A and C) into A and (B or C), bottom-up.

    Conjuncts are compared structurally. Shared conjuncts are hoisted only
    when every remaining branch keeps positive support; when one disjunct
    equals the shared part the union collapses to it by absorption.
    """
    if isinstance(expr, Entity):
        return expr
    if isinstance(expr, Proj):
        return Proj(expr.relation, factor_unions(expr.child), expr.inverse)
    if isinstance(expr, And):
        return And(tuple(factor_unions(c) for c in expr.children), expr.negated)
    if not isinstance(expr, Or):
        raise TypeError(f"not a query expression: {expr!r}")

    children = [factor_unions(c) for c in expr.children]
    disjuncts: list[list[tuple[QueryExpr, bool]]] = []
    for c in children:
        if isinstance(c, And):
            disjuncts.append(list(zip(c.children, c.negated)))
        else:
            disjuncts.append([(c, False)])

    common = Counter(disjuncts[0])
    for d in disjuncts[1:]:
        common &= Counter(d)
    if not common:
        return make_or(children)

    # Remainders keep declaration order and multiplicity.
    remainders: list[list[tuple[QueryExpr, bool]]] = []
    for d in disjuncts:
        left = Counter(d) - common
        rem: list[tuple[QueryExpr, bool]] = []
        for p in d:
            if left[p] > 0:
                rem.append(p)
                left[p] -= 1
        remainders.append(rem)

    common_pairs = []
    seen = Counter()
    for p in disjuncts[0]:
        if seen[p] < common[p]:
            common_pairs.append(p)
            seen[p] += 1

    if any(not rem for rem in remainders):
        # Absorption: one branch is exactly the shared part.
        return make_and(common_pairs)
    if any(all(neg for _, neg in rem) for rem in remainders):
        # A remainder without positive support cannot stand alone under the
        # union; leave this union unfactored.
        return make_or(children)
    branch = make_or([make_and(rem) for rem in remainders])
    return make_and(common_pairs + [(branch, False)])


# ---------------------------------------------------------------------------
# Expression -> tree
# ---------------------------------------------------------------------------

def to_computation_tree(expr: QueryExpr) -> ComputationTree:
    """Tree rooted at ``v?``; constants become leaves and the final hop of
    each intersection/union branch is inlined as a labeled edge."""
    counter = itertools.count(1)

    def var_name() -> str:
        return f"v{next(counter)}"

    def leaf(entity: int) -> TreeNode:
        return TreeNode(name=f"e{entity}", entity=entity)

    def attach(parent: TreeNode, child_expr: QueryExpr, negated: bool):
        if isinstance(child_expr, Proj):
            sub = build(child_expr.child)
            parent.edges.append(
                TreeEdge(sub, relation=child_expr.relation, inverse=child_expr.inverse, negated=negated)
            )
        else:
            sub = build(child_expr)
            parent.edges.append(TreeEdge(sub, negated=negated))

    def build(node_expr: QueryExpr) -> TreeNode:
        if isinstance(node_expr, Entity):
            return leaf(node_expr.entity)
        node = TreeNode(name=var_name())
        fill(node, node_expr)
        return node

    def fill(node: TreeNode, node_expr: QueryExpr):
        if isinstance(node_expr, Proj):
            node.edges.append(
                TreeEdge(
                    build(node_expr.child),
                    relation=node_expr.relation,
                    inverse=node_expr.inverse,
                )
            )
        elif isinstance(node_expr, And):
            node.join = INTERSECTION
            for child, neg in zip(node_expr.children, node_expr.negated):
                attach(node, child, neg)
        elif isinstance(node_expr, Or):
            node.join = UNION
            for child in node_expr.children:
                attach(node, child, False)
        elif isinstance(node_expr, Entity):
            raise StructureError("a bare entity is not a query")
        else:
            raise TypeError(f"not a query expression: {node_expr!r}")

    root = TreeNode(name=FREE_VAR)
    fill(root, expr)
    return ComputationTree(root)


def tree_to_expr(tree: ComputationTree) -> QueryExpr:
    """Inverse of ``to_computation_tree`` (node names are not preserved)."""

    def edge_expr(edge: TreeEdge) -> QueryExpr:
        sub = node_expr(edge.child)
        if edge.relation is not None:
            return Proj(edge.relation, sub, edge.inverse)
        return sub

    def node_expr(node: TreeNode) -> QueryExpr:
        if node.is_leaf:
            if node.entity is None:
                raise StructureError(f"leaf {node.name!r} has no entity")
            return Entity(node.entity)
        pairs = [(edge_expr(e), e.negated) for e in node.edges]
        if node.join == UNION and len(pairs) > 1:
            if any(neg for _, neg in pairs):
                raise StructureError("union children are never negated")
            return make_or([p for p, _ in pairs])
        return make_and(pairs)

    return node_expr(tree.root)


def duplicate_union_branches(tree: ComputationTree) -> ComputationTree:
    """Apply the union-merging distributive rewrite at the tree level."""
    return to_computation_tree(factor_unions(tree_to_expr(tree)))


# ---------------------------------------------------------------------------
# Binarization
# ---------------------------------------------------------------------------

def binarize(tree: ComputationTree) -> BinaryComputationTree:
    """Split n-ary joins into binary ones and give every relational branch
    of a join its own named projection node.

    Folding is left-associative in declaration order. New nodes take primed
    names (v1', v2', ...) allocated depth-first, so reruns are byte-stable.
    """
    counter = itertools.count(1)

    def prime() -> str:
        return f"v{next(counter)}'"

    def transform(node: TreeNode) -> TreeNode:
        if node.is_leaf:
            return TreeNode(name=node.name, entity=node.entity)
        edges = [
            TreeEdge(transform(e.child), e.relation, e.inverse, e.negated)
            for e in node.edges
        ]
        if len(edges) == 1:
            return TreeNode(name=node.name, join=node.join, edges=edges)

        branches: list[TreeEdge] = []
        for e in edges:
            if e.relation is not None:
                slot = TreeNode(
                    name=prime(),
                    edges=[TreeEdge(e.child, e.relation, e.inverse)],
                )
                branches.append(TreeEdge(slot, negated=e.negated))
            else:
                branches.append(e)
        while len(branches) > 2:
            inner = TreeNode(name=prime(), join=node.join, edges=branches[:2])
            branches = [TreeEdge(inner)] + branches[2:]
        return TreeNode(name=node.name, join=node.join, edges=branches)

    return BinaryComputationTree(transform(tree.root))


# ---------------------------------------------------------------------------
# Traversal and chains
# ---------------------------------------------------------------------------

PROJECTION = "projection"
NEGATED_INTERSECTION = "negated-intersection"

StepInput = Union[str, int]  # variable name or constant entity id


@dataclass(frozen=True)
class SubqueryStep:
    kind: str  # projection | intersection | union | negated-intersection
    inputs: tuple[StepInput, ...]
    output: str
    relation: int | None = None
    inverse: bool = False


@dataclass(frozen=True)
class DecompositionChain:
    steps: tuple[SubqueryStep, ...]
    source_type: str = "general"

    @property
    def subquery_count(self) -> int:
        return len(self.steps)


def _ref(node: TreeNode) -> StepInput:
    if node.entity is not None:
        return node.entity
    return node.name


def reverse_level_traversal(btree: BinaryComputationTree, source_type: str = "general") -> DecompositionChain:
    """Deepest level first, left-to-right within a level; the last step
    outputs ``v?``."""
    ordered = sorted(
        (
            (depth, path, node)
            for node, depth, path in btree.nodes()
            if not node.is_leaf
        ),
        key=lambda item: (-item[0], item[1]),
    )
    steps: list[SubqueryStep] = []
    for _, _, node in ordered:
        if len(node.edges) == 1:
            edge = node.edges[0]
            if edge.relation is None:
                raise StructureError(f"node {node.name!r} wraps a join without a relation")
            steps.append(
                SubqueryStep(
                    kind=PROJECTION,
                    inputs=(_ref(edge.child),),
                    output=node.name,
                    relation=edge.relation,
                    inverse=edge.inverse,
                )
            )
            continue
        if len(node.edges) != 2:
            raise StructureError("tree is not binary; run binarize first")
        left, right = node.edges
        if node.join == UNION:
            steps.append(
                SubqueryStep(kind=UNION, inputs=(_ref(left.child), _ref(right.child)), output=node.name)
            )
            continue
        if left.negated and right.negated:
            raise StructureError("intersection with all children negated has no positive support")
        if left.negated or right.negated:
            pos, neg = (right, left) if left.negated else (left, right)
            steps.append(
                SubqueryStep(
                    kind=NEGATED_INTERSECTION,
                    inputs=(_ref(pos.child), _ref(neg.child)),
                    output=node.name,
                )
            )
        else:
            steps.append(
                SubqueryStep(kind=INTERSECTION, inputs=(_ref(left.child), _ref(right.child)), output=node.name)
            )
    if not steps or steps[-1].output != FREE_VAR:
        raise StructureError("decomposition did not terminate at the free variable")
    return DecompositionChain(steps=tuple(steps), source_type=source_type)


def compile_query(expr: QueryExpr) -> DecompositionChain:
    """factor unions -> computation tree -> binarize -> traverse."""
    tag = classify(expr)
    tree = to_computation_tree(factor_unions(expr))
    return reverse_level_traversal(binarize(tree), source_type=tag)


def difficulty(chain: DecompositionChain) -> tuple[int, int]:
    """(subquery count, difficulty class 1|2|3)."""
    count = chain.subquery_count
    if count <= 2:
        return count, EASY
    if count == 3:
        return count, MEDIUM
    return count, HARD


def format_step(index: int, step: SubqueryStep, entity_label: Callable[[int], str] | None = None) -> str:
    """``STEP <k>: <kind> <inputs> [rel=<id>] -> <var>``"""

    def show(ref: StepInput) -> str:
        if isinstance(ref, int):
            return entity_label(ref) if entity_label else f"e{ref}"
        return ref

    inputs = " ".join(show(i) for i in step.inputs)
    rel = ""
    if step.relation is not None:
        rel = f" [rel={step.relation} inverse]" if step.inverse else f" [rel={step.relation}]"
    return f"STEP {index}: {step.kind} {inputs}{rel} -> {step.output}"


def format_chain(chain: DecompositionChain, entity_label: Callable[[int], str] | None = None) -> str:
    return "\n".join(format_step(i, s, entity_label) for i, s in enumerate(chain.steps, start=1))
