"""Logical query expressions with one free variable.

Expression trees are built from four node kinds: constant entities,
relational projections (optionally inverse), intersections with per-child
negation flags, and unions. Concrete syntax is an s-expression grammar:

    E := (e <int>)        constant entity
       | (p <int> E)      forward projection through a relation
       | (pi <int> E)     inverse projection
       | (and E+)         intersection; children may be (not E)
       | (or E E+)        union
       | (not E)          negation, legal only directly under (and ...)

Negation is represented as a per-child flag on intersections, so every
expression keeps positive support and evaluation never needs a complement
over the full entity set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Union

QueryExpr = Union["Entity", "Proj", "And", "Or"]


class QueryError(Exception):
    pass


class ParseError(QueryError):
    """Syntax error; carries the byte offset of the offending token."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class StructureError(QueryError):
    """Grammatically valid input that violates a structural rule."""


@dataclass(frozen=True)
class Entity:
    entity: int


@dataclass(frozen=True)
class Proj:
    relation: int
    child: QueryExpr
    inverse: bool = False


@dataclass(frozen=True)
class And:
    children: tuple[QueryExpr, ...]
    negated: tuple[bool, ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise StructureError("intersection needs at least 2 children")
        if len(self.children) != len(self.negated):
            raise StructureError("negation flags do not match children")
        if all(self.negated):
            raise StructureError("intersection with all children negated has no positive support")


@dataclass(frozen=True)
class Or:
    children: tuple[QueryExpr, ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise StructureError("union needs at least 2 children")


def make_and(pairs: list[tuple[QueryExpr, bool]]) -> QueryExpr:
    """And over (child, negated) pairs; unwraps a single positive child."""
    if len(pairs) == 1:
        child, neg = pairs[0]
        if neg:
            raise StructureError("intersection with all children negated has no positive support")
        return child
    return And(tuple(c for c, _ in pairs), tuple(n for _, n in pairs))


def make_or(children: list[QueryExpr]) -> QueryExpr:
    if len(children) == 1:
        return children[0]
    return Or(tuple(children))


# ---------------------------------------------------------------------------
# Concrete syntax
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Not:
    child: QueryExpr


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens: list[tuple[str, int]] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append((ch, i))
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append((text[i:j], i))
            i = j
    return tokens


def parse(text: str) -> QueryExpr:
    """Parse an s-expression query and fold (not ...) into And flags."""
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty input", 0)
    expr, pos = _parse_expr(tokens, 0, text)
    if pos != len(tokens):
        raise ParseError("trailing input after expression", tokens[pos][1])
    if isinstance(expr, _Not):
        raise StructureError("(not ...) is only legal directly under (and ...)")
    return expr


def _expect(tokens, pos, text, what):
    if pos >= len(tokens):
        raise ParseError(f"unbalanced parenthesis: expected {what}", len(text))
    return tokens[pos]


def _parse_int(tok: str, offset: int) -> int:
    try:
        value = int(tok)
    except ValueError:
        raise ParseError(f"expected integer id, got {tok!r}", offset) from None
    if value < 0:
        raise ParseError(f"expected non-negative id, got {tok!r}", offset)
    return value


def _parse_expr(tokens, pos, text):
    tok, off = _expect(tokens, pos, text, "expression")
    if tok != "(":
        raise ParseError(f"expected '(', got {tok!r}", off)
    head, head_off = _expect(tokens, pos + 1, text, "operator")
    pos += 2

    if head == "e":
        tok, off = _expect(tokens, pos, text, "entity id")
        ent = _parse_int(tok, off)
        return Entity(ent), _close(tokens, pos + 1, text)

    if head in ("p", "pi"):
        tok, off = _expect(tokens, pos, text, "relation id")
        rel = _parse_int(tok, off)
        child, pos = _parse_expr(tokens, pos + 1, text)
        if isinstance(child, _Not):
            raise StructureError("(not ...) is only legal directly under (and ...)")
        return Proj(rel, child, inverse=(head == "pi")), _close(tokens, pos, text)

    if head == "not":
        child, pos = _parse_expr(tokens, pos, text)
        if isinstance(child, _Not):
            raise StructureError("nested negation is not supported")
        return _Not(child), _close(tokens, pos, text)

    if head in ("and", "or"):
        children = []
        while True:
            tok, off = _expect(tokens, pos, text, "')' or expression")
            if tok == ")":
                pos += 1
                break
            child, pos = _parse_expr(tokens, pos, text)
            children.append(child)
        if head == "or":
            if any(isinstance(c, _Not) for c in children):
                raise StructureError("union children are never negated")
            if len(children) < 2:
                raise StructureError("union needs at least 2 children")
            return Or(tuple(children)), pos
        if len(children) < 2:
            raise StructureError("intersection needs at least 2 children")
        flags = tuple(isinstance(c, _Not) for c in children)
        plain = tuple(c.child if isinstance(c, _Not) else c for c in children)
        return And(plain, flags), pos

    raise ParseError(f"unknown operator {head!r}", head_off)


def _close(tokens, pos, text) -> int:
    tok, off = _expect(tokens, pos, text, "')'")
    if tok != ")":
        raise ParseError(f"expected ')', got {tok!r}", off)
    return pos + 1


def render(expr: QueryExpr) -> str:
    """Inverse of parse: emits the canonical s-expression."""
    if isinstance(expr, Entity):
        return f"(e {expr.entity})"
    if isinstance(expr, Proj):
        op = "pi" if expr.inverse else "p"
        return f"({op} {expr.relation} {render(expr.child)})"
    if isinstance(expr, And):
        parts = []
        for child, neg in zip(expr.children, expr.negated):
            inner = render(child)
            parts.append(f"(not {inner})" if neg else inner)
        return "(and " + " ".join(parts) + ")"
    if isinstance(expr, Or):
        return "(or " + " ".join(render(c) for c in expr.children) + ")"
    raise TypeError(f"not a query expression: {expr!r}")


def describe(
    expr: QueryExpr,
    entity_label: Callable[[int], str] = str,
    relation_label: Callable[[int], str] = str,
) -> str:
    """Deterministic English paraphrase of the query structure."""
    if isinstance(expr, Entity):
        return f"[{entity_label(expr.entity)}]"
    if isinstance(expr, Proj):
        child = describe(expr.child, entity_label, relation_label)
        if expr.inverse:
            return f"entities with '{relation_label(expr.relation)}' to {child}"
        return f"entities reached from {child} via '{relation_label(expr.relation)}'"
    if isinstance(expr, And):
        pos = [
            describe(c, entity_label, relation_label)
            for c, n in zip(expr.children, expr.negated)
            if not n
        ]
        neg = [
            describe(c, entity_label, relation_label)
            for c, n in zip(expr.children, expr.negated)
            if n
        ]
        text = "(" + " and also ".join(pos) + ")"
        if neg:
            text += ", excluding (" + " and also ".join(neg) + ")"
        return text
    if isinstance(expr, Or):
        return "(" + " or else ".join(describe(c, entity_label, relation_label) for c in expr.children) + ")"
    raise TypeError(f"not a query expression: {expr!r}")


def iter_constants(expr: QueryExpr) -> Iterator[tuple[str, int]]:
    """Pre-order, left-to-right stream of ('rel', id) and ('ent', id)."""
    if isinstance(expr, Entity):
        yield ("ent", expr.entity)
    elif isinstance(expr, Proj):
        yield ("rel", expr.relation)
        yield from iter_constants(expr.child)
    elif isinstance(expr, (And, Or)):
        for child in expr.children:
            yield from iter_constants(child)
    else:
        raise TypeError(f"not a query expression: {expr!r}")


@dataclass(frozen=True)
class GroundedQuery:
    """A template instance: expression plus its constants in reading order."""

    id: str
    type: str
    expr: QueryExpr
    anchors: tuple[int, ...] = field(default=())
    relations: tuple[int, ...] = field(default=())

    @classmethod
    def from_expr(cls, qid: str, expr: QueryExpr, type_tag: str | None = None) -> "GroundedQuery":
        anchors = tuple(v for kind, v in iter_constants(expr) if kind == "ent")
        relations = tuple(v for kind, v in iter_constants(expr) if kind == "rel")
        return cls(
            id=qid,
            type=type_tag if type_tag is not None else classify(expr),
            expr=expr,
            anchors=anchors,
            relations=relations,
        )


# ---------------------------------------------------------------------------
# The 14 benchmark templates
# ---------------------------------------------------------------------------

QUERY_TYPES = (
    "1p", "2p", "3p", "2i", "3i", "pi", "ip", "2u", "up",
    "2in", "3in", "inp", "pin", "pni",
)

# (n_relations, n_anchors, builder). Builders take relation and anchor id
# lists in reading order and return the template instance.
TEMPLATES: dict[str, tuple[int, int, Callable[..., QueryExpr]]] = {
    "1p": (1, 1, lambda r, e: Proj(r[0], Entity(e[0]))),
    "2p": (2, 1, lambda r, e: Proj(r[1], Proj(r[0], Entity(e[0])))),
    "3p": (3, 1, lambda r, e: Proj(r[2], Proj(r[1], Proj(r[0], Entity(e[0]))))),
    "2i": (2, 2, lambda r, e: And(
        (Proj(r[0], Entity(e[0])), Proj(r[1], Entity(e[1]))), (False, False))),
    "3i": (3, 3, lambda r, e: And(
        (Proj(r[0], Entity(e[0])), Proj(r[1], Entity(e[1])), Proj(r[2], Entity(e[2]))),
        (False, False, False))),
    "pi": (3, 2, lambda r, e: And(
        (Proj(r[1], Proj(r[0], Entity(e[0]))), Proj(r[2], Entity(e[1]))), (False, False))),
    "ip": (3, 2, lambda r, e: Proj(r[2], And(
        (Proj(r[0], Entity(e[0])), Proj(r[1], Entity(e[1]))), (False, False)))),
    "2u": (2, 2, lambda r, e: Or(
        (Proj(r[0], Entity(e[0])), Proj(r[1], Entity(e[1]))))),
    "up": (3, 2, lambda r, e: Proj(r[2], Or(
        (Proj(r[0], Entity(e[0])), Proj(r[1], Entity(e[1])))))),
    "2in": (2, 2, lambda r, e: And(
        (Proj(r[0], Entity(e[0])), Proj(r[1], Entity(e[1]))), (False, True))),
    "3in": (3, 3, lambda r, e: And(
        (Proj(r[0], Entity(e[0])), Proj(r[1], Entity(e[1])), Proj(r[2], Entity(e[2]))),
        (False, False, True))),
    "inp": (3, 2, lambda r, e: Proj(r[2], And(
        (Proj(r[0], Entity(e[0])), Proj(r[1], Entity(e[1]))), (False, True)))),
    "pin": (3, 2, lambda r, e: And(
        (Proj(r[1], Proj(r[0], Entity(e[0]))), Proj(r[2], Entity(e[1]))), (False, True))),
    "pni": (3, 2, lambda r, e: And(
        (Proj(r[1], Proj(r[0], Entity(e[0]))), Proj(r[2], Entity(e[1]))), (True, False))),
}


def _shape(expr: QueryExpr, negated: bool = False) -> str:
    prefix = "n" if negated else ""
    if isinstance(expr, Entity):
        return prefix + "e"
    if isinstance(expr, Proj):
        return prefix + "P" + _shape(expr.child)
    if isinstance(expr, And):
        inner = sorted(_shape(c, n) for c, n in zip(expr.children, expr.negated))
        return prefix + "A(" + ",".join(inner) + ")"
    if isinstance(expr, Or):
        inner = sorted(_shape(c) for c in expr.children)
        return prefix + "U(" + ",".join(inner) + ")"
    raise TypeError(f"not a query expression: {expr!r}")


def _template_shapes() -> dict[str, str]:
    shapes: dict[str, str] = {}
    for tag, (nr, ne, build) in TEMPLATES.items():
        expr = build(list(range(nr)), list(range(ne)))
        shapes[_shape(expr)] = tag
    return shapes


_SHAPE_TO_TAG = _template_shapes()


def classify(expr: QueryExpr) -> str:
    """One of the 14 template tags, or 'general'. Invariant under child
    permutation; projection direction does not affect the shape."""
    return _SHAPE_TO_TAG.get(_shape(expr), "general")


# ---------------------------------------------------------------------------
# Flat atom lists
# ---------------------------------------------------------------------------

FREE_VAR = "v?"

Term = Union[int, str]  # entity id or variable name


@dataclass(frozen=True)
class Atom:
    relation: int
    negated: bool
    subject: Term
    object: Term


@dataclass(frozen=True)
class AtomList:
    atoms: tuple[Atom, ...]
    connective: str = "CNF"  # CNF: conjunction of atoms; DNF: disjunction of
    #                          conjunctive groups (grouped by shared variables)

    def __post_init__(self):
        if self.connective not in ("CNF", "DNF"):
            raise StructureError(f"unknown connective {self.connective!r}")


def _is_var(term: Term) -> bool:
    return isinstance(term, str)


def from_atom_list(atom_list: AtomList) -> QueryExpr:
    """Build the expression tree rooted at the free variable.

    Each atom r(s, o) is an edge between its terms; every entity occurrence
    is its own leaf node, while variables are shared. The edges must form a
    tree around ``v?``. Edges pointing away from the root become inverse
    projections. Under the DNF connective, groups of atoms that share no
    variable besides ``v?`` are separate union branches.
    """
    atoms = list(atom_list.atoms)
    if not atoms:
        raise StructureError("empty atom list")
    if not any(FREE_VAR in (a.subject, a.object) for a in atoms):
        raise StructureError(f"no atom mentions the free variable {FREE_VAR}")

    if atom_list.connective == "DNF":
        groups = _variable_components(atoms)
        branches = [_component_to_expr(g) for g in groups]
        return make_or(branches)
    return _component_to_expr(atoms)


def _variable_components(atoms: list[Atom]) -> list[list[Atom]]:
    """Group atoms connected through shared non-root variables."""
    parent = list(range(len(atoms)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        parent[find(i)] = find(j)

    by_var: dict[str, list[int]] = {}
    for i, a in enumerate(atoms):
        for term in (a.subject, a.object):
            if _is_var(term) and term != FREE_VAR:
                by_var.setdefault(term, []).append(i)
    for idxs in by_var.values():
        for j in idxs[1:]:
            union(idxs[0], j)

    groups: dict[int, list[Atom]] = {}
    for i, a in enumerate(atoms):
        groups.setdefault(find(i), []).append(a)
    return [groups[k] for k in sorted(groups, key=lambda k: min(i for i, a in enumerate(atoms) if find(i) == k))]


def _component_to_expr(atoms: list[Atom]) -> QueryExpr:
    # Nodes: variables by name, plus one fresh node per entity occurrence.
    edges: list[tuple[Term, Term, Atom]] = []  # (node_a, node_b, atom)
    nodes: set[Term] = set()
    ent_counter = 0
    for a in atoms:
        s: Term = a.subject
        o: Term = a.object
        if not _is_var(s):
            s = f"!ent{ent_counter}:{a.subject}"
            ent_counter += 1
        if not _is_var(o):
            o = f"!ent{ent_counter}:{a.object}"
            ent_counter += 1
        nodes.add(s)
        nodes.add(o)
        edges.append((s, o, a))

    if FREE_VAR not in nodes:
        raise StructureError("atom group is disconnected from the free variable")
    # A tree on n nodes has n-1 edges; anything more has a cycle, anything
    # less (given connectivity) is impossible.
    if len(edges) != len(nodes) - 1:
        raise StructureError("query atoms must form a tree around the free variable")

    adjacency: dict[Term, list[tuple[Term, Atom, bool]]] = {n: [] for n in nodes}
    for s, o, a in edges:
        adjacency[s].append((o, a, True))   # this node is the subject
        adjacency[o].append((s, a, False))  # this node is the object

    visited: set[Term] = set()

    def build(node: Term) -> QueryExpr:
        visited.add(node)
        pairs: list[tuple[QueryExpr, bool]] = []
        for other, atom, node_is_subject in adjacency[node]:
            if other in visited:
                continue
            sub = build(other)
            # Forward atoms point child -> parent; when the parent sits at
            # the subject position the edge is traversed inversely.
            inverse = node_is_subject
            pairs.append((Proj(atom.relation, sub, inverse=inverse), atom.negated))
        if not pairs:
            if node.startswith("!ent"):
                return Entity(int(node.split(":", 1)[1]))
            raise StructureError(f"variable {node!r} is not anchored by any entity")
        if node.startswith("!ent"):
            raise StructureError("entity occurrence cannot have dependants in a tree query")
        return make_and(pairs)

    expr = build(FREE_VAR)
    if len(visited) != len(nodes):
        raise StructureError("query atoms must form a tree around the free variable")
    return expr


def flatten_atoms(expr: QueryExpr) -> list[Atom]:
    """Inverse-direction view of an expression as flat atoms (fresh variable
    names); used to check label multisets survive the atom round trip."""
    counter = [0]
    atoms: list[Atom] = []

    def walk(node: QueryExpr, out_var: str, negated: bool):
        if isinstance(node, Entity):
            raise StructureError("bare entity cannot bind the output variable")
        if isinstance(node, Proj):
            child = node.child
            if isinstance(child, Entity):
                src: Term = child.entity
            else:
                counter[0] += 1
                src = f"v{counter[0]}"
            if node.inverse:
                atoms.append(Atom(node.relation, negated, out_var, src))
            else:
                atoms.append(Atom(node.relation, negated, src, out_var))
            if not isinstance(child, Entity):
                walk(child, src, False)
            return
        if isinstance(node, And):
            if negated:
                raise StructureError("cannot flatten a negated intersection")
            for child, neg in zip(node.children, node.negated):
                walk(child, out_var, neg)
            return
        if isinstance(node, Or):
            if negated:
                raise StructureError("cannot flatten a negated union")
            for child in node.children:
                walk(child, out_var, False)
            return
        raise TypeError(f"not a query expression: {node!r}")

    walk(expr, FREE_VAR, False)
    return atoms


# ---------------------------------------------------------------------------
# Normal forms
# ---------------------------------------------------------------------------

def _flatten_or(children: list[QueryExpr]) -> list[QueryExpr]:
    out: list[QueryExpr] = []
    for c in children:
        if isinstance(c, Or):
            out.extend(c.children)
        else:
            out.append(c)
    return out


def to_dnf(expr: QueryExpr) -> QueryExpr:
    """Push unions to the root: the result is a union of intersection- or
    projection-shaped branches. Unions lift through projections; negated
    unions split into multiple negated children. Negated intersections are
    expanded by distribution. Answer sets are preserved."""
    if isinstance(expr, Entity):
        return expr
    if isinstance(expr, Proj):
        child = to_dnf(expr.child)
        if isinstance(child, Or):
            return Or(tuple(Proj(expr.relation, c, expr.inverse) for c in child.children))
        return Proj(expr.relation, child, expr.inverse)
    if isinstance(expr, Or):
        return make_or(_flatten_or([to_dnf(c) for c in expr.children]))
    if isinstance(expr, And):
        # Conjunction parts: each is a list of alternative (child, neg)
        # vectors; the cartesian product forms the disjuncts.
        alternatives: list[list[list[tuple[QueryExpr, bool]]]] = []
        for child, neg in zip(expr.children, expr.negated):
            norm = to_dnf(child)
            if not neg:
                if isinstance(norm, Or):
                    alternatives.append([[ (c, False) ] for c in norm.children])
                elif isinstance(norm, And):
                    alternatives.append([list(zip(norm.children, norm.negated))])
                else:
                    alternatives.append([[(norm, False)]])
            else:
                if isinstance(norm, Or):
                    # not(a or b) == (not a) and (not b)
                    alternatives.append([[(c, True) for c in norm.children]])
                elif isinstance(norm, And) and not any(norm.negated):
                    # not(a and b): one negated alternative per conjunct
                    alternatives.append([[(c, True)] for c in norm.children])
                else:
                    alternatives.append([[(norm, True)]])
        disjuncts: list[list[tuple[QueryExpr, bool]]] = [[]]
        for alts in alternatives:
            disjuncts = [d + a for d in disjuncts for a in alts]
        branches = []
        for pairs in disjuncts:
            if all(neg for _, neg in pairs):
                raise StructureError("distribution produced a branch without positive support")
            branches.append(make_and(pairs))
        return make_or(_flatten_or(branches))
    raise TypeError(f"not a query expression: {expr!r}")


def to_cnf(expr: QueryExpr) -> QueryExpr:
    """Pull intersections to the root where the tree allows it: nested
    positive intersections are flattened and unions of intersections are
    distributed. Negation can only sit on intersection children, so negated
    subtrees are normalized internally and kept in place. Answer sets are
    preserved."""
    if isinstance(expr, Entity):
        return expr
    if isinstance(expr, Proj):
        return Proj(expr.relation, to_cnf(expr.child), expr.inverse)
    if isinstance(expr, And):
        pairs: list[tuple[QueryExpr, bool]] = []
        for child, neg in zip(expr.children, expr.negated):
            norm = to_cnf(child)
            if not neg and isinstance(norm, And):
                pairs.extend(zip(norm.children, norm.negated))
            else:
                pairs.append((norm, neg))
        return make_and(pairs)
    if isinstance(expr, Or):
        children = _flatten_or([to_cnf(c) for c in expr.children])
        # (a and b) or c  ->  (a or c) and (b or c), only across fully
        # positive intersections (union children must stay unnegated).
        for i, c in enumerate(children):
            if isinstance(c, And) and not any(c.negated):
                rest = children[:i] + children[i + 1 :]
                clauses = [
                    to_cnf(make_or(_flatten_or([part] + rest)))
                    for part in c.children
                ]
                return make_and([(cl, False) for cl in clauses])
        return make_or(children)
    raise TypeError(f"not a query expression: {expr!r}")
