"""Indexed triple store for tab-separated knowledge-graph splits.

A dataset directory holds ``train.txt`` / ``valid.txt`` / ``test.txt`` with
one ``head<TAB>relation<TAB>tail`` line per triple (decimal ids), plus
optional ``entity_labels.tsv`` / ``relation_labels.tsv`` (``id<TAB>label``).
Graphs are immutable after construction; every index is derived from the
deduplicated triple set.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class KGError(Exception):
    """Malformed dataset file or unresolvable entity/relation id."""


_EMPTY: frozenset[int] = frozenset()


class KnowledgeGraph:
    """Immutable triple set with (head, relation), (tail, relation),
    per-relation and per-entity indexes."""

    def __init__(
        self,
        triples: Iterable[Triple],
        entity_labels: dict[int, str] | None = None,
        relation_labels: dict[int, str] | None = None,
        load_stats: dict[str, int] | None = None,
    ):
        self.triples: tuple[Triple, ...] = tuple(sorted(set(Triple(*t) for t in triples)))
        self._triple_set = frozenset(self.triples)

        ents = set()
        rels = set()
        for h, r, t in self.triples:
            ents.add(h)
            ents.add(t)
            rels.add(r)
        # Label files may name entities beyond those used in this split's
        # triples (e.g. the full vocabulary); they become isolated nodes.
        self.entities: dict[int, str] = {e: f"ent_{e}" for e in ents}
        self.relations: dict[int, str] = {r: f"rel_{r}" for r in rels}
        if entity_labels:
            for e, lab in entity_labels.items():
                self.entities[e] = lab
        if relation_labels:
            for r, lab in relation_labels.items():
                self.relations[r] = lab

        self.index_hr: dict[tuple[int, int], frozenset[int]] = {}
        self.index_tr: dict[tuple[int, int], frozenset[int]] = {}
        self.index_r: dict[int, tuple[Triple, ...]] = {}
        self.index_e: dict[int, tuple[Triple, ...]] = {}

        hr: dict[tuple[int, int], set[int]] = defaultdict(set)
        tr: dict[tuple[int, int], set[int]] = defaultdict(set)
        by_r: dict[int, list[Triple]] = defaultdict(list)
        by_e: dict[int, list[Triple]] = defaultdict(list)
        incoming: dict[int, list[Triple]] = defaultdict(list)
        outgoing: dict[int, list[Triple]] = defaultdict(list)
        for tri in self.triples:
            h, r, t = tri
            hr[(h, r)].add(t)
            tr[(t, r)].add(h)
            by_r[r].append(tri)
            by_e[h].append(tri)
            if t != h:
                by_e[t].append(tri)
            incoming[t].append(tri)
            outgoing[h].append(tri)
        self.index_hr = {k: frozenset(v) for k, v in hr.items()}
        self.index_tr = {k: frozenset(v) for k, v in tr.items()}
        self.index_r = {k: tuple(v) for k, v in by_r.items()}
        self.index_e = {k: tuple(v) for k, v in by_e.items()}
        self._incoming = {k: tuple(v) for k, v in incoming.items()}
        self._outgoing = {k: tuple(v) for k, v in outgoing.items()}
        self.load_stats = load_stats or {}

    def __len__(self) -> int:
        return len(self.triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triple_set

    @property
    def triple_set(self) -> frozenset[Triple]:
        return self._triple_set

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def entity_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.entities))

    def relation_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.relations))

    def has_entity(self, e: int) -> bool:
        return e in self.entities

    def has_relation(self, r: int) -> bool:
        return r in self.relations

    def entity_label(self, e: int) -> str:
        return self.entities.get(e, f"ent_{e}")

    def relation_label(self, r: int) -> str:
        return self.relations.get(r, f"rel_{r}")

    def tails(self, head: int, relation: int) -> frozenset[int]:
        """Forward projection of a single entity: {t : (head, relation, t)}."""
        return self.index_hr.get((head, relation), _EMPTY)

    def heads(self, tail: int, relation: int) -> frozenset[int]:
        """Inverse projection of a single entity: {h : (h, relation, tail)}."""
        return self.index_tr.get((tail, relation), _EMPTY)

    def relation_triples(self, relation: int) -> tuple[Triple, ...]:
        return self.index_r.get(relation, ())

    def incoming(self, entity: int) -> tuple[Triple, ...]:
        return self._incoming.get(entity, ())

    def outgoing(self, entity: int) -> tuple[Triple, ...]:
        return self._outgoing.get(entity, ())

    def neighbors(self, entity: int) -> list[Triple]:
        """All triples with the entity at head or tail position."""
        if entity not in self.entities:
            raise KGError(f"unknown entity id {entity}")
        return list(self.index_e.get(entity, ()))


def _parse_triple_line(line: str, path: Path, lineno: int) -> Triple:
    parts = line.split("\t")
    if len(parts) != 3:
        raise KGError(
            f"{path}:{lineno}: expected 'head<TAB>relation<TAB>tail', got {line!r}"
        )
    try:
        h, r, t = (int(p) for p in parts)
    except ValueError:
        raise KGError(f"{path}:{lineno}: non-integer id in {line!r}") from None
    if h < 0 or r < 0 or t < 0:
        raise KGError(f"{path}:{lineno}: negative id in {line!r}")
    return Triple(h, r, t)


def read_triples(path: str | Path) -> list[Triple]:
    """Read one triple file; blank lines are skipped, malformed lines raise."""
    path = Path(path)
    if not path.exists():
        raise KGError(f"missing triple file: {path}")
    out: list[Triple] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            out.append(_parse_triple_line(line, path, lineno))
    return out


def _read_labels(path: Path, known: set[int], kind: str) -> dict[int, str]:
    labels: dict[int, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise KGError(f"{path}:{lineno}: expected 'id<TAB>label', got {line!r}")
            try:
                ident = int(parts[0])
            except ValueError:
                raise KGError(f"{path}:{lineno}: non-integer id {parts[0]!r}") from None
            if ident not in known:
                raise KGError(f"{path}:{lineno}: label references unknown {kind} id {ident}")
            labels[ident] = parts[1]
    return labels


def load_split(dataset_dir: str | Path, split: str) -> KnowledgeGraph:
    """Load ``<split>.txt`` plus optional label files into an indexed graph.

    Labels default to ``ent_<id>`` / ``rel_<id>`` when the label files are
    absent. Duplicate triples are dropped; the count is kept in
    ``load_stats``.
    """
    dataset_dir = Path(dataset_dir)
    triples = read_triples(dataset_dir / f"{split}.txt")
    n_read = len(triples)
    uniq = set(triples)
    stats = {"triples_read": n_read, "duplicates_dropped": n_read - len(uniq)}

    ent_ids = {h for h, _, _ in uniq} | {t for _, _, t in uniq}
    rel_ids = {r for _, r, _ in uniq}
    ent_labels = None
    rel_labels = None
    ent_path = dataset_dir / "entity_labels.tsv"
    rel_path = dataset_dir / "relation_labels.tsv"
    if ent_path.exists():
        ent_labels = _read_labels(ent_path, ent_ids, "entity")
    if rel_path.exists():
        rel_labels = _read_labels(rel_path, rel_ids, "relation")
    return KnowledgeGraph(uniq, ent_labels, rel_labels, load_stats=stats)


def merge(base: KnowledgeGraph, extra: Iterable[Triple]) -> KnowledgeGraph:
    """New graph over base.triples union extra; base is left untouched.

    Ids appearing only in the extra triples get default labels.
    """
    extra = [Triple(*t) for t in extra]
    return KnowledgeGraph(
        set(base.triples) | set(extra),
        entity_labels=dict(base.entities),
        relation_labels=dict(base.relations),
    )


@dataclass(frozen=True)
class SplitGraphs:
    """The three nested graphs of the easy/hard answer protocol."""

    train: KnowledgeGraph
    train_valid: KnowledgeGraph
    train_valid_test: KnowledgeGraph

    def __post_init__(self):
        if not self.train.triple_set <= self.train_valid.triple_set:
            raise KGError("train triples are not a subset of train+valid")
        if not self.train_valid.triple_set <= self.train_valid_test.triple_set:
            raise KGError("train+valid triples are not a subset of train+valid+test")

    @classmethod
    def load(cls, dataset_dir: str | Path) -> "SplitGraphs":
        dataset_dir = Path(dataset_dir)
        train = load_split(dataset_dir, "train")
        valid_triples = read_triples(dataset_dir / "valid.txt")
        test_triples = read_triples(dataset_dir / "test.txt")
        train_valid = merge(train, valid_triples)
        train_valid_test = merge(train_valid, test_triples)
        return cls(train, train_valid, train_valid_test)

    def for_split(self, split: str) -> tuple[KnowledgeGraph, KnowledgeGraph, KnowledgeGraph]:
        """(retrieval graph, smaller answer graph, larger answer graph).

        Context is always retrieved from the graph known at that stage of
        the protocol: the train graph for train/valid queries and the
        train+valid graph for test queries.
        """
        if split == "train":
            return self.train, self.train, self.train
        if split == "valid":
            return self.train, self.train, self.train_valid
        if split == "test":
            return self.train_valid, self.train_valid, self.train_valid_test
        raise ValueError(f"unknown split {split!r}")
