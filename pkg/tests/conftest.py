import random
from pathlib import Path

import pytest

from cqkit.kg import KnowledgeGraph, SplitGraphs, Triple

DATA_DIR = Path(__file__).resolve().parent.parent / "data" / "toy"


def make_random_graph(n_entities: int, n_relations: int, n_triples: int, seed: int) -> KnowledgeGraph:
    rng = random.Random(seed)
    triples = set()
    while len(triples) < n_triples:
        h = rng.randrange(n_entities)
        t = rng.randrange(n_entities)
        if h != t:
            triples.add(Triple(h, rng.randrange(n_relations), t))
    return KnowledgeGraph(triples)


@pytest.fixture(scope="session")
def toy_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def toy_graphs(toy_dir) -> SplitGraphs:
    return SplitGraphs.load(toy_dir)


@pytest.fixture
def tiny3() -> KnowledgeGraph:
    # a=0, b=1, c=2, d=3; r=0, s=1
    return KnowledgeGraph([Triple(0, 0, 1), Triple(0, 0, 2), Triple(3, 1, 1)])


@pytest.fixture
def random_graph():
    return make_random_graph
