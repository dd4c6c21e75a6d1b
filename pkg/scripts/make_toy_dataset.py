#!/usr/bin/env python3
"""Regenerate the bundled toy dataset under data/toy/ (deterministic).

The graph is dense enough that every query template can be grounded with
non-empty hard answers on the valid/test protocol graphs. Valid/test triples
only reuse entities and relations already present in the train split, like
the standard public benchmark splits.
"""

from pathlib import Path
import random

SEED = 20240301
N_ENTITIES = 120
RELATIONS = ["likes", "knows", "owns", "near", "part_of", "sees", "helps", "follows"]
TRAIN_PER_RELATION = 85
EVAL_PER_RELATION = 8  # per relation, for each of valid and test

ADJECTIVES = ["red", "blue", "green", "amber", "ivory", "slate", "coral", "dusky", "pale", "vivid", "murky", "bright"]
NOUNS = ["fox", "owl", "elm", "reed", "stone", "brook", "cloud", "fern", "moth", "pine"]


def entity_labels() -> list[str]:
    labels = [f"{a}_{n}" for a in ADJECTIVES for n in NOUNS]
    assert len(labels) >= N_ENTITIES
    return labels[:N_ENTITIES]


def main():
    rng = random.Random(SEED)
    out_dir = Path(__file__).resolve().parent.parent / "data" / "toy"
    out_dir.mkdir(parents=True, exist_ok=True)

    train: set[tuple[int, int, int]] = set()
    for r in range(len(RELATIONS)):
        while len([t for t in train if t[1] == r]) < TRAIN_PER_RELATION:
            h = rng.randrange(N_ENTITIES)
            t = rng.randrange(N_ENTITIES)
            if h != t:
                train.add((h, r, t))

    train_entities = {h for h, _, _ in train} | {t for _, _, t in train}

    def sample_eval(existing: set[tuple[int, int, int]]) -> set[tuple[int, int, int]]:
        triples: set[tuple[int, int, int]] = set()
        ents = sorted(train_entities)
        existing_hr = {(h, r) for h, r, _ in existing}
        for r in range(len(RELATIONS)):
            added = 0
            while added < EVAL_PER_RELATION:
                # Mostly extend known (head, relation) pairs so held-out
                # triples create hard answers for existing query paths.
                if rng.random() < 0.6 and existing_hr:
                    pool = sorted((h, rr) for h, rr in existing_hr if rr == r)
                    if not pool:
                        continue
                    h, _ = rng.choice(pool)
                else:
                    h = rng.choice(ents)
                t = rng.choice(ents)
                tri = (h, r, t)
                if h != t and tri not in existing and tri not in triples:
                    triples.add(tri)
                    added += 1
        return triples

    valid = sample_eval(train)
    test = sample_eval(train | valid)

    def write_triples(name: str, triples: set[tuple[int, int, int]]):
        with open(out_dir / name, "w", encoding="utf-8") as fh:
            for h, r, t in sorted(triples):
                fh.write(f"{h}\t{r}\t{t}\n")

    write_triples("train.txt", train)
    write_triples("valid.txt", valid)
    write_triples("test.txt", test)

    labels = entity_labels()
    with open(out_dir / "entity_labels.tsv", "w", encoding="utf-8") as fh:
        for e in sorted(train_entities):
            fh.write(f"{e}\t{labels[e]}\n")
    with open(out_dir / "relation_labels.tsv", "w", encoding="utf-8") as fh:
        for r, name in enumerate(RELATIONS):
            fh.write(f"{r}\t{name}\n")

    print(f"wrote {len(train)} train / {len(valid)} valid / {len(test)} test triples to {out_dir}")


if __name__ == "__main__":
    main()
