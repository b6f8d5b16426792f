"""Synthetic graphs for smoke experiments and capability checks."""

from __future__ import annotations

import numpy as np

from kgembed.data import KnowledgeGraph, Triple, Vocabulary
from kgembed.numerics import named_rng


def _graph_from_ids(n_entities: int, n_relations: int,
                    train: list[Triple], valid: list[Triple],
                    test: list[Triple]) -> KnowledgeGraph:
    entities = Vocabulary()
    relations = Vocabulary()
    for i in range(n_entities):
        entities.add(f"e{i}")
    for i in range(n_relations):
        relations.add(f"r{i}")
    return KnowledgeGraph(entities, relations, train, valid, test)


def random_kg(n_entities: int, n_relations: int, n_triples: int, seed: int = 0,
              valid_frac: float = 0.0, test_frac: float = 0.0) -> KnowledgeGraph:
    """Distinct uniform triples split into train/valid/test."""
    rng = named_rng(seed, "synthetic-kg")
    seen: set[Triple] = set()
    triples: list[Triple] = []
    while len(triples) < n_triples:
        t = Triple(int(rng.integers(n_entities)), int(rng.integers(n_relations)),
                   int(rng.integers(n_entities)))
        if t.head != t.tail and t not in seen:
            seen.add(t)
            triples.append(t)
    n_valid = int(n_triples * valid_frac)
    n_test = int(n_triples * test_frac)
    n_train = n_triples - n_valid - n_test
    return _graph_from_ids(
        n_entities, n_relations,
        triples[:n_train],
        triples[n_train : n_train + n_valid],
        triples[n_train + n_valid :],
    )


def inverse_pair_kg(n_entities: int, n_pairs: int, holdout_frac: float = 0.2,
                    seed: int = 0) -> KnowledgeGraph:
    """Two relations where the second always inverts the first.

    Every (a, r0, b) fact has a matching (b, r1, a) fact; a fraction of the
    r1 facts is held out as the test split, so ranking them well requires
    the r1-inverts-r0 regularity rather than memorization.
    """
    rng = named_rng(seed, "synthetic-kg-inverse")
    pairs: set[tuple[int, int]] = set()
    while len(pairs) < n_pairs:
        a, b = int(rng.integers(n_entities)), int(rng.integers(n_entities))
        if a != b:
            pairs.add((a, b))
    ordered = sorted(pairs)
    rng.shuffle(ordered)
    n_test = max(1, int(len(ordered) * holdout_frac))
    train: list[Triple] = [Triple(a, 0, b) for a, b in ordered]
    test: list[Triple] = []
    for a, b in ordered[:n_test]:
        test.append(Triple(b, 1, a))
    for a, b in ordered[n_test:]:
        train.append(Triple(b, 1, a))
    return _graph_from_ids(n_entities, 2, train, [], test)


def write_dataset(kg: KnowledgeGraph, directory) -> None:
    """Write a graph back out as train.txt / valid.txt / test.txt."""
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for split in ("train", "valid", "test"):
        with open(d / f"{split}.txt", "w", encoding="utf-8") as fh:
            for t in kg.split(split):
                fh.write(
                    f"{kg.entities.name_of(t.head)}\t"
                    f"{kg.relations.name_of(t.rel)}\t"
                    f"{kg.entities.name_of(t.tail)}\n"
                )
