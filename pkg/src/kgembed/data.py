"""Knowledge-graph data model: triple files, vocabularies, graph
augmentation with inverse/self-loop edges, filter indices for ranking, and
relation-category labeling."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np


class ParseError(ValueError):
    """A triple file line does not have the head<TAB>relation<TAB>tail layout."""


class Triple(NamedTuple):
    head: int
    rel: int
    tail: int


class Vocabulary:
    """Bijective string <-> dense-id mapping, ids assigned in first-appearance order."""

    def __init__(self) -> None:
        self._to_id: dict[str, int] = {}
        self._to_name: list[str] = []

    def add(self, name: str) -> int:
        idx = self._to_id.get(name)
        if idx is None:
            idx = len(self._to_name)
            self._to_id[name] = idx
            self._to_name.append(name)
        return idx

    def id_of(self, name: str) -> int:
        return self._to_id[name]

    def name_of(self, idx: int) -> str:
        return self._to_name[idx]

    def __len__(self) -> int:
        return len(self._to_name)

    def __contains__(self, name: str) -> bool:
        return name in self._to_id


SPLITS = ("train", "valid", "test")


@dataclass
class KnowledgeGraph:
    entities: Vocabulary
    relations: Vocabulary
    train: list[Triple]
    valid: list[Triple]
    test: list[Triple]

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def split(self, name: str) -> list[Triple]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_triples(self) -> Iterable[Triple]:
        yield from self.train
        yield from self.valid
        yield from self.test


def _parse_lines(path: Path, entities: Vocabulary, relations: Vocabulary) -> list[Triple]:
    triples: list[Triple] = []
    seen: set[Triple] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                )
            h, r, t = fields
            triple = Triple(entities.add(h), relations.add(r), entities.add(t))
            # Exact duplicates within a split carry no information and would
            # double-count during evaluation.
            if triple not in seen:
                seen.add(triple)
                triples.append(triple)
    return triples


def load_triples(train_path, valid_path, test_path) -> KnowledgeGraph:
    """Load the three TSV splits into one graph with shared vocabularies.

    Entities/relations appearing only in valid/test are still admitted to
    the vocabulary.
    """
    entities = Vocabulary()
    relations = Vocabulary()
    splits = [
        _parse_lines(Path(p), entities, relations)
        for p in (train_path, valid_path, test_path)
    ]
    return KnowledgeGraph(entities, relations, *splits)


def load_dataset(directory) -> KnowledgeGraph:
    """Load a dataset directory containing train.txt, valid.txt, test.txt."""
    d = Path(directory)
    return load_triples(d / "train.txt", d / "valid.txt", d / "test.txt")


# Edge direction tags in an augmented graph.
EDGE_ORIGINAL = 0
EDGE_INVERSE = 1
EDGE_SELF_LOOP = 2


@dataclass
class AugmentedGraph:
    """Train edges extended with inverse relations and per-node self-loops.

    Relation ids live in the extended set of size 2*n_relations + 1: the
    inverse of r is r + n_relations, and the self-loop relation is the last
    id.  Each edge (src, dst, rel) carries a direction tag.
    """

    n_entities: int
    n_relations: int
    src: np.ndarray
    dst: np.ndarray
    rel: np.ndarray
    tag: np.ndarray

    @property
    def n_ext_relations(self) -> int:
        return 2 * self.n_relations + 1

    @property
    def self_loop_rel(self) -> int:
        return 2 * self.n_relations

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def inverse_rel(self, r: int) -> int:
        if r == self.self_loop_rel:
            return r
        return r + self.n_relations if r < self.n_relations else r - self.n_relations

    def in_neighbors(self, v: int) -> list[tuple[int, int]]:
        """(source node, extended relation id) pairs of edges entering v."""
        mask = self.dst == v
        return list(zip(self.src[mask].tolist(), self.rel[mask].tolist()))


def augment(kg: KnowledgeGraph) -> AugmentedGraph:
    """Emit (u, v, r) and (v, u, r_inv) per train triple plus one self-loop per node."""
    n_ent, n_rel = kg.n_entities, kg.n_relations
    heads = np.fromiter((t.head for t in kg.train), dtype=np.int64, count=len(kg.train))
    rels = np.fromiter((t.rel for t in kg.train), dtype=np.int64, count=len(kg.train))
    tails = np.fromiter((t.tail for t in kg.train), dtype=np.int64, count=len(kg.train))
    nodes = np.arange(n_ent, dtype=np.int64)
    src = np.concatenate([heads, tails, nodes])
    dst = np.concatenate([tails, heads, nodes])
    rel = np.concatenate([rels, rels + n_rel, np.full(n_ent, 2 * n_rel, dtype=np.int64)])
    tag = np.concatenate(
        [
            np.full(len(kg.train), EDGE_ORIGINAL, dtype=np.int8),
            np.full(len(kg.train), EDGE_INVERSE, dtype=np.int8),
            np.full(n_ent, EDGE_SELF_LOOP, dtype=np.int8),
        ]
    )
    return AugmentedGraph(n_ent, n_rel, src, dst, rel, tag)


@dataclass
class FilterIndex:
    """Known-true candidate sets for filtered ranking.

    tails_of[(head, rel)] and heads_of[(tail, rel)] cover exactly the
    triples of the splits the index was built over.
    """

    tails_of: dict[tuple[int, int], set[int]] = field(default_factory=dict)
    heads_of: dict[tuple[int, int], set[int]] = field(default_factory=dict)

    def add(self, t: Triple) -> None:
        self.tails_of.setdefault((t.head, t.rel), set()).add(t.tail)
        self.heads_of.setdefault((t.tail, t.rel), set()).add(t.head)

    def tails(self, head: int, rel: int) -> set[int]:
        return self.tails_of.get((head, rel), set())

    def heads(self, tail: int, rel: int) -> set[int]:
        return self.heads_of.get((tail, rel), set())


def build_filter_index(kg: KnowledgeGraph, splits: Iterable[str] = SPLITS) -> FilterIndex:
    index = FilterIndex()
    for name in splits:
        for t in kg.split(name):
            index.add(t)
    return index


CATEGORY_ONE_TO_ONE = "1-1"
CATEGORY_ONE_TO_MANY = "1-N"
CATEGORY_MANY_TO_ONE = "N-1"
CATEGORY_MANY_TO_MANY = "N-N"
CATEGORY_UNDEFINED = "undefined"


@dataclass(frozen=True)
class RelationCategory:
    rel: int
    tails_per_head: float
    heads_per_tail: float
    label: str


def categorize(tails_per_head: float, heads_per_tail: float, threshold: float) -> str:
    many_tails = tails_per_head > threshold
    many_heads = heads_per_tail > threshold
    if many_tails and many_heads:
        return CATEGORY_MANY_TO_MANY
    if many_tails:
        return CATEGORY_ONE_TO_MANY
    if many_heads:
        return CATEGORY_MANY_TO_ONE
    return CATEGORY_ONE_TO_ONE


def relation_categories(kg: KnowledgeGraph, threshold: float = 1.5) -> list[RelationCategory]:
    """Label every relation by its mean tails-per-head and heads-per-tail
    over the train split.  Relations absent from train are undefined."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    counts: dict[int, int] = {}
    heads: dict[int, set[int]] = {}
    tails: dict[int, set[int]] = {}
    for t in kg.train:
        counts[t.rel] = counts.get(t.rel, 0) + 1
        heads.setdefault(t.rel, set()).add(t.head)
        tails.setdefault(t.rel, set()).add(t.tail)
    out = []
    for r in range(kg.n_relations):
        if r not in counts:
            out.append(RelationCategory(r, float("nan"), float("nan"), CATEGORY_UNDEFINED))
            continue
        tph = counts[r] / len(heads[r])
        hpt = counts[r] / len(tails[r])
        out.append(RelationCategory(r, tph, hpt, categorize(tph, hpt, threshold)))
    return out
