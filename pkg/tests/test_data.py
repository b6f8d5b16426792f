"""Triple loading, graph augmentation, filter indices, relation categories."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgembed.data import (
    CATEGORY_MANY_TO_MANY,
    CATEGORY_MANY_TO_ONE,
    CATEGORY_ONE_TO_MANY,
    CATEGORY_ONE_TO_ONE,
    CATEGORY_UNDEFINED,
    EDGE_INVERSE,
    EDGE_ORIGINAL,
    EDGE_SELF_LOOP,
    KnowledgeGraph,
    ParseError,
    Triple,
    Vocabulary,
    augment,
    build_filter_index,
    load_dataset,
    load_triples,
    relation_categories,
)


def write_split(path, rows):
    path.write_text("".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows), encoding="utf-8")


@pytest.fixture
def dataset_dir(tmp_path):
    write_split(tmp_path / "train.txt", [("a", "r", "b"), ("b", "r", "c")])
    write_split(tmp_path / "valid.txt", [("a", "r", "c")])
    write_split(tmp_path / "test.txt", [("c", "s", "a")])
    return tmp_path


def kg_from_triples(train, n_entities, n_relations, valid=(), test=()):
    entities, relations = Vocabulary(), Vocabulary()
    for i in range(n_entities):
        entities.add(f"e{i}")
    for i in range(n_relations):
        relations.add(f"r{i}")
    as_triples = lambda rows: [Triple(*row) for row in rows]
    return KnowledgeGraph(entities, relations, as_triples(train),
                          as_triples(valid), as_triples(test))


class TestLoading:
    def test_small_file(self, dataset_dir):
        kg = load_dataset(dataset_dir)
        assert kg.n_entities == 3
        assert kg.n_relations == 2
        assert len(kg.train) == 2
        assert kg.train[0] == Triple(0, 0, 1)

    def test_first_appearance_order(self, dataset_dir):
        kg = load_dataset(dataset_dir)
        assert [kg.entities.name_of(i) for i in range(3)] == ["a", "b", "c"]
        assert kg.relations.id_of("s") == 1  # appears only in test, still admitted

    def test_empty_file(self, tmp_path):
        for split in ("train", "valid", "test"):
            (tmp_path / f"{split}.txt").write_text("")
        kg = load_dataset(tmp_path)
        assert kg.n_entities == 0
        assert len(kg.train) == 0

    def test_malformed_line_names_position(self, tmp_path):
        (tmp_path / "train.txt").write_text("a\tr\tb\na\tr\n")
        (tmp_path / "valid.txt").write_text("")
        (tmp_path / "test.txt").write_text("")
        with pytest.raises(ParseError, match="train.txt:2"):
            load_dataset(tmp_path)

    def test_separate_paths(self, dataset_dir):
        kg = load_triples(dataset_dir / "train.txt", dataset_dir / "valid.txt",
                          dataset_dir / "test.txt")
        assert len(kg.valid) == 1 and len(kg.test) == 1

    def test_duplicates_within_split_collapse(self, tmp_path):
        write_split(tmp_path / "train.txt", [("a", "r", "b")] * 3)
        write_split(tmp_path / "valid.txt", [])
        write_split(tmp_path / "test.txt", [])
        kg = load_dataset(tmp_path)
        assert len(kg.train) == 1


class TestAugment:
    def test_edge_count_formula(self):
        kg = kg_from_triples([(0, 0, 1), (1, 0, 2)], 3, 1)
        g = augment(kg)
        assert g.n_edges == 2 * 2 + 3
        assert g.n_ext_relations == 3
        assert g.self_loop_rel == 2

    def test_no_triples_only_self_loops(self):
        g = augment(kg_from_triples([], 5, 1))
        assert g.n_edges == 5
        assert (g.tag == EDGE_SELF_LOOP).all()

    def test_degenerate_self_edge_distinct_by_relation(self):
        g = augment(kg_from_triples([(0, 0, 0)], 1, 1))
        edges = sorted(zip(g.src, g.dst, g.rel, g.tag))
        assert edges == [(0, 0, 0, EDGE_ORIGINAL), (0, 0, 1, EDGE_INVERSE),
                         (0, 0, 2, EDGE_SELF_LOOP)]

    def test_inverse_ids(self):
        g = augment(kg_from_triples([(0, 1, 1)], 2, 3))
        assert g.inverse_rel(1) == 4
        assert g.inverse_rel(4) == 1
        assert g.inverse_rel(g.self_loop_rel) == g.self_loop_rel

    def test_in_neighbors(self):
        g = augment(kg_from_triples([(0, 0, 1)], 2, 1))
        assert (0, 0) in g.in_neighbors(1)  # original edge
        assert (1, 1) in g.in_neighbors(0)  # inverse edge
        assert (0, 2) in g.in_neighbors(0)  # self loop

    @given(st.integers(0, 30), st.integers(1, 4), st.integers(1, 20))
    @settings(max_examples=25, deadline=None)
    def test_size_formula_property(self, n_triples, n_rel, n_ent):
        rng = np.random.default_rng(n_triples * 7 + n_rel)
        triples = {
            (int(rng.integers(n_ent)), int(rng.integers(n_rel)), int(rng.integers(n_ent)))
            for _ in range(n_triples)
        }
        kg = kg_from_triples(sorted(triples), n_ent, n_rel)
        assert augment(kg).n_edges == 2 * len(triples) + n_ent


class TestFilterIndex:
    def test_tail_sets(self):
        kg = kg_from_triples([(0, 0, 1), (0, 0, 2)], 3, 1)
        idx = build_filter_index(kg)
        assert idx.tails(0, 0) == {1, 2}
        assert idx.heads(1, 0) == {0}

    def test_covers_all_splits(self):
        kg = kg_from_triples([(0, 0, 1)], 4, 1, valid=[(1, 0, 2)], test=[(2, 0, 3)])
        idx = build_filter_index(kg)
        for t in kg.all_triples():
            assert t.tail in idx.tails(t.head, t.rel)
            assert t.head in idx.heads(t.tail, t.rel)

    def test_disjoint_relations_never_share_keys(self):
        kg = kg_from_triples([(0, 0, 1), (0, 1, 2)], 3, 2)
        idx = build_filter_index(kg)
        assert idx.tails(0, 0) == {1}
        assert idx.tails(0, 1) == {2}

    def test_train_only_subset(self):
        kg = kg_from_triples([(0, 0, 1)], 3, 1, test=[(0, 0, 2)])
        idx = build_filter_index(kg, splits=("train",))
        assert idx.tails(0, 0) == {1}


class TestRelationCategories:
    def test_one_to_one(self):
        kg = kg_from_triples([(0, 0, 1), (2, 0, 3)], 4, 1)
        [cat] = relation_categories(kg)
        assert cat.label == CATEGORY_ONE_TO_ONE

    def test_one_to_many_hand_counted(self):
        # tails/head = 4/2 = 2 > 1.5, heads/tail = 4/4 = 1 <= 1.5
        kg = kg_from_triples([(0, 0, 1), (0, 0, 2), (3, 0, 4), (3, 0, 5)], 6, 1)
        [cat] = relation_categories(kg, threshold=1.5)
        assert cat.label == CATEGORY_ONE_TO_MANY
        assert cat.tails_per_head == 2.0
        assert cat.heads_per_tail == 1.0

    def test_bipartite_complete_many_to_many(self):
        triples = [(h, 0, t) for h in range(3) for t in range(3, 6)]
        kg = kg_from_triples(triples, 6, 1)
        [cat] = relation_categories(kg, threshold=1.5)
        assert cat.label == CATEGORY_MANY_TO_MANY
        assert cat.tails_per_head == 3.0

    def test_absent_relation_undefined(self):
        kg = kg_from_triples([(0, 0, 1)], 2, 2)
        cats = relation_categories(kg)
        assert cats[1].label == CATEGORY_UNDEFINED

    def test_threshold_must_be_positive(self):
        kg = kg_from_triples([(0, 0, 1)], 2, 1)
        with pytest.raises(ValueError):
            relation_categories(kg, threshold=0.0)

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)),
                    min_size=1, max_size=20, unique=True))
    @settings(max_examples=40, deadline=None)
    def test_reversal_swaps_asymmetric_labels(self, pairs):
        """Swapping head/tail of every triple swaps 1-N with N-1 and fixes
        the symmetric labels."""
        fwd = kg_from_triples([(h, 0, t) for h, t in pairs], 6, 1)
        rev = kg_from_triples([(t, 0, h) for h, t in pairs], 6, 1)
        swap = {CATEGORY_ONE_TO_MANY: CATEGORY_MANY_TO_ONE,
                CATEGORY_MANY_TO_ONE: CATEGORY_ONE_TO_MANY}
        [f], [r] = relation_categories(fwd), relation_categories(rev)
        assert swap.get(f.label, f.label) == r.label
