"""Score functions: hand values, oracles, and gradient checks."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kgembed import decoders, numerics, reshaping
from kgembed.data import augment
from kgembed.decoders import (
    ConvSpec,
    InteractESpec,
    score_distmult,
    score_hole,
    score_one,
    score_transe,
)
from kgembed.models import build_model
from kgembed.numerics import ParameterStore, grad_check, named_rng
from kgembed.synth import random_kg
from kgembed.training import bce_loss
from oracles import hole_score_direct


class TestTransE:
    def test_exact_translation_scores_zero(self):
        s, r = np.array([1.0, 2.0]), np.array([0.5, -1.0])
        assert score_transe(s, r, s + r, p=1) == 0.0
        assert score_transe(s, r, s + r, p=2) == 0.0

    def test_l1_hand_value(self):
        assert score_transe(np.zeros(2), np.array([1.0, 2.0]), np.zeros(2), p=1) == -3.0

    def test_translation_invariance(self):
        rng = named_rng(0, "transe")
        s, r, o = rng.normal(size=(3, 5))
        shift = 0.7 * np.ones(5)
        for p in (1, 2):
            assert_allclose(score_transe(s + shift, r, o + shift, p),
                            score_transe(s, r, o, p), rtol=1e-12)

    def test_bad_norm_rejected(self):
        with pytest.raises(ValueError):
            score_transe(np.ones(2), np.ones(2), np.ones(2), p=3)


class TestDistMult:
    def test_all_ones(self):
        assert score_distmult(np.ones(3), np.ones(3), np.ones(3)) == 3.0

    def test_zero_argument(self):
        rng = named_rng(1, "distmult")
        a, b = rng.normal(size=(2, 4))
        assert score_distmult(a, b, np.zeros(4)) == 0.0

    def test_subject_object_symmetry(self):
        rng = named_rng(2, "distmult")
        s, r, o = rng.normal(size=(3, 6))
        assert_allclose(score_distmult(s, r, o), score_distmult(o, r, s), rtol=1e-12)


class TestHolE:
    def test_delta_relation_gives_inner_product(self):
        rng = named_rng(3, "hole")
        s, o = rng.normal(size=(2, 5))
        delta = np.zeros(5)
        delta[0] = 1.0
        assert_allclose(score_hole(s, delta, o), s @ o, rtol=1e-12)

    def test_delta_subject_selects_relation_object_product(self):
        rng = named_rng(4, "hole")
        r, o = rng.normal(size=(2, 5))
        delta = np.zeros(5)
        delta[0] = 1.0
        assert_allclose(score_hole(delta, r, o), r @ o, rtol=1e-12)

    def test_matches_double_sum_oracle(self):
        rng = named_rng(5, "hole")
        s, r, o = rng.normal(size=(3, 4))
        assert_allclose(score_hole(s, r, o), hole_score_direct(s, r, o), rtol=1e-12)

    def test_scorer_all_matches_scalar(self):
        """The convolution identity used by the 1-vs-all path equals the
        correlation form entity by entity."""
        rng = named_rng(6, "hole")
        es, er = rng.normal(size=(2, 1, 6)), rng.normal(size=(2, 1, 6))
        table = rng.normal(size=(7, 6))
        scorer = decoders.HolEScorer()
        logits, _ = scorer.score_all(None, "", es[0], er[0], table)
        for j in range(7):
            assert_allclose(logits[0, j], score_hole(es[0, 0], er[0, 0], table[j]),
                            rtol=1e-10)


def tiny_model(tag, dim=8, seed=0, **kw):
    kg = random_kg(n_entities=6, n_relations=2, n_triples=10, seed=seed)
    graph = augment(kg)
    model = build_model(kg, tag, dim, seed=seed, graph=graph, filters=2,
                        permutations=2, bases=2, layers=2, **kw)
    store = ParameterStore()
    model.init_params(store)
    return kg, model, store


def model_loss_fn(model, s_ids, r_ids, targets):
    def loss_fn(store, want_grad):
        logits, cache = model.forward_queries(store, s_ids, r_ids, train=False)
        loss, dlogits = bce_loss(logits, targets)
        if want_grad:
            model.backward_queries(store, cache, dlogits)
        return loss

    return loss_fn


class TestConvE:
    def test_zero_parameters_zero_scores(self):
        kg, model, store = tiny_model("conve")
        store.value("dec.filters")[:] = 0.0
        store.value("dec.proj")[:] = 0.0
        logits, _ = model.forward_queries(store, np.array([0, 1]), np.array([0, 1]))
        assert_allclose(logits, 0.0)

    def test_deterministic(self):
        kg, model, store = tiny_model("conve")
        a, _ = model.forward_queries(store, np.array([2]), np.array([1]))
        b, _ = model.forward_queries(store, np.array([2]), np.array([1]))
        assert_allclose(a, b, rtol=0)

    def test_gradients(self):
        kg, model, store = tiny_model("conve")
        rng = named_rng(7, "conve-check")
        targets = rng.random((2, kg.n_entities))
        report = grad_check(store, model_loss_fn(model, np.array([0, 3]),
                                                 np.array([1, 2]), targets))
        assert report.passed, (report.worst_param, report.max_rel_err)


class TestInteractE:
    def test_zero_parameters_give_even_odds(self):
        """All-zero filters and projection push every post-sigmoid
        probability to exactly one half."""
        kg, model, store = tiny_model("interacte")
        store.value("dec.filters")[:] = 0.0
        store.value("dec.proj")[:] = 0.0
        logits, _ = model.forward_queries(store, np.array([0]), np.array([0]))
        assert_allclose(numerics.sigmoid(logits), 0.5)

    def test_linear_oracle(self):
        """t=1 identity permutation, delta kernel, and a projection that
        reads back the subject cells make the logits exactly table @ e_s
        for non-negative embeddings."""
        kg = random_kg(n_entities=5, n_relations=2, n_triples=8, seed=1)
        d = 8
        spec = InteractESpec(d, kernel_size=3, filters=1, permutations=1)
        scorer = decoders.InteractEScorer(spec)
        store = ParameterStore()
        rng = named_rng(8, "interacte-oracle")
        scorer.init_params(store, "dec.", d, rng)
        delta = np.zeros((3, 3))
        delta[1, 1] = 1.0
        store.value("dec.filters")[:] = delta.reshape(1, 9)
        # selector: plane cell holding s-component j maps to output j
        m, n = spec.plane
        tags, index = scorer.reshape_spec.placement()
        w = np.zeros((m * n, d))
        for cell, (tag, comp) in enumerate(zip(tags.ravel(), index.ravel())):
            if tag == reshaping.TAG_FIRST:
                w[cell, comp] = 1.0
        store.value("dec.proj")[:] = w
        es = rng.random((3, d))  # non-negative keeps every ReLU inactive
        er = rng.random((3, d))
        table = rng.random((5, d))
        logits, _ = scorer.score_all(store, "dec.", es, er, table)
        assert_allclose(logits, es @ table.T, rtol=1e-12)

    def test_feature_map_cyclic_equivariance(self):
        """Before flattening, cyclically shifting a reshaped plane shifts
        the convolution feature maps identically."""
        from kgembed import backend

        rng = named_rng(9, "interacte-equiv")
        plane = rng.normal(size=(1, 6, 6))
        filters = rng.normal(size=(2, 3, 3))
        rolled = backend.cconv2d_forward(np.roll(plane, (2, 1), axis=(1, 2)), filters)
        assert_allclose(rolled, np.roll(backend.cconv2d_forward(plane, filters),
                                        (2, 1), axis=(2, 3)), rtol=1e-12)

    def test_gradients(self):
        kg, model, store = tiny_model("interacte")
        rng = named_rng(10, "interacte-check")
        targets = rng.random((2, kg.n_entities))
        report = grad_check(store, model_loss_fn(model, np.array([1, 4]),
                                                 np.array([0, 3]), targets))
        assert report.passed, (report.worst_param, report.max_rel_err)


class TestAllScorerGradients:
    @pytest.mark.parametrize("tag,kw", [
        ("transe", {"transe_norm": 1}),
        ("transe", {"transe_norm": 2}),
        ("distmult", {}),
        ("hole", {}),
    ])
    def test_embedding_gradients(self, tag, kw):
        kg, model, store = tiny_model(tag, **kw)
        rng = named_rng(11, f"check-{tag}-{kw}")
        targets = rng.random((3, kg.n_entities))
        s_ids, r_ids = np.array([0, 2, 4]), np.array([0, 1, 3])
        report = grad_check(store, model_loss_fn(model, s_ids, r_ids, targets))
        assert report.passed, (tag, kw, report.worst_param, report.max_rel_err)


class TestScorerInvariants:
    def test_all_deterministic_without_dropout(self):
        for tag in ("transe", "distmult", "hole", "conve", "interacte"):
            kg, model, store = tiny_model(tag)
            s_ids, r_ids = np.array([0, 1]), np.array([0, 2])
            a, _ = model.forward_queries(store, s_ids, r_ids, train=False)
            b, _ = model.forward_queries(store, s_ids, r_ids, train=False)
            assert_allclose(a, b, rtol=0, err_msg=tag)

    def test_score_one_matches_table_column(self):
        for tag in ("transe", "distmult", "hole", "conve", "interacte"):
            kg, model, store = tiny_model(tag)
            ent = store.value("ent.embed")
            rel = store.value("rel.embed")
            logits, _ = model.forward_queries(store, np.array([1]), np.array([1]))
            got = score_one(model.scorer, store, "dec.", ent[1], rel[1], ent[3])
            assert_allclose(got, logits[0, 3], rtol=1e-10, err_msg=tag)
