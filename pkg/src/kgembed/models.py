"""Trainable link-prediction models.

Both model kinds expose the same query interface: a batch of (subject,
extended-relation) ids goes in, one logit per candidate entity comes out,
and gradients flow back into the parameter store.  Head queries use the
inverse relation ids, so every model scores both directions through a
single code path.
"""

from __future__ import annotations

import numpy as np

from kgembed import decoders, reshaping
from kgembed.data import AugmentedGraph, KnowledgeGraph, augment
from kgembed.encoder import CompGcnEncoder
from kgembed.numerics import ParameterStore, named_rng, xavier_init

PLAIN_MODELS = ("transe", "distmult", "hole", "conve", "interacte")
ENCODED_MODELS = ("compgcn+transe", "compgcn+distmult", "compgcn+conve")
MODEL_TAGS = PLAIN_MODELS + ENCODED_MODELS


class KgeModel:
    """Decoder-only model: entity and relation embedding tables plus a scorer.

    The relation table covers the extended id space (originals, inverses,
    self-loop) so inverse-relation queries resolve without special cases.
    """

    def __init__(self, n_entities: int, n_relations: int, d: int, scorer, seed: int = 0):
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.d = d
        self.scorer = scorer
        self.seed = seed

    def init_params(self, store: ParameterStore) -> None:
        rng = named_rng(self.seed, "init")
        store.add("ent.embed", xavier_init(self.n_entities, self.d, rng))
        store.add("rel.embed", xavier_init(2 * self.n_relations + 1, self.d, rng))
        self.scorer.init_params(store, "dec.", self.d, rng)

    def forward_queries(self, store, s_ids, r_ids, train=False, rng=None):
        ent = store.value("ent.embed")
        rel = store.value("rel.embed")
        es, er = ent[s_ids], rel[r_ids]
        logits, cache = self.scorer.score_all(store, "dec.", es, er, ent,
                                              train=train, rng=rng)
        return logits, (s_ids, r_ids, cache)

    def backward_queries(self, store, cache, dlogits) -> None:
        s_ids, r_ids, dec_cache = cache
        des, der, dtable = self.scorer.backward_all(store, "dec.", dec_cache, dlogits)
        dent = store.grad("ent.embed")
        dent += dtable
        np.add.at(dent, s_ids, des)
        np.add.at(store.grad("rel.embed"), r_ids, der)

    def eval_tables(self, store):
        return store.value("ent.embed"), store.value("rel.embed")


class EncodedKgeModel:
    """Graph encoder feeding a scorer; the encoder runs over the full
    augmented train graph on every forward pass."""

    def __init__(self, encoder: CompGcnEncoder, scorer, seed: int = 0):
        self.encoder = encoder
        self.scorer = scorer
        self.d = encoder.d_out
        self.n_entities = encoder.graph.n_entities
        self.seed = seed

    def init_params(self, store: ParameterStore) -> None:
        rng = named_rng(self.seed, "init")
        self.encoder.init_params(store, rng)
        self.scorer.init_params(store, "dec.", self.d, rng)

    def forward_queries(self, store, s_ids, r_ids, train=False, rng=None):
        h, z, enc_caches = self.encoder.forward(store, train=train, drop_rng=rng)
        es, er = h[s_ids], z[r_ids]
        logits, dec_cache = self.scorer.score_all(store, "dec.", es, er, h,
                                                  train=train, rng=rng)
        return logits, (s_ids, r_ids, h, z, enc_caches, dec_cache)

    def backward_queries(self, store, cache, dlogits) -> None:
        s_ids, r_ids, h, z, enc_caches, dec_cache = cache
        des, der, dtable = self.scorer.backward_all(store, "dec.", dec_cache, dlogits)
        d_nodes = dtable
        np.add.at(d_nodes, s_ids, des)
        d_rels = np.zeros_like(z)
        np.add.at(d_rels, r_ids, der)
        self.encoder.backward(store, enc_caches, d_nodes, d_rels)

    def eval_tables(self, store):
        h, z, _ = self.encoder.forward(store, train=False)
        return h, z


def build_model(kg: KnowledgeGraph, tag: str, d: int, *, seed: int = 0,
                comp: str = "corr", reduction: str = "full", layers: int = 1,
                bases: int = 0, activation: str = "tanh", dropout: float = 0.0,
                transe_norm: int = 1, kernel_size: int = 3, filters: int = 8,
                permutations: int = 2, pattern: str = reshaping.CHEQUER,
                tau: int = 1, plane: tuple[int, int] | None = None,
                graph: AugmentedGraph | None = None):
    """Construct a model from its run-config fields."""
    if tag not in MODEL_TAGS:
        raise ValueError(f"unknown model {tag!r}; expected one of {MODEL_TAGS}")

    def scorer_for(name):
        return decoders.make_scorer(
            name, d, transe_norm=transe_norm, kernel_size=kernel_size,
            filters=filters, plane=plane, dropout=dropout,
            permutations=permutations, pattern=pattern, tau=tau, seed=seed,
        )

    if tag in PLAIN_MODELS:
        return KgeModel(kg.n_entities, kg.n_relations, d, scorer_for(tag), seed=seed)
    decoder_name = tag.split("+", 1)[1]
    if graph is None:
        graph = augment(kg)
    encoder = CompGcnEncoder(
        graph, d, [d] * layers, comp=comp, mode=reduction, n_bases=bases,
        activation=activation, dropout=dropout,
    )
    return EncodedKgeModel(encoder, scorer_for(decoder_name), seed=seed)
