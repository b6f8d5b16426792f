"""Graph convolution over augmented multi-relational graphs.

Each layer composes a neighbor's node features with its relation features,
projects the result through a direction-specific weight (original /
inverse / self-loop edges), and sums the messages per target node.
Relation features pass through their own linear transform so the next
layer can consume them.  Restricted weight/composition choices reproduce
the classic shared-weight, per-relation, per-direction, and scalar-gated
graph convolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kgembed import numerics
from kgembed.data import EDGE_INVERSE, EDGE_ORIGINAL, EDGE_SELF_LOOP, AugmentedGraph
from kgembed.numerics import NonFiniteError, ParameterStore, sigmoid, xavier_init

COMP_SUB = "sub"
COMP_MULT = "mult"
COMP_CORR = "corr"
COMPOSITIONS = (COMP_SUB, COMP_MULT, COMP_CORR)

MODE_FULL = "full"
MODE_KIPF = "kipf"
MODE_RGCN = "rgcn"
MODE_DGCN = "dgcn"
MODE_WGCN = "wgcn"
MODES = (MODE_FULL, MODE_KIPF, MODE_RGCN, MODE_DGCN, MODE_WGCN)

_TAG_SUFFIX = {EDGE_ORIGINAL: "w_orig", EDGE_INVERSE: "w_inv", EDGE_SELF_LOOP: "w_self"}


def compose(op: str, h_u: np.ndarray, h_r: np.ndarray) -> np.ndarray:
    """Merge node and relation features: sub = h_u - h_r, mult = h_u * h_r,
    corr = circular correlation of h_u with h_r."""
    h_u = np.asarray(h_u, dtype=np.float64)
    h_r = np.asarray(h_r, dtype=np.float64)
    if h_u.shape != h_r.shape:
        raise ValueError(f"dimension mismatch: {h_u.shape} vs {h_r.shape}")
    if op == COMP_SUB:
        return h_u - h_r
    if op == COMP_MULT:
        return h_u * h_r
    if op == COMP_CORR:
        return numerics.circular_correlate_1d(h_u, h_r)
    raise ValueError(f"unknown composition {op!r}")


def compose_vjp(op: str, dout, h_u, h_r):
    if op == COMP_SUB:
        return dout, -dout
    if op == COMP_MULT:
        return dout * h_r, dout * h_u
    if op == COMP_CORR:
        return numerics.ccorr_vjp(dout, h_u, h_r)
    raise ValueError(f"unknown composition {op!r}")


def basis_expand(coefficients: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Relation features as linear combinations of shared basis vectors:
    z_r = sum_b coefficients[r, b] * basis[b]."""
    coefficients = np.asarray(coefficients, dtype=np.float64)
    basis = np.asarray(basis, dtype=np.float64)
    if coefficients.shape[1] != basis.shape[0]:
        raise ValueError("coefficient columns must match basis count")
    return coefficients @ basis


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda dout, out: dout * (1.0 - out**2)),
    "relu": (numerics.relu, lambda dout, out: dout * (out > 0.0)),
    "identity": (lambda x: x, lambda dout, out: dout),
}


@dataclass
class LayerConfig:
    d_in: int
    d_out: int
    comp: str = COMP_CORR
    mode: str = MODE_FULL
    activation: str = "tanh"
    dropout: float = 0.0
    mean_aggregate: bool = False

    def __post_init__(self):
        if self.comp not in COMPOSITIONS:
            raise ValueError(f"unknown composition {self.comp!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


class CompGcnLayer:
    """One message-passing layer over an augmented graph."""

    def __init__(self, name: str, config: LayerConfig, n_ext_relations: int):
        self.name = name
        self.cfg = config
        self.n_ext_relations = n_ext_relations

    def _p(self, suffix: str) -> str:
        return f"{self.name}.{suffix}"

    def weight_names(self) -> list[str]:
        mode = self.cfg.mode
        if mode in (MODE_FULL, MODE_DGCN):
            names = ["w_orig", "w_inv", "w_self"]
        elif mode in (MODE_KIPF, MODE_WGCN):
            names = ["w"]
        else:
            names = [f"w_r{r}" for r in range(self.n_ext_relations)]
        names.append("w_rel")
        if mode == MODE_WGCN:
            names.append("rel_scale")
        return names

    def init_params(self, store: ParameterStore, rng) -> None:
        for name in self.weight_names():
            if name == "rel_scale":
                store.add(self._p(name), np.ones((self.n_ext_relations, 1)))
            else:
                store.add(self._p(name), xavier_init(self.cfg.d_out, self.cfg.d_in, rng))

    def _edge_weight_name(self, tag: int, rel: int) -> str:
        mode = self.cfg.mode
        if mode in (MODE_FULL, MODE_DGCN):
            return _TAG_SUFFIX[tag]
        if mode in (MODE_KIPF, MODE_WGCN):
            return "w"
        return f"w_r{rel}"

    def _edge_groups(self, graph: AugmentedGraph):
        """Edges grouped by the weight matrix they use."""
        mode = self.cfg.mode
        if mode in (MODE_FULL, MODE_DGCN):
            keys, values = graph.tag, (EDGE_ORIGINAL, EDGE_INVERSE, EDGE_SELF_LOOP)
            return [
                (_TAG_SUFFIX[v], np.where(keys == v)[0]) for v in values
            ]
        if mode in (MODE_KIPF, MODE_WGCN):
            return [("w", np.arange(graph.n_edges))]
        return [
            (f"w_r{r}", np.where(graph.rel == r)[0])
            for r in range(self.n_ext_relations)
            if np.any(graph.rel == r)
        ]

    def _compose_edges(self, store, x_src, z_rel, rel_ids):
        mode = self.cfg.mode
        if mode == MODE_FULL:
            return compose(self.cfg.comp, x_src, z_rel)
        if mode == MODE_WGCN:
            alpha = store.value(self._p("rel_scale"))[rel_ids]
            return alpha * x_src
        return x_src

    def forward(self, store, graph: AugmentedGraph, node_feats, rel_feats,
                train=False, drop_rng=None):
        cfg = self.cfg
        act_fn, _ = _ACTIVATIONS[cfg.activation]
        pre = np.zeros((graph.n_entities, cfg.d_out))
        if cfg.mean_aggregate:
            deg = np.bincount(graph.dst, minlength=graph.n_entities).astype(np.float64)
            deg[deg == 0.0] = 1.0
        groups = []
        for wname, idx in self._edge_groups(graph):
            x_src = node_feats[graph.src[idx]]
            z_rel = rel_feats[graph.rel[idx]]
            composed = self._compose_edges(store, x_src, z_rel, graph.rel[idx])
            msgs = composed @ store.value(self._p(wname)).T
            if cfg.mean_aggregate:
                msgs = msgs / deg[graph.dst[idx]][:, None]
            np.add.at(pre, graph.dst[idx], msgs)
            groups.append((wname, idx, x_src, z_rel, composed))
        act_out = act_fn(pre)
        mask = None
        out = act_out
        if train and cfg.dropout > 0.0:
            mask = numerics.dropout_mask(act_out.shape, cfg.dropout, drop_rng)
            out = act_out * mask
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"non-finite activations in layer {self.name!r}")
        rel_out = rel_feats @ store.value(self._p("w_rel")).T
        cache = (graph, node_feats, rel_feats, groups, act_out, mask)
        return out, rel_out, cache

    def backward(self, store, cache, d_out, d_rel_out):
        graph, node_feats, rel_feats, groups, act_out, mask = cache
        cfg = self.cfg
        _, act_vjp = _ACTIVATIONS[cfg.activation]
        if mask is not None:
            d_out = d_out * mask
        d_pre = act_vjp(d_out, act_out)
        if cfg.mean_aggregate:
            deg = np.bincount(graph.dst, minlength=graph.n_entities).astype(np.float64)
            deg[deg == 0.0] = 1.0
        d_nodes = np.zeros_like(node_feats)
        d_rels = np.zeros_like(rel_feats)
        for wname, idx, x_src, z_rel, composed in groups:
            w = store.value(self._p(wname))
            d_msgs = d_pre[graph.dst[idx]]
            if cfg.mean_aggregate:
                d_msgs = d_msgs / deg[graph.dst[idx]][:, None]
            store.grad(self._p(wname))[:] += d_msgs.T @ composed
            d_comp = d_msgs @ w
            if cfg.mode == MODE_FULL:
                dx, dz = compose_vjp(cfg.comp, d_comp, x_src, z_rel)
                np.add.at(d_nodes, graph.src[idx], dx)
                np.add.at(d_rels, graph.rel[idx], dz)
            elif cfg.mode == MODE_WGCN:
                alpha = store.value(self._p("rel_scale"))[graph.rel[idx]]
                np.add.at(d_nodes, graph.src[idx], d_comp * alpha)
                d_alpha = (d_comp * x_src).sum(axis=1, keepdims=True)
                np.add.at(store.grad(self._p("rel_scale")), graph.rel[idx], d_alpha)
            else:
                np.add.at(d_nodes, graph.src[idx], d_comp)
        w_rel = store.value(self._p("w_rel"))
        store.grad(self._p("w_rel"))[:] += d_rel_out.T @ rel_feats
        d_rels += d_rel_out @ w_rel
        return d_nodes, d_rels


class CompGcnEncoder:
    """Stack of layers producing joint node and relation embeddings.

    Initial node features are a learned embedding table.  Initial relation
    features are either a learned table or, with n_bases >= 1, linear
    combinations of shared basis vectors (first layer only; later layers
    consume the transformed relation embeddings).
    """

    def __init__(self, graph: AugmentedGraph, d0: int, layer_dims: list[int],
                 comp: str = COMP_CORR, mode: str = MODE_FULL, n_bases: int = 0,
                 activation: str = "tanh", dropout: float = 0.0,
                 mean_aggregate: bool = False):
        if not layer_dims:
            raise ValueError("at least one layer required")
        self.graph = graph
        self.d0 = d0
        self.n_bases = n_bases
        self.layers = []
        d_in = d0
        for i, d_out in enumerate(layer_dims):
            cfg = LayerConfig(d_in, d_out, comp=comp, mode=mode,
                              activation=activation, dropout=dropout,
                              mean_aggregate=mean_aggregate)
            self.layers.append(CompGcnLayer(f"gcn{i}", cfg, graph.n_ext_relations))
            d_in = d_out
        self.d_out = d_in

    def init_params(self, store: ParameterStore, rng) -> None:
        store.add("ent.embed", xavier_init(self.graph.n_entities, self.d0, rng))
        if self.n_bases >= 1:
            store.add("rel.basis", xavier_init(self.n_bases, self.d0, rng))
            store.add("rel.coef", xavier_init(self.graph.n_ext_relations, self.n_bases, rng))
        else:
            store.add("rel.embed", xavier_init(self.graph.n_ext_relations, self.d0, rng))
        for layer in self.layers:
            layer.init_params(store, rng)

    def forward(self, store, train=False, drop_rng=None):
        h = store.value("ent.embed")
        if self.n_bases >= 1:
            z = basis_expand(store.value("rel.coef"), store.value("rel.basis"))
        else:
            z = store.value("rel.embed")
        caches = []
        for layer in self.layers:
            h, z, cache = layer.forward(store, self.graph, h, z,
                                        train=train, drop_rng=drop_rng)
            caches.append(cache)
        return h, z, caches

    def backward(self, store, caches, d_nodes, d_rels) -> None:
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            d_nodes, d_rels = layer.backward(store, cache, d_nodes, d_rels)
        store.grad("ent.embed")[:] += d_nodes
        if self.n_bases >= 1:
            store.grad("rel.coef")[:] += d_rels @ store.value("rel.basis").T
            store.grad("rel.basis")[:] += store.value("rel.coef").T @ d_rels
        else:
            store.grad("rel.embed")[:] += d_rels


class GatedDirectedGcn:
    """Directed labeled graph convolution with per-edge sigmoid gates.

    For an edge with label L: gate = sigmoid(x_u . gate_w_L + gate_b_L) and
    the message is gate * (W_L x_u + b_L); messages are summed per target
    and passed through the activation.
    """

    def __init__(self, name: str, d_in: int, d_out: int, activation: str = "relu"):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.name = name
        self.d_in = d_in
        self.d_out = d_out
        self.activation = activation

    def _p(self, label: str, kind: str) -> str:
        return f"{self.name}.{label}.{kind}"

    def init_params(self, store: ParameterStore, rng) -> None:
        for label in _TAG_SUFFIX.values():
            store.add(self._p(label, "w"), xavier_init(self.d_out, self.d_in, rng))
            store.add(self._p(label, "b"), np.zeros((1, self.d_out)))
            store.add(self._p(label, "gate_w"), xavier_init(1, self.d_in, rng))
            store.add(self._p(label, "gate_b"), np.zeros((1, 1)))

    def forward(self, store, graph: AugmentedGraph, node_feats):
        act_fn, _ = _ACTIVATIONS[self.activation]
        pre = np.zeros((graph.n_entities, self.d_out))
        groups = []
        for tag, label in _TAG_SUFFIX.items():
            idx = np.where(graph.tag == tag)[0]
            x_src = node_feats[graph.src[idx]]
            gate_pre = x_src @ store.value(self._p(label, "gate_w")).T \
                + store.value(self._p(label, "gate_b"))
            gate = sigmoid(gate_pre)
            lin = x_src @ store.value(self._p(label, "w")).T + store.value(self._p(label, "b"))
            np.add.at(pre, graph.dst[idx], gate * lin)
            groups.append((label, idx, x_src, gate, lin))
        out = act_fn(pre)
        return out, (graph, node_feats, groups, pre, out)

    def backward(self, store, cache, d_out):
        graph, node_feats, groups, pre, out = cache
        _, act_vjp = _ACTIVATIONS[self.activation]
        d_pre = act_vjp(d_out, out)
        d_nodes = np.zeros_like(node_feats)
        for label, idx, x_src, gate, lin in groups:
            d_msg = d_pre[graph.dst[idx]]
            d_gate = (d_msg * lin).sum(axis=1, keepdims=True)
            d_lin = d_msg * gate
            w = store.value(self._p(label, "w"))
            store.grad(self._p(label, "w"))[:] += d_lin.T @ x_src
            store.grad(self._p(label, "b"))[:] += d_lin.sum(axis=0, keepdims=True)
            dx = d_lin @ w
            d_gate_pre = d_gate * gate * (1.0 - gate)
            store.grad(self._p(label, "gate_w"))[:] += d_gate_pre.T @ x_src
            store.grad(self._p(label, "gate_b"))[:] += d_gate_pre.sum(axis=0, keepdims=True)
            dx += d_gate_pre @ store.value(self._p(label, "gate_w"))
            np.add.at(d_nodes, graph.src[idx], dx)
        return d_nodes
