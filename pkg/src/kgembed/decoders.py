"""Link-prediction score functions.

Every scorer maps a batch of (subject, relation) embedding rows plus an
entity table to one logit per candidate entity, higher meaning more
plausible, and carries the hand-written backward rules for its forward
chain.  The sigmoid that turns logits into probabilities lives in the
loss, not here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kgembed import backend, numerics, reshaping
from kgembed.numerics import ParameterStore, relu, relu_vjp, xavier_init
from kgembed.reshaping import ReshapingSpec


def score_transe(e_s, e_r, e_o, p: int = 1) -> float:
    """Negated p-norm of e_s + e_r - e_o, so larger is better."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    diff = np.asarray(e_s, dtype=np.float64) + np.asarray(e_r) - np.asarray(e_o)
    return float(-np.linalg.norm(diff, ord=p))


def score_distmult(e_s, e_r, e_o) -> float:
    """Trilinear product sum_i s_i r_i o_i."""
    return float(np.sum(np.asarray(e_s, dtype=np.float64) * e_r * e_o))


def score_hole(e_s, e_r, e_o) -> float:
    """e_r dotted with the circular correlation of e_s and e_o."""
    return float(np.dot(e_r, numerics.circular_correlate_1d(e_s, e_o)))


class TransEScorer:
    """Negated p-norm translation scorer; has no parameters of its own.

    The (batch, candidates, dim) difference tensor is processed in
    candidate slices so memory stays bounded on large vocabularies.
    """

    _CHUNK_FLOATS = 8_000_000

    def __init__(self, p: int = 1):
        if p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        self.p = p

    def init_params(self, store, prefix, d, rng):
        pass

    def _chunk(self, b, d):
        return max(1, self._CHUNK_FLOATS // max(1, b * d))

    def score_all(self, store, prefix, es, er, table, train=False, rng=None):
        trans = es + er
        b, d = trans.shape
        v = table.shape[0]
        logits = np.empty((b, v))
        step = self._chunk(b, d)
        for lo in range(0, v, step):
            diff = trans[:, None, :] - table[None, lo : lo + step, :]
            if self.p == 1:
                logits[:, lo : lo + step] = -np.abs(diff).sum(axis=2)
            else:
                logits[:, lo : lo + step] = -np.sqrt((diff**2).sum(axis=2))
        return logits, (trans, table, logits)

    def backward_all(self, store, prefix, cache, dlogits):
        trans, table, logits = cache
        b, d = trans.shape
        v = table.shape[0]
        des = np.zeros((b, d))
        dtable = np.zeros((v, d))
        step = self._chunk(b, d)
        for lo in range(0, v, step):
            diff = trans[:, None, :] - table[None, lo : lo + step, :]
            if self.p == 1:
                ddiff = -dlogits[:, lo : lo + step, None] * np.sign(diff)
            else:
                norms = -logits[:, lo : lo + step]
                safe = np.where(norms == 0.0, 1.0, norms)
                ddiff = -dlogits[:, lo : lo + step, None] * diff / safe[:, :, None]
            des += ddiff.sum(axis=1)
            dtable[lo : lo + step] = -ddiff.sum(axis=0)
        return des, des.copy(), dtable


class DistMultScorer:
    def init_params(self, store, prefix, d, rng):
        pass

    def score_all(self, store, prefix, es, er, table, train=False, rng=None):
        q = es * er
        return q @ table.T, (es, er, q, table)

    def backward_all(self, store, prefix, cache, dlogits):
        es, er, q, table = cache
        dq = dlogits @ table
        return dq * er, dq * es, dlogits.T @ q


class HolEScorer:
    """Correlation-based scorer.

    The all-entity form uses the identity
    <table_j, corr(e_s, e_r-as-correlate)> rewritten through circular
    convolution: score_j = table_j . conv(e_s, e_r) equals
    e_r . corr(e_s, table_j) for every j.
    """

    def init_params(self, store, prefix, d, rng):
        pass

    def score_all(self, store, prefix, es, er, table, train=False, rng=None):
        q = backend.cconv_rows(es, er)
        return q @ table.T, (es, er, q, table)

    def backward_all(self, store, prefix, cache, dlogits):
        es, er, q, table = cache
        dq = dlogits @ table
        des, der = numerics.cconv_vjp(dq, es, er)
        return des, der, dlogits.T @ q


@dataclass
class ConvSpec:
    """Shared shape description for the convolutional scorers."""

    d: int
    kernel_size: int = 3
    filters: int = 8
    plane: tuple[int, int] | None = None
    dropout: float = 0.0

    def __post_init__(self):
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.filters < 1:
            raise ValueError("at least one filter required")
        if self.plane is None:
            self.plane = reshaping.default_plane(self.d)
        m, n = self.plane
        if m * n != 2 * self.d:
            raise ValueError(f"plane {m}x{n} does not hold 2*{self.d} components")
        if self.kernel_size > min(m, n):
            raise ValueError("kernel does not fit the reshaped plane")


class ConvEScorer:
    """Stacked reshaping, zero-padded same-size convolution, two ReLU
    stages, projection back to embedding space, then entity dot products."""

    def __init__(self, spec: ConvSpec):
        self.spec = spec
        m, n = spec.plane
        self.reshape_spec = ReshapingSpec(reshaping.STACKED, m, n)

    def init_params(self, store, prefix, d, rng):
        k, f = self.spec.kernel_size, self.spec.filters
        m, n = self.spec.plane
        store.add(f"{prefix}filters", xavier_init(f, k * k, rng))
        store.add(f"{prefix}proj", xavier_init(f * m * n, d, rng))

    def score_all(self, store, prefix, es, er, table, train=False, rng=None):
        k, f = self.spec.kernel_size, self.spec.filters
        filters = store.value(f"{prefix}filters").reshape(f, k, k)
        w = store.value(f"{prefix}proj")
        planes = reshaping.reshape(self.reshape_spec, es, er)
        conv = numerics.conv2d_same_batch(planes, filters)
        act = relu(conv)
        flat = act.reshape(es.shape[0], -1)
        mask = None
        if train and self.spec.dropout > 0.0:
            mask = numerics.dropout_mask(flat.shape, self.spec.dropout, rng)
            flat = flat * mask
        proj = flat @ w
        hidden = relu(proj)
        logits = hidden @ table.T
        return logits, (planes, conv, flat, mask, proj, hidden, table)

    def backward_all(self, store, prefix, cache, dlogits):
        planes, conv, flat, mask, proj, hidden, table = cache
        k, f = self.spec.kernel_size, self.spec.filters
        filters = store.value(f"{prefix}filters").reshape(f, k, k)
        w = store.value(f"{prefix}proj")
        dtable = dlogits.T @ hidden
        dhidden = dlogits @ table
        dproj = relu_vjp(dhidden, proj)
        store.grad(f"{prefix}proj")[:] += flat.T @ dproj
        dflat = dproj @ w.T
        if mask is not None:
            dflat = dflat * mask
        dact = dflat.reshape(conv.shape)
        dconv = relu_vjp(dact, conv)
        dplanes, dfilters = numerics.conv2d_same_batch_vjp(dconv, planes, filters)
        store.grad(f"{prefix}filters")[:] += dfilters.reshape(f, k * k)
        des, der = reshaping.reshape_vjp(self.reshape_spec, dplanes)
        return des, der, dtable


@dataclass
class InteractESpec(ConvSpec):
    """Adds feature permutations and the reshaping pattern choice."""

    permutations: int = 2
    pattern: str = reshaping.CHEQUER
    tau: int = 1
    seed: int = 0

    def __post_init__(self):
        super().__post_init__()
        if self.permutations < 1:
            raise ValueError("permutation count must be >= 1")


class InteractEScorer:
    """Permuted chequer reshaping, depth-wise circular convolution with
    filters shared across the permutation channels, ReLU, concatenated
    flattening, projection, ReLU, then entity dot products."""

    def __init__(self, spec: InteractESpec):
        self.spec = spec
        m, n = spec.plane
        self.reshape_spec = ReshapingSpec(spec.pattern, m, n, tau=spec.tau)
        self.s_perms, self.r_perms = reshaping.permutations(
            spec.permutations, spec.seed, spec.d
        )

    def init_params(self, store, prefix, d, rng):
        k, f, t = self.spec.kernel_size, self.spec.filters, self.spec.permutations
        m, n = self.spec.plane
        store.add(f"{prefix}filters", xavier_init(f, k * k, rng))
        store.add(f"{prefix}proj", xavier_init(t * f * m * n, d, rng))

    def _planes(self, es, er):
        t = self.spec.permutations
        m, n = self.spec.plane
        b = es.shape[0]
        planes = np.empty((b, t, m, n))
        for i in range(t):
            planes[:, i] = reshaping.reshape(
                self.reshape_spec, es[:, self.s_perms[i]], er[:, self.r_perms[i]]
            )
        return planes.reshape(b * t, m, n)

    def score_all(self, store, prefix, es, er, table, train=False, rng=None):
        k, f, t = self.spec.kernel_size, self.spec.filters, self.spec.permutations
        m, n = self.spec.plane
        b = es.shape[0]
        filters = store.value(f"{prefix}filters").reshape(f, k, k)
        w = store.value(f"{prefix}proj")
        planes = self._planes(es, er)
        conv = backend.cconv2d_forward(planes, filters)
        act = relu(conv)
        flat = act.reshape(b, t * f * m * n)
        mask = None
        if train and self.spec.dropout > 0.0:
            mask = numerics.dropout_mask(flat.shape, self.spec.dropout, rng)
            flat = flat * mask
        proj = flat @ w
        hidden = relu(proj)
        logits = hidden @ table.T
        return logits, (planes, conv, flat, mask, proj, hidden, table)

    def backward_all(self, store, prefix, cache, dlogits):
        planes, conv, flat, mask, proj, hidden, table = cache
        k, f, t = self.spec.kernel_size, self.spec.filters, self.spec.permutations
        m, n = self.spec.plane
        b = dlogits.shape[0]
        filters = store.value(f"{prefix}filters").reshape(f, k, k)
        w = store.value(f"{prefix}proj")
        dtable = dlogits.T @ hidden
        dhidden = dlogits @ table
        dproj = relu_vjp(dhidden, proj)
        store.grad(f"{prefix}proj")[:] += flat.T @ dproj
        dflat = dproj @ w.T
        if mask is not None:
            dflat = dflat * mask
        dact = dflat.reshape(conv.shape)
        dconv = relu_vjp(dact, conv)
        dplanes = backend.cconv2d_backward_input(dconv, filters)
        dfilters = backend.cconv2d_backward_filters(dconv, planes, k)
        store.grad(f"{prefix}filters")[:] += dfilters.reshape(f, k * k)
        des = np.zeros((b, self.spec.d))
        der = np.zeros((b, self.spec.d))
        dplane_t = dplanes.reshape(b, t, m, n)
        for i in range(t):
            ds, dr = reshaping.reshape_vjp(self.reshape_spec, dplane_t[:, i])
            des[:, self.s_perms[i]] += ds
            der[:, self.r_perms[i]] += dr
        return des, der, dtable


def score_one(scorer, store, prefix, e_s, e_r, e_o, **kw) -> float:
    """Scalar (s, r, o) score through the same path as the 1-vs-all form."""
    logits, _ = scorer.score_all(
        store, prefix, np.atleast_2d(e_s), np.atleast_2d(e_r), np.atleast_2d(e_o), **kw
    )
    return float(logits[0, 0])


def make_scorer(name: str, d: int, *, transe_norm=1, kernel_size=3, filters=8,
                plane=None, dropout=0.0, permutations=2, pattern=reshaping.CHEQUER,
                tau=1, seed=0):
    if name == "transe":
        return TransEScorer(p=transe_norm)
    if name == "distmult":
        return DistMultScorer()
    if name == "hole":
        return HolEScorer()
    if name == "conve":
        return ConvEScorer(ConvSpec(d, kernel_size, filters, plane, dropout))
    if name == "interacte":
        return InteractEScorer(
            InteractESpec(
                d, kernel_size, filters, plane, dropout,
                permutations=permutations, pattern=pattern, tau=tau, seed=seed,
            )
        )
    raise ValueError(f"unknown scorer {name!r}")
