"""Dense numeric substrate: 64-bit tensors with paired gradient buffers,
Adam with bias correction, Xavier initialization, the primitive forward /
vector-Jacobian rules every model composes, and a finite-difference
gradient checker."""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from kgembed import backend


class NonFiniteError(RuntimeError):
    """A tensor that must stay finite contains NaN or infinity."""


def named_rng(seed: int, stream: str) -> np.random.Generator:
    """Independent, reproducible generator for a named sub-stream of one seed."""
    return np.random.default_rng([seed, zlib.crc32(stream.encode("utf-8"))])


def xavier_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform in [-b, b] with b = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ValueError("xavier_init requires positive extents")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray


class ParameterStore:
    """Named 2-D float64 parameters, each with grad and Adam state buffers."""

    def __init__(self) -> None:
        self._params: dict[str, Param] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already exists")
        value = np.array(value, dtype=np.float64)
        if value.ndim != 2:
            raise ValueError(f"parameter {name!r} must be 2-D, got shape {value.shape}")
        p = Param(value, np.zeros_like(value), np.zeros_like(value), np.zeros_like(value))
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def value(self, name: str) -> np.ndarray:
        return self._params[name].value

    def grad(self, name: str) -> np.ndarray:
        return self._params[name].grad

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad[:] = 0.0

    def scalar_count(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, value in state.items():
            p = self._params[name]
            if p.value.shape != value.shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: store {p.value.shape}, state {value.shape}"
                )
            p.value[:] = value


def adam_step(
    store: ParameterStore,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update over every parameter.

    Gradients are left untouched; the caller zeroes them per step.
    """
    t = store.step_count + 1
    for name in store.names():
        p = store[name]
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
        p.adam_m[:] = beta1 * p.adam_m + (1.0 - beta1) * p.grad
        p.adam_v[:] = beta2 * p.adam_v + (1.0 - beta2) * p.grad**2
        m_hat = p.adam_m / (1.0 - beta1**t)
        v_hat = p.adam_v / (1.0 - beta2**t)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    store.step_count = t


# ---------------------------------------------------------------------------
# Primitive forward rules and their vector-Jacobian (backward) rules.
# Models compose these into static, hand-written backward chains.
# ---------------------------------------------------------------------------


def matmul(a, b):
    return a @ b


def matmul_vjp(dout, a, b):
    return dout @ b.T, a.T @ dout


def relu(x):
    return np.maximum(x, 0.0)


def relu_vjp(dout, x):
    return dout * (x > 0.0)


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_vjp(dout, s):
    """s is the forward output."""
    return dout * s * (1.0 - s)


def softplus(x):
    """log(1 + exp(x)) evaluated stably."""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability rate, survivors scaled
    by 1/(1-rate) so the expectation is the identity.  rate=0 gives ones."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def apply_mask(x, mask):
    return x * mask


def apply_mask_vjp(dout, mask):
    return dout * mask


def row_gather(table, idx):
    return table[idx]


def row_scatter_add(dtable, idx, dout) -> None:
    np.add.at(dtable, idx, dout)


def _rows(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    single = a.ndim == 1
    return np.atleast_2d(a), np.atleast_2d(b), single


def circular_correlate_1d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Circular correlation out[k] = sum_i a[i] * b[(k+i) mod d].

    Accepts single vectors or matching batches of rows.
    """
    a2, b2, single = _rows(a, b)
    out = backend.ccorr_rows(a2, b2)
    return out[0] if single else out


def circular_convolve_1d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Circular convolution out[k] = sum_i a[i] * b[(k-i) mod d]."""
    a2, b2, single = _rows(a, b)
    out = backend.cconv_rows(a2, b2)
    return out[0] if single else out


def ccorr_vjp(dout, a, b):
    """Adjoints of circular correlation: da = corr(dout, b), db = conv(dout, a)."""
    dout2, a2, single = _rows(dout, a)
    b2 = np.atleast_2d(np.asarray(b, dtype=np.float64))
    da = backend.ccorr_rows(dout2, b2)
    db = backend.cconv_rows(dout2, a2)
    return (da[0], db[0]) if single else (da, db)


def cconv_vjp(dout, a, b):
    """Adjoints of circular convolution: da = corr(b, dout), db = corr(a, dout)."""
    dout2, a2, single = _rows(dout, a)
    b2 = np.atleast_2d(np.asarray(b, dtype=np.float64))
    da = backend.ccorr_rows(b2, dout2)
    db = backend.ccorr_rows(a2, dout2)
    return (da[0], db[0]) if single else (da, db)


def circular_convolve_2d(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2-D circular convolution with wrap-around indexing.

    out[p, q] = sum_{i,j in [-k//2, k//2]} image[(p-i) mod m, (q-j) mod n] * kernel[i, j]
    with the kernel stored so that its center sits at index (k//2, k//2).
    Output extents equal input extents; k must be odd and fit the image.
    """
    image = np.asarray(image, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    k = kernel.shape[0]
    if kernel.shape != (k, k) or k % 2 == 0:
        raise ValueError(f"kernel must be odd and square, got {kernel.shape}")
    if k // 2 > min(image.shape):
        raise ValueError(
            f"kernel size {k} wraps more than a full cycle on a "
            f"{image.shape[0]}x{image.shape[1]} input"
        )
    out = backend.cconv2d_forward(image[None], kernel[None])
    return out[0, 0]


def conv2d_same(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Standard zero-padded 'same'-size 2-D convolution (odd square kernel)."""
    image = np.asarray(image, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    k = kernel.shape[0]
    h = k // 2
    m, n = image.shape
    padded = np.zeros((m + 2 * h, n + 2 * h))
    padded[h : h + m, h : h + n] = image
    out = np.zeros((m, n))
    for i in range(-h, h + 1):
        for j in range(-h, h + 1):
            out += kernel[i + h, j + h] * padded[h - i : h - i + m, h - j : h - j + n]
    return out


def conv2d_same_batch(planes: np.ndarray, filters: np.ndarray) -> np.ndarray:
    """conv2d_same over a batch of planes and a bank of shared filters."""
    p, m, n = planes.shape
    f, k, _ = filters.shape
    h = k // 2
    padded = np.zeros((p, m + 2 * h, n + 2 * h))
    padded[:, h : h + m, h : h + n] = planes
    out = np.zeros((p, f, m, n))
    for i in range(-h, h + 1):
        for j in range(-h, h + 1):
            window = padded[:, h - i : h - i + m, h - j : h - j + n]
            out += filters[:, i + h, j + h][None, :, None, None] * window[:, None]
    return out


def conv2d_same_batch_vjp(dout: np.ndarray, planes: np.ndarray, filters: np.ndarray):
    p, m, n = planes.shape
    f, k, _ = filters.shape
    h = k // 2
    padded = np.zeros((p, m + 2 * h, n + 2 * h))
    padded[:, h : h + m, h : h + n] = planes
    dpadded = np.zeros_like(padded)
    dfilters = np.zeros_like(filters)
    for i in range(-h, h + 1):
        for j in range(-h, h + 1):
            window = padded[:, h - i : h - i + m, h - j : h - j + n]
            dfilters[:, i + h, j + h] = np.einsum("pfmn,pmn->f", dout, window)
            dpadded[:, h - i : h - i + m, h - j : h - j + n] += np.einsum(
                "pfmn,f->pmn", dout, filters[:, i + h, j + h]
            )
    return dpadded[:, h : h + m, h : h + n], dfilters


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    per_param: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def grad_check(
    store: ParameterStore,
    loss_fn: Callable[[ParameterStore, bool], float],
    h: float = 1e-5,
    tolerance: float = 1e-4,
    params: list[str] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    loss_fn(store, want_grad) returns a deterministic scalar loss and, when
    want_grad is true, accumulates gradients into the store (which is
    zeroed here first).  Relative error per coordinate uses a 1e-3 floor so
    near-zero gradients are judged on absolute error.
    """
    store.zero_grads()
    loss_fn(store, True)
    names = params if params is not None else store.names()
    analytic = {name: store.grad(name).copy() for name in names}

    per_param: dict[str, float] = {}
    worst = ("", 0.0)
    for name in names:
        value = store.value(name)
        worst_here = 0.0
        it = np.nditer(value, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = value[idx]
            value[idx] = orig + h
            f_plus = loss_fn(store, False)
            value[idx] = orig - h
            f_minus = loss_fn(store, False)
            value[idx] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            an = analytic[name][idx]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-3)
            worst_here = max(worst_here, rel)
            it.iternext()
        per_param[name] = worst_here
        if worst_here >= worst[1]:
            worst = (name, worst_here)
    return GradCheckReport(worst[1], worst[0], per_param, tolerance)
