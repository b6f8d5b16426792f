"""Arranging two embedding vectors into a 2-D plane.

Three placement patterns are supported: stacked (first vector fills the top
half), alternate-tau (blocks of tau rows from each vector, interleaved),
and chequer (no two edge-adjacent cells from the same vector).  The same
placement grids drive both the numeric reshape used by the convolutional
scorers and the provenance layouts used by interaction counting.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isqrt

import numpy as np

from kgembed.numerics import named_rng

STACKED = "stacked"
ALTERNATE = "alternate"
CHEQUER = "chequer"
PATTERNS = (STACKED, ALTERNATE, CHEQUER)

TAG_EMPTY = 0
TAG_FIRST = 1
TAG_SECOND = 2


def default_plane(d: int) -> tuple[int, int]:
    """Most-square factorization m x n of 2d with even m."""
    total = 2 * d
    best = (2, d)
    for m in range(2, total + 1, 2):
        if total % m == 0:
            n = total // m
            if abs(m - n) < abs(best[0] - best[1]):
                best = (m, n)
    return best


@dataclass(frozen=True)
class ReshapingSpec:
    pattern: str
    rows: int
    cols: int
    tau: int = 1

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown reshaping pattern {self.pattern!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("plane extents must be positive")
        if (self.rows * self.cols) % 2 != 0:
            raise ValueError("plane must hold an even number of cells")
        if self.pattern in (STACKED, ALTERNATE) and self.rows % 2 != 0:
            raise ValueError(f"{self.pattern} reshaping requires an even row count")
        if self.pattern == ALTERNATE:
            if self.tau < 1:
                raise ValueError("tau must be >= 1")
            if (self.rows // 2) % self.tau != 0:
                raise ValueError("tau must divide half the row count")

    @property
    def dim(self) -> int:
        return (self.rows * self.cols) // 2

    def tag_grid(self) -> np.ndarray:
        """int8 grid marking which source vector occupies each cell."""
        m, n = self.rows, self.cols
        tags = np.empty((m, n), dtype=np.int8)
        if self.pattern == STACKED:
            tags[: m // 2] = TAG_FIRST
            tags[m // 2 :] = TAG_SECOND
        elif self.pattern == ALTERNATE:
            blocks = (np.arange(m) // self.tau) % 2
            tags[:] = np.where(blocks == 0, TAG_FIRST, TAG_SECOND)[:, None]
        else:
            i = np.arange(m)[:, None]
            j = np.arange(n)[None, :]
            tags[:] = np.where((i + j) % 2 == 0, TAG_FIRST, TAG_SECOND)
        return tags

    def placement(self) -> tuple[np.ndarray, np.ndarray]:
        """Component index per cell, assigned in row-major scan order of
        each source's cells.  Returns (tags, index)."""
        tags = self.tag_grid()
        index = np.zeros(tags.shape, dtype=np.int64)
        for tag in (TAG_FIRST, TAG_SECOND):
            mask = tags == tag
            index[mask] = np.arange(mask.sum())
        return tags, index


def _cell_maps(spec: ReshapingSpec):
    tags, index = spec.placement()
    tflat, iflat = tags.ravel(), index.ravel()
    first_cells = np.where(tflat == TAG_FIRST)[0]
    second_cells = np.where(tflat == TAG_SECOND)[0]
    return first_cells, iflat[first_cells], second_cells, iflat[second_cells]


def reshape(spec: ReshapingSpec, e_s: np.ndarray, e_r: np.ndarray) -> np.ndarray:
    """Place e_s and e_r into the spec's plane; every component used once.

    Single vectors give an (m, n) plane; batches of rows give (batch, m, n).
    """
    e_s = np.asarray(e_s, dtype=np.float64)
    e_r = np.asarray(e_r, dtype=np.float64)
    if e_s.shape != e_r.shape:
        raise ValueError("embedding shapes must match")
    single = e_s.ndim == 1
    es2, er2 = np.atleast_2d(e_s), np.atleast_2d(e_r)
    if es2.shape[1] != spec.dim:
        raise ValueError(
            f"embedding dim {es2.shape[1]} does not fill a {spec.rows}x{spec.cols} plane"
        )
    s_cells, s_comp, r_cells, r_comp = _cell_maps(spec)
    flat = np.empty((es2.shape[0], spec.rows * spec.cols))
    flat[:, s_cells] = es2[:, s_comp]
    flat[:, r_cells] = er2[:, r_comp]
    planes = flat.reshape(-1, spec.rows, spec.cols)
    return planes[0] if single else planes


def reshape_vjp(spec: ReshapingSpec, dplanes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scatter plane gradients back to the two source vectors."""
    dplanes = np.asarray(dplanes, dtype=np.float64)
    single = dplanes.ndim == 2
    d2 = dplanes[None] if single else dplanes
    flat = d2.reshape(d2.shape[0], -1)
    s_cells, s_comp, r_cells, r_comp = _cell_maps(spec)
    des = np.empty((flat.shape[0], spec.dim))
    der = np.empty((flat.shape[0], spec.dim))
    des[:, s_comp] = flat[:, s_cells]
    der[:, r_comp] = flat[:, r_cells]
    return (des[0], der[0]) if single else (des, der)


def permutations(t: int, seed: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    """t index-permutation pairs for the two embeddings, permutation 0 being
    the identity pair; deterministic under the seed."""
    if t < 1:
        raise ValueError("permutation count must be >= 1")
    rng = named_rng(seed, "permutations")
    s_perms = np.empty((t, d), dtype=np.int64)
    r_perms = np.empty((t, d), dtype=np.int64)
    s_perms[0] = np.arange(d)
    r_perms[0] = np.arange(d)
    for i in range(1, t):
        s_perms[i] = rng.permutation(d)
        r_perms[i] = rng.permutation(d)
    return s_perms, r_perms
