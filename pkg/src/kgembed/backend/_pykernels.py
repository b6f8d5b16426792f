"""Vectorized numpy implementations of the hot kernels.

Used whenever the compiled extension is unavailable or disabled.  Both
backends implement the same contract; the normative semantics are the
direct summations below, written out in each function's docstring.
"""

import numpy as np

# Row chunk sizes keep the (rows, d, d) index-gather buffers bounded.
_CORR_CHUNK_FLOATS = 4_000_000


def _gather_index(d: int, sign: int) -> np.ndarray:
    # idx[k, j] = (k + sign*j) mod d
    k = np.arange(d)[:, None]
    j = np.arange(d)[None, :]
    return (k + sign * j) % d


def ccorr_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise circular correlation: out[i, k] = sum_j a[i, j] * b[i, (k+j) % d]."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    rows, d = a.shape
    idx = _gather_index(d, +1)
    out = np.empty((rows, d))
    chunk = max(1, _CORR_CHUNK_FLOATS // (d * d))
    for lo in range(0, rows, chunk):
        hi = min(rows, lo + chunk)
        out[lo:hi] = np.einsum("nj,nkj->nk", a[lo:hi], b[lo:hi][:, idx])
    return out


def cconv_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise circular convolution: out[i, k] = sum_j a[i, j] * b[i, (k-j) % d]."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    rows, d = a.shape
    idx = _gather_index(d, -1)
    out = np.empty((rows, d))
    chunk = max(1, _CORR_CHUNK_FLOATS // (d * d))
    for lo in range(0, rows, chunk):
        hi = min(rows, lo + chunk)
        out[lo:hi] = np.einsum("nj,nkj->nk", a[lo:hi], b[lo:hi][:, idx])
    return out


def cconv2d_forward(planes: np.ndarray, filters: np.ndarray) -> np.ndarray:
    """Depth-wise 2-D circular convolution.

    out[p, f, r, c] = sum_{i,j in [-h, h]} planes[p, (r-i) % m, (c-j) % n]
                      * filters[f, i+h, j+h]   with h = k // 2 (k odd).
    """
    planes = np.ascontiguousarray(planes, dtype=np.float64)
    filters = np.ascontiguousarray(filters, dtype=np.float64)
    p, m, n = planes.shape
    f, k, _ = filters.shape
    h = k // 2
    out = np.zeros((p, f, m, n))
    for i in range(-h, h + 1):
        for j in range(-h, h + 1):
            rolled = np.roll(planes, (i, j), axis=(1, 2))
            out += filters[:, i + h, j + h][None, :, None, None] * rolled[:, None]
    return out


def cconv2d_backward_input(dout: np.ndarray, filters: np.ndarray) -> np.ndarray:
    """Adjoint of cconv2d_forward w.r.t. the input planes.

    dplanes[p, u, v] = sum_{f,i,j} dout[p, f, (u+i) % m, (v+j) % n] * filters[f, i+h, j+h]
    """
    dout = np.ascontiguousarray(dout, dtype=np.float64)
    filters = np.ascontiguousarray(filters, dtype=np.float64)
    _, _, m, n = dout.shape
    f, k, _ = filters.shape
    h = k // 2
    dplanes = np.zeros((dout.shape[0], m, n))
    for i in range(-h, h + 1):
        for j in range(-h, h + 1):
            rolled = np.roll(dout, (-i, -j), axis=(2, 3))
            dplanes += np.einsum("pfmn,f->pmn", rolled, filters[:, i + h, j + h])
    return dplanes


def cconv2d_backward_filters(dout: np.ndarray, planes: np.ndarray, k: int) -> np.ndarray:
    """Adjoint of cconv2d_forward w.r.t. the filters.

    dfilters[f, i+h, j+h] = sum_{p,r,c} dout[p, f, r, c] * planes[p, (r-i) % m, (c-j) % n]
    """
    dout = np.ascontiguousarray(dout, dtype=np.float64)
    planes = np.ascontiguousarray(planes, dtype=np.float64)
    f = dout.shape[1]
    h = k // 2
    dfilters = np.zeros((f, k, k))
    for i in range(-h, h + 1):
        for j in range(-h, h + 1):
            rolled = np.roll(planes, (i, j), axis=(1, 2))
            dfilters[:, i + h, j + h] = np.einsum("pfmn,pmn->f", dout, rolled)
    return dfilters


def window_pair_counts(tags: np.ndarray, k: int, wrap: bool) -> tuple[int, int, int]:
    """Count ordered pairs of distinct tagged cells over all k x k windows.

    tags: int8 matrix, 0 = empty (contributes nothing), 1 and 2 = the two
    sources.  Returns (mixed_pairs, same_source_pairs, window_count) where a
    window contributes 2*x*y mixed and x*(x-1) + y*(y-1) same-source pairs,
    x and y being its counts of 1- and 2-cells.  wrap=True slides the window
    cyclically (m*n positions); wrap=False stays inside (m-k+1)*(n-k+1).
    """
    tags = np.asarray(tags)
    m, n = tags.shape
    if k > min(m, n):
        raise ValueError(f"window size {k} exceeds layout extents {m}x{n}")
    ones = (tags == 1).astype(np.int64)
    twos = (tags == 2).astype(np.int64)
    if wrap:
        ones = np.tile(ones, (2, 2))[: m + k - 1, : n + k - 1]
        twos = np.tile(twos, (2, 2))[: m + k - 1, : n + k - 1]

    def window_sums(ind):
        pref = np.zeros((ind.shape[0] + 1, ind.shape[1] + 1), dtype=np.int64)
        pref[1:, 1:] = ind.cumsum(0).cumsum(1)
        return (
            pref[k:, k:] - pref[:-k, k:] - pref[k:, :-k] + pref[:-k, :-k]
        )

    x = window_sums(ones)
    y = window_sums(twos)
    het = int(2 * (x * y).sum())
    homo = int((x * (x - 1)).sum() + (y * (y - 1)).sum())
    return het, homo, x.size
