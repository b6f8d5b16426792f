"""Kernel backends against the direct-loop oracles and each other."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from kgembed.backend import available_backends, load_backend
from oracles import ccorr_direct, cconv2d_direct, cconv_direct, count_pairs_direct

BACKENDS = available_backends()


def test_compiled_backend_present():
    """The extension should have been built in this environment."""
    assert "cython" in BACKENDS


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return load_backend(request.param)


class TestCircular1d:
    def test_matches_direct_loops(self, kernels):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(6, 7))
        b = rng.normal(size=(6, 7))
        corr = kernels.ccorr_rows(a, b)
        conv = kernels.cconv_rows(a, b)
        for i in range(6):
            assert_allclose(corr[i], ccorr_direct(a[i], b[i]), rtol=1e-12)
            assert_allclose(conv[i], cconv_direct(a[i], b[i]), rtol=1e-12)

    def test_delta_selects_other_argument(self, kernels):
        delta = np.zeros((1, 5))
        delta[0, 0] = 1.0
        b = np.arange(5.0)[None]
        assert_allclose(kernels.ccorr_rows(delta, b)[0], b[0])

    def test_first_component_is_inner_product(self, kernels):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(4, 9))
        b = rng.normal(size=(4, 9))
        out = kernels.ccorr_rows(a, b)
        assert_allclose(out[:, 0], (a * b).sum(axis=1), rtol=1e-12)


class TestCircular2d:
    def test_matches_direct_loops(self, kernels):
        rng = np.random.default_rng(5)
        planes = rng.normal(size=(4, 5, 6))
        filters = rng.normal(size=(3, 3, 3))
        out = kernels.cconv2d_forward(planes, filters)
        for p in range(4):
            for f in range(3):
                assert_allclose(out[p, f], cconv2d_direct(planes[p], filters[f]),
                                rtol=1e-12)

    def test_delta_kernel_is_identity(self, kernels):
        rng = np.random.default_rng(6)
        planes = rng.normal(size=(2, 4, 4))
        delta = np.zeros((1, 3, 3))
        delta[0, 1, 1] = 1.0
        assert_allclose(kernels.cconv2d_forward(planes, delta)[:, 0], planes)

    def test_cyclic_shift_equivariance(self, kernels):
        rng = np.random.default_rng(7)
        plane = rng.normal(size=(1, 5, 5))
        filt = rng.normal(size=(1, 3, 3))
        base = kernels.cconv2d_forward(plane, filt)
        shifted = kernels.cconv2d_forward(np.roll(plane, (1, 0), axis=(1, 2)), filt)
        assert_allclose(shifted, np.roll(base, (1, 0), axis=(2, 3)), rtol=1e-12)

    def test_linearity_in_both_arguments(self, kernels):
        rng = np.random.default_rng(8)
        p1, p2 = rng.normal(size=(2, 1, 4, 4))
        f1, f2 = rng.normal(size=(2, 1, 3, 3))
        lhs = kernels.cconv2d_forward(p1 + 2.0 * p2, f1)
        rhs = kernels.cconv2d_forward(p1, f1) + 2.0 * kernels.cconv2d_forward(p2, f1)
        assert_allclose(lhs, rhs, rtol=1e-12)
        lhs = kernels.cconv2d_forward(p1, f1 + 3.0 * f2)
        rhs = kernels.cconv2d_forward(p1, f1) + 3.0 * kernels.cconv2d_forward(p1, f2)
        assert_allclose(lhs, rhs, rtol=1e-12)

    def test_adjoint_identities(self, kernels):
        """Bilinearity: <dout, fwd(planes, filters)> equals both
        <bwd_input(dout), planes> and <bwd_filters(dout), filters>."""
        rng = np.random.default_rng(9)
        planes = rng.normal(size=(2, 4, 5))
        filters = rng.normal(size=(2, 3, 3))
        dout = rng.normal(size=(2, 2, 4, 5))
        fwd = kernels.cconv2d_forward(planes, filters)
        din = kernels.cconv2d_backward_input(dout, filters)
        dfilt = kernels.cconv2d_backward_filters(dout, planes, 3)
        assert_allclose((dout * fwd).sum(), (din * planes).sum(), rtol=1e-10)
        assert_allclose((dout * fwd).sum(), (dfilt * filters).sum(), rtol=1e-10)


class TestWindowCounts:
    @pytest.mark.parametrize("wrap", [False, True])
    def test_matches_pair_enumeration(self, kernels, wrap):
        rng = np.random.default_rng(13)
        for _ in range(5):
            tags = rng.integers(0, 3, size=(6, 7)).astype(np.int8)
            got = kernels.window_pair_counts(tags, 3, wrap)
            assert got == count_pairs_direct(tags, 3, wrap)

    def test_window_too_large_rejected(self, kernels):
        tags = np.ones((3, 3), dtype=np.int8)
        with pytest.raises(ValueError):
            kernels.window_pair_counts(tags, 4, False)


def test_backends_agree_everywhere():
    """Cython and numpy paths must match to near machine precision."""
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend missing")
    py, cy = load_backend("python"), load_backend("cython")
    rng = np.random.default_rng(17)
    a = rng.normal(size=(8, 16))
    b = rng.normal(size=(8, 16))
    assert_allclose(py.ccorr_rows(a, b), cy.ccorr_rows(a, b), rtol=1e-9)
    assert_allclose(py.cconv_rows(a, b), cy.cconv_rows(a, b), rtol=1e-9)
    planes = rng.normal(size=(3, 8, 8))
    filters = rng.normal(size=(4, 5, 5))
    f_py = py.cconv2d_forward(planes, filters)
    f_cy = cy.cconv2d_forward(planes, filters)
    assert_allclose(f_py, f_cy, rtol=1e-9)
    dout = rng.normal(size=f_py.shape)
    assert_allclose(py.cconv2d_backward_input(dout, filters),
                    cy.cconv2d_backward_input(dout, filters), rtol=1e-9)
    assert_allclose(py.cconv2d_backward_filters(dout, planes, 5),
                    cy.cconv2d_backward_filters(dout, planes, 5), rtol=1e-9)
    tags = rng.integers(0, 3, size=(9, 9)).astype(np.int8)
    assert py.window_pair_counts(tags, 3, True) == cy.window_pair_counts(tags, 3, True)
