"""Placement patterns, reshape bijection, and permutation generation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from kgembed.reshaping import (
    ALTERNATE,
    CHEQUER,
    STACKED,
    ReshapingSpec,
    default_plane,
    permutations,
    reshape,
    reshape_vjp,
)


class TestSpecValidation:
    def test_odd_rows_rejected_for_stacked(self):
        with pytest.raises(ValueError):
            ReshapingSpec(STACKED, 3, 4)

    def test_tau_must_divide_half_rows(self):
        with pytest.raises(ValueError):
            ReshapingSpec(ALTERNATE, 4, 4, tau=3)
        ReshapingSpec(ALTERNATE, 4, 4, tau=2)  # two blocks: fine

    def test_default_plane(self):
        assert default_plane(200) == (20, 20)
        assert default_plane(32) == (8, 8)
        assert default_plane(8) == (4, 4)


class TestPlacement:
    def test_stacked_rows(self):
        """d=8 on a 4x4 plane: rows 0-1 hold the first vector in order,
        rows 2-3 the second."""
        a = np.arange(1.0, 9.0)
        b = np.arange(11.0, 19.0)
        plane = reshape(ReshapingSpec(STACKED, 4, 4), a, b)
        assert_allclose(plane[:2].ravel(), a)
        assert_allclose(plane[2:].ravel(), b)

    def test_alternate_one_row_pattern(self):
        a = np.arange(1.0, 9.0)
        b = np.arange(11.0, 19.0)
        plane = reshape(ReshapingSpec(ALTERNATE, 4, 4, tau=1), a, b)
        assert_allclose(plane[0], a[:4])
        assert_allclose(plane[1], b[:4])
        assert_allclose(plane[2], a[4:])
        assert_allclose(plane[3], b[4:])

    def test_chequer_no_adjacent_same_source(self):
        tags = ReshapingSpec(CHEQUER, 4, 4).tag_grid()
        for i in range(4):
            for j in range(4):
                if i + 1 < 4:
                    assert tags[i, j] != tags[i + 1, j]
                if j + 1 < 4:
                    assert tags[i, j] != tags[i, j + 1]

    @pytest.mark.parametrize("pattern,kw", [
        (STACKED, {}), (ALTERNATE, {"tau": 1}), (ALTERNATE, {"tau": 2}), (CHEQUER, {}),
    ])
    def test_reshape_is_bijection(self, pattern, kw):
        """The plane holds every component of both vectors exactly once."""
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=8), rng.normal(size=8)
        plane = reshape(ReshapingSpec(pattern, 4, 4, **kw), a, b)
        assert sorted(plane.ravel()) == sorted(np.concatenate([a, b]))

    @given(st.sampled_from([STACKED, ALTERNATE, CHEQUER]),
           st.integers(1, 4), st.integers(1, 4))
    @settings(max_examples=30, deadline=None)
    def test_bijection_property(self, pattern, half_rows, cols):
        m = 2 * half_rows
        d = m * cols // 2
        rng = np.random.default_rng(half_rows * 10 + cols)
        a, b = rng.normal(size=d), rng.normal(size=d)
        plane = reshape(ReshapingSpec(pattern, m, cols), a, b)
        assert plane.shape == (m, cols)
        assert sorted(plane.ravel()) == sorted(np.concatenate([a, b]))

    def test_batched_matches_single(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(3, 8)), rng.normal(size=(3, 8))
        spec = ReshapingSpec(CHEQUER, 4, 4)
        batched = reshape(spec, a, b)
        for i in range(3):
            assert_allclose(batched[i], reshape(spec, a[i], b[i]))

    def test_vjp_inverts_reshape(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=8), rng.normal(size=8)
        spec = ReshapingSpec(ALTERNATE, 4, 4, tau=2)
        da, db = reshape_vjp(spec, reshape(spec, a, b))
        assert_allclose(da, a)
        assert_allclose(db, b)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError):
            reshape(ReshapingSpec(STACKED, 4, 4), np.ones(6), np.ones(6))


class TestPermutations:
    def test_first_is_identity(self):
        s, r = permutations(1, seed=4, d=9)
        assert_allclose(s[0], np.arange(9))
        assert_allclose(r[0], np.arange(9))

    def test_deterministic(self):
        s1, r1 = permutations(4, seed=5, d=16)
        s2, r2 = permutations(4, seed=5, d=16)
        assert_allclose(s1, s2)
        assert_allclose(r1, r2)

    def test_every_row_is_bijection(self):
        s, r = permutations(5, seed=6, d=12)
        for perm in np.vstack([s, r]):
            assert sorted(perm) == list(range(12))

    def test_zero_count_rejected(self):
        with pytest.raises(ValueError):
            permutations(0, seed=0, d=4)
