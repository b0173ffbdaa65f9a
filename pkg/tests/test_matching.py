import inspect

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_map
from oracles import dot_matrix_loop, patch_corr_padded, patch_corr_scalar, row_max_scan
from priormask.errors import DimensionError, ParameterError
from priormask.matching import (
    CorrVolume,
    PatchSet,
    PriorChannel,
    elementwise_corr,
    max_reduce,
    normalize_minmax,
    patch_corr,
    stack_patches,
)
from priormask.tensor import FeatureMap, l2_normalize_channels


def unit(vec):
    v = np.asarray(vec, np.float32)
    return v / np.linalg.norm(v)


class TestPatchSet:
    def test_valid(self):
        assert PatchSet((1, 3, 5)).sizes == (1, 3, 5)
        assert PatchSet.parse("1, 3,5").sizes == (1, 3, 5)

    @pytest.mark.parametrize("sizes", [(), (2,), (0,), (3, 1), (1, 1), (-1,)])
    def test_invalid(self, sizes):
        with pytest.raises(ParameterError):
            PatchSet(sizes)


class TestElementwiseCorr:
    def test_self_similarity(self):
        v = unit([1, 2, 3])
        fm = FeatureMap(np.tile(v, (2, 2, 1)))
        vol = elementwise_corr(fm, fm)
        np.testing.assert_allclose(vol.data, 1.0, atol=1e-6)

    def test_orthogonal(self):
        q = FeatureMap(np.array([[[1.0, 0.0]]]))
        s = FeatureMap(np.array([[[0.0, 1.0]]]))
        assert elementwise_corr(q, s).data[0, 0, 0] == 0.0

    def test_matches_double_loop(self, rng):
        q, s = random_map(rng, 4, 4, 8), random_map(rng, 3, 3, 8)
        vol = elementwise_corr(q, s)
        assert vol.data.shape == (16, 9, 1)
        np.testing.assert_allclose(vol.data[:, :, 0], dot_matrix_loop(q.data, s.data), atol=1e-5)

    def test_channel_mismatch(self, rng):
        with pytest.raises(DimensionError):
            elementwise_corr(random_map(rng, 2, 2, 3), random_map(rng, 2, 2, 4))


class TestPatchCorr:
    def test_oracles_agree(self, rng):
        # cross-check the two oracles against each other before trusting either
        q, s = random_map(rng, 4, 3, 3), random_map(rng, 3, 4, 3)
        for m in (1, 3, 5):
            np.testing.assert_allclose(
                patch_corr_padded(q.data, s.data, m), patch_corr_scalar(q.data, s.data, m), atol=1e-12
            )

    @pytest.mark.parametrize("impl", ["optimized", "naive"])
    def test_m1_equals_elementwise_bitwise(self, rng, impl):
        q, s = random_map(rng, 5, 4, 6), random_map(rng, 3, 5, 6)
        np.testing.assert_array_equal(patch_corr(q, s, 1, impl).data, elementwise_corr(q, s).data)

    def test_constant_interior_is_one(self):
        v = unit([0.2, -0.5, 0.7, 0.1])
        q = FeatureMap(np.tile(v, (5, 5, 1)))
        s = FeatureMap(np.tile(v, (4, 4, 1)))
        vol = patch_corr(q, s, 3).data[:, :, 0].reshape(5, 5, 4, 4)
        np.testing.assert_allclose(vol[1:4, 1:4, 1:3, 1:3], 1.0, atol=1e-6)
        # at corners only four of the nine offsets are in bounds
        np.testing.assert_allclose(vol[0, 0, 0, 0], 4 / 9, atol=1e-6)

    @pytest.mark.parametrize("impl", ["optimized", "naive"])
    @pytest.mark.parametrize("m", [1, 3, 5])
    def test_matches_padded_oracle(self, rng, impl, m):
        q, s = random_map(rng, 6, 6, 4), random_map(rng, 5, 5, 4)
        got = patch_corr(q, s, m, impl).data[:, :, 0]
        np.testing.assert_allclose(got, patch_corr_padded(q.data, s.data, m), atol=1e-5)

    def test_naive_and_optimized_bitwise(self, rng):
        q, s = random_map(rng, 7, 5, 9), random_map(rng, 4, 6, 9)
        for m in (1, 3, 5, 7):
            a = patch_corr(q, s, m, "optimized").data
            b = patch_corr(q, s, m, "naive").data
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("m", [0, 2, -3])
    def test_bad_patch_size(self, rng, m):
        q = random_map(rng, 3, 3, 2)
        with pytest.raises(ParameterError):
            patch_corr(q, q, m)

    def test_patch_too_large(self, rng):
        q = random_map(rng, 3, 3, 2)
        with pytest.raises(ParameterError):
            patch_corr(q, q, 7)

    def test_unknown_impl(self, rng):
        q = random_map(rng, 3, 3, 2)
        with pytest.raises(ParameterError):
            patch_corr(q, q, 1, "fast")

    @settings(max_examples=30, deadline=None)
    @given(
        st.integers(3, 7), st.integers(3, 7), st.integers(3, 6), st.integers(3, 6),
        st.integers(1, 8), st.sampled_from([1, 3, 5]), st.integers(0, 2**32 - 1),
    )
    def test_range_law(self, hq, wq, hs, ws, d, m, seed):
        rng = np.random.default_rng(seed)
        q = random_map(rng, hq, wq, d)
        x = rng.standard_normal((hs, ws, d)).astype(np.float32)
        x[rng.random((hs, ws)) < 0.3] = 0.0
        s = l2_normalize_channels(FeatureMap(x))
        vol = patch_corr(q, s, m).data
        assert vol.min() >= -1 - 1e-5 and vol.max() <= 1 + 1e-5


class TestStackPatches:
    def test_singleton(self, rng):
        q, s = random_map(rng, 4, 4, 3), random_map(rng, 3, 3, 3)
        vol = stack_patches(q, s, PatchSet((1,)))
        np.testing.assert_array_equal(vol.data, elementwise_corr(q, s).data)

    def test_shape(self, rng):
        q, s = random_map(rng, 8, 8, 4), random_map(rng, 6, 6, 4)
        vol = stack_patches(q, s, PatchSet((1, 3, 5)))
        assert vol.data.shape == (64, 36, 3)
        assert (vol.q_positions, vol.s_positions, vol.n_patches) == (64, 36, 3)

    @pytest.mark.parametrize("impl", ["optimized", "naive"])
    def test_slices_match_independent_calls(self, rng, impl):
        q, s = random_map(rng, 6, 5, 4), random_map(rng, 4, 4, 4)
        patches = PatchSet((1, 3, 5))
        vol = stack_patches(q, s, patches, impl)
        for k, m in enumerate(patches):
            np.testing.assert_array_equal(vol.slice(k), patch_corr(q, s, m, impl).data[:, :, 0])

    def test_volume_is_read_only(self, rng):
        q = random_map(rng, 3, 3, 2)
        vol = stack_patches(q, q, PatchSet((1, 3)))
        with pytest.raises(ValueError):
            vol.data[0, 0, 0] = 2.0

    def test_geometry_checked(self):
        with pytest.raises(DimensionError):
            CorrVolume(np.zeros((4, 3, 1), np.float32), (2, 2, 2, 2))


class TestMaxReduce:
    def test_known_row(self):
        data = np.full((2, 5, 1), -0.5, np.float32)
        data[1, 3, 0] = 0.9
        (ch,) = max_reduce(CorrVolume(data, (1, 2, 1, 5)))
        np.testing.assert_array_equal(ch.data, np.array([[-0.5, 0.9]], np.float32))

    def test_all_zero(self):
        chans = max_reduce(CorrVolume(np.zeros((6, 4, 2), np.float32), (2, 3, 2, 2)))
        assert len(chans) == 2
        for ch in chans:
            assert ch.data.shape == (2, 3)
            np.testing.assert_array_equal(ch.data, 0.0)

    def test_scan_oracle(self, rng):
        data = rng.uniform(-1, 1, (12, 7, 3)).astype(np.float32)
        chans = max_reduce(CorrVolume(data, (3, 4, 7, 1)))
        for k, ch in enumerate(chans):
            np.testing.assert_array_equal(ch.data.ravel(), row_max_scan(data[:, :, k]))

    def test_permutation_invariant(self, rng):
        data = rng.uniform(-1, 1, (6, 9, 2)).astype(np.float32)
        perm = rng.permutation(9)
        a = max_reduce(CorrVolume(data, (2, 3, 3, 3)))
        b = max_reduce(CorrVolume(np.ascontiguousarray(data[:, perm]), (2, 3, 3, 3)))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.data, y.data)


channels = st.lists(st.floats(-10, 10, width=32), min_size=2, max_size=30).map(
    lambda v: np.array(v, np.float32).reshape(1, -1)
)


class TestNormalizeMinmax:
    def test_default_epsilon(self):
        assert inspect.signature(normalize_minmax).parameters["epsilon"].default == 1e-7

    def test_constant(self):
        out = normalize_minmax(PriorChannel(np.full((3, 3), 0.7)))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_direct_formula(self):
        out = normalize_minmax(PriorChannel(np.array([[0.0, 0.5, 1.0]])))
        np.testing.assert_allclose(out.data, [[0.0, 0.5, 1.0]], atol=1e-6)
        expected = np.array([0.0, 0.5, 1.0]) / (1.0 + 1e-7)
        np.testing.assert_allclose(out.data[0], expected, rtol=1e-7)

    @given(channels)
    def test_range(self, x):
        out = normalize_minmax(PriorChannel(x)).data
        assert out.min() >= 0.0 and out.max() <= 1.0
        if x.max() > x.min():
            assert out.min() == 0.0

    @given(channels, st.floats(0.1, 10), st.floats(-5, 5))
    def test_affine_invariance(self, x, a, b):
        if x.max() - x.min() < 0.1:
            return
        y = (a * x.astype(np.float64) + b).astype(np.float32)
        if y.max() - y.min() < 0.1:
            return
        np.testing.assert_allclose(
            normalize_minmax(PriorChannel(y)).data, normalize_minmax(PriorChannel(x)).data, atol=2e-6
        )

    @given(channels)
    def test_order_preserved(self, x):
        out = normalize_minmax(PriorChannel(x)).data.ravel()
        flat = x.ravel()
        # float32 rounding may tie near-equal inputs, so check the input's
        # argmax position attains the output maximum
        assert out[np.argmax(flat)] == out.max()
        i, j = np.nonzero(flat[:, None] < flat[None, :])
        assert (out[i] <= out[j]).all()
