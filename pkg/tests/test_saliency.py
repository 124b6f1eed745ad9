import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evprune.errors import FormatError, ValidationError
from evprune.events import EventFrame
from evprune.saliency import (
    PatchMask,
    SaliencyMap,
    apply_mask_to_image,
    mask_from_text,
    mask_to_text,
    patch_scores,
    quantile_mask,
    retained_count,
)


@st.composite
def score_grids(draw):
    rows = draw(st.integers(1, 10))
    cols = draw(st.integers(1, 10))
    scores = draw(
        st.lists(
            st.floats(0, 100, allow_nan=False, width=32),
            min_size=rows * cols,
            max_size=rows * cols,
        )
    )
    return SaliencyMap(np.array(scores).reshape(rows, cols), patch_size=4)


class TestRetainedCount:
    def test_exact_ceil(self):
        assert retained_count(0.3, 64) == 20  # ceil(19.2)
        assert retained_count(0.5, 3) == 2
        assert retained_count(0.0, 10) == 0
        assert retained_count(1.0, 10) == 10

    def test_float_noise_does_not_overcount(self):
        # 0.07 * 100 evaluates to 7.000000000000001; the guard keeps k at 7
        assert retained_count(0.07, 100) == 7
        assert retained_count(0.1, 30) == 3

    def test_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            retained_count(-0.1, 4)
        with pytest.raises(ValidationError):
            retained_count(1.1, 4)

    @settings(deadline=None, max_examples=200)
    @given(st.floats(0, 1, allow_nan=False), st.integers(0, 4096))
    def test_bounds_and_extremes(self, tau, n):
        k = retained_count(tau, n)
        assert 0 <= k <= n
        if tau == 1.0:
            assert k == n
        if tau == 0.0:
            assert k == 0


class TestPatchScores:
    def test_all_zero_frame(self):
        smap = patch_scores(EventFrame(np.zeros((4, 4))), 2)
        assert np.array_equal(smap.scores, np.zeros((2, 2)))

    def test_single_count_lands_in_its_patch(self):
        counts = np.zeros((4, 4))
        counts[0, 0] = 3
        smap = patch_scores(EventFrame(counts), 2)
        assert np.array_equal(smap.scores, np.array([[3.0, 0.0], [0.0, 0.0]]))

    def test_matches_double_loop_on_non_divisible_frame(self):
        rng = np.random.Generator(np.random.PCG64(17))
        counts = rng.integers(0, 7, size=(9, 7)).astype(np.float64)
        smap = patch_scores(EventFrame(counts), 2)
        assert smap.scores.shape == (4, 3)
        for u in range(4):
            for v in range(3):
                want = sum(
                    abs(counts[y, x])
                    for y in range(2 * u, 2 * u + 2)
                    for x in range(2 * v, 2 * v + 2)
                )
                assert smap.scores[u, v] == want

    def test_score_total_bounded_by_frame_total(self):
        rng = np.random.Generator(np.random.PCG64(23))
        counts = rng.integers(0, 5, size=(10, 11)).astype(np.float64)
        smap = patch_scores(EventFrame(counts), 3)
        assert smap.scores.sum() <= counts.sum()
        divisible = patch_scores(EventFrame(counts[:9, :9]), 3)
        assert divisible.scores.sum() == counts[:9, :9].sum()

    def test_rejects_patch_larger_than_frame(self):
        with pytest.raises(ValidationError):
            patch_scores(EventFrame(np.zeros((3, 8))), 4)


class TestQuantileMask:
    def test_top_two_of_four(self):
        smap = SaliencyMap(np.array([[3.0, 1.0, 4.0, 1.0]]), 4)
        mask = quantile_mask(smap, 0.5)
        assert mask.bits.tolist() == [[1, 0, 1, 0]]

    def test_raster_tie_break_on_equal_scores(self):
        smap = SaliencyMap(np.full((1, 4), 2.0), 4)
        mask = quantile_mask(smap, 0.5)
        assert mask.bits.tolist() == [[1, 1, 0, 0]]

    def test_matches_full_sort_oracle(self):
        rng = np.random.Generator(np.random.PCG64(29))
        scores = rng.random((8, 8))
        mask = quantile_mask(SaliencyMap(scores, 4), 0.3)
        k = math.ceil(0.3 * 64)
        assert k == 20 and mask.k == 20
        order = sorted(range(64), key=lambda i: (-scores.ravel()[i], i))
        want = set(order[:k])
        got = {i for i in range(64) if mask.bits.ravel()[i]}
        assert got == want

    def test_merge_group_granularity(self):
        rng = np.random.Generator(np.random.PCG64(31))
        scores = rng.random((4, 4))
        mask = quantile_mask(SaliencyMap(scores, 4), 0.5, merge_size=2)
        # 4 groups, ceil(0.5*4)=2 kept, each expanded to a full 2x2 cell
        assert mask.k == 8
        cells = mask.bits.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
        for cell in cells:
            assert cell.sum() in (0, 4)

    def test_merge_group_keeps_highest_group_sums(self):
        scores = np.array([
            [9.0, 0.0, 1.0, 1.0],
            [0.0, 0.0, 1.0, 1.0],
            [2.0, 2.0, 0.0, 0.0],
            [2.0, 2.0, 0.0, 0.0],
        ])
        mask = quantile_mask(SaliencyMap(scores, 4), 0.25, merge_size=2)
        # group sums: 9, 4, 8, 0 -> the top-left group wins
        assert mask.bits[:2, :2].sum() == 4
        assert mask.k == 4

    def test_indivisible_merge_grid_rejected(self):
        smap = SaliencyMap(np.zeros((3, 4)), 4)
        with pytest.raises(ValidationError):
            quantile_mask(smap, 0.5, merge_size=2)

    def test_zero_saliency_gives_raster_prefix(self):
        smap = SaliencyMap(np.zeros((2, 3)), 4)
        mask = quantile_mask(smap, 0.5)
        assert mask.bits.ravel().tolist() == [1, 1, 1, 0, 0, 0]

    @settings(deadline=None, max_examples=120)
    @given(score_grids(), st.floats(0, 1, allow_nan=False))
    def test_cardinality_exact(self, smap, tau):
        mask = quantile_mask(smap, tau)
        assert mask.k == retained_count(tau, smap.rows * smap.cols)
        assert mask.k == int(mask.bits.sum())

    @settings(deadline=None, max_examples=80)
    @given(score_grids(), st.floats(0, 1, allow_nan=False),
           st.floats(0, 1, allow_nan=False))
    def test_nesting_in_tau(self, smap, t1, t2):
        t1, t2 = min(t1, t2), max(t1, t2)
        m1 = quantile_mask(smap, t1)
        m2 = quantile_mask(smap, t2)
        assert np.all(m1.bits <= m2.bits)

    @settings(deadline=None, max_examples=80)
    @given(score_grids(), st.floats(0, 1, allow_nan=False))
    def test_threshold_consistency(self, smap, tau):
        mask = quantile_mask(smap, tau)
        kept = mask.bits.astype(bool)
        if 0 < mask.k < kept.size:
            assert smap.scores[kept].min() >= smap.scores[~kept].max()

    @settings(deadline=None, max_examples=80)
    @given(score_grids(), st.floats(0, 1, allow_nan=False),
           st.floats(0.001, 1000, allow_nan=False))
    def test_positive_scale_invariance(self, smap, tau, c):
        scaled = SaliencyMap(smap.scores * c, smap.patch_size)
        assert np.array_equal(
            quantile_mask(smap, tau).bits, quantile_mask(scaled, tau).bits
        )


class TestApplyMask:
    def test_all_ones_is_identity(self):
        rng = np.random.Generator(np.random.PCG64(37))
        img = rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
        mask = PatchMask(np.ones((2, 2), dtype=np.uint8), 1.0)
        out = apply_mask_to_image(img, mask, 4, (0, 0, 0))
        assert np.array_equal(out, img)

    def test_all_zeros_fills_grid(self):
        img = np.full((8, 8, 3), 200, dtype=np.uint8)
        mask = PatchMask(np.zeros((2, 2), dtype=np.uint8), 0.0)
        out = apply_mask_to_image(img, mask, 4, (1, 2, 3))
        assert np.array_equal(out, np.tile(np.array([1, 2, 3], np.uint8), (8, 8, 1)))

    def test_anti_diagonal_placement(self):
        img = np.full((4, 4, 3), 9, dtype=np.uint8)
        mask = PatchMask(np.array([[1, 0], [0, 1]], dtype=np.uint8), 0.5)
        out = apply_mask_to_image(img, mask, 2, (0, 0, 0))
        assert np.array_equal(out[:2, :2], img[:2, :2])
        assert np.array_equal(out[2:, 2:], img[2:, 2:])
        assert np.all(out[:2, 2:] == 0) and np.all(out[2:, :2] == 0)

    def test_trailing_pixels_untouched(self):
        img = np.full((5, 5, 3), 7, dtype=np.uint8)
        mask = PatchMask(np.zeros((2, 2), dtype=np.uint8), 0.0)
        out = apply_mask_to_image(img, mask, 2, (0, 0, 0))
        assert np.all(out[4, :] == 7) and np.all(out[:, 4] == 7)


class TestMaskText:
    def test_roundtrip(self):
        bits = np.array([[1, 0, 1], [0, 1, 0]], dtype=np.uint8)
        mask = PatchMask(bits, 0.5)
        back = mask_from_text(mask_to_text(mask))
        assert np.array_equal(back.bits, bits)
        assert back.tau == 0.5

    def test_rejects_wrong_row_count(self):
        with pytest.raises(FormatError):
            mask_from_text("2 2 0.5\n1 0\n")

    def test_rejects_non_binary_digit(self):
        with pytest.raises(FormatError):
            mask_from_text("1 2 0.5\n1 2\n")
