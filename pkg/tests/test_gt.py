import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdpgaze.gt import (ConfigError, GazeAnnotation, PatchDistribution, default_sigma, nearest_cell,
                        patch_distribution_from_heatmap, pool_patches, render_gaussian_heatmap, variance_score)

unit = st.floats(0.0, 1.0, allow_nan=False)


def brute_pool(hm, ph, pw, reducer):
    bh, bw = hm.shape[0] // ph, hm.shape[1] // pw
    out = []
    for i in range(ph):
        for j in range(pw):
            out.append(reducer([hm[r, c] for r in range(i * bh, (i + 1) * bh) for c in range(j * bw, (j + 1) * bw)]))
    return np.array(out)


class TestHeatmap:
    def test_peak_value_at_center(self):
        hm = render_gaussian_heatmap(GazeAnnotation((0.5, 0.5)), (9, 9), 3.0)
        assert np.unravel_index(hm.argmax(), hm.shape) == (4, 4)
        assert hm[4, 4] == pytest.approx(1 / (np.sqrt(2 * np.pi) * 3), abs=1e-12)
        assert round(hm[4, 4], 5) == 0.13298

    def test_radial_symmetry_about_center(self):
        hm = render_gaussian_heatmap(GazeAnnotation((0.5, 0.5)), (9, 9), 3.0)
        for r, c in itertools.product(range(9), range(9)):
            for rr, cc in [(8 - r, c), (r, 8 - c), (c, r)]:
                assert abs(hm[r, c] - hm[rr, cc]) <= 1e-12

    def test_corner_symmetry(self):
        hm = render_gaussian_heatmap(GazeAnnotation((0.0, 0.0)), (16, 16), 2.0)
        assert hm[3, 0] == hm[0, 3]

    def test_matches_formula_oracle(self):
        g = (0.3, 0.8)
        hm = render_gaussian_heatmap(GazeAnnotation(g), (12, 10), 1.5)
        for j, k in itertools.product(range(10), range(12)):
            gx, gy = g[0] * 9, g[1] * 11
            want = np.exp(-((j - gx) ** 2 + (k - gy) ** 2) / (2 * 1.5**2)) / (np.sqrt(2 * np.pi) * 1.5)
            assert abs(hm[k, j] - want) <= 1e-15

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 15), st.integers(0, 15), st.floats(0.3, 5.0))
    def test_on_grid_peak_is_max(self, r, c, sigma):
        hm = render_gaussian_heatmap(GazeAnnotation((c / 15, r / 15)), (16, 16), sigma)
        assert np.all(hm >= 0)
        assert abs(hm.max() - 1 / (np.sqrt(2 * np.pi) * sigma)) <= 1e-9

    def test_out_of_frame_rejected(self):
        with pytest.raises(ValueError):
            render_gaussian_heatmap(GazeAnnotation(None, False), (8, 8), 1.0)

    def test_non_positive_sigma_rejected(self):
        with pytest.raises(ValueError):
            render_gaussian_heatmap(GazeAnnotation((0.5, 0.5)), (8, 8), 0.0)

    def test_default_sigma_scales(self):
        assert default_sigma(56) == 3.0
        assert default_sigma(32) == pytest.approx(3 * 32 / 56)


class TestAnnotation:
    def test_in_frame_needs_point(self):
        with pytest.raises(ValueError):
            GazeAnnotation(None, True)

    def test_point_must_be_in_unit_square(self):
        with pytest.raises(ValueError):
            GazeAnnotation((1.2, 0.5))

    def test_out_of_frame_ignores_point(self):
        assert not GazeAnnotation((5.0, 5.0), False).in_frame


class TestPatchDistribution:
    def test_out_of_frame(self):
        pd = patch_distribution_from_heatmap(None, False, (4, 4))
        assert pd.outside == 1.0
        assert np.all(pd.inside == 0.0)

    def test_maxpool_hand_example(self):
        hm = np.arange(1.0, 17.0).reshape(4, 4)
        pd = patch_distribution_from_heatmap(hm, True, (2, 2), "maxpool")
        np.testing.assert_allclose(pd.inside, np.array([6, 8, 14, 16]) / 44, atol=1e-15)
        assert pd.outside == 0.0

    @pytest.mark.parametrize("how,reducer", [("max", max), ("mean", lambda v: sum(v) / len(v))])
    def test_pooling_vs_brute_force(self, how, reducer):
        rng = np.random.default_rng(0)
        for ph, pw in [(2, 2), (4, 4), (2, 4), (8, 8), (1, 1)]:
            hm = rng.random((16, 16))
            np.testing.assert_allclose(pool_patches(hm, (ph, pw), how), brute_pool(hm, ph, pw, reducer), atol=1e-14)

    def test_tiny_sigma_concentrates_in_one_patch(self):
        # patch (1,2) of a 4x4 grid over 32x32: rows 8..15, cols 16..23
        center = (19.5 / 31, 11.5 / 31)
        hm = render_gaussian_heatmap(GazeAnnotation(center), (32, 32), 0.3)
        pd = patch_distribution_from_heatmap(hm, True, (4, 4), "avgpool")
        assert pd.inside.argmax() == 1 * 4 + 2
        assert pd.inside[6] > 0.99
        assert abs(pd.inside.sum() - 1) <= 1e-9

    def test_onehot_uses_annotated_point(self):
        hm = render_gaussian_heatmap(GazeAnnotation((0.9, 0.1)), (32, 32), 1.7)
        pd = patch_distribution_from_heatmap(hm, True, (4, 4), "onehot", point=(0.9, 0.1))
        r, c = nearest_cell((0.9, 0.1), (32, 32))
        assert pd.inside[(r // 8) * 4 + c // 8] == 1.0
        assert np.count_nonzero(pd.as_vector()) == 1

    def test_onehot_boundary_goes_to_lower_patch(self):
        # row/col 7 is the last pixel of patch 0 on a 16->2 split
        pd = patch_distribution_from_heatmap(np.ones((16, 16)), True, (2, 2), "onehot", point=(7 / 15, 7 / 15))
        assert pd.inside[0] == 1.0

    def test_non_divisible_geometry(self):
        with pytest.raises(ConfigError):
            patch_distribution_from_heatmap(np.ones((10, 10)), True, (4, 4))

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            patch_distribution_from_heatmap(np.ones((8, 8)), True, (4, 4), "median")

    def test_vector_round_trip(self):
        pd = patch_distribution_from_heatmap(np.arange(16.0).reshape(4, 4) + 1, True, (2, 2))
        back = PatchDistribution.from_vector(pd.as_vector(), (2, 2))
        np.testing.assert_array_equal(back.inside, pd.inside)
        assert back.outside == pd.outside
        with pytest.raises(ValueError):
            PatchDistribution.from_vector(np.ones(4), (2, 2))

    @settings(max_examples=150, deadline=None)
    @given(unit, unit, st.sampled_from(["maxpool", "avgpool", "onehot"]), st.sampled_from([(2, 2), (4, 4), (8, 8), (2, 8)]),
           st.floats(0.5, 4.0))
    def test_in_frame_sums_to_one(self, x, y, mode, grid, sigma):
        hm = render_gaussian_heatmap(GazeAnnotation((x, y)), (32, 32), sigma)
        v = patch_distribution_from_heatmap(hm, True, grid, mode, point=(x, y)).as_vector()
        assert np.all(v >= 0)
        assert abs(v.sum() - 1) <= 1e-9
        if mode == "onehot":
            assert np.count_nonzero(v) == 1 and v.max() == 1.0

    @settings(max_examples=150, deadline=None)
    @given(unit, unit, st.floats(0.5, 4.0))
    def test_maxpool_argmax_is_annotated_patch(self, x, y, sigma):
        hm = render_gaussian_heatmap(GazeAnnotation((x, y)), (32, 32), sigma)
        pd = patch_distribution_from_heatmap(hm, True, (4, 4), "maxpool")
        r, c = np.unravel_index(hm.argmax(), hm.shape)
        assert pd.inside.argmax() == (r // 8) * 4 + c // 8
        rr, cc = nearest_cell((x, y), (32, 32))
        assert hm[rr, cc] == hm.max()

    @pytest.mark.parametrize("grid", [(1, 1), (2, 2), (4, 4), (7, 7), (14, 14)])
    def test_out_of_frame_independent_of_geometry(self, grid):
        pd = patch_distribution_from_heatmap(None, False, grid)
        assert pd.outside == 1.0 and pd.inside.shape == (grid[0] * grid[1],) and not pd.inside.any()


class TestVarianceScore:
    def test_identical_points(self):
        assert variance_score([(0.3, 0.4)] * 5) == 0.0

    def test_two_points(self):
        assert variance_score([(0.1, 0.2), (0.4, 0.6)]) == pytest.approx(0.25, abs=1e-15)

    def test_two_pass_oracle(self):
        pts = np.random.default_rng(0).random((10, 2))
        cx = sum(p[0] for p in pts) / 10
        cy = sum(p[1] for p in pts) / 10
        want = sum(((p[0] - cx) ** 2 + (p[1] - cy) ** 2) ** 0.5 for p in pts) / 10
        assert abs(variance_score(pts) - want) <= 1e-12

    def test_empty(self):
        with pytest.raises(ValueError):
            variance_score([])
