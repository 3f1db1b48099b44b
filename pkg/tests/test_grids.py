import numpy as np
import pytest

from labelprop.grids import (
    FeatureGrid,
    FeatureMatrix,
    Keypoint,
    KeypointSet,
    LabelGrid,
    argmax_labels,
    flatten,
    flatten_labels,
    keypoints_to_labelgrid,
    l2_normalize,
    labelgrid_to_keypoints,
    onehot_downsample,
    resize_scores,
    unflatten,
    unflatten_labels,
)

from _oracles import nearest_downsample_oracle


class TestFlatten:
    def test_singleton_grid(self):
        mat = flatten(FeatureGrid(np.array([[[0.5]]])))
        assert mat.values.shape == (1, 1)
        assert mat.values[0, 0] == np.float32(0.5)

    def test_raster_column_order(self):
        grid = FeatureGrid(np.array([[[1.0, 2.0]], [[3.0, 4.0]]]))  # C=2, H=1, W=2
        mat = flatten(grid)
        assert mat.values[:, 0].tolist() == [1.0, 3.0]
        assert mat.values[:, 1].tolist() == [2.0, 4.0]

    def test_round_trip_bitwise(self):
        rng = np.random.default_rng(7)
        grid = FeatureGrid(rng.normal(size=(3, 4, 5)))
        back = unflatten(flatten(grid))
        assert np.array_equal(back.values, grid.values)

    def test_column_raster_mapping(self):
        rng = np.random.default_rng(1)
        grid = FeatureGrid(rng.normal(size=(2, 3, 4)))
        mat = flatten(grid)
        for j in range(12):
            h, w = divmod(j, 4)
            assert np.array_equal(mat.values[:, j], grid.values[:, h, w])

    def test_label_round_trip(self):
        rng = np.random.default_rng(3)
        grid = LabelGrid(rng.uniform(size=(3, 4, 5)))
        back = unflatten_labels(flatten_labels(grid))
        assert np.array_equal(back.scores, grid.scores)


class TestL2Normalize:
    def test_analytic_column(self):
        mat = FeatureMatrix(np.array([[3.0], [4.0]]), height=1, width=1)
        out = l2_normalize(mat)
        assert np.allclose(out.values[:, 0], [0.6, 0.8])
        assert out.normalized

    def test_zero_column_passthrough(self):
        mat = FeatureMatrix(np.array([[0.0, 1.0], [0.0, 0.0]]), height=1, width=2)
        out = l2_normalize(mat)
        assert np.array_equal(out.values[:, 0], [0.0, 0.0])
        assert np.allclose(out.values[:, 1], [1.0, 0.0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            vals = rng.normal(size=(5, 8))
            scale = float(rng.uniform(0.1, 50.0))
            a = l2_normalize(FeatureMatrix(vals, height=2, width=4))
            b = l2_normalize(FeatureMatrix(scale * vals, height=2, width=4))
            assert np.allclose(a.values, b.values, atol=1e-6)

    def test_idempotent(self):
        rng = np.random.default_rng(13)
        mat = FeatureMatrix(rng.normal(size=(6, 10)), height=2, width=5)
        once = l2_normalize(mat)
        twice = l2_normalize(once)
        assert np.allclose(once.values, twice.values, atol=1e-7)


class TestResizeScores:
    def test_identity(self):
        rng = np.random.default_rng(5)
        grid = LabelGrid(rng.uniform(size=(2, 3, 4)))
        out = resize_scores(grid, 3, 4)
        assert np.array_equal(out.scores, grid.scores)

    def test_constant_plane(self):
        grid = LabelGrid(np.full((1, 2, 2), 0.7))
        out = resize_scores(grid, 5, 9)
        assert np.allclose(out.scores, 0.7, atol=1e-6)

    def test_align_corners_upsample(self):
        # 2x2 plane [[0,1],[0,1]] -> 2x4: columns at thirds
        grid = LabelGrid(np.array([[[0.0, 1.0], [0.0, 1.0]]]))
        out = resize_scores(grid, 2, 4)
        expected = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]
        assert np.allclose(out.scores[0, 0], expected, atol=1e-6)
        assert np.allclose(out.scores[0, 1], expected, atol=1e-6)

    def test_bounds_preserved(self):
        rng = np.random.default_rng(17)
        grid = LabelGrid(rng.uniform(0.2, 0.9, size=(3, 5, 7)))
        out = resize_scores(grid, 11, 4)
        assert out.scores.min() >= grid.scores.min() - 1e-6
        assert out.scores.max() <= grid.scores.max() + 1e-6


class TestArgmaxLabels:
    def test_onehot_inverse(self):
        m = np.array([[0, 1], [2, 1]])
        grid = LabelGrid.from_class_map(m)
        assert np.array_equal(argmax_labels(grid), m)

    def test_tie_goes_to_lowest_class(self):
        grid = LabelGrid(np.full((3, 1, 1), 0.5))
        assert argmax_labels(grid)[0, 0] == 0

    def test_analytic(self):
        grid = LabelGrid(np.array([0.2, 0.5, 0.3]).reshape(3, 1, 1))
        assert argmax_labels(grid)[0, 0] == 1


class TestOnehotDownsample:
    def test_same_size_is_exact(self):
        m = np.array([[0, 1], [2, 3]])
        grid = onehot_downsample(m, 2, 2)
        assert np.array_equal(argmax_labels(grid), m)
        assert grid.classes == 4

    def test_uniform_map(self):
        m = np.full((6, 6), 3)
        grid = onehot_downsample(m, 2, 3)
        assert np.array_equal(argmax_labels(grid), np.full((2, 3), 3))
        assert np.array_equal(grid.scores[3], np.ones((2, 3), dtype=np.float32))

    def test_checkerboard_matches_oracle(self):
        m = (np.indices((4, 4)).sum(axis=0)) % 2
        grid = onehot_downsample(m, 2, 2)
        assert np.array_equal(argmax_labels(grid), nearest_downsample_oracle(m, 2, 2))

    def test_random_maps_match_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            src = rng.integers(0, 5, size=(rng.integers(2, 12), rng.integers(2, 12)))
            h, w = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            grid = onehot_downsample(src, h, w)
            assert np.array_equal(
                argmax_labels(grid), nearest_downsample_oracle(src, h, w)
            )


class TestKeypoints:
    def test_single_keypoint(self):
        kp = KeypointSet((Keypoint(0, x=3.0, y=2.0),))
        grid = keypoints_to_labelgrid(kp, 5, 5)
        assert grid.scores[0, 2, 3] == 1.0
        assert grid.scores.sum() == 1.0

    def test_empty_set(self):
        grid = keypoints_to_labelgrid(KeypointSet(), 4, 4)
        assert grid.scores.sum() == 0.0

    def test_collision_sets_both_planes(self):
        kp = KeypointSet((Keypoint(0, 2.2, 1.1), Keypoint(1, 1.8, 0.9)))
        grid = keypoints_to_labelgrid(kp, 4, 4)
        assert grid.scores[0, 1, 2] == 1.0
        assert grid.scores[1, 1, 2] == 1.0

    def test_out_of_grid_clamps_with_warning(self):
        kp = KeypointSet((Keypoint(0, x=9.0, y=-2.0),))
        with pytest.warns(UserWarning, match="clamped"):
            grid = keypoints_to_labelgrid(kp, 4, 4)
        assert grid.scores[0, 0, 3] == 1.0

    def test_round_trip(self):
        kp = KeypointSet((Keypoint(0, 3.0, 2.0), Keypoint(1, 0.0, 4.0)))
        grid = keypoints_to_labelgrid(kp, 5, 5)
        back = labelgrid_to_keypoints(grid)
        for orig in kp.points:
            got = back.get(orig.class_id)
            assert got.visible
            assert (got.x, got.y) == (orig.x, orig.y)

    def test_invisible_when_plane_all_zero(self):
        grid = keypoints_to_labelgrid(
            KeypointSet((Keypoint(1, 1.0, 1.0),)), 3, 3
        )
        back = labelgrid_to_keypoints(grid)
        assert not back.get(0).visible
        assert back.get(1).visible

    def test_tie_resolves_to_lowest_raster_index(self):
        scores = np.zeros((1, 3, 3), dtype=np.float32)
        scores[0, 1, 1] = 0.4
        scores[0, 0, 0] = 0.4
        back = labelgrid_to_keypoints(LabelGrid(scores))
        assert (back.get(0).x, back.get(0).y) == (0.0, 0.0)

    def test_cells_recovered_via_argmax(self):
        kp = KeypointSet(
            (Keypoint(0, 1.0, 2.0), Keypoint(1, 3.0, 0.0), Keypoint(2, 4.0, 4.0))
        )
        grid = keypoints_to_labelgrid(kp, 5, 5)
        for p in kp.points:
            plane = grid.scores[p.class_id]
            idx = int(np.argmax(plane))
            assert divmod(idx, 5) == (int(p.y), int(p.x))


class TestTypeInvariants:
    def test_feature_grid_rejects_nan(self):
        with pytest.raises(ValueError, match="finite"):
            FeatureGrid(np.array([[[np.nan]]]))

    def test_label_grid_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="0, 1"):
            LabelGrid(np.array([[[1.5]]]))

    def test_feature_matrix_shape_consistency(self):
        with pytest.raises(ValueError, match="H\\*W"):
            FeatureMatrix(np.zeros((2, 5)), height=2, width=2)

    def test_normalized_flag_checked(self):
        with pytest.raises(ValueError, match="unit"):
            FeatureMatrix(np.array([[2.0]]), height=1, width=1, normalized=True)

    def test_keypoint_ids_distinct(self):
        with pytest.raises(ValueError, match="distinct"):
            KeypointSet((Keypoint(0, 1, 1), Keypoint(0, 2, 2)))

    def test_values_read_only(self):
        grid = FeatureGrid(np.ones((1, 2, 2)))
        with pytest.raises(ValueError):
            grid.values[0, 0, 0] = 5.0
