import numpy as np
import pytest

from labelprop.affinity import (
    AffinityBlock,
    column_softmax,
    compute_affinity,
    concat_context,
    soft_copy,
    softmax_over_topk,
    topk_select,
)
from labelprop.errors import ConfigError
from labelprop.grids import FeatureMatrix, LabelMatrix, l2_normalize

# scalar softmax oracle: softmax((2, 0)) = (e^2, 1) / (e^2 + 1)
SOFTMAX_2_0 = (0.8807970779778823, 0.11920292202211757)


def _mat(values, h, w):
    return FeatureMatrix(np.asarray(values, dtype=np.float64), height=h, width=w)


class _AllowedRows:
    """Test exclusion provider: fixed allowed-row list per column."""

    def __init__(self, per_column):
        self.per_column = [np.asarray(rows, dtype=np.int64) for rows in per_column]

    def allowed_rows(self, j):
        return self.per_column[j]


class TestComputeAffinity:
    def test_self_affinity_diagonal_maximal(self):
        rng = np.random.default_rng(2)
        f = l2_normalize(_mat(rng.normal(size=(4, 6)), 2, 3))
        block = compute_affinity(f, f)
        a = block.values
        for j in range(6):
            assert a[j, j] == pytest.approx(1.0, abs=1e-5)
            others = np.delete(a[:, j], j)
            assert (others < a[j, j]).all()

    def test_orthogonal_columns(self):
        f = _mat([[1.0, 0.0], [0.0, 1.0]], 1, 2)
        block = compute_affinity(f, f)
        assert block.values[0, 1] == 0.0
        assert block.values[1, 0] == 0.0

    def test_analytic_dots(self):
        f = _mat([[1.0, 0.0], [0.0, 1.0]], 1, 2)
        g = _mat([[0.6], [0.8]], 1, 1)
        block = compute_affinity(f, g)
        assert np.allclose(block.values[:, 0], [0.6, 0.8])

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ConfigError, match="channel"):
            compute_affinity(_mat(np.zeros((2, 2)), 1, 2), _mat(np.zeros((3, 2)), 1, 2))

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(4)
        f = _mat(rng.normal(size=(5, 4)), 2, 2)
        g = _mat(rng.normal(size=(5, 6)), 2, 3)
        assert np.allclose(
            compute_affinity(f, g).values,
            compute_affinity(g, f).values.T,
            atol=1e-6,
        )


class TestColumnSoftmax:
    def test_uniform(self):
        block = AffinityBlock(np.ones((3, 1)))
        out = column_softmax(block, 1.0)
        assert np.allclose(out.values[:, 0], 1.0 / 3.0)
        assert out.column_normalized

    def test_scalar_oracle(self):
        block = AffinityBlock(np.array([[2.0], [0.0]]))
        out = column_softmax(block, 1.0)
        assert np.allclose(out.values[:, 0], SOFTMAX_2_0, atol=1e-7)

    def test_sharpening_limit(self):
        block = AffinityBlock(np.array([[2.0], [0.0]]))
        out = column_softmax(block, 1e-4)
        assert np.allclose(out.values[:, 0], [1.0, 0.0], atol=1e-6)

    def test_columns_sum_to_one(self):
        rng = np.random.default_rng(8)
        block = AffinityBlock(rng.normal(size=(12, 7)))
        out = column_softmax(block, 0.3)
        sums = out.values.astype(np.float64).sum(axis=0)
        assert np.allclose(sums, 1.0, atol=1e-5)

    def test_exclusions_drop_rows_from_normalization(self):
        block = AffinityBlock(np.array([[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]]))
        excl = _AllowedRows([[0, 1], [0, 1, 2]])
        out = column_softmax(block, 1.0, exclusions=excl)
        assert out.values[2, 0] == 0.0
        assert np.allclose(out.values[:2, 0], SOFTMAX_2_0, atol=1e-7)
        assert np.allclose(out.values.astype(np.float64).sum(axis=0), 1.0, atol=1e-5)

    def test_fully_excluded_column_flagged(self):
        block = AffinityBlock(np.ones((2, 2)))
        out = column_softmax(block, 1.0, exclusions=_AllowedRows([[], [0, 1]]))
        assert out.zero_columns.tolist() == [True, False]
        assert np.array_equal(out.values[:, 0], [0.0, 0.0])

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(ConfigError, match="temperature"):
            column_softmax(AffinityBlock(np.ones((2, 2))), 0.0)


class TestConcatContext:
    def test_single_frame_identity(self):
        f = _mat(np.arange(6).reshape(2, 3), 1, 3)
        y = LabelMatrix(np.zeros((2, 3)), height=1, width=3)
        fc, yc = concat_context([f], [y])
        assert fc is f and yc is y

    def test_two_frames_in_order(self):
        f1 = _mat([[1.0, 2.0]], 1, 2)
        f2 = _mat([[3.0, 4.0]], 1, 2)
        y1 = LabelMatrix(np.array([[1.0, 0.0]]), height=1, width=2)
        y2 = LabelMatrix(np.array([[0.0, 1.0]]), height=1, width=2)
        fc, yc = concat_context([f1, f2], [y1, y2])
        assert fc.values[0].tolist() == [1.0, 2.0, 3.0, 4.0]
        assert yc.scores[0].tolist() == [1.0, 0.0, 0.0, 1.0]

    def test_block_indexing(self):
        rng = np.random.default_rng(10)
        n = 6
        frames = [_mat(rng.normal(size=(3, n)), 2, 3) for _ in range(3)]
        labels = [
            LabelMatrix(rng.uniform(size=(2, n)), height=2, width=3) for _ in range(3)
        ]
        fc, yc = concat_context(frames, labels)
        for i in range(3):
            for j in range(n):
                assert np.array_equal(fc.values[:, i * n + j], frames[i].values[:, j])
                assert np.array_equal(yc.scores[:, i * n + j], labels[i].scores[:, j])

    def test_shape_mismatch_rejected(self):
        f1 = _mat(np.zeros((2, 4)), 2, 2)
        f2 = _mat(np.zeros((2, 6)), 2, 3)
        y = LabelMatrix(np.zeros((1, 4)), height=2, width=2)
        with pytest.raises(ConfigError):
            concat_context([f1, f2], [y, y])


class TestTopKSelect:
    def test_full_selection_sorted(self):
        block = AffinityBlock(np.array([[0.1], [0.9], [0.5]]))
        sel = topk_select(block, 3)
        assert sel.indices[:, 0].tolist() == [1, 2, 0]
        assert np.allclose(sel.weights[:, 0], [0.9, 0.5, 0.1], atol=1e-7)

    def test_analytic_top2(self):
        block = AffinityBlock(np.array([[0.1], [0.9], [0.5]]))
        sel = topk_select(block, 2)
        assert sel.indices[:, 0].tolist() == [1, 2]
        assert sel.effective_k[0] == 2

    def test_tie_goes_to_lower_index(self):
        block = AffinityBlock(np.array([[0.5], [0.5], [0.1]]))
        sel = topk_select(block, 1)
        assert sel.indices[0, 0] == 0

    def test_k_clamped_to_rows(self):
        block = AffinityBlock(np.ones((2, 3)))
        sel = topk_select(block, 5)
        assert (sel.effective_k == 2).all()
        assert (sel.weights[2:] == 0.0).all()

    def test_exclusions_respected(self):
        block = AffinityBlock(np.array([[0.9, 0.9], [0.5, 0.5], [0.7, 0.7]]))
        sel = topk_select(block, 2, exclusions=_AllowedRows([[1, 2], [0, 1, 2]]))
        assert sel.indices[:, 0].tolist() == [2, 1]
        assert sel.indices[:, 1].tolist() == [0, 2]

    def test_shift_invariance_of_indices(self):
        rng = np.random.default_rng(21)
        vals = rng.normal(size=(9, 5))
        a = topk_select(AffinityBlock(vals), 4)
        b = topk_select(AffinityBlock(vals + 2.5), 4)
        assert np.array_equal(a.indices, b.indices)

    def test_k_below_one_rejected(self):
        with pytest.raises(ConfigError, match="k"):
            topk_select(AffinityBlock(np.ones((2, 2))), 0)


class TestSoftmaxOverTopk:
    def test_k1_gives_unit_weight(self):
        sel = topk_select(AffinityBlock(np.array([[-3.0], [-8.0]])), 1)
        out = softmax_over_topk(sel, 0.7)
        assert out.weights[0, 0] == pytest.approx(1.0)

    def test_scalar_oracle(self):
        sel = topk_select(AffinityBlock(np.array([[2.0], [0.0]])), 2)
        out = softmax_over_topk(sel, 1.0)
        assert np.allclose(out.weights[:, 0], SOFTMAX_2_0, atol=1e-7)

    def test_equal_values_uniform(self):
        sel = topk_select(AffinityBlock(np.full((5, 1), 0.3)), 5)
        out = softmax_over_topk(sel, 2.0)
        assert np.allclose(out.weights[:, 0], 0.2)

    def test_double_normalization_rejected(self):
        sel = topk_select(AffinityBlock(np.ones((2, 1))), 2)
        out = softmax_over_topk(sel, 1.0)
        with pytest.raises(ConfigError, match="already"):
            softmax_over_topk(out, 1.0)


class TestSoftCopy:
    def test_hard_copy_with_unit_weight(self):
        labels = LabelMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]), height=1, width=2)
        feats = _mat([[1.0, -1.0]], 1, 2)
        sel = softmax_over_topk(topk_select(compute_affinity(feats, feats), 1), 1.0)
        out = soft_copy(sel, labels)
        assert np.array_equal(out.scores, labels.scores)

    def test_even_blend(self):
        labels = LabelMatrix(np.array([[1.0, 0.0]]), height=1, width=2)
        sel_idx = np.array([[0], [1]])
        sel_wts = np.array([[0.5], [0.5]])
        from labelprop.affinity import TopKSelection

        sel = TopKSelection(sel_idx, sel_wts, np.array([2]), softmaxed=True)
        out = soft_copy(sel, labels, height=1, width=1)
        assert out.scores[0, 0] == pytest.approx(0.5)

    def test_matches_dense_matrix_product(self):
        rng = np.random.default_rng(31)
        n, p, l, k = 6, 6, 3, 3
        labels = LabelMatrix(rng.uniform(size=(l, p)), height=2, width=3)
        block = AffinityBlock(rng.normal(size=(p, n)))
        sel = softmax_over_topk(topk_select(block, k), 0.5)
        out = soft_copy(sel, labels)
        dense = np.zeros((p, n))
        for j in range(n):
            for r in range(k):
                dense[sel.indices[r, j], j] += sel.weights[r, j]
        expected = labels.scores.astype(np.float64) @ dense
        assert np.allclose(out.scores, expected, atol=1e-6)

    def test_output_in_unit_interval(self):
        rng = np.random.default_rng(33)
        labels = LabelMatrix(rng.uniform(size=(2, 8)), height=2, width=4)
        block = AffinityBlock(rng.normal(size=(8, 8)))
        sel = softmax_over_topk(topk_select(block, 4), 0.2)
        out = soft_copy(sel, labels)
        assert out.scores.min() >= 0.0
        assert out.scores.max() <= 1.0


class TestEndToEndScaleInvariance:
    def _kernel_output(self, raw, labels, scale):
        f = l2_normalize(FeatureMatrix(scale * raw, height=3, width=3))
        sel = softmax_over_topk(topk_select(compute_affinity(f, f), 3), 0.5)
        return soft_copy(sel, labels).scores

    def test_power_of_two_prescale_is_exact(self):
        # power-of-two scaling is lossless in float, so normalization removes
        # it bit-for-bit
        rng = np.random.default_rng(41)
        raw = rng.normal(size=(4, 9))
        labels = LabelMatrix(rng.uniform(size=(2, 9)), height=3, width=3)
        assert np.array_equal(
            self._kernel_output(raw, labels, 1.0),
            self._kernel_output(raw, labels, 32.0),
        )

    def test_arbitrary_prescale_within_tolerance(self):
        rng = np.random.default_rng(43)
        raw = rng.normal(size=(4, 9))
        labels = LabelMatrix(rng.uniform(size=(2, 9)), height=3, width=3)
        assert np.allclose(
            self._kernel_output(raw, labels, 1.0),
            self._kernel_output(raw, labels, 37.5),
            atol=1e-6,
        )
