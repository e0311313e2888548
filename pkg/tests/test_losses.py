import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdpgaze.gradcheck import check_gradients
from pdpgaze.heads import PDPHead
from pdpgaze.losses import (LossWeights, binary_cross_entropy, combined_loss, heatmap_mse, patch_kl, patch_loss,
                            patch_mse)
from pdpgaze.tensor import Adam, ShapeError, Tensor


def random_dist(rng, n, k):
    d = rng.random((n, k)) + 1e-3
    return d / d.sum(1, keepdims=True)


class TestHeatmapMSE:
    def test_equal_is_zero(self):
        g = np.random.default_rng(0).random((8, 8))
        assert heatmap_mse(g, g, True).item() == 0.0

    def test_constant_offset(self):
        g = np.random.default_rng(1).random((8, 8))
        assert heatmap_mse(g + 0.3, g, True).item() == pytest.approx(0.09, abs=1e-12)

    def test_out_of_frame_contributes_nothing(self):
        g = np.random.default_rng(2).random((8, 8))
        assert heatmap_mse(g + 5, g, False).item() == 0.0

    def test_batch_mean_over_samples(self):
        g = np.zeros((2, 4, 4))
        pred = np.stack([np.full((4, 4), 1.0), np.full((4, 4), 7.0)])
        assert heatmap_mse(pred, g, [True, False]).item() == pytest.approx(0.5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            heatmap_mse(np.zeros((4, 4)), np.zeros((4, 5)), True)


class TestPatchKL:
    def test_equal_is_zero(self):
        p = random_dist(np.random.default_rng(0), 1, 17)[0]
        assert patch_kl(p, p).item() == 0.0
        assert patch_kl(p, p, "pred_gt").item() == 0.0

    def test_closed_form(self):
        assert patch_kl(np.array([1.0, 0.0]), np.array([0.5, 0.5])).item() == pytest.approx(np.log(2), abs=1e-15)

    def test_nonnegative_on_random_pairs(self):
        rng = np.random.default_rng(1)
        gt, pred = random_dist(rng, 1000, 17), random_dist(rng, 1000, 17)
        gt[::3, :5] = 0
        gt /= gt.sum(1, keepdims=True)
        for i in range(1000):
            assert patch_kl(gt[i], pred[i]).item() >= -1e-12

    def test_direct_oracle(self):
        rng = np.random.default_rng(2)
        gt, pred = random_dist(rng, 4, 9), random_dist(rng, 4, 9)
        want = np.mean([sum(g * np.log(g / q) for g, q in zip(gt[i], pred[i])) for i in range(4)])
        assert patch_kl(gt, pred).item() == pytest.approx(want, abs=1e-12)
        rev = np.mean([sum(q * np.log(q / g) for g, q in zip(gt[i], pred[i])) for i in range(4)])
        assert patch_kl(gt, pred, "pred_gt").item() == pytest.approx(rev, abs=1e-12)

    def test_zero_prediction_floored(self):
        val = patch_kl(np.array([0.5, 0.5]), np.array([1.0, 0.0])).item()
        assert np.isfinite(val) and val > 10

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            patch_kl(np.ones(3) / 3, np.ones(4) / 4)

    def test_unknown_direction(self):
        with pytest.raises(ValueError):
            patch_kl(np.ones(2) / 2, np.ones(2) / 2, "sym")

    @pytest.mark.parametrize("direction", ["gt_pred", "pred_gt"])
    def test_gradient(self, direction):
        rng = np.random.default_rng(3)
        gt = random_dist(rng, 2, 5)
        x = Tensor(random_dist(rng, 2, 5), requires_grad=True)
        assert check_gradients(lambda: patch_kl(gt, x, direction), [x]) <= 1e-5

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_minimizing_drives_prediction_to_target(self, seed):
        rng = np.random.default_rng(seed)
        head = PDPHead(rng, 32)
        tokens = Tensor(rng.normal(size=(1, 17, 32)))
        gt = np.zeros((1, 17))
        gt[0, [3, 4, 7]] = [0.5, 0.3, 0.2]
        opt = Adam(head.parameters(), lr=0.01)
        first = None
        for _ in range(200):
            opt.zero_grad()
            loss = patch_kl(gt, head(tokens).dist)
            first = loss.item() if first is None else first
            loss.backward()
            opt.step()
        assert patch_kl(gt, head(tokens).dist).item() < 0.01 * first


class TestOtherPatchLosses:
    def test_mse(self):
        assert patch_mse(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]])).item() == pytest.approx(0.5)

    def test_bce(self):
        want = -(np.log(0.8) + np.log(0.9))
        assert binary_cross_entropy(np.array([1.0, 0.0]), np.array([0.8, 0.1])).item() == pytest.approx(want)

    def test_dispatch(self):
        gt, pred = np.array([0.2, 0.8]), np.array([0.5, 0.5])
        assert patch_loss(gt, pred, "mse").item() == patch_mse(gt, pred).item()
        with pytest.raises(ValueError):
            patch_loss(gt, pred, "hinge")


class TestCombined:
    def test_lambda_zero_cases(self):
        assert combined_loss(3.0, 5.0, LossWeights(0.0, 2.0)) == 10.0
        assert combined_loss(3.0, 5.0, LossWeights(4.0, 0.0)) == 12.0

    def test_defaults(self):
        w = LossWeights()
        assert (w.lambda1, w.lambda2) == (100.0, 1.0)

    @settings(max_examples=100)
    @given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(0.1, 5), st.floats(0.1, 5))
    def test_linearity(self, a, b, c, l1, l2):
        w = LossWeights(l1, l2)
        assert abs(combined_loss(a + c, b, w) - (combined_loss(a, b, w) + l1 * c)) <= 1e-12 * max(1, abs(a) + abs(c)) * l1 * 10
        assert abs(combined_loss(a, b + c, w) - (combined_loss(a, b, w) + l2 * c)) <= 1e-12 * max(1, abs(b) + abs(c)) * l2 * 10

    def test_invalid_weights(self):
        with pytest.raises(ValueError):
            LossWeights(0.0, 0.0)
        with pytest.raises(ValueError):
            LossWeights(-1.0, 1.0)
