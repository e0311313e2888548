import numpy as np
import pytest

from pdpgaze import tensor as T
from pdpgaze.features import FeatureExtractor, backbone_channels, reduced_size
from pdpgaze.gradcheck import check_gradients
from pdpgaze.gt import ConfigError
from pdpgaze.tensor import Tensor


def inputs(rng, n, s):
    return (rng.random((n, 3, s, s)), (rng.random((n, 1, s, s)) > 0.8).astype(float),
            rng.random((n, 1, s, s)), rng.random((n, 3, s, s)))


def test_backbone_widths():
    assert backbone_channels(4, 32) == [16, 32, 64, 32]
    assert reduced_size(64, 4) == 4
    assert reduced_size(224, 5) == 7


@pytest.mark.parametrize("s,blocks,grid", [(64, 4, 4), (224, 5, 7), (16, 3, 2)])
def test_shape_law(s, blocks, grid):
    fx = FeatureExtractor(np.random.default_rng(0), s, blocks, 8, 4)
    sc, m, d, h = inputs(np.random.default_rng(1), 1, s)
    assert fx.scene_encode(sc, m, d).shape == (1, 8, grid, grid)
    assert fx.head_encode(h).shape == (1, 8, grid, grid)
    assert fx(sc, m, d, h).shape == (1, 4, grid, grid)


def test_zero_input_gives_bias_propagated_constant():
    fx = FeatureExtractor(np.random.default_rng(0), 32, 3, 8, 4)
    z3, z1 = np.zeros((1, 3, 32, 32)), np.zeros((1, 1, 32, 32))
    out = fx.scene_encode(z3, z1, z1).data
    assert np.all(np.isfinite(out))
    assert out.tobytes() == fx.scene_encode(z3, z1, z1).data.tobytes()
    # first layer on zero input is relu(bias) at every cell
    act = T.relu(fx.scene.convs[0](Tensor(np.zeros((1, 5, 32, 32))))).data
    first = np.maximum(fx.scene.convs[0].bias.data, 0)
    np.testing.assert_array_equal(act, np.broadcast_to(first[None, :, None, None], act.shape))


def test_head_encode_zero_input_deterministic():
    fx = FeatureExtractor(np.random.default_rng(0), 32, 3, 8, 4)
    a = fx.head_encode(np.zeros((1, 3, 32, 32))).data
    b = fx.head_encode(np.zeros((1, 3, 32, 32))).data
    assert a.tobytes() == b.tobytes()


def test_irreducible_size_rejected():
    with pytest.raises(ConfigError):
        FeatureExtractor(np.random.default_rng(0), 60, 4, 8, 4)


def test_wrong_channel_count_rejected():
    fx = FeatureExtractor(np.random.default_rng(0), 16, 2, 4, 4)
    with pytest.raises(ConfigError):
        fx.head_encode(np.zeros((1, 2, 16, 16)))


class TestSpatialAttention:
    def setup_method(self):
        self.fx = FeatureExtractor(np.random.default_rng(0), 32, 3, 8, 4)
        self.rng = np.random.default_rng(2)
        self.sc, self.m, self.d, self.h = inputs(self.rng, 2, 32)

    def test_sums_to_one(self):
        f_h = self.fx.head_encode(self.h)
        m_s = self.fx.spatial_attention_map(f_h, self.m, self.d).data
        assert m_s.shape == (2, 4, 4)
        np.testing.assert_allclose(m_s.sum(axis=(1, 2)), 1.0, atol=1e-9)

    def test_zero_weights_uniform(self):
        self.fx.attn.weight.data[...] = 0
        self.fx.attn.bias.data[...] = 0
        m_s = self.fx.spatial_attention_map(self.fx.head_encode(self.h), self.m, self.d).data
        np.testing.assert_allclose(m_s, 1 / 16, atol=1e-15)

    def test_mask_and_depth_area_pooled(self):
        m = np.zeros((1, 1, 32, 32))
        m[0, 0, :8, :8] = 1.0
        pooled = T.avg_pool(m[:, 0], (4, 4))[0]
        assert pooled[0, 0] == 1.0 and pooled.sum() == 1.0

    def test_gradient_through_map(self):
        f_h = Tensor(self.rng.normal(size=(2, 8, 4, 4)), requires_grad=True)
        w = Tensor(self.rng.normal(size=(2, 4, 4)))
        params = [f_h, self.fx.attn.weight, self.fx.attn.bias]
        err = check_gradients(lambda: (self.fx.spatial_attention_map(f_h, self.m, self.d) * w).sum(), params)
        assert err <= 1e-4


class TestFuseAndEncode:
    def test_ones_map_concatenates_raw(self):
        rng = np.random.default_rng(0)
        fs, fh = rng.normal(size=(1, 3, 2, 2)), rng.normal(size=(1, 2, 2, 2))
        out = FeatureExtractor.fuse(Tensor(fs), Tensor(fh), Tensor(np.ones((1, 2, 2)))).data
        np.testing.assert_array_equal(out, np.concatenate([fs, fh], axis=1))

    def test_zero_map_zeroes_scene_channels(self):
        rng = np.random.default_rng(0)
        fs, fh = rng.normal(size=(1, 3, 2, 2)), rng.normal(size=(1, 2, 2, 2))
        out = FeatureExtractor.fuse(Tensor(fs), Tensor(fh), Tensor(np.zeros((1, 2, 2)))).data
        assert not out[:, :3].any()
        np.testing.assert_array_equal(out[:, 3:], fh)

    def test_random_vs_elementwise_oracle(self):
        rng = np.random.default_rng(1)
        fs, fh, m = rng.normal(size=(2, 3, 4, 4)), rng.normal(size=(2, 5, 4, 4)), rng.random((2, 4, 4))
        out = FeatureExtractor.fuse(Tensor(fs), Tensor(fh), Tensor(m)).data
        for n in range(2):
            for c in range(3):
                for i in range(4):
                    for j in range(4):
                        assert abs(out[n, c, i, j] - fs[n, c, i, j] * m[n, i, j]) <= 1e-12

    def test_encode_shared_shape(self):
        fx = FeatureExtractor(np.random.default_rng(0), 224, 5, 6, 4)
        assert fx.encode_shared(Tensor(np.zeros((1, 12, 7, 7)))).shape == (1, 4, 7, 7)

    def test_identity_pointwise_conv_passes_through(self):
        fx = FeatureExtractor(np.random.default_rng(0), 16, 2, 4, 8)
        x = np.random.default_rng(1).random((1, 8, 4, 4))
        fx.enc1.weight.data[...] = np.eye(8)[:, :, None, None]
        fx.enc1.bias.data[...] = 0
        np.testing.assert_array_equal(fx.enc1(Tensor(x)).data, x)

    def test_encode_shared_gradient(self):
        fx = FeatureExtractor(np.random.default_rng(0), 16, 2, 4, 8)
        rng = np.random.default_rng(2)
        x = Tensor(rng.normal(size=(1, 8, 4, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(1, 8, 4, 4)))
        ps = [x, fx.enc1.weight, fx.enc1.bias, fx.enc2.weight, fx.enc2.bias]
        assert check_gradients(lambda: (fx.encode_shared(x) * w).sum(), ps) <= 1e-4


def test_end_to_end_gradient_tiny_config():
    fx = FeatureExtractor(np.random.default_rng(3), 16, 2, 4, 8)
    sc, m, d, h = inputs(np.random.default_rng(4), 1, 16)
    w = Tensor(np.random.default_rng(5).normal(size=(1, 8, 4, 4)))
    params = [p for _, p in fx.named_parameters()]
    err = check_gradients(lambda: (fx(sc, m, d, h) * w).sum(), params, max_probes=6)
    assert err <= 1e-4


def test_determinism_same_seed():
    sc, m, d, h = inputs(np.random.default_rng(4), 2, 32)
    a = FeatureExtractor(np.random.default_rng(9), 32, 3, 8, 4)(sc, m, d, h).data
    b = FeatureExtractor(np.random.default_rng(9), 32, 3, 8, 4)(sc, m, d, h).data
    assert a.tobytes() == b.tobytes()
