"""Two-branch feature extraction: scene and head backbones, spatial attention, shared encoder."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .gt import ConfigError
from .nn import Conv, Linear, Module
from .tensor import Tensor


def backbone_channels(blocks: int, out_channels: int) -> list[int]:
    """Per-block output widths: 16, 32, 64, ... capped at 256, last block -> ``out_channels``."""
    widths = [min(16 * 2**i, 256) for i in range(blocks - 1)]
    return widths + [out_channels]


def reduced_size(size: int, blocks: int) -> int:
    for _ in range(blocks):
        size = (size + 1) // 2  # k=3, stride 2, pad 1
    return size


class Backbone(Module):
    """Stack of stride-2 3x3 conv + ReLU blocks."""

    def __init__(self, rng, c_in: int, blocks: int, c_out: int):
        super().__init__()
        self.convs = []
        prev = c_in
        for i, width in enumerate(backbone_channels(blocks, c_out)):
            self.convs.append(self.add_child(f"conv{i}", Conv(rng, prev, width, 3, stride=2, pad=1)))
            prev = width

    def __call__(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = T.relu(conv(x))
        return x


class FeatureExtractor(Module):
    def __init__(self, rng, image_size: int, blocks: int, backbone_width: int, channels: int):
        super().__init__()
        if image_size % (2**blocks):
            raise ConfigError(f"image size {image_size} is not reducible by {blocks} stride-2 blocks")
        self.image_size = image_size
        self.grid = (image_size // 2**blocks,) * 2
        hw = self.grid[0] * self.grid[1]
        self.backbone_width = backbone_width
        self.scene = self.add_child("scene", Backbone(rng, 5, blocks, backbone_width))
        self.head = self.add_child("head", Backbone(rng, 3, blocks, backbone_width))
        self.attn = self.add_child("attn", Linear(rng, backbone_width + 2 * hw, hw))
        self.enc1 = self.add_child("enc1", Conv(rng, 2 * backbone_width, channels, 1))
        self.enc2 = self.add_child("enc2", Conv(rng, channels, channels, 1))

    def _check(self, x: np.ndarray, channels: int) -> None:
        s = self.image_size
        if x.ndim != 4 or x.shape[1:] != (channels, s, s):
            raise ConfigError(f"expected (N, {channels}, {s}, {s}) input, got {x.shape}")

    def scene_encode(self, scene, head_mask, depth) -> Tensor:
        scene, head_mask, depth = (np.asarray(getattr(a, "data", a), dtype=np.float64) for a in (scene, head_mask, depth))
        self._check(scene, 3)
        self._check(head_mask, 1)
        self._check(depth, 1)
        return self.scene(Tensor(np.concatenate([scene, head_mask, depth], axis=1)))

    def head_encode(self, head_crop) -> Tensor:
        head_crop = np.asarray(getattr(head_crop, "data", head_crop), dtype=np.float64)
        self._check(head_crop, 3)
        return self.head(Tensor(head_crop))

    def spatial_attention_map(self, head_feat: Tensor, head_mask, depth) -> Tensor:
        """Softmax-normalised (N, H, W) map from pooled head feature, mask and depth."""
        n = head_feat.shape[0]
        hw = self.grid[0] * self.grid[1]
        pooled = head_feat.mean(axis=(2, 3))
        head_mask = np.asarray(getattr(head_mask, "data", head_mask))
        depth = np.asarray(getattr(depth, "data", depth))
        mask_ds = T.avg_pool(head_mask[:, 0], self.grid).reshape(n, hw)
        depth_ds = T.avg_pool(depth[:, 0], self.grid).reshape(n, hw)
        z = T.concat([pooled, Tensor(mask_ds), Tensor(depth_ds)], axis=1)
        return T.softmax(self.attn(z), axis=-1).reshape(n, *self.grid)

    @staticmethod
    def fuse(scene_feat: Tensor, head_feat: Tensor, m_s: Tensor) -> Tensor:
        """[M_s (x) f_s, f_h]: scale every scene channel by the map, then concatenate channels."""
        n, c, h, w = scene_feat.shape
        m = T.broadcast_to(m_s.reshape(n, 1, h, w), (n, c, h, w))
        return T.concat([scene_feat * m, head_feat], axis=1)

    def encode_shared(self, f_cat: Tensor) -> Tensor:
        return self.enc2(T.relu(self.enc1(f_cat)))

    def __call__(self, scene, head_mask, depth, head_crop) -> Tensor:
        head_mask = np.asarray(getattr(head_mask, "data", head_mask), dtype=np.float64)
        depth = np.asarray(getattr(depth, "data", depth), dtype=np.float64)
        f_s = self.scene_encode(scene, head_mask, depth)
        f_h = self.head_encode(head_crop)
        m_s = self.spatial_attention_map(f_h, head_mask, depth)
        return self.encode_shared(self.fuse(f_s, f_h, m_s))
