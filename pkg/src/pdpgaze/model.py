"""The full gaze model: features -> tokens -> patch/temporal attention -> heads."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import PatchAttention, TemporalAttention, Tokenizer
from .features import FeatureExtractor
from .gt import ConfigError
from .heads import HeatmapHead, InOutHead, PDPHead
from .nn import Module
from .tensor import Tensor

HEAD_MODES = ("pdp", "inout")


@dataclass
class ModelConfig:
    image_size: int = 64
    blocks: int = 4
    backbone_width: int = 32
    channels: int = 32
    temporal: bool = True
    scaled_attention: bool = False
    head_mode: str = "pdp"

    def __post_init__(self):
        if self.head_mode not in HEAD_MODES:
            raise ConfigError(f"head_mode must be one of {HEAD_MODES}")
        if self.image_size % (2**self.blocks):
            raise ConfigError(f"image_size {self.image_size} not reducible by {self.blocks} stride-2 blocks")

    @property
    def grid(self) -> tuple[int, int]:
        g = self.image_size // 2**self.blocks
        return g, g

    @property
    def heatmap_size(self) -> tuple[int, int]:
        return 8 * self.grid[0], 8 * self.grid[1]

    @property
    def n_tokens(self) -> int:
        return self.grid[0] * self.grid[1] + 1

    @classmethod
    def full_scale(cls) -> "ModelConfig":
        return cls(image_size=224, blocks=5, backbone_width=1024, channels=512)


@dataclass
class ModelOutput:
    heatmap: Tensor  # (N, H', W')
    p_in: Tensor  # (N,)
    scores: Tensor | None = None  # (N, L) sigmoid scores
    dist: Tensor | None = None  # (N, L) patch distribution
    tokens: Tensor | None = None  # f_g, (N, L, C)


class GazeModel(Module):
    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        super().__init__()
        self.config = config = config or ModelConfig()
        rng = np.random.default_rng(seed)
        grid = config.grid
        self.features = self.add_child(
            "features", FeatureExtractor(rng, config.image_size, config.blocks, config.backbone_width, config.channels)
        )
        self.tokenizer = self.add_child("tokens", Tokenizer(rng, config.channels, grid))
        self.patch_attn = self.add_child("patch_attn", PatchAttention(rng, config.channels, config.scaled_attention))
        self.temporal_attn = None
        if config.temporal:
            self.temporal_attn = self.add_child("temporal_attn", TemporalAttention(rng, config.channels, config.n_tokens))
        self.heatmap_head = self.add_child("heatmap_head", HeatmapHead(rng, config.channels, grid))
        if config.head_mode == "pdp":
            self.pdp_head = self.add_child("pdp_head", PDPHead(rng, config.channels))
        else:
            self.inout_head = self.add_child("inout_head", InOutHead(rng, config.channels))
        self.parameters()  # assign qualified names

    # parameters up to and including patch attention; frozen for sequence fine-tuning
    def front_parameters(self):
        names = ("features.", "tokens.", "patch_attn.")
        return [p for n, p in self.named_parameters() if n.startswith(names)]

    def encode(self, scene, head_mask, depth, head_crop) -> Tensor:
        """Patch-attended tokens (N, L, C) before any temporal mixing."""
        f_enc = self.features(scene, head_mask, depth, head_crop)
        return self.patch_attn(self.tokenizer(f_enc))

    def __call__(self, scene, head_mask, depth, head_crop, frames: int = 1) -> ModelOutput:
        """Forward a batch of N = B * frames inputs; consecutive ``frames`` rows form one clip."""
        f_g = self.encode(scene, head_mask, depth, head_crop)
        n, l, c = f_g.shape
        if frames > 1:
            if n % frames:
                raise ConfigError(f"batch of {n} is not a whole number of {frames}-frame clips")
            if self.temporal_attn is None:
                raise ConfigError("model was built without temporal attention")
            f_g = self.temporal_attn(f_g.reshape(n // frames, frames, l, c)).reshape(n, l, c)
        heatmap = self.heatmap_head(f_g)
        if self.config.head_mode == "pdp":
            pred = self.pdp_head(f_g)
            p_in = pred.dist[:, : l - 1].sum(axis=-1)
            return ModelOutput(heatmap, p_in, pred.scores, pred.dist, f_g)
        return ModelOutput(heatmap, self.inout_head(f_g), tokens=f_g)
