"""Prediction heads: patch distribution (PDP), heatmap regression, and the in/out ablation head."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .gt import PatchDistribution
from .nn import Conv, Deconv, Linear, Module
from .tensor import Tensor


@dataclass
class PatchPrediction:
    scores: Tensor  # (N, L) sigmoid outputs
    dist: Tensor  # (N, L) normalised scores, outside token last

    def distribution(self, i: int, grid: tuple[int, int]) -> PatchDistribution:
        return PatchDistribution.from_vector(self.dist.data[i], grid)


def pdp_head(f_g: Tensor, h1: Linear, h2: Linear) -> PatchPrediction:
    """sigmoid(h2(relu(h1(tokens)))) per token, then normalised over tokens."""
    scores = T.sigmoid(h2(T.relu(h1(f_g))))
    scores = scores.reshape(scores.shape[:-1])
    total = T.broadcast_to(scores.sum(axis=-1, keepdims=True), scores.shape)
    return PatchPrediction(scores, scores / total)


def in_probability(dist) -> np.ndarray | float:
    """Inside mass of a patch distribution: sum of all but the last (outside) bin."""
    if isinstance(dist, PatchDistribution):
        return float(dist.inside.sum())
    if isinstance(dist, PatchPrediction):
        dist = dist.dist
    d = np.asarray(getattr(dist, "data", dist), dtype=np.float64)
    out = d[..., :-1].sum(axis=-1)
    return float(out) if out.ndim == 0 else out


class PDPHead(Module):
    def __init__(self, rng, channels: int, hidden: int | None = None):
        super().__init__()
        hidden = hidden or max(channels // 2, 1)
        self.h1 = self.add_child("h1", Linear(rng, channels, hidden))
        self.h2 = self.add_child("h2", Linear(rng, hidden, 1))

    def __call__(self, f_g: Tensor) -> PatchPrediction:
        return pdp_head(f_g, self.h1, self.h2)


class HeatmapHead(Module):
    """conv3x3 -> 3 x (deconv x2 + ReLU) -> conv1x1; output is 8x the token grid."""

    def __init__(self, rng, channels: int, grid: tuple[int, int]):
        super().__init__()
        self.grid = tuple(grid)
        widths = [channels, max(channels // 2, 1), max(channels // 4, 1), max(channels // 8, 1)]
        self.conv_in = self.add_child("conv_in", Conv(rng, channels, channels, 3, pad=1))
        self.deconvs = [
            self.add_child(f"deconv{i}", Deconv(rng, widths[i], widths[i + 1], 3, stride=2, pad=1, out_pad=1))
            for i in range(3)
        ]
        self.conv_out = self.add_child("conv_out", Conv(rng, widths[-1], 1, 1))

    def __call__(self, f_g: Tensor) -> Tensor:
        n, l, c = f_g.shape
        h, w = self.grid
        inside = f_g[:, : h * w, :].transpose(0, 2, 1).reshape(n, c, h, w)
        x = self.conv_in(inside)
        for deconv in self.deconvs:
            x = T.relu(deconv(x))
        out = self.conv_out(x)
        return out.reshape(n, out.shape[2], out.shape[3])


class InOutHead(Module):
    """Binary in-frame probability from mean-pooled tokens (the no-patch-prediction ablation)."""

    def __init__(self, rng, channels: int):
        super().__init__()
        hidden = max(channels // 2, 1)
        self.fc1 = self.add_child("fc1", Linear(rng, channels, hidden))
        self.fc2 = self.add_child("fc2", Linear(rng, hidden, 1))

    def __call__(self, f_g: Tensor) -> Tensor:
        pooled = f_g.mean(axis=1)
        p = T.sigmoid(self.fc2(T.relu(self.fc1(pooled))))
        return p.reshape(p.shape[0])
