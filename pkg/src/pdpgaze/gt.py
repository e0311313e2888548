"""Ground-truth gaze heatmaps and patch-level gaze distributions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

PATCH_MODES = ("maxpool", "avgpool", "onehot")


class ConfigError(ValueError):
    """Patch geometry or mode is inconsistent with the heatmap."""


@dataclass(frozen=True)
class GazeAnnotation:
    point: tuple[float, float] | None
    in_frame: bool = True

    def __post_init__(self):
        if self.in_frame:
            if self.point is None:
                raise ValueError("in-frame annotation needs a point")
            x, y = self.point
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise ValueError(f"in-frame point {self.point} outside [0,1]^2")


@dataclass
class PatchDistribution:
    inside: np.ndarray
    outside: float
    grid: tuple[int, int]

    def as_vector(self) -> np.ndarray:
        """Length H*W+1 vector, outside bin last."""
        return np.append(self.inside, self.outside)

    @classmethod
    def from_vector(cls, vec, grid: tuple[int, int]) -> "PatchDistribution":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (grid[0] * grid[1] + 1,):
            raise ValueError(f"vector of length {vec.shape} does not match grid {grid}")
        return cls(vec[:-1].copy(), float(vec[-1]), tuple(grid))


def default_sigma(heatmap_size: int) -> float:
    """sigma = 3 at 56 px, scaled proportionally for other resolutions."""
    return 3.0 * heatmap_size / 56.0


def to_pixel(point, size: tuple[int, int]) -> tuple[float, float]:
    """Normalized (x, y) -> continuous (col, row) pixel coordinates."""
    h, w = size
    return point[0] * (w - 1), point[1] * (h - 1)


def nearest_cell(point, size: tuple[int, int]) -> tuple[int, int]:
    """(row, col) of the heatmap cell nearest to a normalized point."""
    px, py = to_pixel(point, size)
    return int(np.floor(py + 0.5)), int(np.floor(px + 0.5))


def render_gaussian_heatmap(ann: GazeAnnotation, size: tuple[int, int], sigma: float) -> np.ndarray:
    """Unnormalised isotropic Gaussian evaluated on the full grid, peak 1/(sqrt(2*pi)*sigma)."""
    if not ann.in_frame:
        raise ValueError("cannot render a heatmap for an out-of-frame annotation")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h, w = size
    gx, gy = to_pixel(ann.point, size)
    cols = np.arange(w)[None, :]
    rows = np.arange(h)[:, None]
    d2 = (cols - gx) ** 2 + (rows - gy) ** 2
    return np.exp(-d2 / (2.0 * sigma**2)) / (np.sqrt(2.0 * np.pi) * sigma)


def _patch_blocks(heatmap: np.ndarray, patches: tuple[int, int]) -> np.ndarray:
    hh, ww = heatmap.shape
    ph, pw = patches
    if ph <= 0 or pw <= 0 or hh % ph or ww % pw:
        raise ConfigError(f"heatmap {heatmap.shape} is not divisible into {ph}x{pw} patches")
    # (ph, pw, block_h, block_w)
    return heatmap.reshape(ph, hh // ph, pw, ww // pw).transpose(0, 2, 1, 3)


def pool_patches(heatmap: np.ndarray, patches: tuple[int, int], how: str = "max") -> np.ndarray:
    blocks = _patch_blocks(heatmap, patches)
    if how == "max":
        return blocks.max(axis=(2, 3)).reshape(-1)
    return blocks.mean(axis=(2, 3)).reshape(-1)


def patch_distribution_from_heatmap(
    heatmap: np.ndarray | None,
    in_frame: bool,
    patches: tuple[int, int],
    mode: str = "maxpool",
    point=None,
) -> PatchDistribution:
    """Patch distribution over H*W inside patches plus one outside bin.

    ``onehot`` needs the annotated ``point`` (normalized) to locate the patch;
    when absent, the heatmap's argmax pixel stands in for it.
    """
    if mode not in PATCH_MODES:
        raise ConfigError(f"unknown patch mode {mode!r}")
    ph, pw = patches
    n = ph * pw
    if not in_frame:
        return PatchDistribution(np.zeros(n), 1.0, (ph, pw))
    if heatmap is None:
        raise ValueError("in-frame patch distribution needs a heatmap")
    heatmap = np.asarray(heatmap, dtype=np.float64)
    hh, ww = heatmap.shape
    _patch_blocks(heatmap, patches)
    if mode == "onehot":
        if point is not None:
            r, c = nearest_cell(point, (hh, ww))
        else:
            r, c = np.unravel_index(int(np.argmax(heatmap)), heatmap.shape)
        inside = np.zeros(n)
        inside[(r // (hh // ph)) * pw + c // (ww // pw)] = 1.0
        return PatchDistribution(inside, 0.0, (ph, pw))
    scores = pool_patches(heatmap, patches, "max" if mode == "maxpool" else "mean")
    total = scores.sum()
    if total <= 0:
        raise ValueError("heatmap has no positive mass to distribute over patches")
    return PatchDistribution(scores / total, 0.0, (ph, pw))


def variance_score(points: Sequence) -> float:
    """Mean L2 distance from each annotated point to the centroid of all of them."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("variance score needs at least one annotation")
    centroid = pts.mean(axis=0)
    return float(np.linalg.norm(pts - centroid, axis=1).mean())
