"""Evaluation metrics, annotation-variance breakdown and heatmap/patch consistency."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .gt import PatchDistribution, nearest_cell, pool_patches


def bilinear_resize(grid: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Corner-aligned bilinear resampling (pixel i maps to i*(S-1) in normalized units)."""
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    oh, ow = size
    if (oh, ow) == (h, w):
        return grid.copy()
    ys = np.linspace(0, h - 1, oh) if oh > 1 else np.zeros(1)
    xs = np.linspace(0, w - 1, ow) if ow > 1 else np.zeros(1)
    y0 = np.clip(np.floor(ys).astype(int), 0, max(h - 2, 0))
    x0 = np.clip(np.floor(xs).astype(int), 0, max(w - 2, 0))
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = grid[np.ix_(y0, x0)] * (1 - fx) + grid[np.ix_(y0, x1)] * fx
    bot = grid[np.ix_(y1, x0)] * (1 - fx) + grid[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def _points(annotations) -> np.ndarray:
    pts = np.asarray(annotations, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("need at least one in-frame annotation")
    return pts


def auc(heatmap: np.ndarray, annotations, eval_size: tuple[int, int] | None = None) -> float:
    """ROC-AUC of heatmap cells against annotated cells (Mann-Whitney U with mid-ranks)."""
    heatmap = np.asarray(heatmap, dtype=np.float64)
    size = eval_size or heatmap.shape
    scores = bilinear_resize(heatmap, size)
    labels = np.zeros(size, dtype=bool)
    for p in _points(annotations):
        labels[nearest_cell(p, size)] = True
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative cells")
    ranks = rankdata(scores.ravel())
    u = ranks[labels.ravel()].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def predicted_point(heatmap: np.ndarray) -> np.ndarray:
    """Normalized (x, y) of the first maximal cell in row-major order."""
    heatmap = np.asarray(heatmap)
    h, w = heatmap.shape
    r, c = np.unravel_index(int(np.argmax(heatmap)), heatmap.shape)
    return np.array([c / (w - 1), r / (h - 1)])


def distances(heatmap: np.ndarray, annotations) -> tuple[float, float]:
    """(distance to the annotation centroid, distance to the closest annotation)."""
    pts = _points(annotations)
    pred = predicted_point(heatmap)
    avg = float(np.linalg.norm(pts.mean(axis=0) - pred))
    mn = float(np.linalg.norm(pts - pred, axis=1).min())
    return avg, mn


def ap_out_of_frame(p_in: Sequence[float], in_frame: Sequence[bool]) -> float:
    """Average precision for detecting out-of-frame samples, scored by 1 - P_in."""
    score = 1.0 - np.asarray(p_in, dtype=np.float64)
    positive = ~np.asarray(in_frame, dtype=bool)
    n_pos = int(positive.sum())
    if n_pos == 0:
        raise ValueError("AP needs at least one out-of-frame sample")
    order = np.argsort(-score, kind="stable")
    hits = positive[order]
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / n_pos)


@dataclass
class QuantileRow:
    lo: float
    hi: float
    mean_variance: float
    auc: float
    count: int


def quantile_breakdown(variance_scores: Sequence[float], aucs: Sequence[float], parts: int = 10) -> list[QuantileRow]:
    """Sort by variance score, split into ``parts`` near-equal groups, average AUC per group."""
    v = np.asarray(variance_scores, dtype=np.float64)
    a = np.asarray(aucs, dtype=np.float64)
    if len(v) != len(a):
        raise ValueError("variance scores and AUCs differ in length")
    if len(v) < parts:
        raise ValueError(f"need at least {parts} samples, got {len(v)}")
    order = np.argsort(v, kind="stable")
    rows = []
    for idx in np.array_split(order, parts):
        # correctly rounded sums keep the bin means independent of summation order
        rows.append(QuantileRow(float(v[idx].min()), float(v[idx].max()), math.fsum(v[idx]) / len(idx),
                                math.fsum(a[idx]) / len(idx), len(idx)))
    return rows


def pdph(heatmap: np.ndarray, patches: tuple[int, int]) -> PatchDistribution:
    """Max-pooled patch distribution of a predicted heatmap (outside bin 0).

    The heatmap is shifted by its minimum first so that pooling sees a
    non-negative field; a constant heatmap gives the uniform distribution.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    shifted = heatmap - heatmap.min()
    scores = pool_patches(shifted, patches, "max")
    total = scores.sum()
    n = patches[0] * patches[1]
    inside = np.full(n, 1.0 / n) if total <= 0 else scores / total
    return PatchDistribution(inside, 0.0, tuple(patches))


def _vec(p) -> np.ndarray:
    return p.as_vector() if isinstance(p, PatchDistribution) else np.asarray(p, dtype=np.float64)


def bhattacharyya(p, q) -> float:
    p, q = _vec(p), _vec(q)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.sqrt(p * q).sum())


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def js_divergence(p, q) -> float:
    p, q = _vec(p), _vec(q)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    return 0.5 * _kl(p, m) + 0.5 * _kl(q, m)


@dataclass
class MetricReport:
    auc: float
    avg_dist: float
    min_dist: float
    ap_out: float
    n_samples: int
    n_in_frame: int
    bhattacharyya: float
    js: float
    quantile_table: list[QuantileRow] = field(default_factory=list)

    SCALARS = ("n_samples", "n_in_frame", "auc", "avg_dist", "min_dist", "ap_out", "bhattacharyya", "js")

    def to_text(self) -> str:
        lines = []
        for key in self.SCALARS:
            val = getattr(self, key)
            lines.append(f"{key}={val}" if isinstance(val, int) else f"{key}={val!r}")
        return "\n".join(lines) + "\n"

    def quantile_csv(self) -> str:
        return quantile_csv(self.quantile_table)

    @classmethod
    def from_text(cls, text: str) -> "MetricReport":
        vals = {}
        for line in text.splitlines():
            if line.strip():
                k, v = line.split("=", 1)
                vals[k] = int(v) if k.startswith("n_") else float(v)
        return cls(**vals)


def quantile_csv(rows: Sequence[QuantileRow]) -> str:
    out = ["bin,variance_lo,variance_hi,variance_mean,auc,count"]
    for i, r in enumerate(rows):
        out.append(f"{i},{r.lo!r},{r.hi!r},{r.mean_variance!r},{r.auc!r},{r.count}")
    return "\n".join(out) + "\n"
