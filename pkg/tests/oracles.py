"""Brute-force reference implementations, written independently of the package code."""
import math
from fractions import Fraction

import numpy as np


def auc_pairwise(scores, positive):
    """Probability a random positive cell outranks a random negative one, ties count half."""
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(positive, dtype=bool).ravel()
    pos, neg = s[y], s[~y]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def labels_for(points, shape):
    h, w = shape
    lab = np.zeros(shape, dtype=bool)
    for x, y in points:
        lab[int(math.floor(y * (h - 1) + 0.5)), int(math.floor(x * (w - 1) + 0.5))] = True
    return lab


def ap_pr_curve(p_in, in_frame):
    """Walk the ranked list one sample at a time and sum precision at every recall step."""
    items = sorted(enumerate(1.0 - np.asarray(p_in, dtype=float)), key=lambda t: (-t[1], t[0]))
    positives = [not f for f in in_frame]
    n_pos = sum(positives)
    tp = 0
    recall_prev = 0.0
    ap = 0.0
    for rank, (i, _) in enumerate(items, 1):
        if positives[i]:
            tp += 1
            recall = tp / n_pos
            ap += (recall - recall_prev) * (tp / rank)
            recall_prev = recall
    return ap


def sort_and_chunk(variances, aucs, parts=10):
    pairs = sorted(zip(variances, aucs, range(len(aucs))), key=lambda t: (t[0], t[2]))
    n = len(pairs)
    base, extra = divmod(n, parts)
    out, start = [], 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        chunk = pairs[start:start + size]
        start += size
        out.append(float(sum(Fraction(a) for _, a, _ in chunk)) / len(chunk))
    return out


def maxpool_distribution(hm, ph, pw, shift=True):
    hm = np.asarray(hm, dtype=float)
    if shift:
        hm = hm - hm.min()
    bh, bw = hm.shape[0] // ph, hm.shape[1] // pw
    vals = []
    for i in range(ph):
        for j in range(pw):
            vals.append(max(hm[r][c] for r in range(i * bh, (i + 1) * bh) for c in range(j * bw, (j + 1) * bw)))
    total = sum(vals)
    return [v / total for v in vals]


def argmax_point(hm):
    h, w = len(hm), len(hm[0])
    best, br, bc = -math.inf, 0, 0
    for r in range(h):
        for c in range(w):
            if hm[r][c] > best:
                best, br, bc = hm[r][c], r, c
    return bc / (w - 1), br / (h - 1)


def distance_pair(hm, points):
    px, py = argmax_point(hm)
    cx = sum(p[0] for p in points) / len(points)
    cy = sum(p[1] for p in points) / len(points)
    avg = math.hypot(px - cx, py - cy)
    mn = min(math.hypot(px - x, py - y) for x, y in points)
    return avg, mn


def bhattacharyya_loop(p, q):
    return sum(math.sqrt(a * b) for a, b in zip(p, q))


def js_loop(p, q):
    def kl(a, b):
        return sum(x * math.log(x / y) for x, y in zip(a, b) if x > 0)
    m = [(a + b) / 2 for a, b in zip(p, q)]
    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def avgpool_distribution(hm, ph, pw):
    bh, bw = hm.shape[0] // ph, hm.shape[1] // pw
    vals = [sum(hm[r, c] for r in range(i * bh, (i + 1) * bh) for c in range(j * bw, (j + 1) * bw)) / (bh * bw)
            for i in range(ph) for j in range(pw)]
    return [v / sum(vals) for v in vals]


def onehot_distribution(point, size, grid):
    """Scan every pixel for the one closest to the point; mark the patch that holds it."""
    h, w = size
    px, py = point[0] * (w - 1), point[1] * (h - 1)
    best, cell = math.inf, None
    for r in range(h):
        for c in range(w):
            d = (c - px) ** 2 + (r - py) ** 2
            if d < best:
                best, cell = d, (r, c)
    out = [0.0] * (grid[0] * grid[1])
    out[(cell[0] // (h // grid[0])) * grid[1] + cell[1] // (w // grid[1])] = 1.0
    return out
