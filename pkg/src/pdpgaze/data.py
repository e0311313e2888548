"""Synthetic gaze-following scenes and clips.

Each scene paints the gaze cue directly into the image: a head blob (red
channel), a ray from the head toward the target (green), the target object
(blue, in-frame only) and a few blue distractor blobs away from the ray. The
head crop is a zoomed window around the head that shows where the ray leaves
it. Depth is a radial gradient with the target object at a distinct depth.
Pixel values are rounded to 3 decimals so the text grid files stay compact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gt import GazeAnnotation, variance_score


@dataclass
class GeneratorSpec:
    image_size: int = 64
    p_in_frame: float = 0.5
    annotators: int = 1
    jitter: float = 0.05  # annotator jitter sigma_a, normalized units
    max_step: float = 0.03  # per-frame target displacement bound in clips
    distractors: tuple[int, int] = (1, 3)
    head_margin: float = 0.15
    min_target_dist: float = 0.25
    noise: float = 0.08


@dataclass
class GazeSample:
    scene: np.ndarray  # (3, S, S)
    head_mask: np.ndarray  # (1, S, S)
    depth: np.ndarray  # (1, S, S)
    head_crop: np.ndarray  # (3, S, S)
    annotations: list[GazeAnnotation]
    in_frame: bool
    sequence_id: int = 0
    frame_index: int = 0
    sample_id: str = "0"
    target: tuple[float, float] | None = field(default=None, compare=False)

    def points(self) -> np.ndarray:
        return np.array([a.point for a in self.annotations if a.in_frame], dtype=np.float64).reshape(-1, 2)

    @property
    def variance_score(self) -> float | None:
        return variance_score(self.points()) if self.in_frame else None


def _segment_distance(xx, yy, a, b) -> np.ndarray:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    t = np.clip(((xx - ax) * dx + (yy - ay) * dy) / denom, 0.0, 1.0) if denom > 0 else 0.0
    return np.hypot(xx - (ax + t * dx), yy - (ay + t * dy))


def _exit_point(head, angle) -> tuple[float, float]:
    """Where a ray from ``head`` in direction ``angle`` leaves the unit square."""
    dx, dy = np.cos(angle), np.sin(angle)
    ts = []
    for lim, p, d in ((0.0, head[0], dx), (1.0, head[0], dx), (0.0, head[1], dy), (1.0, head[1], dy)):
        if abs(d) > 1e-12:
            t = (lim - p) / d
            if t > 0:
                ts.append(t)
    t = min(ts)
    return float(np.clip(head[0] + t * dx, 0, 1)), float(np.clip(head[1] + t * dy, 0, 1))


def _layout(rng: np.random.Generator, spec: GeneratorSpec) -> dict:
    """Random quantities that stay fixed across the frames of a clip."""
    m = spec.head_margin
    head = (float(rng.uniform(m, 1 - m)), float(rng.uniform(m, 1 - m)))
    in_frame = bool(rng.random() < spec.p_in_frame)
    if in_frame:
        while True:
            target = (float(rng.uniform(0.05, 0.95)), float(rng.uniform(0.05, 0.95)))
            if np.hypot(target[0] - head[0], target[1] - head[1]) >= spec.min_target_dist:
                break
        angle = None
    else:
        target = None
        angle = float(rng.uniform(0, 2 * np.pi))
    n_distract = int(rng.integers(spec.distractors[0], spec.distractors[1] + 1))
    candidates = rng.uniform(0.05, 0.95, size=(4 * n_distract + 8, 2))
    return {
        "head": head,
        "in_frame": in_frame,
        "target": target,
        "angle": angle,
        "candidates": candidates,
        "n_distract": n_distract,
        "focal": (float(rng.uniform(0, 1)), float(rng.uniform(0, 1))),
        "noise": rng.uniform(0, spec.noise, size=(3, spec.image_size, spec.image_size)),
    }


def _render(layout: dict, target, angle, spec: GeneratorSpec, rng: np.random.Generator,
            sample_id: str, sequence_id: int, frame_index: int) -> GazeSample:
    s = spec.image_size
    coords = np.arange(s) / (s - 1)
    xx, yy = np.meshgrid(coords, coords)
    head = layout["head"]
    in_frame = layout["in_frame"]
    end = target if in_frame else _exit_point(head, angle)

    scene = layout["noise"].copy()
    d_head = np.hypot(xx - head[0], yy - head[1])
    scene[0] += np.exp(-(d_head**2) / (2 * 0.035**2))
    d_ray = _segment_distance(xx, yy, head, end)
    scene[1] += 0.8 * np.exp(-(d_ray**2) / (2 * 0.015**2))

    blob_sigma = 0.03
    if in_frame:
        d_t = np.hypot(xx - target[0], yy - target[1])
        scene[2] += np.exp(-(d_t**2) / (2 * blob_sigma**2))
    placed = 0
    for cx, cy in layout["candidates"]:
        if placed == layout["n_distract"]:
            break
        if _segment_distance(np.array(cx), np.array(cy), head, end) < 0.1:
            continue
        if np.hypot(cx - head[0], cy - head[1]) < 0.1:
            continue
        scene[2] += np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * blob_sigma**2))
        placed += 1
    scene = np.round(np.clip(scene, 0, 1), 3)

    fx, fy = layout["focal"]
    depth = np.hypot(xx - fx, yy - fy) / np.sqrt(2)
    if in_frame:
        tx, ty = target
        near = np.hypot(xx - tx, yy - ty) < 2 * blob_sigma
        base = float(np.hypot(tx - fx, ty - fy) / np.sqrt(2))
        depth = np.where(near, (base + 0.5) % 1.0, depth)
    depth = np.round(np.clip(depth, 0, 1), 3)[None]

    mask = ((np.abs(xx - head[0]) <= 0.06) & (np.abs(yy - head[1]) <= 0.06)).astype(np.float64)[None]

    # zoomed crop: a window of a quarter of the image centred on the head
    half = 0.125
    src = np.round((head[0] - half + 2 * half * coords) * (s - 1)).astype(int).clip(0, s - 1)
    src_y = np.round((head[1] - half + 2 * half * coords) * (s - 1)).astype(int).clip(0, s - 1)
    head_crop = scene[:, src_y[:, None], src[None, :]]

    if in_frame:
        pts = np.clip(np.asarray(target) + rng.normal(0.0, spec.jitter, size=(spec.annotators, 2)), 0.0, 1.0)
        annotations = [GazeAnnotation((float(x), float(y)), True) for x, y in pts]
    else:
        annotations = [GazeAnnotation(None, False) for _ in range(spec.annotators)]
    return GazeSample(scene, mask, depth, head_crop, annotations, in_frame, sequence_id, frame_index,
                      sample_id, tuple(target) if in_frame else None)


def generate_sample(seed: int, spec: GeneratorSpec | None = None, sample_id: str | None = None,
                    sequence_id: int = 0) -> GazeSample:
    spec = spec or GeneratorSpec()
    rng = np.random.default_rng(seed)
    layout = _layout(rng, spec)
    return _render(layout, layout["target"], layout["angle"], spec, rng,
                   sample_id if sample_id is not None else str(seed), sequence_id, 0)


def generate_sequence(seed: int, spec: GeneratorSpec | None, frames: int, sequence_id: int = 0) -> list[GazeSample]:
    """A clip with a fixed head whose target drifts by at most ``spec.max_step`` per frame."""
    if frames < 1:
        raise ValueError("a sequence needs at least one frame")
    spec = spec or GeneratorSpec()
    rng = np.random.default_rng(seed)
    layout = _layout(rng, spec)
    target, angle = layout["target"], layout["angle"]
    out = []
    for t in range(frames):
        if t > 0:
            step = rng.normal(size=2)
            step *= rng.uniform(0, spec.max_step) / max(np.linalg.norm(step), 1e-12)
            if layout["in_frame"]:
                nxt = np.asarray(target) + step
                # reflect back inside; a reflection never lengthens the step
                nxt = np.where(nxt < 0.05, 0.1 - nxt, nxt)
                nxt = np.where(nxt > 0.95, 1.9 - nxt, nxt)
                target = (float(nxt[0]), float(nxt[1]))
            else:
                angle = angle + step[0] * 2 * np.pi
        out.append(_render(layout, target, angle, spec, rng, f"{sequence_id}_{t}", sequence_id, t))
    return out


def _sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def generate_dataset(n: int, seed: int, spec: GeneratorSpec | None = None) -> list[GazeSample]:
    """``n`` independent single-frame samples, each its own sequence."""
    return [generate_sample(_sample_seed(seed, i), spec, sample_id=str(i), sequence_id=i) for i in range(n)]


def generate_clips(n_clips: int, frames: int, seed: int, spec: GeneratorSpec | None = None) -> list[GazeSample]:
    out = []
    for i in range(n_clips):
        out.extend(generate_sequence(_sample_seed(seed, i), spec, frames, sequence_id=i))
    return out


def stack_inputs(samples: list[GazeSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    return (
        np.stack([s.scene for s in samples]),
        np.stack([s.head_mask for s in samples]),
        np.stack([s.depth for s in samples]),
        np.stack([s.head_crop for s in samples]),
    )
