"""Text file formats: FGRID float grids, dataset manifests, checkpoints, PGM images."""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .data import GazeSample
from .gt import GazeAnnotation

FGRID_MAGIC = "FGRID v1"
CKPT_MAGIC = "PDPCKPT v1"


class FormatError(ValueError):
    """A file does not follow its declared text format."""

    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = str(path)
        self.line = line


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# FGRID
# ---------------------------------------------------------------------------

def format_fgrid(grid) -> str:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim == 1:
        grid = grid[None]
    if grid.ndim != 2:
        raise ValueError(f"FGRID holds 2-D grids, got shape {grid.shape}")
    rows, cols = grid.shape
    lines = [FGRID_MAGIC, f"{rows} {cols}"]
    lines.extend(" ".join(map(_fmt, row)) for row in grid)
    return "\n".join(lines) + "\n"


def write_fgrid(path, grid) -> None:
    Path(path).write_text(format_fgrid(grid))


def parse_fgrid(text: str, path="<string>") -> np.ndarray:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FGRID_MAGIC:
        raise FormatError(path, 1, f"expected header {FGRID_MAGIC!r}")
    if len(lines) < 2:
        raise FormatError(path, 2, "missing '<rows> <cols>' line")
    try:
        rows, cols = (int(t) for t in lines[1].split())
    except ValueError:
        raise FormatError(path, 2, f"malformed dimensions {lines[1]!r}") from None
    if rows <= 0 or cols <= 0:
        raise FormatError(path, 2, "dimensions must be positive")
    body = [ln for ln in lines[2:]]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != rows:
        raise FormatError(path, 3 + min(len(body), rows), f"expected {rows} rows, found {len(body)}")
    out = np.empty((rows, cols))
    for i, ln in enumerate(body):
        toks = ln.split()
        if len(toks) != cols:
            raise FormatError(path, 3 + i, f"expected {cols} values, found {len(toks)}")
        try:
            out[i] = [float(t) for t in toks]
        except ValueError:
            raise FormatError(path, 3 + i, "non-numeric value") from None
    return out


def read_fgrid(path) -> np.ndarray:
    return parse_fgrid(Path(path).read_text(), path)


def write_stack(path, arr: np.ndarray) -> None:
    """(C, S, S) arrays are stored as a (C*S, S) grid, channels stacked vertically."""
    arr = np.asarray(arr)
    write_fgrid(path, arr.reshape(-1, arr.shape[-1]))


def read_stack(path, channels: int) -> np.ndarray:
    grid = read_fgrid(path)
    if grid.shape[0] % channels:
        raise FormatError(path, 2, f"{grid.shape[0]} rows do not split into {channels} channels")
    return grid.reshape(channels, grid.shape[0] // channels, grid.shape[1])


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass
class ManifestRecord:
    sample_id: str
    sequence_id: int
    frame_index: int
    in_frame: bool
    scene_path: str
    mask_path: str
    depth_path: str
    headcrop_path: str
    points: list  # normalized (x, y); (-1, -1) marks an out-of-frame annotation

    def to_line(self) -> str:
        coords = " ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in self.points)
        fields = [self.sample_id, str(self.sequence_id), str(self.frame_index), "1" if self.in_frame else "0",
                  self.scene_path, self.mask_path, self.depth_path, self.headcrop_path, str(len(self.points))]
        return "\t".join(fields + ([coords] if coords else []))


def parse_manifest(text: str, path="<string>") -> list[ManifestRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 9:
            raise FormatError(path, lineno, f"expected at least 9 tab-separated fields, found {len(parts)}")
        try:
            seq, frame, flag, count = int(parts[1]), int(parts[2]), int(parts[3]), int(parts[8])
            coords = [float(t) for t in " ".join(parts[9:]).split()]
        except ValueError as exc:
            raise FormatError(path, lineno, f"bad numeric field: {exc}") from None
        if flag not in (0, 1):
            raise FormatError(path, lineno, "in_frame must be 0 or 1")
        if len(coords) != 2 * count:
            raise FormatError(path, lineno, f"ann_count {count} but {len(coords)} coordinates")
        points = [(coords[2 * i], coords[2 * i + 1]) for i in range(count)]
        records.append(ManifestRecord(parts[0], seq, frame, bool(flag), *parts[4:8], points))
    return records


def read_manifest(path) -> list[ManifestRecord]:
    return parse_manifest(Path(path).read_text(), path)


def write_manifest(path, records: Iterable[ManifestRecord]) -> None:
    Path(path).write_text("".join(r.to_line() + "\n" for r in records))


def save_dataset(directory, samples: list[GazeSample], manifest_name: str = "manifest.tsv") -> Path:
    """Write every sample's grids under ``directory/grids`` and the manifest beside them."""
    directory = Path(directory)
    (directory / "grids").mkdir(parents=True, exist_ok=True)
    records = []
    for s in samples:
        names = {}
        for kind, arr in (("scene", s.scene), ("mask", s.head_mask), ("depth", s.depth), ("headcrop", s.head_crop)):
            rel = f"grids/{s.sample_id}_{kind}.fgrid"
            write_stack(directory / rel, arr)
            names[kind] = rel
        points = [a.point if a.in_frame else (-1.0, -1.0) for a in s.annotations]
        records.append(ManifestRecord(s.sample_id, s.sequence_id, s.frame_index, s.in_frame, names["scene"],
                                      names["mask"], names["depth"], names["headcrop"], points))
    path = directory / manifest_name
    write_manifest(path, records)
    return path


def load_dataset(manifest_path) -> list[GazeSample]:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    samples = []
    last_frame: dict[int, int] = {}
    for r in read_manifest(manifest_path):
        prev = last_frame.get(r.sequence_id)
        if prev is not None and r.frame_index <= prev:
            raise FormatError(manifest_path, 0, f"frame_index not increasing in sequence {r.sequence_id}")
        last_frame[r.sequence_id] = r.frame_index
        anns = [GazeAnnotation((x, y), True) if r.in_frame else GazeAnnotation(None, False) for x, y in r.points]
        samples.append(GazeSample(
            read_stack(base / r.scene_path, 3), read_stack(base / r.mask_path, 1),
            read_stack(base / r.depth_path, 1), read_stack(base / r.headcrop_path, 3),
            anns, r.in_frame, r.sequence_id, r.frame_index, r.sample_id,
        ))
    return samples


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model) -> None:
    params = list(model.named_parameters())
    names = [n for n, _ in params]
    if len(set(names)) != len(names):
        raise CheckpointError("parameter names are not unique")
    lines = [CKPT_MAGIC, str(len(params))]
    for name, p in params:
        lines.append(" ".join([name, str(p.ndim)] + [str(d) for d in p.shape]))
        lines.append(" ".join("%.17g" % v for v in p.data.reshape(-1)))
    tmp = f"{path}.tmp{os.getpid()}"
    Path(tmp).write_text("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_checkpoint(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != CKPT_MAGIC:
        raise FormatError(path, 1, f"expected header {CKPT_MAGIC!r} (version mismatch or not a checkpoint)")
    try:
        count = int(lines[1])
    except (IndexError, ValueError):
        raise FormatError(path, 2, "missing tensor count") from None
    tensors = {}
    for i in range(count):
        hl = 3 + 2 * i
        if hl + 1 > len(lines):
            raise FormatError(path, hl, f"truncated: expected {count} tensors, found {i}")
        head = lines[hl - 1].split()
        try:
            name, ndim = head[0], int(head[1])
            shape = tuple(int(d) for d in head[2:])
        except (IndexError, ValueError):
            raise FormatError(path, hl, "malformed tensor header") from None
        if len(shape) != ndim:
            raise FormatError(path, hl, f"header declares {ndim} dims but lists {len(shape)}")
        try:
            vals = np.array([float(t) for t in lines[hl].split()])
        except ValueError:
            raise FormatError(path, hl + 1, "non-numeric value") from None
        if vals.size != int(np.prod(shape)):
            raise FormatError(path, hl + 1, f"{name}: expected {int(np.prod(shape))} values, found {vals.size}")
        tensors[name] = vals.reshape(shape)
    return tensors


def load_checkpoint(path, model):
    """Copy tensors from ``path`` into ``model``'s parameters (in place); returns the model."""
    tensors = read_checkpoint(path)
    params = dict(model.named_parameters())
    unknown = sorted(set(tensors) - set(params))
    if unknown:
        raise CheckpointError(f"unknown parameters in checkpoint: {', '.join(unknown)}")
    missing = sorted(set(params) - set(tensors))
    if missing:
        raise CheckpointError(f"checkpoint is missing parameters: {', '.join(missing)}")
    for name, p in params.items():
        if tensors[name].shape != p.shape:
            raise CheckpointError(f"shape mismatch for {name}: checkpoint {tensors[name].shape}, model {p.shape}")
    for name, p in params.items():
        p.data[...] = tensors[name]
    return model


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

def format_pgm(grid) -> str:
    """Plain (P2) PGM, values min-max scaled to 0..255."""
    grid = np.asarray(grid, dtype=np.float64)
    lo, hi = grid.min(), grid.max()
    scaled = np.zeros_like(grid) if hi <= lo else (grid - lo) / (hi - lo) * 255.0
    pix = np.rint(scaled).astype(int)
    h, w = grid.shape
    rows = [" ".join(map(str, r)) for r in pix]
    return "\n".join(["P2", f"{w} {h}", "255"] + rows) + "\n"


def write_pgm(path, grid) -> None:
    Path(path).write_text(format_pgm(grid))


def read_pgm(path) -> np.ndarray:
    toks = [t for ln in Path(path).read_text().splitlines() if not ln.startswith("#") for t in ln.split()]
    if not toks or toks[0] != "P2":
        raise FormatError(path, 1, "not a plain PGM (P2) file")
    w, h, _maxval = int(toks[1]), int(toks[2]), int(toks[3])
    vals = np.array([int(t) for t in toks[4:]])
    if vals.size != w * h:
        raise FormatError(path, 3, f"expected {w * h} pixels, found {vals.size}")
    return vals.reshape(h, w)
