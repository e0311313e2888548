"""Image-phase training, sequence-phase fine-tuning, and dataset evaluation."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import metrics as M
from .data import GazeSample, stack_inputs
from .gt import PATCH_MODES, ConfigError, GazeAnnotation, default_sigma, patch_distribution_from_heatmap, render_gaussian_heatmap
from .losses import KL_DIRECTIONS, PATCH_LOSSES, LossWeights, binary_cross_entropy, combined_loss, heatmap_mse, patch_loss
from .model import GazeModel, ModelConfig
from .tensor import Adam

log = logging.getLogger(__name__)

PHASES = ("image", "video")


@dataclass
class TrainConfig:
    phase: str = "image"
    lr: float = 2.5e-4
    decay_epochs: list[int] = field(default_factory=lambda: [25, 31, 40])
    decay_factor: float = 0.2
    batch_size: int = 16  # 80 for the full-scale model
    epochs: int = 40
    lambda1: float = 100.0
    lambda2: float = 1.0
    freeze_until: str = ""  # "patch_attn" freezes features, tokens and patch attention
    seed: int = 0
    gt_mode: str = "maxpool"
    patch_grid: tuple[int, int] = (4, 4)
    frames: int = 5
    sigma: float = 0.0  # 0 -> 3 px at 56 px, scaled to the heatmap size
    kl_direction: str = "gt_pred"
    patch_loss: str = "kl"
    # model architecture
    image_size: int = 64
    blocks: int = 4
    backbone_width: int = 32
    channels: int = 32
    temporal: bool = True
    scaled_attention: bool = False
    head_mode: str = "pdp"

    def __post_init__(self):
        self.decay_epochs = [int(e) for e in self.decay_epochs]
        self.patch_grid = tuple(int(g) for g in self.patch_grid)
        if self.phase not in PHASES:
            raise ConfigError(f"phase must be one of {PHASES}")
        if any(b <= a for a, b in zip(self.decay_epochs, self.decay_epochs[1:])):
            raise ConfigError("decay_epochs must be strictly increasing")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.gt_mode not in PATCH_MODES:
            raise ConfigError(f"gt_mode must be one of {PATCH_MODES}")
        if self.kl_direction not in KL_DIRECTIONS:
            raise ConfigError(f"kl_direction must be one of {KL_DIRECTIONS}")
        if self.patch_loss not in PATCH_LOSSES:
            raise ConfigError(f"patch_loss must be one of {PATCH_LOSSES}")
        if self.freeze_until not in ("", "patch_attn"):
            raise ConfigError("freeze_until must be empty or 'patch_attn'")
        LossWeights(self.lambda1, self.lambda2)
        if self.patch_grid != self.model_config().grid:
            raise ConfigError(f"patch_grid {self.patch_grid} does not match the model token grid {self.model_config().grid}")

    @classmethod
    def video(cls, **overrides) -> "TrainConfig":
        base = dict(phase="video", lr=1e-4, decay_epochs=[3, 6], decay_factor=0.5, batch_size=4, epochs=8,
                    freeze_until="patch_attn", frames=5)
        base.update(overrides)
        return cls(**base)

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.image_size, self.blocks, self.backbone_width, self.channels, self.temporal,
                           self.scaled_attention, self.head_mode)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2)

    def heatmap_sigma(self) -> float:
        return self.sigma if self.sigma > 0 else default_sigma(self.model_config().heatmap_size[0])

    # -- flat key=value text ------------------------------------------------
    def to_text(self) -> str:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (list, tuple)):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            out.append(f"{f.name}={v}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "TrainConfig | None" = None, **overrides) -> "TrainConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        values = dataclasses.asdict(base) if base is not None else {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
            key, raw = (t.strip() for t in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw, known[key].type)
        values.update(overrides)
        if base is None and values.get("phase") == "video":
            return cls.video(**values)
        return cls(**values)

    @classmethod
    def from_file(cls, path, **overrides) -> "TrainConfig":
        return cls.from_text(Path(path).read_text(), **overrides)


def _parse_value(key: str, raw: str, typ):
    typ = str(typ)
    try:
        if typ.startswith("list") or typ.startswith("tuple"):
            return [int(t) for t in raw.replace("x", ",").split(",") if t.strip()]
        if typ == "bool":
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def lr_at(base: float, decay_epochs: Sequence[int], factor: float, epoch: int) -> float:
    """Learning rate for 1-based ``epoch``; each decay epoch d applies from epoch d onwards."""
    return base * factor ** sum(1 for d in decay_epochs if epoch >= d)


# ---------------------------------------------------------------------------
# ground truth for a dataset
# ---------------------------------------------------------------------------

def build_targets(samples: Sequence[GazeSample], config: TrainConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Heatmaps (N, H', W'), patch distributions (N, L) and in-frame flags from each first annotation."""
    size = config.model_config().heatmap_size
    sigma = config.heatmap_sigma()
    hms, pds = [], []
    for s in samples:
        ann = s.annotations[0]
        if s.in_frame:
            hm = render_gaussian_heatmap(ann, size, sigma)
            pd = patch_distribution_from_heatmap(hm, True, config.patch_grid, config.gt_mode, point=ann.point)
        else:
            hm = np.zeros(size)
            pd = patch_distribution_from_heatmap(None, False, config.patch_grid, config.gt_mode)
        hms.append(hm)
        pds.append(pd.as_vector())
    flags = np.array([s.in_frame for s in samples], dtype=bool)
    return np.stack(hms), np.stack(pds), flags


def clip_units(samples: Sequence[GazeSample], frames: int) -> list[list[int]]:
    """Indices of consecutive ``frames``-long windows within each sequence."""
    by_seq: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        by_seq.setdefault(s.sequence_id, []).append(i)
    units = []
    for idx in by_seq.values():
        idx = sorted(idx, key=lambda i: samples[i].frame_index)
        units.extend(idx[j: j + frames] for j in range(0, len(idx) - frames + 1, frames))
    return units


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _batch_loss(model: GazeModel, config: TrainConfig, inputs, hm, pd, flags, frames: int):
    out = model(*inputs, frames=frames)
    l_hm = heatmap_mse(out.heatmap, hm, flags)
    if config.head_mode == "inout":
        l_pd = binary_cross_entropy(flags.astype(np.float64), out.p_in)
    else:
        l_pd = patch_loss(pd, out.dist, config.patch_loss, config.kl_direction)
    return combined_loss(l_hm, l_pd, config.loss_weights)


def train(config: TrainConfig, dataset: Sequence[GazeSample], model: GazeModel | None = None,
          progress: bool = False) -> tuple[GazeModel, list[float]]:
    """Train ``model`` (fresh from ``config.seed`` if omitted) and return it with per-epoch mean losses."""
    if not dataset:
        raise ConfigError("training set is empty")
    if model is None:
        model = GazeModel(config.model_config(), seed=config.seed)
    elif model.config.grid != config.patch_grid:
        raise ConfigError("model grid and config patch_grid disagree")
    frames = 1
    if config.phase == "video":
        frames = config.frames
        if frames < 2:
            raise ConfigError("video phase needs frames >= 2")
        if model.temporal_attn is None:
            raise ConfigError("video phase needs a model with temporal attention")
        units = clip_units(dataset, frames)
        if not units:
            raise ConfigError(f"video phase needs sequences of at least {frames} frames")
    else:
        units = [[i] for i in range(len(dataset))]

    params = model.parameters()
    if config.phase == "video" and config.freeze_until == "patch_attn":
        for p in model.front_parameters():
            p.frozen = True
    opt = Adam(params, lr=config.lr)
    hm_all, pd_all, flags_all = build_targets(dataset, config)
    inputs_all = stack_inputs(list(dataset))

    history = []
    for epoch in range(1, config.epochs + 1):
        opt.lr = lr_at(config.lr, config.decay_epochs, config.decay_factor, epoch)
        order = np.random.default_rng([config.seed, epoch]).permutation(len(units))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = np.concatenate([units[u] for u in order[start: start + config.batch_size]])
            inputs = tuple(a[idx] for a in inputs_all)
            loss = _batch_loss(model, config, inputs, hm_all[idx], pd_all[idx], flags_all[idx], frames)
            opt.zero_grad()
            loss.backward()
            opt.step()
            n_units = len(idx) // frames
            total += loss.item() * n_units
            count += n_units
        history.append(total / count)
        if progress:
            log.info("epoch %d lr %.3g loss %.6f", epoch, opt.lr, history[-1])
    return model, history


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class SamplePrediction:
    sample_id: str
    in_frame: bool
    heatmap: np.ndarray
    dist: np.ndarray | None
    p_in: float


def predict(model: GazeModel, samples: Sequence[GazeSample], frames: int = 1, chunk: int = 32) -> list[SamplePrediction]:
    """Forward every sample; with ``frames`` > 1 each sequence is cut into clips of that length."""
    preds: list[SamplePrediction | None] = [None] * len(samples)
    units = [[i] for i in range(len(samples))] if frames == 1 else clip_units(samples, frames)
    covered = {i for u in units for i in u}
    # frames not covered by a full clip run as single images
    units += [[i] for i in range(len(samples)) if i not in covered]
    groups: dict[int, list[list[int]]] = {}
    for u in units:
        groups.setdefault(len(u), []).append(u)
    for t, us in sorted(groups.items()):
        per = max(1, chunk // t)
        for start in range(0, len(us), per):
            idx = np.concatenate(us[start: start + per])
            out = model(*stack_inputs([samples[i] for i in idx]), frames=t)
            for row, i in enumerate(idx):
                dist = None if out.dist is None else out.dist.data[row].copy()
                preds[i] = SamplePrediction(samples[i].sample_id, samples[i].in_frame,
                                            out.heatmap.data[row].copy(), dist, float(out.p_in.data[row]))
    return preds


def center_prior_heatmap(size: tuple[int, int]) -> np.ndarray:
    return render_gaussian_heatmap(GazeAnnotation((0.5, 0.5)), size, default_sigma(size[0]))


def report_from_predictions(samples: Sequence[GazeSample], preds: Sequence[SamplePrediction],
                            patch_grid: tuple[int, int]) -> tuple[M.MetricReport, list[dict]]:
    rows = []
    aucs, avgs, mins, bcs, jss, variances = [], [], [], [], [], []
    for s, p in zip(samples, preds):
        row = {"sample_id": s.sample_id, "in_frame": s.in_frame, "p_in": p.p_in}
        if s.in_frame:
            pts = s.points()
            a = M.auc(p.heatmap, pts)
            d_avg, d_min = M.distances(p.heatmap, pts)
            aucs.append(a)
            avgs.append(d_avg)
            mins.append(d_min)
            variances.append(s.variance_score)
            row.update(auc=a, avg_dist=d_avg, min_dist=d_min, variance=s.variance_score)
            if p.dist is not None:
                ref = M.pdph(p.heatmap, patch_grid)
                row["bc"] = M.bhattacharyya(p.dist, ref)
                row["js"] = M.js_divergence(p.dist, ref)
                bcs.append(row["bc"])
                jss.append(row["js"])
        rows.append(row)
    flags = [s.in_frame for s in samples]
    ap = M.ap_out_of_frame([p.p_in for p in preds], flags) if not all(flags) else float("nan")
    table = M.quantile_breakdown(variances, aucs) if len(aucs) >= 10 else []
    nan = float("nan")
    report = M.MetricReport(
        auc=float(np.mean(aucs)) if aucs else nan,
        avg_dist=float(np.mean(avgs)) if avgs else nan,
        min_dist=float(np.mean(mins)) if mins else nan,
        ap_out=ap,
        n_samples=len(samples),
        n_in_frame=len(aucs),
        bhattacharyya=float(np.mean(bcs)) if bcs else nan,
        js=float(np.mean(jss)) if jss else nan,
        quantile_table=table,
    )
    return report, rows


def evaluate(model: GazeModel, dataset: Sequence[GazeSample], frames: int = 1) -> M.MetricReport:
    """Metrics over ``dataset``; ``frames`` == 1 bypasses temporal attention."""
    grid = model.config.grid
    report, _ = report_from_predictions(dataset, predict(model, dataset, frames), grid)
    return report


def center_prior_auc(dataset: Sequence[GazeSample], size: tuple[int, int]) -> float:
    prior = center_prior_heatmap(size)
    return float(np.mean([M.auc(prior, s.points()) for s in dataset if s.in_frame]))

