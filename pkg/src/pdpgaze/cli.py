"""Command-line entry point: ``pdpgaze <subcommand> [flags]``.

Exit codes: 0 success, 1 usage/config error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .data import GeneratorSpec, generate_clips, generate_dataset
from .fileio import (FormatError, load_checkpoint, load_dataset, read_manifest, save_checkpoint, save_dataset,
                     write_fgrid, write_pgm)
from .gt import ConfigError, GazeAnnotation, patch_distribution_from_heatmap, render_gaussian_heatmap
from .model import GazeModel
from .trainer import TrainConfig, lr_at, predict, report_from_predictions, train

log = logging.getLogger("pdpgaze")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--config", type=Path, default=None, help="flat key=value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdpgaze", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic dataset (grids + manifest)")
    _common(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, default=200, help="samples, or clips when --frames > 1")
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--p-in", type=float, default=0.5)
    p.add_argument("--annotators", type=int, default=1)
    p.add_argument("--jitter", type=float, default=0.05)
    p.add_argument("--max-step", type=float, default=0.03)

    p = sub.add_parser("make-gt", help="write ground-truth heatmaps and patch distributions")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--mode", choices=["maxpool", "avgpool", "onehot"], default=None)
    p.add_argument("--pgm", action="store_true", help="also emit heatmap images")

    p = sub.add_parser("train", help="train a model and write a checkpoint + loss CSV")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--init", type=Path, default=None, help="start from this checkpoint")
    p.add_argument("--loss-csv", type=Path, default=None)

    for name, helptext in (("eval", "write a MetricReport and quantile table"),
                           ("consistency", "write per-sample Bhattacharyya/JS between PD and PDPH"),
                           ("variance-report", "write the 10-bin annotation-variance AUC table")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--manifest", type=Path, required=True)
        p.add_argument("--checkpoint", type=Path, required=True)
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--frames", type=int, default=1)

    p = sub.add_parser("infer", help="predict heatmap + patch distribution for one sample")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--sample-id", default=None, help="defaults to the first manifest record")
    p.add_argument("--pgm", action="store_true")
    return parser


def _config(args) -> TrainConfig:
    overrides = {} if args.seed is None else {"seed": args.seed}
    if args.config is None:
        return TrainConfig(**overrides)
    if not args.config.exists():
        raise FileNotFoundError(f"config file not found: {args.config}")
    return TrainConfig.from_file(args.config, **overrides)


def _need(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _load_model(args, cfg: TrainConfig) -> GazeModel:
    return load_checkpoint(_need(args.checkpoint), GazeModel(cfg.model_config(), seed=cfg.seed))


def cmd_gen_data(args, cfg: TrainConfig) -> None:
    spec = GeneratorSpec(image_size=cfg.image_size, p_in_frame=args.p_in, annotators=args.annotators,
                         jitter=args.jitter, max_step=args.max_step)
    if args.frames > 1:
        samples = generate_clips(args.n, args.frames, cfg.seed, spec)
    else:
        samples = generate_dataset(args.n, cfg.seed, spec)
    path = save_dataset(args.out, samples)
    print(f"wrote {len(samples)} samples to {path}")


def cmd_make_gt(args, cfg: TrainConfig) -> None:
    mode = args.mode or cfg.gt_mode
    size = cfg.model_config().heatmap_size
    args.out.mkdir(parents=True, exist_ok=True)
    for r in read_manifest(_need(args.manifest)):
        if r.in_frame:
            ann = GazeAnnotation(r.points[0], True)
            hm = render_gaussian_heatmap(ann, size, cfg.heatmap_sigma())
            pd = patch_distribution_from_heatmap(hm, True, cfg.patch_grid, mode, point=ann.point)
        else:
            hm = np.zeros(size)
            pd = patch_distribution_from_heatmap(None, False, cfg.patch_grid, mode)
        write_fgrid(args.out / f"{r.sample_id}_hm.fgrid", hm)
        write_fgrid(args.out / f"{r.sample_id}_pd.fgrid", pd.as_vector())
        if args.pgm:
            write_pgm(args.out / f"{r.sample_id}_hm.pgm", hm)


def cmd_train(args, cfg: TrainConfig) -> None:
    samples = load_dataset(_need(args.manifest))
    model = None
    if args.init is not None:
        model = load_checkpoint(_need(args.init), GazeModel(cfg.model_config(), seed=cfg.seed))
    model, history = train(cfg, samples, model)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out, model)
    loss_csv = args.loss_csv or args.out.with_name(args.out.name + ".losses.csv")
    lines = ["epoch,lr,loss"]
    for e, loss in enumerate(history, 1):
        lines.append(f"{e},{lr_at(cfg.lr, cfg.decay_epochs, cfg.decay_factor, e)!r},{loss!r}")
    loss_csv.write_text("\n".join(lines) + "\n")
    print(f"wrote {args.out} and {loss_csv}")


def _evaluate(args, cfg):
    samples = load_dataset(_need(args.manifest))
    model = _load_model(args, cfg)
    preds = predict(model, samples, frames=args.frames)
    return samples, preds, report_from_predictions(samples, preds, model.config.grid)


def cmd_eval(args, cfg: TrainConfig) -> None:
    _, _, (report, _) = _evaluate(args, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.txt").write_text(report.to_text())
    (args.out / "quantiles.csv").write_text(report.quantile_csv())
    print(report.to_text(), end="")


def cmd_consistency(args, cfg: TrainConfig) -> None:
    _, _, (report, rows) = _evaluate(args, cfg)
    lines = ["sample_id,bhattacharyya,js"]
    lines += [f"{r['sample_id']},{r['bc']!r},{r['js']!r}" for r in rows if "bc" in r]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text("\n".join(lines) + "\n")
    print(f"bhattacharyya={report.bhattacharyya!r} js={report.js!r}")


def cmd_variance_report(args, cfg: TrainConfig) -> None:
    _, _, (report, _) = _evaluate(args, cfg)
    if not report.quantile_table:
        raise ValueError("variance report needs at least 10 in-frame samples")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(report.quantile_csv())
    print(f"wrote {args.out}")


def cmd_infer(args, cfg: TrainConfig) -> None:
    samples = load_dataset(_need(args.manifest))
    if args.sample_id is None:
        sample = samples[0]
    else:
        match = [s for s in samples if s.sample_id == args.sample_id]
        if not match:
            raise KeyError(f"sample {args.sample_id!r} not in {args.manifest}")
        sample = match[0]
    model = _load_model(args, cfg)
    pred = predict(model, [sample])[0]
    args.out.mkdir(parents=True, exist_ok=True)
    write_fgrid(args.out / "heatmap.fgrid", pred.heatmap)
    if pred.dist is not None:
        write_fgrid(args.out / "pd.fgrid", pred.dist)
    if args.pgm:
        write_pgm(args.out / "heatmap.pgm", pred.heatmap)
    print(f"P_in={pred.p_in!r}")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "make-gt": cmd_make_gt,
    "train": cmd_train,
    "eval": cmd_eval,
    "consistency": cmd_consistency,
    "variance-report": cmd_variance_report,
    "infer": cmd_infer,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"config error in {args.config}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        COMMANDS[args.command](args, cfg)
    except (FileNotFoundError, FormatError, ConfigError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
