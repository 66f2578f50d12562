"""Grasp detection with Gaussian-guided targets.

Subcommands: prepare, train, evaluate, predict, encode-viz, ablate, sweep.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .checkpoint import CheckpointError, load_checkpoint
from .data import (AugmentError, DatasetError, InputError, SampleRecord, Source, SplitError, assemble_input,
                   read_split_file, write_split_file)
from .data.records import ParseSummary
from .data.dataset import load_records
from .evaluation import evaluate, planar_to_rects
from .experiments import (DEFAULT_SCALE_FACTORS, ExperimentConfig, ablation_matrix, open_dataset,
                          run_experiment, split_dataset, sweep_scale_factor)
from .grasp_core import decode_grasps, encode_grasp_maps
from .network import ConfigError, forward
from .training import TrainingError
from .viz import save_maps, save_overlay

log = logging.getLogger("gaussgrasp")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    config_path: Optional[str]
    seed: int
    output_dir: str
    started: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))
    argv: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "manifest.yaml"
        path.write_text(yaml.safe_dump(self.__dict__, sort_keys=False))
        return path


# ----------------------------------------------------------------------------
# configuration


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file {p} does not exist")
    try:
        doc = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as exc:
        raise UsageError(f"cannot parse {p}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"{p} must hold a mapping of sections")
    return doc


def _set(doc: dict, key: str, value):
    if value is None:
        return
    if "." in key:
        section, name = key.split(".", 1)
        doc.setdefault(section, {})
        doc[section][name] = value
    else:
        doc[key] = value


def resolve_config(args) -> ExperimentConfig:
    """Flags override the config file, which overrides built-in defaults."""
    doc = _load_config_file(getattr(args, "config", None))
    get = lambda name: getattr(args, name, None)  # noqa: E731
    if get("gauss_t") is not None and get("no_ggr"):
        raise UsageError("--gauss-t has no effect with --no-ggr")
    if get("gauss_t") is not None and get("gauss_t") <= 0:
        raise UsageError("--gauss-t must be positive")
    _set(doc, "dataset", get("dataset"))
    _set(doc, "data_dir", get("data_dir"))
    _set(doc, "split", get("split"))
    _set(doc, "test_fraction", get("test_fraction"))
    _set(doc, "seed", get("seed"))
    _set(doc, "input.channels", get("input"))
    _set(doc, "input.size", get("size"))
    _set(doc, "train.epochs", get("epochs"))
    _set(doc, "train.batch_size", get("batch_size"))
    _set(doc, "train.learning_rate", get("lr"))
    _set(doc, "encoder.T_x", get("gauss_t"))
    _set(doc, "encoder.T_y", get("gauss_t"))
    _set(doc, "match.top_k", get("top_k"))
    if get("no_ggr"):
        _set(doc, "encoder.mode", "binary")
    if get("no_rfbm"):
        _set(doc, "network.rfb_enabled", False)
    if get("no_mdafn"):
        _set(doc, "network.mdafn_enabled", False)
    if get("no_augment"):
        _set(doc, "train.augment", False)
    try:
        return ExperimentConfig.from_dict(doc)
    except (ConfigError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _start(args, cfg_doc: dict, seed: int) -> Path:
    out = Path(args.out)
    RunManifest(args.command, args.config, seed, str(out), argv=sys.argv[1:], config=cfg_doc).write(out)
    return out


# ----------------------------------------------------------------------------
# commands


def cmd_prepare(args) -> int:
    cfg = resolve_config(args)
    out = _start(args, cfg.to_dict(), cfg.seed)
    summary = ParseSummary()
    records = load_records(cfg.dataset, Path(cfg.data_dir), summary)
    from .data import make_splits
    train_ids, test_ids = make_splits(records, cfg.split, cfg.test_fraction, cfg.seed)
    write_split_file(out / "train_ids.txt", train_ids)
    write_split_file(out / "test_ids.txt", test_ids)
    print(f"{len(records)} samples ({len(train_ids)} train, {len(test_ids)} test); "
          f"skipped {len(summary.skipped_samples)} samples, {summary.skipped_grasps} grasps")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = _start(args, cfg.to_dict(), cfg.seed)
    res = run_experiment(cfg, out)
    if res.report is not None:
        print(f"accuracy {100 * res.report.accuracy:.1f}")
    return EXIT_OK


def _checkpoint_config(doc: dict) -> ExperimentConfig:
    keep = {k: v for k, v in doc.items() if k in ExperimentConfig.__dataclass_fields__}
    return ExperimentConfig.from_dict(keep)


def cmd_evaluate(args) -> int:
    net, doc = load_checkpoint(args.checkpoint)
    cfg = _checkpoint_config(doc)
    override = {k: v for k, v in dict(data_dir=args.data_dir, dataset=args.dataset, seed=args.seed,
                                      split=args.split, test_fraction=args.test_fraction).items()
                if v is not None}
    doc2 = cfg.to_dict()
    doc2.update(override)
    if args.top_k is not None:
        doc2["match"]["top_k"] = args.top_k
    cfg = ExperimentConfig.from_dict(doc2)
    cfg.train.augment = False
    out = _start(args, {**cfg.to_dict(), "checkpoint": str(args.checkpoint)}, cfg.seed)
    dataset = open_dataset(cfg)
    if args.ids:
        ids = read_split_file(Path(args.ids))
    elif args.subset == "all":
        ids = dataset.ids
    else:
        train_ids, test_ids = split_dataset(cfg, dataset)
        ids = test_ids if args.subset == "test" else train_ids
    unknown = sorted(set(ids) - set(dataset.ids))
    if unknown:
        raise DatasetError(f"unknown sample ids: {unknown[:5]}")
    report = evaluate(net, dataset, ids, cfg.match, w_max=cfg.encoder.w_max,
                      smooth_sigma=cfg.train.smooth_sigma, split_mode=cfg.split)
    report.write(out / "report.json")
    print(f"{100 * report.accuracy:.1f}")
    return EXIT_OK


def _predict_record(path: Path, rgb: Optional[Path], channels) -> SampleRecord:
    depth = None if channels.value == "rgb" else path
    if channels.value == "rgb":
        rgb = path
    return SampleRecord(path.stem, path.stem, depth, [], Source.CORNELL, rgb_path=rgb)


def cmd_predict(args) -> int:
    net, doc = load_checkpoint(args.checkpoint)
    cfg = _checkpoint_config(doc)
    top_k = args.top_k or 1
    out = _start(args, {**cfg.to_dict(), "checkpoint": str(args.checkpoint), "top_k": top_k}, cfg.seed)
    rgbs = args.rgb or []
    if cfg.input.channels.value == "rgbd" and len(rgbs) != len(args.images):
        raise UsageError("rgbd checkpoints need one --rgb image per depth image")
    failures = 0
    for i, image_path in enumerate(map(Path, args.images)):
        rgb = Path(rgbs[i]) if i < len(rgbs) else None
        try:
            image, _ = assemble_input(_predict_record(image_path, rgb, cfg.input.channels), cfg.input)
        except (OSError, ValueError) as exc:
            print(f"error: {image_path}: {exc}", file=sys.stderr)
            failures += 1
            continue
        maps = forward(net, image)
        grasps = decode_grasps(maps, k=top_k, smooth_sigma=cfg.train.smooth_sigma, w_max=cfg.encoder.w_max)
        stem = out / image_path.stem
        save_maps(maps, stem, cfg.encoder.w_max)
        save_overlay(image, planar_to_rects(grasps), stem.with_name(f"{stem.name}_overlay.png"))
        record = {"image": str(image_path), "grasps": [g.as_dict() for g in grasps]}
        stem.with_name(f"{stem.name}_grasps.json").write_text(json.dumps(record, indent=2) + "\n")
    if failures == len(args.images):
        return EXIT_FAILURE
    return EXIT_OK


def cmd_encode_viz(args) -> int:
    cfg = resolve_config(args)
    cfg.train.augment = False
    out = _start(args, {**cfg.to_dict(), "sample": args.sample}, cfg.seed)
    dataset = open_dataset(cfg)
    if args.sample not in dataset.ids:
        raise DatasetError(f"unknown sample id {args.sample!r}")
    image, rects = dataset.get(args.sample)
    maps = encode_grasp_maps(rects, cfg.encoder, image.shape[-2:])
    stem = out / f"{args.sample}_target"
    save_maps(maps, stem, cfg.encoder.w_max)
    save_overlay(image, [], stem.with_name(f"{stem.name}_overlay.png"), labels=rects)
    print(f"peak quality {float(maps.quality.max()):.3f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    out = _start(args, cfg.to_dict(), cfg.seed)
    rows = ablation_matrix(cfg, out)
    for r in rows:
        acc = "-" if r["accuracy"] is None else f"{r['accuracy']:.1f}"
        print(f"GGR={r['GGR']:d} RFBM={r['RFBM']:d} MDAFN={r['MDAFN']:d} accuracy {acc} reference {r['reference']}")
    return EXIT_OK


def _parse_values(text: Optional[str]) -> list[float]:
    if text is None:
        return list(DEFAULT_SCALE_FACTORS)
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise UsageError("--values needs at least one number")
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise UsageError(f"bad --values: {text!r}") from exc
    if min(values) <= 0:
        raise UsageError("--values must be positive")
    return values


def cmd_sweep(args) -> int:
    values = _parse_values(args.values)
    cfg = resolve_config(args)
    out = _start(args, {**cfg.to_dict(), "values": values}, cfg.seed)
    for r in sweep_scale_factor(cfg, values, out):
        print(f"T={r['T']} accuracy {'-' if r['accuracy'] is None else format(r['accuracy'], '.1f')}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser


def _common(required_out=True) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="YAML file with input/network/encoder/train/... sections")
    p.add_argument("--out", required=required_out, help="output directory")
    return p


def _data_flags(p, split=True):
    p.add_argument("--dataset", choices=["cornell", "jacquard"], default=None)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--input", choices=["d", "rgb", "rgbd"], default=None)
    p.add_argument("--size", type=int, default=None, help="network input side in pixels")
    if split:
        p.add_argument("--split", choices=["image", "object"], default=None)
        p.add_argument("--test-fraction", type=float, default=None)


def _train_flags(p):
    _data_flags(p)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--gauss-t", type=float, default=None)
    p.add_argument("--no-ggr", action="store_true")
    p.add_argument("--no-rfbm", action="store_true")
    p.add_argument("--no-mdafn", action="store_true")
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--top-k", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaussgrasp", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    p = sub.add_parser("prepare", parents=[common], help="parse a dataset and write split files")
    _data_flags(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", parents=[common], help="train and evaluate one model")
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", choices=["cornell", "jacquard"], default=None)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--split", choices=["image", "object"], default=None)
    p.add_argument("--test-fraction", type=float, default=None)
    p.add_argument("--subset", choices=["test", "train", "all"], default="test")
    p.add_argument("--ids", default=None, help="split file with one sample id per line")
    p.add_argument("--top-k", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="grasp maps and overlays for images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("images", nargs="+")
    p.add_argument("--rgb", nargs="*", default=None, help="RGB images paired with depth images")
    p.add_argument("--top-k", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("encode-viz", parents=[common], help="render the encoded targets of one sample")
    _data_flags(p, split=False)
    p.add_argument("--sample", required=True)
    p.add_argument("--gauss-t", type=float, default=None)
    p.add_argument("--no-ggr", action="store_true")
    p.set_defaults(func=cmd_encode_viz)

    p = sub.add_parser("ablate", parents=[common], help="component ablation table")
    _train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", parents=[common], help="Gaussian scale factor sweep")
    _train_flags(p)
    p.add_argument("--values", default=None, help="comma-separated T values")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "top_k", None) is not None and args.top_k < 1:
        print("error: --top-k must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, DatasetError, SplitError, InputError, AugmentError, TrainingError, ConfigError,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
