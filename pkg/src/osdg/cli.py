"""Command line entry point: ``osdg <subcommand> [--config ...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import numerics as nx
from .datasets import ColoredSet, ConfigError, dump_colored, write_idx
from .generator import GeneratorTrainConfig, reconstruction_error, train_generator
from .glyphs import synth_digits_u8
from .metrics import metrics_csv
from .runner.checkpoint import save_checkpoint
from .runner.config import DETECTOR_NAMES, ExperimentConfig, load_config
from .runner.experiment import (RunManifest, build_generator, build_splits,
                                evaluate_checkpoint, train)
from .runner.report import report
from .runner.search import random_search

log = logging.getLogger("osdg")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_updates(train={"seed": args.seed})
    if getattr(args, "arm", None):
        cfg = cfg.with_updates(arm=args.arm)
    if getattr(args, "detectors", None):
        dets = tuple(d.strip() for d in args.detectors.split(",") if d.strip())
        cfg = cfg.with_updates(evaluation={"detectors": dets})
    if args.out:
        cfg = cfg.with_updates(output_dir=args.out)
    return cfg


def cmd_prepare_data(args) -> int:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.data.source == "synthetic":
        images, labels = synth_digits_u8(cfg.data.synthetic_count, cfg.data.synthetic_seed)
        write_idx(out / cfg.data.images, out / cfg.data.labels, images, labels)
        log.info("wrote %d rendered digits as IDX into %s", len(labels), out)
    splits = build_splits(cfg)
    for name, split in splits.items():
        dump_colored(out / f"{name}.osdgdata", split)
    if args.blend_grid:
        G = build_generator(cfg)
        rng = nx.rng_stream(nx.derive_seed(cfg.train.seed, 99))
        train_set = splits["train"].subset(slice(0, 64))
        grid = G.synth_ood_batch(train_set.images, train_set.labels, rng, cfg.blend.law())
        dump_colored(out / "blend_grid.osdgdata",
                     ColoredSet(grid, np.full(len(grid), -1), np.full(len(grid), 255)))
    print(f"splits written to {out}: " +
          ", ".join(f"{k}={len(v)}" for k, v in splits.items()))
    return 0


def cmd_train_g(args) -> int:
    cfg = _config(args)
    g = cfg.generator
    splits = build_splits(cfg)
    gcfg = GeneratorTrainConfig(g.semantic_dim, g.variation_dim, g.hidden, g.epochs,
                                cfg.train.batch_size, g.lr, g.swap_weight, cfg.train.seed,
                                g.pca_init)
    G = train_generator(splits["train"].images, gcfg)
    out = Path(cfg.output_dir)
    path = out / "generator.ckpt"
    save_checkpoint(path, G.state())
    held_out = splits["val"] if len(splits["val"]) else splits["train"]
    err = reconstruction_error(G, held_out.images)
    print(f"generator checkpoint: {path} (held-out l1 per pixel {err:.4f})")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    res = train(cfg, out_dir=out, run_id=f"{cfg.arm}-seed{cfg.train.seed}")
    m = res.manifest
    (out / "metrics.csv").write_text(metrics_csv([(m.run_id, m.seed, m.ood_classes, r)
                                                  for r in m.rows()]))
    print(f"checkpoint {m.checkpoint}; final loss {json.dumps(m.final_loss)}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    if not args.checkpoint:
        raise ConfigError("evaluate needs --checkpoint")
    splits = build_splits(cfg)
    rows = evaluate_checkpoint(args.checkpoint, splits, cfg.evaluation.detectors,
                               cfg.evaluation.ddu_ridge)
    text = metrics_csv([(Path(args.checkpoint).stem, cfg.train.seed,
                         cfg.split.ood_classes, r) for r in rows])
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_search(args) -> int:
    cfg = _config(args)
    result = random_search(cfg.search, cfg, out_dir=cfg.output_dir)
    failed = sum(t.failed for t in result.trials)
    print(f"{len(result.trials)} trials ({failed} failed); results in {cfg.output_dir}")
    return 0


def cmd_report(args) -> int:
    paths: list[Path] = []
    for p in map(Path, args.paths):
        paths.extend(sorted(p.rglob("*.manifest.json")) if p.is_dir() else [p])
    manifests = [RunManifest.from_json(p.read_text()) for p in paths]
    manifests = [m for m in manifests if m.metrics]
    if not manifests:
        raise ConfigError("no manifests with metrics found")
    csv_text, table = report(manifests)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(csv_text)
    (out / "summary.txt").write_text(table)
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osdg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, arm=True, detectors=True):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="master seed (u64)")
        p.add_argument("--out", help="output directory")
        if detectors:
            p.add_argument("--detectors", help=f"comma list from {','.join(DETECTOR_NAMES)}")
        if arm:
            p.add_argument("--arm", choices=("erm", "fsi"))

    p = sub.add_parser("prepare-data", help="render/load digits and dump colored splits")
    common(p, arm=False, detectors=False)
    p.add_argument("--blend-grid", action="store_true", help="also dump synthetic OOD examples")
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("train-g", help="train the learned generator")
    common(p, arm=False, detectors=False)
    p.set_defaults(func=cmd_train_g)

    p = sub.add_parser("train", help="train one network and evaluate it")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on the test domain")
    common(p)
    p.add_argument("--checkpoint", required=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="random hyperparameter search protocol")
    common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("report", help="summarize manifests into mean ± std tables")
    p.add_argument("paths", nargs="+", help="manifest files or directories")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, nx.TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
