"""Command-line entry points: train, eval, visualize, ablate, make-synth.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. Fatal
errors are reported as a single JSON line on stderr so callers can parse
them.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from pxgan import config as config_mod
from pxgan.config import ConfigError, ExperimentConfig
from pxgan.evaluation import FeatureExtractor, gaussian_from_batches
from pxgan.trainer import Trainer, build_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _fail(code: int, message: str, **extra) -> int:
    print(json.dumps({"error": message, **extra}, sort_keys=True), file=sys.stderr)
    return code


def _load_config(args) -> ExperimentConfig:
    path = Path(args.config)
    if not path.is_file():
        raise FileNotFoundError("config not found")
    cfg = config_mod.load(str(path))
    config_mod.apply_overrides(cfg, args.set or [])
    config_mod.validate(cfg)
    return cfg


def cmd_train(args) -> int:
    try:
        if args.resume:
            from pxgan.checkpoint import load_checkpoint

            if not Path(args.resume).is_file():
                return _fail(EXIT_USAGE, f"checkpoint not found: {args.resume}")
            if args.set:
                logger.warning("--set is ignored on resume; the checkpoint's config wins")
            dataset_cfg = config_mod.from_text(load_checkpoint(args.resume).config_text)
            trainer = Trainer.from_checkpoint(args.resume, build_dataset(dataset_cfg))
        else:
            cfg = _load_config(args)
            trainer = Trainer(cfg, build_dataset(cfg))
    except FileNotFoundError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except ConfigError as exc:
        return _fail(EXIT_USAGE, "invalid config", violations=exc.violations)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        final = trainer.run(str(out))
    except Exception as exc:
        return _fail(EXIT_RUNTIME, f"training failed: {exc}")
    print(json.dumps({"final_checkpoint": final, "iterations": trainer.iteration},
                     sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    if not Path(args.checkpoint).is_file():
        return _fail(EXIT_USAGE, f"checkpoint not found: {args.checkpoint}")
    try:
        from pxgan.checkpoint import load_checkpoint

        ckpt = load_checkpoint(args.checkpoint)
        cfg = config_mod.from_text(ckpt.config_text)
        dataset = build_dataset(cfg)
        trainer = Trainer.from_checkpoint(args.checkpoint, dataset)
    except Exception as exc:
        return _fail(EXIT_RUNTIME, f"cannot load checkpoint: {exc}")

    extractor = FeatureExtractor(channels=cfg.model.channels,
                                 num_classes=cfg.eval.is_classes)
    start = time.time()
    scores = trainer.evaluate(extractor)
    record = {"iteration": trainer.iteration, "losses": None,
              "fid": scores["fid"], "is": scores["is"],
              "wall_time": time.time() - start}
    print(json.dumps(record, sort_keys=True))

    if args.real_stats:
        gaussian = gaussian_from_batches(
            extractor, trainer._real_batches(cfg.eval.fid_samples, cfg.eval.eval_batch_size))
        np.savez(args.real_stats, mu=gaussian.mu, sigma=gaussian.sigma,
                 n=gaussian.n, extractor_digest=extractor.digest())
    return EXIT_OK


def cmd_visualize(args) -> int:
    from pxgan.trainer import _sample_z
    from pxgan.visualize import (
        render_cutmix_panel,
        render_decoder_heatmaps,
        render_enc_dec_scatter,
        render_fid_curve,
        render_loss_curves,
    )

    if not Path(args.checkpoint).is_file():
        return _fail(EXIT_USAGE, f"checkpoint not found: {args.checkpoint}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        from pxgan.checkpoint import load_checkpoint

        ckpt = load_checkpoint(args.checkpoint)
        cfg = config_mod.from_text(ckpt.config_text)
        dataset = build_dataset(cfg)
        trainer = Trainer.from_checkpoint(args.checkpoint, dataset)
    except Exception as exc:
        return _fail(EXIT_RUNTIME, f"cannot load checkpoint: {exc}")

    rng = torch.Generator().manual_seed(cfg.train.seed)
    gen = trainer.ema_generator()
    n = min(8, cfg.train.batch_size, len(dataset))
    y = (torch.arange(n) % cfg.model.num_classes) if cfg.model.num_classes > 0 else None

    render_decoder_heatmaps(gen, trainer.d, _sample_z(n, cfg.model, rng),
                            str(out / "heatmaps.png"), y_classes=cfg.model.num_classes)
    with torch.no_grad():
        from pxgan.generator import LatentBatch

        fakes = gen(LatentBatch(z=_sample_z(n, cfg.model, rng), y=y))
    render_enc_dec_scatter(trainer.d, fakes, str(out / "enc_dec_scatter.png"), y=y)
    reals = dataset.images[:n]
    real_y = dataset.labels[:n] if dataset.labels is not None else None
    if real_y is not None:
        with torch.no_grad():
            fakes = gen(LatentBatch(z=_sample_z(n, cfg.model, rng), y=real_y))
    render_cutmix_panel(reals, fakes, trainer.d, str(out / "cutmix_panel.png"),
                        rng, y=real_y)
    if args.metrics and Path(args.metrics).is_file():
        render_fid_curve(args.metrics, str(out / "fid_curve.png"))
        render_loss_curves(args.metrics, str(out / "loss_curves.png"))
    print(json.dumps({"out": str(out)}, sort_keys=True))
    return EXIT_OK


ABLATION_LADDER = (
    ("encoder_only", {"use_decoder_head": False, "use_cutmix": False, "use_consistency": False}),
    ("decoder_head", {"use_decoder_head": True, "use_cutmix": False, "use_consistency": False}),
    ("cutmix_consistency", {"use_decoder_head": True, "use_cutmix": True, "use_consistency": True}),
)


def cmd_ablate(args) -> int:
    try:
        base = _load_config(args)
    except FileNotFoundError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except ConfigError as exc:
        return _fail(EXIT_USAGE, "invalid config", violations=exc.violations)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    failures = 0
    for name, flags in ABLATION_LADDER:
        cfg = ExperimentConfig(
            model=replace(base.model),
            loss=replace(base.loss, **flags),
            train=replace(base.train, total_iterations=args.iterations),
            data=replace(base.data),
            eval=replace(base.eval),
        )
        run_dir = out / f"ablation_{name}"
        try:
            trainer = Trainer(cfg, build_dataset(cfg))
            trainer.run(str(run_dir))
            extractor = FeatureExtractor(channels=cfg.model.channels,
                                         num_classes=cfg.eval.is_classes)
            scores = trainer.evaluate(extractor)
            rows.append({"config": name, "proxy_fid": scores["fid"],
                         "is_proxy": scores["is"], "iterations": trainer.iteration})
        except Exception as exc:
            failures += 1
            logger.exception("ablation leg %s failed", name)
            rows.append({"config": name, "proxy_fid": None, "is_proxy": None,
                         "iterations": None, "error": str(exc)})

    table_path = out / "ablation.json"
    with open(table_path, "w", encoding="utf-8") as fh:
        json.dump({"iterations_per_leg": args.iterations, "rows": rows}, fh,
                  sort_keys=True, indent=2)
        fh.write("\n")

    header = f"{'config':<22}{'proxy-FID':>12}{'IS-proxy':>10}{'iters':>8}"
    print(header)
    for row in rows:
        if row.get("error"):
            print(f"{row['config']:<22}{'FAILED':>12}{'-':>10}{'-':>8}")
        else:
            print(f"{row['config']:<22}{row['proxy_fid']:>12.4f}"
                  f"{row['is_proxy']:>10.4f}{row['iterations']:>8}")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_make_synth(args) -> int:
    from PIL import Image

    from pxgan.data import synth_shapes_dataset

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        dataset = synth_shapes_dataset(args.n, args.image_size, args.classes, args.seed)
    except ValueError as exc:
        return _fail(EXIT_USAGE, str(exc))

    manifest_lines = []
    for i in range(len(dataset)):
        arr = dataset.images[i].numpy()
        arr = np.clip(np.rint(255.0 * (arr + 1.0) / 2.0), 0, 255).astype(np.uint8)
        arr = arr.transpose(1, 2, 0)
        if args.classes > 0:
            label = int(dataset.labels[i])
            class_dir = out / f"class_{label:02d}"
            class_dir.mkdir(exist_ok=True)
            path = class_dir / f"sample_{i:06d}.png"
        else:
            label = -1
            path = out / f"sample_{i:06d}.png"
        Image.fromarray(arr).save(path)
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        manifest_lines.append(f"{path.relative_to(out)}\t{label}\t{digest}")
    (out / "manifest.tsv").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    print(json.dumps({"out": str(out), "n": len(dataset)}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pxgan",
        description="Train and inspect GANs with a dual-headed (per-image + per-pixel) "
                    "U-Net discriminator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the training loop")
    p_train.add_argument("--config", required=False, help="INI config path")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--set", action="append", metavar="section.key=value",
                         help="override a config value")
    p_train.add_argument("--resume", help="checkpoint to resume from")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--real-stats", help="write the real-feature Gaussian cache here")
    p_eval.set_defaults(func=cmd_eval)

    p_vis = sub.add_parser("visualize", help="render heatmaps, panels, and curves")
    p_vis.add_argument("--checkpoint", required=True)
    p_vis.add_argument("--metrics", help="metrics.ndjson for the curve plots")
    p_vis.add_argument("--out", required=True)
    p_vis.set_defaults(func=cmd_visualize)

    p_abl = sub.add_parser("ablate", help="run the cumulative three-config ladder")
    p_abl.add_argument("--config", required=True)
    p_abl.add_argument("--out", required=True)
    p_abl.add_argument("--iterations", type=int, default=1000,
                       help="training iterations per leg")
    p_abl.add_argument("--set", action="append", metavar="section.key=value")
    p_abl.set_defaults(func=cmd_ablate)

    p_synth = sub.add_parser("make-synth", help="write a synthetic shapes dataset folder")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--n", type=int, default=200)
    p_synth.add_argument("--image-size", type=int, default=32)
    p_synth.add_argument("--classes", type=int, default=0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_make_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train" and not args.resume and not args.config:
        return _fail(EXIT_USAGE, "train needs --config (or --resume)")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
