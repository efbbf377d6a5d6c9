"""Command-line entry point: ``bridgenet <subcommand>``.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numeric failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .config import load_run_config, write_run_config
from .data import SCALES, cache_size, read_patch_cache, split_dataset, write_patch_cache
from .errors import BridgeNetError, ConfigError
from .models import CORE_VARIANTS, VARIANTS, count_parameters
from .training import Trainer

log = logging.getLogger("bridgenet")

LOG_NAME = "train.log"
METRICS_NAME = "metrics.jsonl"


def _shared(p):
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--scale", type=int, choices=SCALES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--variant", choices=sorted(VARIANTS))


def _data_flags(p):
    p.add_argument("--data-root", help="dataset root (default $BRIDGENET_DATA_ROOT)")
    p.add_argument("--dataset", choices=["middlebury", "nyu_v2"])


def build_parser():
    parser = argparse.ArgumentParser(prog="bridgenet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="crop patches and build a patch cache")
    _shared(p)
    _data_flags(p)
    p.add_argument("--part", choices=["train", "test"], default="train")
    p.add_argument("--force", action="store_true", help="rebuild an existing cache")

    p = sub.add_parser("train", help="train a model on a patch cache")
    _shared(p)
    p.add_argument("--cache", help="patch cache directory")
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps", type=int, help="stop after this many steps")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--resume", help="checkpoint to resume from")

    p = sub.add_parser("eval", help="score a checkpoint (or bicubic) on the test split")
    _shared(p)
    _data_flags(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--checkpoint")
    g.add_argument("--bicubic", action="store_true", help="evaluate the bicubic baseline")

    p = sub.add_parser("ablate", help="train and score several variants")
    _shared(p)
    _data_flags(p)
    p.add_argument("--cache", help="patch cache directory")
    p.add_argument("--variants", default=",".join(CORE_VARIANTS + ["habdg_replaced_by_concat"]))
    p.add_argument("--steps", type=int, default=200)

    p = sub.add_parser("export", help="write prediction/error/montage PNGs")
    _shared(p)
    _data_flags(p)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("make-synthetic", help="write a small synthetic RGB-D dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--train", type=int, default=8)
    p.add_argument("--test", type=int, default=2)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    return parser


def resolve(args):
    overrides = {
        "dataset": getattr(args, "dataset", None),
        "data_root": getattr(args, "data_root", None),
        "cache": getattr(args, "cache", None),
        "out": args.out,
        "train": {
            "scale": args.scale,
            "seed": args.seed,
            "variant": args.variant,
            "epochs": getattr(args, "epochs", None),
            "max_steps": getattr(args, "steps", None),
            "batch_size": getattr(args, "batch_size", None),
            "lr0": getattr(args, "lr", None),
        },
    }
    return load_run_config(args.config, overrides)


def _require(value, flag):
    if value is None:
        raise ConfigError(f"{flag} is required")
    return value


def cmd_prepare_data(args):
    cfg = resolve(args)
    root = cfg.resolved_data_root()
    out = Path(_require(cfg.out or cfg.cache, "--out"))
    existing = cache_size(out)
    if existing is not None and not args.force:
        print(f"cache {out} already holds {existing} patches (use --force to rebuild)")
        return 0
    split = split_dataset(cfg.dataset, root)
    n = write_patch_cache(split.load(args.part), cfg.train.scale, out)
    print(f"wrote {n} patches to {out}")
    return 0


def _append_log(run_dir, m):
    line = f"{m.epoch} {m.step} {_num(m.loss_dsr)} {_num(m.loss_mde)} {m.lr:.6g}\n"
    with open(run_dir / LOG_NAME, "a") as f:
        f.write(line)


def _num(v):
    return "nan" if v is None else f"{v:.8f}"


def cmd_train(args):
    cfg = resolve(args)
    tc = cfg.train
    run_dir = Path(_require(cfg.out, "--out"))
    cache = _require(cfg.cache, "--cache")
    patches = read_patch_cache(cache)
    if patches and patches[0].scale != tc.scale:
        raise ConfigError(f"cache {cache} holds x{patches[0].scale} patches, config says x{tc.scale}")
    if tc.epochs is None and tc.max_steps is None:
        raise ConfigError("set --epochs or --steps (or train.epochs in the config)")

    if args.resume:
        trainer, header = load_checkpoint(args.resume, tc)
        log.info("resumed from %s at step %d", args.resume, trainer.step)
    else:
        trainer = Trainer(tc)
        if (run_dir / LOG_NAME).exists():
            (run_dir / LOG_NAME).unlink()
    run_dir.mkdir(parents=True, exist_ok=True)
    write_run_config(cfg, run_dir / "config.yaml")
    (run_dir / "parameters.json").write_text(json.dumps(
        {name: list(p.shape) for name, p in trainer.model.named_parameters()}, indent=1))

    def on_epoch(epoch, run):
        ms = [m for m in run if m.epoch == epoch]
        record = {
            "epoch": epoch,
            "steps": len(ms),
            "loss_dsr": _mean([m.loss_dsr for m in ms]),
            "loss_mde": _mean([m.loss_mde for m in ms]),
            "lr": ms[-1].lr if ms else None,
        }
        with open(run_dir / METRICS_NAME, "a") as f:
            f.write(json.dumps(record) + "\n")
        if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(trainer, run_dir / f"epoch{epoch + 1:04d}.ckpt", record)

    run = trainer.fit(patches, on_step=lambda m: _append_log(run_dir, m), on_epoch=on_epoch)
    last = run[-1] if run else None
    metrics = {"loss_dsr": last.loss_dsr, "loss_mde": last.loss_mde} if last else {}
    save_checkpoint(trainer, run_dir / "last.ckpt", metrics)
    print(f"trained {len(run)} steps ({count_parameters(trainer.model)} parameters); "
          f"checkpoint {run_dir / 'last.ckpt'}")
    return 0


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return sum(xs) / len(xs) if xs else None


def _test_samples(cfg):
    split = split_dataset(cfg.dataset, cfg.resolved_data_root())
    return split.load("test")


def cmd_eval(args):
    from .evaluation import (bicubic_predictor, evaluate_model, evaluate_samples, format_eval,
                             write_json)

    cfg = resolve(args)
    samples = _test_samples(cfg)
    scale = cfg.train.scale
    if args.bicubic:
        results, name = evaluate_samples(bicubic_predictor, samples, scale), "bicubic"
    else:
        if args.scale is None:
            header, _ = read_checkpoint(args.checkpoint)
            scale = header["config"]["scale"]
        results = evaluate_model(args.checkpoint, samples, scale)
        name = Path(args.checkpoint).stem
    text = format_eval(results, f"{name} x{scale} ({cfg.dataset})")
    print(text)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.txt").write_text(text + "\n")
        write_json(out / "eval.json", [r.to_dict(name) for r in results.values()])
    return 0


def cmd_ablate(args):
    from .evaluation import format_table, run_ablation, write_json

    cfg = resolve(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    patches = read_patch_cache(_require(cfg.cache, "--cache"))
    rows = run_ablation(variants, cfg.train, patches, _test_samples(cfg), args.steps)
    text = format_table(rows)
    print(text)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.txt").write_text(text + "\n")
        write_json(out / "ablation.json", [
            {"variant": r.variant, "scale": cfg.train.scale, "metric": "MAD",
             "per_image": r.per_image, "average": r.mad, "parameters": r.parameters}
            for r in rows
        ])
    return 0


def cmd_export(args):
    from .evaluation import export_visuals, model_predictor

    cfg = resolve(args)
    trainer, header = load_checkpoint(args.checkpoint)
    scale = trainer.cfg.scale
    if args.scale is not None and args.scale != scale:
        raise ConfigError(f"checkpoint is x{scale}, --scale says x{args.scale}")
    out = Path(_require(cfg.out, "--out"))
    written, _ = export_visuals(model_predictor(trainer.model), _test_samples(cfg), scale, out)
    print(f"wrote {len(written)} files under {out / str(scale)}")
    return 0


def cmd_make_synthetic(args):
    from .synthetic import write_dataset

    root = write_dataset(args.out, args.train, args.test, (args.size, args.size), seed=args.seed)
    print(f"wrote synthetic dataset to {root}")
    return 0


COMMANDS = {
    "prepare-data": cmd_prepare_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "export": cmd_export,
    "make-synthetic": cmd_make_synthetic,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BridgeNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
