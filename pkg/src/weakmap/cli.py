"""``weakmap`` command line: gen, train, eval, heatmap, gradcheck.

Every command reads a flat ``key=value`` config (``--config``), then applies
``--set key=value`` pairs and the dedicated flags on top.  Failures exit with
status 1 and print a single ``error:<category>: <message>`` line to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from weakmap import checkpoint
from weakmap.backbone import WeakMapNet, check_input_size
from weakmap.config import ConfigError, RunConfig
from weakmap.evaluate import class_heatmaps, evaluate, write_heatmaps
from weakmap.synthdata import generate_dataset, load_dataset, save_dataset, split_by_subject
from weakmap.tensor import ShapeError
from weakmap.train import train

CHECKPOINT_NAME = "checkpoint.wmc"
LOG_NAME = "train_log.csv"
REPORT_NAME = "report.csv"


class CommandError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides: dict[str, object] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for flag, key in (("seed", "seed"), ("m", "m"), ("k_plus", "k_plus"), ("k_minus", "k_minus"),
                      ("alpha", "alpha"), ("data", "data_dir")):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "no_se", False):
        overrides["use_se"] = False
    cfg = cfg.override(overrides)
    cfg.validate()
    return cfg


def _out_dir(args) -> Path:
    return Path(args.out)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(cfg: RunConfig, args) -> int:
    out = _out_dir(args)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise CommandError("exists", f"{out} exists and is not empty (use --force)")
    samples = generate_dataset(cfg.seed, cfg.n_samples, cfg.num_classes, cfg.image_size, cfg.class_prior,
                               cfg.label_noise, cfg.images_per_subject)
    split = split_by_subject(samples, cfg.fractions, cfg.seed)
    save_dataset(out, samples, split, cfg.num_classes)
    (out / "config.txt").write_text(cfg.dumps())
    counts = np.sum([s.labels for s in samples], axis=0)
    lesions = np.sum([s.true_labels(cfg.num_classes) for s in samples], axis=0)
    print(f"samples {len(samples)} subjects {len({s.subject_id for s in samples})}")
    print(f"split train {len(split.train)} validation {len(split.validation)} evaluation {len(split.evaluation)}")
    for c, (n, t) in enumerate(zip(counts, lesions)):
        print(f"class {c} positives {int(n)} lesions {int(t)}")
    return 0


def _load_data(cfg: RunConfig):
    try:
        samples, split, num_classes = load_dataset(cfg.data_dir)
    except (FileNotFoundError, ValueError) as exc:
        raise CommandError("data", f"cannot load dataset from {cfg.data_dir}: {exc}") from None
    return samples, split, num_classes


def _check_compatible(cfg: RunConfig, samples, num_classes: int) -> None:
    if num_classes != cfg.num_classes:
        raise CommandError("config", f"dataset has {num_classes} classes, config expects {cfg.num_classes}")
    size = samples[0].image.shape[0]
    if cfg.crop_size > size:
        raise CommandError("config", f"crop_size {cfg.crop_size} exceeds dataset image size {size}")
    if samples[0].image.shape[-1] != cfg.input_channels:
        raise CommandError("config", f"dataset has {samples[0].image.shape[-1]} channels, config expects "
                                     f"{cfg.input_channels}")
    try:
        check_input_size(cfg.backbone(), cfg.crop_size, cfg.crop_size)
        check_input_size(cfg.backbone(), size, size)
    except ShapeError as exc:
        raise CommandError("config", str(exc)) from None


def cmd_train(cfg: RunConfig, args) -> int:
    samples, split, num_classes = _load_data(cfg)
    _check_compatible(cfg, samples, num_classes)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    model = WeakMapNet.create(cfg.backbone(), cfg.head(), cfg.seed)
    log_path = out / LOG_NAME
    tmp = log_path.with_name(log_path.name + ".tmp")
    with open(tmp, "w") as fh:
        result = train(model, samples, split, cfg.train(), log_stream=fh)
    tmp.replace(log_path)
    model.params = result.params
    checkpoint.save(out / CHECKPOINT_NAME, model, cfg)
    print(f"epochs {len(result.log)} best_epoch {result.best_epoch} best_val_loss {result.best_val_loss!r}")
    if result.diverged:
        print("warning: training diverged; kept last finite snapshot", file=sys.stderr)
    return 0


def _load_checkpoint(args):
    path = Path(args.checkpoint) if args.checkpoint else _out_dir(args) / CHECKPOINT_NAME
    try:
        return checkpoint.load(path)
    except (checkpoint.CheckpointError, ConfigError) as exc:
        raise CommandError("checkpoint", str(exc)) from None


def _data_for(ckpt_cfg: RunConfig, cfg: RunConfig, args):
    # the dataset location may legitimately differ from training time
    data_cfg = ckpt_cfg.override({"data_dir": cfg.data_dir if args.data is None else args.data})
    samples, split, num_classes = _load_data(data_cfg)
    _check_compatible(ckpt_cfg, samples, num_classes)
    return samples, split


def cmd_eval(cfg: RunConfig, args) -> int:
    model, ckpt_cfg = _load_checkpoint(args)
    samples, split = _data_for(ckpt_cfg, cfg, args)
    report = evaluate(model, samples, split, ckpt_cfg.crop_size, label_source=ckpt_cfg.eval_labels)
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = out / REPORT_NAME
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(report.text())
    tmp.replace(path)
    sys.stdout.write(report.text())
    return 0


def cmd_heatmap(cfg: RunConfig, args) -> int:
    model, ckpt_cfg = _load_checkpoint(args)
    samples, split = _data_for(ckpt_cfg, cfg, args)
    by_id = {s.sample_id: s for s in samples}
    ids = args.samples if args.samples else split.evaluation[:4]
    out = _out_dir(args) / "heatmaps"
    for sid in ids:
        if sid not in by_id:
            raise CommandError("data", f"no sample with id {sid}")
        maps = class_heatmaps(model, model.norm(by_id[sid].image))
        for p in write_heatmaps(out, sid, maps):
            print(p)
    return 0


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    from weakmap.gradcheck import CASES, EPS, TOLERANCE, run_case

    seeds = [cfg.seed + i for i in range(args.seeds)]
    failed = 0
    print(f"{'operator':<22} {'seed':>5} {'max_rel_err':>12}  status")
    for case in CASES:
        for s in seeds:
            err = run_case(case, s, EPS)
            ok = err < TOLERANCE
            failed += not ok
            print(f"{case.name:<22} {s:>5} {err:>12.3e}  {'pass' if ok else 'FAIL'}")
    if failed:
        raise CommandError("gradcheck", f"{failed} case(s) exceeded relative error {TOLERANCE}")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "heatmap": cmd_heatmap, "gradcheck": cmd_gradcheck}


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--data", help="dataset directory (overrides data_dir)")
    common.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    common.add_argument("--no-se", dest="no_se", action="store_true", help="identity gate in transitions")
    common.add_argument("--m", type=int, help="maps per class")
    common.add_argument("--k-plus", dest="k_plus", type=int)
    common.add_argument("--k-minus", dest="k_minus", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--checkpoint", help="checkpoint path (default: OUT/checkpoint.wmc)")

    parser = argparse.ArgumentParser(prog="weakmap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate and split a synthetic dataset")
    sub.add_parser("train", parents=[common], help="train and write checkpoint + epoch log")
    sub.add_parser("eval", parents=[common], help="ten-crop AUC and pointing-game report")
    hm = sub.add_parser("heatmap", parents=[common], help="write per-class heatmap PGMs")
    hm.add_argument("--samples", type=int, nargs="*", help="sample ids (default: first 4 evaluation samples)")
    gc = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every operator")
    gc.add_argument("--seeds", type=int, default=3)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg, args)
    except CommandError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
    except ConfigError as exc:
        print(f"error:config: {exc}", file=sys.stderr)
    except checkpoint.CheckpointError as exc:
        print(f"error:checkpoint: {exc}", file=sys.stderr)
    except (ShapeError, ValueError) as exc:
        print(f"error:invalid: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
