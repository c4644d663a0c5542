"""Command line entry point: ``sbdehaze <subcommand> ...``.

Exit status: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import checkpoint
from . import tensor as T
from .config import ExperimentConfig
from .data import list_images, read_image, write_image
from .errors import ConfigError, ContractError, DimensionError, DomainError, SBError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ConfigError, ContractError, DimensionError, DomainError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _u64(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _load_config(args, kind=None):
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig.for_kind(kind or "synth-haze")
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "out", None):
        changes["out_dir"] = args.out
    return cfg.with_overrides(**changes) if changes else cfg


def cmd_train(args):
    from .experiment import run_experiment

    cfg = _load_config(args)
    final = run_experiment(cfg, verbose=not args.quiet)
    for key, value in final.items():
        print(f"{key}\t{value:.6g}")
    return EXIT_OK


def cmd_infer(args):
    from .experiment import load_state
    from .trainer import infer

    cfg, state = load_state(args.checkpoint)
    if args.nfe > cfg.n_intervals and not args.allow_fine_grid:
        raise ConfigError(f"--nfe must lie in 1..{cfg.n_intervals} (use --allow-fine-grid to exceed)")
    os.makedirs(args.out, exist_ok=True)
    with T.precision(cfg.precision):
        if cfg.kind == "toy2d":
            points = np.loadtxt(args.input, delimiter=",", ndmin=2)
            out = infer(points, args.nfe, state, seed=args.seed or 0)
            target = os.path.join(args.out, "points.csv")
            np.savetxt(target, out, delimiter=",", fmt="%.9g")
            print(target)
            return EXIT_OK
        names = list_images(args.input)
        if not names:
            raise ConfigError(f"no PNG/PPM images in {args.input}")
        for name in names:
            img = read_image(os.path.join(args.input, name))
            out = infer(img[None], args.nfe, state, seed=args.seed or 0)[0]
            write_image(os.path.join(args.out, os.path.splitext(name)[0] + ".png"), out)
        print(f"wrote {len(names)} images to {args.out}")
    return EXIT_OK


def cmd_eval(args):
    from .experiment import EVAL_COLUMNS, eval_dirs

    rows, missing = eval_dirs(args.pred, args.gt, args.out)
    writer = csv.writer(sys.stdout)
    writer.writerow(EVAL_COLUMNS)
    for name, p, s in rows:
        writer.writerow((name, f"{p:.4f}", f"{s:.4f}"))
    if missing:
        print("missing counterpart: " + ", ".join(missing), file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_oracle_check(args):
    from .checks import run_all

    results = run_all(seed=args.seed or 0)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def cmd_synth_data(args):
    from .experiment import build_image_data

    cfg = _load_config(args)
    if cfg.kind != "synth-haze":
        raise ConfigError("synth-data needs a synth-haze config")
    ds = build_image_data(cfg)
    out = args.out or cfg.out_dir
    groups = {"hazy": (ds.hazy, ds.hazy_source), "clear": (ds.clear, ds.clear_source),
              "test_hazy": (ds.test_hazy, ds.test_source), "test_gt": (ds.test_clear, ds.test_source)}
    with_rows = []
    for folder, (images, sources) in groups.items():
        if images is None:
            continue
        os.makedirs(os.path.join(out, folder), exist_ok=True)
        for img, src in zip(images, sources):
            name = f"{int(src):05d}.png"
            write_image(os.path.join(out, folder, name), img)
            with_rows.append((folder, name, int(src)))
    with open(os.path.join(out, "manifest.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("split", "file", "source"))
        w.writerows(with_rows)
    print(f"wrote {len(with_rows)} images to {out}")
    return EXIT_OK


def cmd_train_prompt(args):
    from .experiment import build_image_data
    from .prompt import ToyEncoder, prompt_accuracy, train_prompt

    cfg = _load_config(args)
    if cfg.kind == "toy2d":
        raise ConfigError("prompt training needs an image experiment config")
    ds = build_image_data(cfg)
    enc = ToyEncoder()
    prompt = train_prompt(ds.hazy, ds.clear, enc, cfg.prompt_steps, cfg.prompt_lr, cfg.seed)
    held = ds.test_hazy if ds.has_test_pairs else ds.hazy
    acc = prompt_accuracy(held, ds.clear, prompt, enc)
    target = args.checkpoint or os.path.join(args.out or cfg.out_dir, "prompt.sbck")
    os.makedirs(os.path.dirname(os.path.abspath(target)), exist_ok=True)
    checkpoint.save(target, {"vector": prompt.vector},
                    {"kind": "prompt", "encoder": prompt.encoder_tag, "steps": str(prompt.steps)})
    print(f"final_loss\t{prompt.final_loss:.6g}\naccuracy\t{acc:.4f}\ncheckpoint\t{target}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="sbdehaze", description="Bridge-based unpaired dehazing toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--seed", type=_u64, default=None)
        return p

    p = add("train", cmd_train, "train from a config and write a run directory")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--quiet", action="store_true")

    p = add("infer", cmd_infer, "dehaze a directory of images (or a CSV of points)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--nfe", type=_positive, default=5)
    p.add_argument("--allow-fine-grid", action="store_true")

    p = add("eval", cmd_eval, "PSNR/SSIM between same-named images of two directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="optional CSV path")

    add("oracle-check", cmd_oracle_check, "run bridge, transport and gradient self-checks")

    p = add("synth-data", cmd_synth_data, "write a synthetic hazy/clear dataset as PNGs")
    p.add_argument("--config")
    p.add_argument("--out")

    p = add("train-prompt", cmd_train_prompt, "learn the haze-aware prompt vector")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--checkpoint", help="where to write the prompt checkpoint")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SBError, OSError, RuntimeError, ValueError, KeyError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
