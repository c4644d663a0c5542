"""Run directories: dataset setup, training loop, periodic evaluation and CSV output.

Files written into ``out_dir`` by :func:`run_experiment`:

``config.txt``    config snapshot (re-runnable with ``train --config``)
``seed.txt``      the seed
``version.txt``   ``git describe`` of the working tree, or ``unknown``
``loss.csv``      step, i, adv, sb, p, nce, phy, hfd, total, d_loss, entropy
``timing.csv``    step, wall_ms  (kept apart so loss.csv is reproducible bit for bit)
``metrics.csv``   step, nfe, metric, value
``ckpt_<step>.sbck``, ``final.sbck``, ``prompt.sbck`` (image kinds)
``samples_<step>.png``
"""
from __future__ import annotations

import csv
import os
import subprocess
import time

import numpy as np

from . import tensor as T
from .bridge import substream
from .config import ExperimentConfig
from .data import (UnpairedDataset, clear_scenes, image_grid, list_images, read_dir, read_image,
                   synth_haze_dataset, toy2d_dataset, write_image)
from .errors import ConfigError
from .metrics import energy_distance, psnr, ssim_value
from .prompt import ToyEncoder, prompt_accuracy, train_prompt
from .trainer import COMPONENTS, TrainState, infer, train_step
from . import checkpoint

LOSS_COLUMNS = ("step", "i") + COMPONENTS + ("total", "d_loss", "entropy")
METRIC_COLUMNS = ("step", "nfe", "metric", "value")
EVAL_COLUMNS = ("name", "psnr", "ssim")

_RNG_DATA = 3


def git_describe(cwd=None):
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=cwd,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


class _CsvLog:
    def __init__(self, path, columns):
        self.fh = open(path, "w", newline="", encoding="utf-8")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(columns)
        self.columns = columns

    def row(self, values):
        self.writer.writerow([_fmt(v) for v in values])
        self.fh.flush()

    def close(self):
        self.fh.close()


# -- data ----------------------------------------------------------------------------

def build_image_data(cfg):
    """UnpairedDataset for the synth-haze and image-dir kinds."""
    if cfg.kind == "synth-haze":
        clear = clear_scenes(cfg.n_images, cfg.seed, cfg.image_size)
        return synth_haze_dataset(clear, cfg.A_range, cfg.t_range, cfg.seed, cfg.test_fraction)
    for d in (cfg.hazy_dir, cfg.clear_dir):
        if not os.path.isdir(d):
            raise ConfigError(f"image directory not found: {d}")
    _, hazy = read_dir(cfg.hazy_dir)
    _, clear = read_dir(cfg.clear_dir)
    if hazy is None or clear is None:
        raise ConfigError("hazy_dir and clear_dir must both contain PNG/PPM images")
    test_hazy = test_clear = None
    if cfg.test_hazy_dir and cfg.test_gt_dir:
        names = sorted(set(list_images(cfg.test_hazy_dir)) & set(list_images(cfg.test_gt_dir)))
        if names:
            test_hazy = np.stack([read_image(os.path.join(cfg.test_hazy_dir, n)) for n in names])
            test_clear = np.stack([read_image(os.path.join(cfg.test_gt_dir, n)) for n in names])
    # provenance tags: distinct files are treated as distinct sources
    return UnpairedDataset(hazy, clear, np.arange(len(hazy)), len(hazy) + np.arange(len(clear)),
                           test_hazy, test_clear)


def _toy_sets(cfg):
    s = cfg.seed
    return (toy2d_dataset(cfg.toy_source, cfg.toy_points, s * 4),
            toy2d_dataset(cfg.toy_target, cfg.toy_points, s * 4 + 1),
            toy2d_dataset(cfg.toy_source, cfg.toy_eval_points, s * 4 + 2),
            toy2d_dataset(cfg.toy_target, cfg.toy_eval_points, s * 4 + 3))


# -- evaluation ----------------------------------------------------------------------

def evaluate_images(state, hazy, gt, nfes):
    """Mean PSNR / SSIM of ``infer`` outputs per NFE, plus the hazy input baseline."""
    rows = [("psnr_input", 0, float(np.mean([psnr(a, b) for a, b in zip(hazy, gt)])))]
    for nfe in nfes:
        out = infer(hazy, nfe, state)
        rows.append(("psnr", nfe, float(np.mean([psnr(a, b) for a, b in zip(out, gt)]))))
        rows.append(("ssim", nfe, float(np.mean([ssim_value(a, b) for a, b in zip(out, gt)]))))
    return rows


def evaluate_points(state, source, target, nfes, baseline):
    rows = []
    for nfe in nfes:
        ed = energy_distance(infer(source, nfe, state), target)
        rows.append(("energy_distance", nfe, ed))
        rows.append(("energy_ratio", nfe, ed / baseline))
    return rows


def _scatter_png(points, target, size=128, extent=2.0):
    """Rasterize target (grey) and generated (red) points into an RGB image."""
    img = np.ones((3, size, size))

    def pix(p):
        q = np.clip(((p + extent) / (2 * extent) * (size - 1)).round().astype(int), 0, size - 1)
        return size - 1 - q[:, 1], q[:, 0]

    r, c = pix(target)
    img[:, r, c] = 0.7
    r, c = pix(points)
    img[0, r, c], img[1, r, c], img[2, r, c] = 0.85, 0.1, 0.1
    return img


# -- main loop -----------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir=None, verbose=False):
    """Train per ``cfg`` and write the run directory; returns the final metrics dict."""
    cfg.validate()
    out_dir = out_dir or cfg.out_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create run directory {out_dir}: {exc.strerror}") from exc
    cfg.save(os.path.join(out_dir, "config.txt"))
    with open(os.path.join(out_dir, "seed.txt"), "w") as fh:
        fh.write(f"{cfg.seed}\n")
    with open(os.path.join(out_dir, "version.txt"), "w") as fh:
        fh.write(git_describe(os.path.dirname(os.path.abspath(__file__))) + "\n")

    with T.precision(cfg.precision):
        return _run(cfg, out_dir, verbose)


def _run(cfg, out_dir, verbose):
    tcfg = cfg.train_config()
    encoder = ToyEncoder()
    prompt = None
    data_rng = substream(cfg.seed, _RNG_DATA)
    if cfg.kind == "toy2d":
        src, tgt, eval_src, eval_tgt = _toy_sets(cfg)
        baseline = energy_distance(eval_src, eval_tgt)
        image_shape = (3, 32, 32)

        def next_batch():
            return (src[data_rng.integers(0, len(src), cfg.batch)],
                    tgt[data_rng.integers(0, len(tgt), cfg.batch)])
    else:
        ds = build_image_data(cfg)
        prompt = train_prompt(ds.hazy, ds.clear, encoder, cfg.prompt_steps, cfg.prompt_lr, cfg.seed)
        checkpoint.save(os.path.join(out_dir, "prompt.sbck"), {"vector": prompt.vector},
                        {"kind": "prompt", "encoder": prompt.encoder_tag})
        image_shape = ds.hazy.shape[1:]
        stream = ds.batches(cfg.batch, seed=int(data_rng.integers(2 ** 32)))

        def next_batch():
            hazy, clear, hazy_src, clear_src = next(stream)
            assert not set(hazy_src.tolist()) & set(clear_src.tolist()), "paired batch"
            return hazy, clear

    state = TrainState(tcfg, image_shape=image_shape, prompt=prompt, encoder=encoder)
    meta = {"config": cfg.dumps()}
    losses = _CsvLog(os.path.join(out_dir, "loss.csv"), LOSS_COLUMNS)
    timing = _CsvLog(os.path.join(out_dir, "timing.csv"), ("step", "wall_ms"))
    metrics = _CsvLog(os.path.join(out_dir, "metrics.csv"), METRIC_COLUMNS)
    final = {}

    def evaluate(step):
        if cfg.kind == "toy2d":
            rows = evaluate_points(state, eval_src, eval_tgt, cfg.eval_nfe, baseline)
            sample = _scatter_png(infer(eval_src, max(cfg.eval_nfe), state), eval_tgt)
        else:
            rows = []
            if prompt is not None:
                held = ds.test_hazy if ds.has_test_pairs else ds.hazy
                rows.append(("prompt_accuracy", 0, prompt_accuracy(held, ds.clear, prompt, encoder)))
            if ds.has_test_pairs:
                rows += evaluate_images(state, ds.test_hazy, ds.test_clear, cfg.eval_nfe)
                shown, gt = ds.test_hazy[:8], ds.test_clear[:8]
            else:
                shown, gt = ds.hazy[:8], None
            panels = [shown] + [infer(shown, nfe, state) for nfe in cfg.eval_nfe]
            if gt is not None:
                panels.append(gt)
            sample = image_grid(np.concatenate(panels), ncol=len(shown))
        write_image(os.path.join(out_dir, f"samples_{step:06d}.png"), sample)
        for name, nfe, value in rows:
            metrics.row((step, nfe, name, value))
            final[f"{name}@{nfe}" if nfe else name] = value
        if verbose:
            print(f"step {step}: " + ", ".join(f"{k}={v:.4g}" for k, v in final.items()), flush=True)

    try:
        evaluate(0)
        for _ in range(cfg.steps):
            x0, x1 = next_batch()
            start = time.perf_counter()
            log = train_step(state, x0, x1)
            timing.row((log["step"], round(1000 * (time.perf_counter() - start), 3)))
            losses.row(tuple(log[c] for c in LOSS_COLUMNS))
            step = log["step"]
            if step % cfg.checkpoint_every == 0 and step != cfg.steps:
                state.save(os.path.join(out_dir, f"ckpt_{step:06d}.sbck"), meta)
            if step % cfg.eval_every == 0 and step != cfg.steps:
                evaluate(step)
        evaluate(cfg.steps)
        state.save(os.path.join(out_dir, "final.sbck"), meta)
    finally:
        for log_file in (losses, timing, metrics):
            log_file.close()
    return final


def load_state(path):
    """Rebuild a TrainState from a checkpoint written by :func:`run_experiment`."""
    _, meta = checkpoint.load(path)
    if "config" not in meta:
        raise ConfigError(f"{path} carries no experiment config")
    cfg = ExperimentConfig.loads(meta["config"])
    shape = (3, cfg.image_size, cfg.image_size)
    state = TrainState(cfg.train_config(), image_shape=shape)
    state.load(path)
    return cfg, state


# -- directory evaluation --------------------------------------------------------------

def eval_dirs(pred_dir, gt_dir, out_csv=None):
    """Per-image PSNR/SSIM of same-named files plus a mean row.

    Returns ``(rows, missing)``; ``missing`` lists files without a counterpart.
    Raises ConfigError when no file names match.
    """
    for d in (pred_dir, gt_dir):
        if not os.path.isdir(d):
            raise ConfigError(f"not a directory: {d}")
    pred, gt = set(list_images(pred_dir)), set(list_images(gt_dir))
    common = sorted(pred & gt)
    missing = sorted(pred ^ gt)
    if not common:
        raise ConfigError(f"no matching image names between {pred_dir} and {gt_dir}")
    rows = []
    for name in common:
        a = read_image(os.path.join(pred_dir, name))
        b = read_image(os.path.join(gt_dir, name))
        if a.shape != b.shape:
            raise ConfigError(f"{name}: shape {a.shape} vs {b.shape}")
        rows.append((name, psnr(a, b), ssim_value(a, b)))
    rows.append(("mean", float(np.mean([r[1] for r in rows])), float(np.mean([r[2] for r in rows]))))
    if out_csv:
        with open(out_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(EVAL_COLUMNS)
            w.writerows([(n, _fmt(p), _fmt(s)) for n, p, s in rows])
    return rows, missing
