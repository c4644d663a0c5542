"""From a clear scene to a trained dehazer in a few minutes.

    python demos/dehaze_walkthrough.py [out_dir]
"""
import os
import sys

import numpy as np

from sbdehaze.config import ExperimentConfig
from sbdehaze.data import clear_scenes, image_grid, synth_haze_dataset, write_image
from sbdehaze.experiment import run_experiment
from sbdehaze.haze import dcp_dehaze
from sbdehaze.metrics import psnr
from sbdehaze.prompt import ToyEncoder, prompt_accuracy, train_prompt

out_dir = sys.argv[1] if len(sys.argv) > 1 else "runs/demo_dehaze"
os.makedirs(out_dir, exist_ok=True)

ds = synth_haze_dataset(clear_scenes(128, seed=1), seed=1)
hazy, gt = ds.test_hazy[:8], ds.test_clear[:8]
print(f"{len(ds.hazy)} hazy and {len(ds.clear)} clear training images from disjoint scenes")
print(f"hazy vs ground truth: {np.mean([psnr(a, b) for a, b in zip(hazy, gt)]):.2f} dB")

# The dark channel prior alone, with the scattering model inverted.
dcp = np.stack([dcp_dehaze(img).dehazed for img in hazy])
print(f"dark channel prior:   {np.mean([psnr(a, b) for a, b in zip(dcp, gt)]):.2f} dB")

# The prompt lives in the frozen encoder's embedding space and points toward haze.
enc = ToyEncoder()
prompt = train_prompt(ds.hazy, ds.clear, enc, steps=300)
print(f"prompt accuracy on held-out pairs: {prompt_accuracy(ds.test_hazy, ds.clear, prompt, enc):.3f}")

write_image(os.path.join(out_dir, "hazy_dcp_gt.png"), image_grid(np.concatenate([hazy, dcp, gt]), ncol=8))

# A short bridge training run; the default experiment trains 2000 steps on 512 images.
cfg = ExperimentConfig.for_kind("synth-haze", n_images=128, steps=200, eval_every=100,
                                checkpoint_every=200, prompt_steps=300, seed=1)
final = run_experiment(cfg, os.path.join(out_dir, "run"), verbose=True)
for nfe in cfg.eval_nfe:
    print(f"bridge, nfe {nfe}: {final[f'psnr@{nfe}']:.2f} dB")
