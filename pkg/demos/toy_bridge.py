"""Bridge sampling by hand, then a short two-moons to ring translation.

    python demos/toy_bridge.py [out_dir]
"""
import sys

import numpy as np

from sbdehaze.bridge import BridgeSchedule, bridge_posterior, markov_step
from sbdehaze.config import ExperimentConfig
from sbdehaze.experiment import run_experiment

out_dir = sys.argv[1] if len(sys.argv) > 1 else "runs/demo_toy"
rng = np.random.default_rng(0)
schedule = BridgeSchedule()

# With a perfect endpoint predictor, chaining Markov steps reproduces the
# closed-form bridge marginals between two fixed points.
x0, x1 = 1.0, 2.0
x = np.full(100_000, x0)
print("  t    mean (MC / exact)    var (MC / exact)")
for j in range(schedule.n_intervals - 1):
    t, t_next = schedule.t(j), schedule.t(j + 1)
    x = markov_step(x, np.full_like(x, x1), t, t_next, schedule.tau, rng)
    exact = bridge_posterior(x0, x1, t_next, schedule.tau)
    print(f"{t_next:4.1f}   {x.mean():.4f} / {exact.mean:.4f}    {x.var():.5f} / {exact.variance:.5f}")

# A learned generator replaces the perfect predictor. 300 steps already move
# most of the mass onto the ring; the full default run uses 1000.
cfg = ExperimentConfig.for_kind("toy2d", steps=300, eval_every=100, checkpoint_every=300)
final = run_experiment(cfg, out_dir, verbose=True)
print(f"energy ratio at nfe 5: {final['energy_ratio@5']:.3f}  (scatter plots in {out_dir})")
