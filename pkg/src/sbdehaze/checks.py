"""Self-checks of the numerical core, run by ``sbdehaze oracle-check``.

Each check returns a :class:`CheckResult`; none of them needs trained weights.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .bridge import BridgeSchedule, bridge_posterior, markov_step, sub_bridge_posterior
from .haze import RandomFeatureDistance, physical_prior_loss
from .nets import GlobalDiscriminator, ImageGenerator, PatchDiscriminator
from .ot import brute_force_ot, sinkhorn
from .prompt import ToyEncoder, init_prompt, prompt_guidance_loss
from .regularizers import hfd_loss, patch_nce_loss, sample_patch_features
from .trainer import EntropyCritic, generator_adv_loss, sb_loss


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3g} (tol {self.tolerance:g}) {self.detail}".rstrip()


def _rel(a, b):
    return float(np.max(np.abs(np.asarray(a) - b) / np.abs(b)))


def bridge_marginals(n_samples=100_000, seed=0, schedule=None, x0=1.0, x1=2.0, tol=0.01):
    """Chain of ideal-predictor Markov steps vs the closed-form bridge marginals."""
    schedule = schedule or BridgeSchedule()
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    x = np.full(n_samples, x0)
    worst = 0.0
    for j in range(schedule.n_intervals - 1):
        t_j, t_next = schedule.t(j), schedule.t(j + 1)
        x = markov_step(x, np.full(n_samples, x1), t_j, t_next, schedule.tau, rng)
        ref = bridge_posterior(x0, x1, t_next, schedule.tau)
        worst = max(worst, _rel(x.mean(), ref.mean), _rel(x.var(), ref.variance))
    elapsed = time.perf_counter() - start
    return CheckResult("bridge marginals", worst < tol and elapsed < 10.0, worst, tol,
                       f"[{elapsed:.2f} s]")


def self_similarity(n_samples=100_000, seed=0, tau=0.01, x0=1.0, x1=2.0, s=0.3, t=0.7, tol=0.01):
    """Sampling x_t directly vs through x_s and the sub-interval bridge."""
    rng = np.random.default_rng(seed)
    direct = bridge_posterior(np.full(n_samples, x0), x1, t, tau).sample(rng)
    x_s = bridge_posterior(np.full(n_samples, x0), x1, s, tau).sample(rng)
    staged = sub_bridge_posterior(x_s, x1, t, s, 1.0, tau).sample(rng)
    worst = max(_rel(staged.mean(), direct.mean()), _rel(staged.var(), direct.var()))
    return CheckResult("bridge self-similarity", worst < tol, worst, tol)


def ot_oracle(seed=0, sizes=(4, 5, 6), per_size=3, epsilon=1e-3, tol=1e-2, viol_tol=1e-6):
    rng = np.random.default_rng(seed)
    gap = viol = 0.0
    for n in sizes:
        for _ in range(per_size):
            cost = rng.random((n, n))
            a = np.full(n, 1.0 / n)
            coupling = sinkhorn(cost, a, a, epsilon)
            exact = brute_force_ot(cost).transport_cost(cost)
            gap = max(gap, abs(coupling.transport_cost(cost) - exact))
            viol = max(viol, coupling.violation)
    return [CheckResult("sinkhorn vs enumeration", gap < tol, gap, tol),
            CheckResult("sinkhorn marginal violation", viol < viol_tol, viol, viol_tol)]


def loss_gradients(seed=0, repeats=5, tol=1e-4):
    """grad_check of every generator loss component on small random inputs."""
    rng = np.random.default_rng(seed)
    results = []
    with T.precision("float64"):
        gen = ImageGenerator(rng, width=4)
        discs = [PatchDiscriminator(rng, width=4, n_blocks=2), GlobalDiscriminator(rng)]
        critic = EntropyCritic(rng, 3 * 4 * 4, hidden=8, pool=2)
        enc = ToyEncoder()
        prompt = init_prompt(enc.dim, seed)
        perceptual = RandomFeatureDistance(widths=(4, 8))
        losses = {
            "adv": lambda x, ctx: generator_adv_loss(x, 0.4, discs),
            "sb": lambda x, ctx: sb_loss(ctx["x_t"], x, 0.4, 0.01, critic=critic),
            "p": lambda x, ctx: prompt_guidance_loss(ctx["hazy"], x, prompt, enc),
            "nce": lambda x, ctx: patch_nce_loss(ctx["keys"], sample_patch_features(
                gen.encode(x, 0.4)[0], 8, locations=ctx["keys"].locations)),
            "phy": lambda x, ctx: physical_prior_loss(ctx["hazy"], x, ctx["t"], ctx["A"], perceptual),
            "hfd": lambda x, ctx: hfd_loss(x, ctx["hazy"]),
        }
        for name, fn in losses.items():
            worst = 0.0
            for _ in range(repeats):
                ctx = _grad_context(rng, gen)
                x = rng.uniform(0.1, 0.9, (2, 3, 8, 8))
                worst = max(worst, T.grad_check(lambda v: fn(v, ctx), x, eps=1e-5))
            results.append(CheckResult(f"grad {name}", worst < tol, worst, tol))
    return results


def _grad_context(rng, gen):
    hazy = rng.uniform(0.1, 0.9, (2, 3, 8, 8))
    with T.no_grad():
        maps, _ = gen.encode(hazy, 0.4)
    return {"hazy": hazy, "x_t": rng.uniform(0.1, 0.9, (2, 3, 8, 8)),
            "keys": sample_patch_features(maps, 8, rng),
            "t": rng.uniform(0.3, 0.9, (2, 1, 8, 8)), "A": rng.uniform(0.7, 1.0, (2, 3))}


def run_all(seed=0):
    results = [bridge_marginals(seed=seed), self_similarity(seed=seed)]
    results += ot_oracle(seed=seed)
    results += loss_gradients(seed=seed)
    return results
