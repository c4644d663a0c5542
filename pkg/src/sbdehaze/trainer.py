"""Bridge training loop: chain rollout, losses, optimizer updates, inference."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import checkpoint
from . import nn
from . import tensor as T
from .bridge import BridgeSchedule, markov_step, roll_chain, substream
from .errors import ContractError
from .haze import RandomFeatureDistance, TransmissionRefiner, dcp_batch, physical_prior_loss
from .nets import (GlobalDiscriminator, ImageGenerator, PatchDiscriminator, PointDiscriminator,
                   PointGenerator)
from .prompt import PromptState, ToyEncoder, prompt_guidance_loss
from .regularizers import HfdConfig, hfd_loss, patch_nce_loss, sample_patch_features
from .tensor import Tensor

COMPONENTS = ("adv", "sb", "p", "nce", "phy", "hfd")

# stream identifiers for substream(seed, step, purpose)
_RNG_TIME, _RNG_CHAIN, _RNG_NCE = 0, 1, 2


@dataclass
class LossWeights:
    lambda_sb: float = 1.0
    lambda_p: float = 1.0
    lambda_nce: float = 1.0
    lambda_phy: float = 0.5
    lambda_hfd: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ContractError(f"{f.name} must be nonnegative")

    def as_dict(self):
        return {"sb": self.lambda_sb, "p": self.lambda_p, "nce": self.lambda_nce,
                "phy": self.lambda_phy, "hfd": self.lambda_hfd}


class EntropyCritic(nn.Module):
    """Two-layer critic scoring every (state, prediction) pair of a batch.

    The first layer is split over the two halves of the concatenated pair so
    all B x B scores cost two matrix products. Images are average-pooled by
    ``pool`` before flattening.
    """

    def __init__(self, rng, in_dim, hidden=64, pool=1):
        self.pool = pool
        self.wx = nn.Linear(in_dim, hidden, rng)
        self.wy = nn.Linear(in_dim, hidden, rng)
        self.out = nn.Linear(hidden, 1, rng)

    def _flat(self, x):
        x = T.as_tensor(x)
        if x.ndim == 4 and self.pool > 1:
            x = T.avg_pool(x, self.pool)
        return T.reshape(x, (x.shape[0], -1))

    def scores(self, x, y):
        a = self.wx(self._flat(x))
        b = self.wy(self._flat(y))
        n, h = a.shape
        hidden = T.leaky_relu(T.reshape(a, (n, 1, h)) + T.reshape(b, (1, n, h)))
        return T.reshape(self.out(hidden), (n, n))


def estimate_entropy(x_ti, x1_pred, critic):
    """In-batch contrastive lower bound, bounded above by log(batch size).

    Row i scores the true pair (x_ti[i], x1_pred[i]) against the pairs of
    x_ti[i] with every other prediction in the batch.
    """
    n = x_ti.shape[0]
    if n < 2:
        raise ContractError("entropy estimate needs a batch of at least 2")
    s = critic.scores(x_ti, x1_pred)
    diag = T.sum(s * np.eye(n, dtype=s.dtype), axis=1)
    return T.mean(diag - T.logsumexp(s, axis=1)) + math.log(n)


def transport_cost(x_ti, x1_pred):
    """Mean over samples and coordinates of the squared displacement."""
    return T.mean(T.square(T.as_tensor(x_ti) - x1_pred))


def sb_loss(x_ti, x1_pred, t_i, tau, critic=None, entropy=None):
    """Transport cost minus ``2 tau (1 - t_i)`` times the entropy estimate."""
    cost = transport_cost(x_ti, x1_pred)
    weight = 2.0 * tau * (1.0 - t_i)
    if weight == 0.0:
        return cost
    if entropy is None:
        entropy = estimate_entropy(x_ti, x1_pred, critic)
    return cost - weight * entropy


def _lsq(logits, target):
    return T.mean(T.square(logits - target))


def discriminator_loss(real, fake, t_i, discs):
    """Least-squares loss of every discriminator, fakes detached."""
    fake = T.as_tensor(fake).detach()
    total = Tensor(0.0)
    for disc in discs:
        total = total + 0.5 * (_lsq(_apply(disc, real, t_i), 1.0) + _lsq(_apply(disc, fake, t_i), 0.0))
    return total


def generator_adv_loss(fake, t_i, discs):
    """Least-squares generator loss: fakes are pushed to the real target."""
    total = Tensor(0.0)
    for disc in discs:
        total = total + _lsq(_apply(disc, fake, t_i), 1.0)
    return total


def adversarial_losses(real, fake, t_i, discs):
    return generator_adv_loss(fake, t_i, discs), discriminator_loss(real, fake, t_i, discs)


def _apply(disc, x, t):
    if isinstance(disc, GlobalDiscriminator):
        return disc(x)
    return disc(x, t)


def total_loss(components, weights):
    """``adv + sum(lambda_k * component_k)`` over the weighted components."""
    total = T.as_tensor(components["adv"])
    for key, lam in weights.as_dict().items():
        if key in components and components[key] is not None:
            total = total + lam * components[key]
    return total


@dataclass
class TrainConfig:
    mode: str = "image"
    n_intervals: int = 5
    tau: float = 0.01
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    critic_lr: float = 2e-4
    weights: LossWeights = field(default_factory=LossWeights)
    gen_width: int = 16
    disc_width: int = 16
    disc_blocks: int = 3
    hidden: int = 128
    use_global_disc: bool = True
    nce_locations: int = 64
    nce_temperature: float = 0.07
    prompt_terms: str = "both"
    dcp_patch: int = 15
    dcp_omega: float = 0.95
    t_min: float = 0.1
    hfd: HfdConfig = field(default_factory=HfdConfig)
    critic_hidden: int = 64
    critic_pool: int = 4
    refiner_lr: float = 2e-5
    seed: int = 0

    @property
    def schedule(self):
        return BridgeSchedule(self.n_intervals, self.tau)


class TrainState:
    """Networks, optimizers and counters of one training run."""

    def __init__(self, cfg, image_shape=(3, 32, 32), prompt=None, encoder=None):
        self.cfg = cfg
        self.step = 0
        rng = np.random.default_rng(cfg.seed)
        betas = (cfg.beta1, cfg.beta2)
        self.prompt = prompt
        self.encoder = encoder or ToyEncoder()
        self.refiner = None
        self.perceptual = None
        if cfg.mode == "image":
            c, h, w = image_shape
            self.generator = ImageGenerator(rng, c, cfg.gen_width)
            self.discs = [PatchDiscriminator(rng, c, cfg.disc_width, cfg.disc_blocks)]
            if cfg.use_global_disc:
                self.discs.append(GlobalDiscriminator(rng, self.encoder))
            pool = cfg.critic_pool if h % cfg.critic_pool == 0 and w % cfg.critic_pool == 0 else 1
            self.critic = EntropyCritic(rng, c * (h // pool) * (w // pool), cfg.critic_hidden, pool)
            self.refiner = TransmissionRefiner(rng, t_min=cfg.t_min)
            self.perceptual = RandomFeatureDistance()
        elif cfg.mode == "points":
            self.generator = PointGenerator(rng, 2, cfg.hidden)
            self.discs = [PointDiscriminator(rng, 2, cfg.hidden)]
            self.critic = EntropyCritic(rng, 2, cfg.critic_hidden)
        else:
            raise ContractError(f"unknown training mode {cfg.mode!r}")
        self.opt_g = nn.Adam(self.generator.parameters(), cfg.lr, betas)
        self.opt_d = nn.Adam([p for d in self.discs for p in d.parameters()], cfg.lr, betas)
        self.opt_c = nn.Adam(self.critic.parameters(), cfg.critic_lr, betas)
        self.opt_r = nn.Adam(self.refiner.parameters(), cfg.refiner_lr, betas) if self.refiner else None

    # -- persistence ------------------------------------------------------------
    def _modules(self):
        mods = {"generator": self.generator, "critic": self.critic}
        for k, d in enumerate(self.discs):
            mods[f"disc{k}"] = d
        if self.refiner is not None:
            mods["refiner"] = self.refiner
        return mods

    def _optimizers(self):
        opts = {"opt_g": self.opt_g, "opt_d": self.opt_d, "opt_c": self.opt_c}
        if self.opt_r is not None:
            opts["opt_r"] = self.opt_r
        return opts

    def save(self, path, extra_meta=None):
        tensors = {}
        for name, mod in self._modules().items():
            for k, v in mod.state_dict().items():
                tensors[f"{name}/{k}"] = v
        for name, opt in self._optimizers().items():
            for k, v in opt.state_dict().items():
                tensors[f"{name}/{k}"] = v
        meta = {"kind": "train-state", "step": str(self.step), "seed": str(self.cfg.seed),
                "mode": self.cfg.mode}
        if self.prompt is not None:
            tensors["prompt/vector"] = np.asarray(self.prompt.vector)
            meta["prompt_encoder"] = self.prompt.encoder_tag
        meta.update(extra_meta or {})
        checkpoint.save(path, tensors, meta)

    def load(self, path):
        tensors, meta = checkpoint.load(path)
        if int(meta.get("seed", self.cfg.seed)) != self.cfg.seed:
            raise ContractError(f"{path} was written with seed {meta['seed']}, state has {self.cfg.seed}")
        for name, mod in self._modules().items():
            mod.load_state_dict(_sub(tensors, name))
        for name, opt in self._optimizers().items():
            opt.load_state_dict(_sub(tensors, name))
        if "prompt/vector" in tensors:
            self.prompt = PromptState(tensors["prompt/vector"], meta.get("prompt_encoder", ToyEncoder.tag))
        self.step = int(meta["step"])
        return meta


def _sub(tensors, prefix):
    head = prefix + "/"
    return {k[len(head):]: v for k, v in tensors.items() if k.startswith(head)}


def sample_time_index(n_intervals, rng):
    """Uniform draw from {0, ..., N-1}: the grid times at which the generator is queried."""
    return int(rng.integers(0, n_intervals))


def _as_batch(x):
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=T.config.dtype)


def generator_components(state, x0, x_ti, x1_pred, t_i, step_seed):
    """Unweighted loss components for one generated batch (all Tensors)."""
    cfg = state.cfg
    comps = {"adv": generator_adv_loss(x1_pred, t_i, state.discs)}
    entropy = None
    if 2.0 * cfg.tau * (1.0 - t_i) > 0:
        entropy = estimate_entropy(x_ti, x1_pred, state.critic)
    comps["sb"] = sb_loss(x_ti, x1_pred, t_i, cfg.tau, entropy=entropy)
    if cfg.mode != "image":
        return comps, entropy
    w = cfg.weights
    if w.lambda_p and state.prompt is not None:
        comps["p"] = prompt_guidance_loss(x0, x1_pred, state.prompt, state.encoder, cfg.prompt_terms)
    if w.lambda_nce:
        rng = substream(step_seed, state.step, _RNG_NCE)
        with T.no_grad():
            keys_maps, _ = state.generator.encode(x0, t_i)
        keys = sample_patch_features(keys_maps, cfg.nce_locations, rng, temperature=cfg.nce_temperature)
        query_maps, _ = state.generator.encode(x1_pred, t_i)
        queries = sample_patch_features(query_maps, cfg.nce_locations, locations=keys.locations,
                                        temperature=cfg.nce_temperature)
        comps["nce"] = patch_nce_loss(keys, queries)
    if w.lambda_phy:
        light, coarse = dcp_batch(x0, cfg.dcp_omega, cfg.dcp_patch, cfg.t_min)
        t_ref = state.refiner(coarse.astype(T.config.dtype))
        comps["phy"] = physical_prior_loss(x0, x1_pred, t_ref, light, state.perceptual)
    if w.lambda_hfd:
        comps["hfd"] = hfd_loss(x1_pred, x0, cfg.hfd)
    return comps, entropy


def train_step(state, hazy_batch, clear_batch, schedule=None, seed=None):
    """One discriminator update followed by one generator + critic update.

    Returns a dict of scalar loss values for logging. All randomness comes
    from substreams keyed by (seed, step), so a step is reproducible from a
    checkpoint.
    """
    cfg = state.cfg
    schedule = schedule or cfg.schedule
    seed = cfg.seed if seed is None else seed
    x0 = _as_batch(hazy_batch)
    x1 = _as_batch(clear_batch)

    i = sample_time_index(schedule.n_intervals, substream(seed, state.step, _RNG_TIME))
    t_i = schedule.t(i)
    chain_rng = substream(seed, state.step, _RNG_CHAIN)
    x_ti = roll_chain(x0, state.generator, i, schedule, chain_rng)

    x1_pred = state.generator(x_ti, t_i)

    # discriminators
    state.opt_d.zero_grad()
    d_loss = discriminator_loss(x1, x1_pred, t_i, state.discs)
    d_loss.backward()
    state.opt_d.step()

    # generator (+ refiner)
    state.opt_g.zero_grad()
    if state.opt_r is not None:
        state.opt_r.zero_grad()
    with nn.frozen(*state.discs, state.critic):
        comps, entropy = generator_components(state, x0, x_ti, x1_pred, t_i, seed)
        loss = total_loss(comps, cfg.weights)
    loss.backward()
    state.opt_g.step()
    if state.opt_r is not None:
        state.opt_r.step()

    # entropy critic tightens its bound on the detached pair
    critic_value = float("nan")
    if entropy is not None:
        state.opt_c.zero_grad()
        bound = estimate_entropy(x_ti, x1_pred.detach(), state.critic)
        (-bound).backward()
        state.opt_c.step()
        critic_value = float(bound.data)

    state.step += 1
    log = {"step": state.step, "i": i}
    for key in COMPONENTS:
        log[key] = float(comps[key].data) if key in comps else 0.0
    log["total"] = float(loss.data)
    log["d_loss"] = float(d_loss.data)
    log["entropy"] = critic_value
    return log


def infer(x0, nfe, state, schedule=None, seed=0):
    """Sample the endpoint with ``nfe`` generator calls on a uniform grid.

    The last call's prediction is returned as is.
    """
    if nfe < 1:
        raise ContractError(f"nfe must be at least 1, got {nfe}")
    tau = (schedule or state.cfg.schedule).tau
    grid = np.arange(nfe + 1) / nfe
    rng = substream(seed, nfe)
    x = _as_batch(x0)
    with T.no_grad():
        for j in range(nfe):
            x1_pred = state.generator(x, grid[j]).data
            if j == nfe - 1:
                return x1_pred
            x = markov_step(x, x1_pred, grid[j], grid[j + 1], tau, rng)
    return x


def config_dict(cfg):
    return asdict(cfg)
