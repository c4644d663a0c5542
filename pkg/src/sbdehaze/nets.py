"""Time-conditioned generators and the patch / global / point discriminators."""
from __future__ import annotations

import numpy as np

from . import nn
from . import tensor as T
from .errors import ContractError
from .prompt import ToyEncoder

TIME_DIM = 32


def time_features(t, dim=TIME_DIM):
    """Sinusoidal features of t in [0, 1] with angular frequencies 0.5 .. 4.

    Low frequencies keep the embedding smooth between grid points, so the
    networks can be queried at times other than the training grid.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.geomspace(0.5, 4.0, half)
    args = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1).astype(T.config.dtype)


class TimeEmbedding(nn.Module):
    def __init__(self, rng, hidden=64):
        self.proj = nn.Linear(TIME_DIM, hidden, rng)
        self.hidden = hidden

    def forward(self, t, n):
        feats = time_features(t)
        if feats.shape[0] == 1 and n > 1:
            feats = np.repeat(feats, n, axis=0)
        return T.leaky_relu(self.proj(feats))


def _block_bias(layer, emb):
    """(N, C) time projection reshaped to broadcast over (N, C, H, W)."""
    b = layer(emb)
    return T.reshape(b, b.shape + (1, 1))


class ImageGenerator(nn.Module):
    """Residual encoder-decoder with six time-conditioned conv blocks.

    Blocks: three encoder stages (full, 1/2, 1/4 resolution), a bottleneck,
    and two decoder stages with additive skips. The output layer is
    zero-initialized, so a fresh network is the identity map.
    """

    def __init__(self, rng, channels=3, width=16):
        w = width
        self.temb = TimeEmbedding(rng)
        h = self.temb.hidden
        self.enc1 = nn.Conv2d(channels, w, 3, rng)
        self.enc2 = nn.Conv2d(w, 2 * w, 3, rng, stride=2)
        self.enc3 = nn.Conv2d(2 * w, 4 * w, 3, rng, stride=2)
        self.mid = nn.Conv2d(4 * w, 4 * w, 3, rng)
        self.dec2 = nn.Conv2d(4 * w, 2 * w, 3, rng)
        self.dec1 = nn.Conv2d(2 * w, w, 3, rng)
        self.out = nn.Conv2d(w, channels, 3, rng, zero=True)
        self.tproj = [nn.Linear(h, c, rng) for c in (w, 2 * w, 4 * w, 4 * w, 2 * w, w)]

    def encode(self, x, t):
        """Encoder activations at the three resolutions."""
        x = T.as_tensor(x)
        emb = self.temb(t, x.shape[0])
        h1 = T.leaky_relu(self.enc1(x) + _block_bias(self.tproj[0], emb))
        h2 = T.leaky_relu(self.enc2(h1) + _block_bias(self.tproj[1], emb))
        h3 = T.leaky_relu(self.enc3(h2) + _block_bias(self.tproj[2], emb))
        return [h1, h2, h3], emb

    def forward(self, x, t):
        x = T.as_tensor(x)
        (h1, h2, h3), emb = self.encode(x, t)
        m = T.leaky_relu(self.mid(h3) + _block_bias(self.tproj[3], emb)) + h3
        d2 = T.leaky_relu(self.dec2(T.upsample_nearest(m, 2)) + _block_bias(self.tproj[4], emb)) + h2
        d1 = T.leaky_relu(self.dec1(T.upsample_nearest(d2, 2)) + _block_bias(self.tproj[5], emb)) + h1
        return x + self.out(d1)


class PointGenerator(nn.Module):
    """Four-layer time-conditioned MLP for 2-D points, residual and zero-initialized."""

    def __init__(self, rng, dim=2, hidden=128):
        self.temb = TimeEmbedding(rng)
        h = self.temb.hidden
        self.layers = [nn.Linear(dim, hidden, rng), nn.Linear(hidden, hidden, rng),
                       nn.Linear(hidden, hidden, rng)]
        self.tproj = [nn.Linear(h, hidden, rng) for _ in range(3)]
        self.out = nn.Linear(hidden, dim, rng, zero=True)

    def encode(self, x, t):
        x = T.as_tensor(x)
        emb = self.temb(t, x.shape[0])
        feats = []
        h = x
        for layer, proj in zip(self.layers, self.tproj):
            h = T.leaky_relu(layer(h) + proj(emb))
            feats.append(h)
        return feats, emb

    def forward(self, x, t):
        x = T.as_tensor(x)
        feats, _ = self.encode(x, t)
        return x + self.out(feats[-1])


def generator_forward(x_t, t, net, schedule=None):
    """Endpoint prediction ``x_t + f(x_t, t)``.

    With a ``schedule`` (training), ``t`` must be one of its grid points.
    """
    if schedule is not None and not schedule.on_grid(t):
        raise ContractError(f"t={t} is not on the training grid")
    if not 0.0 <= float(np.max(t)) <= 1.0 or float(np.min(t)) < 0.0:
        raise ContractError(f"t={t} outside [0, 1]")
    return net(x_t, t)


class PatchDiscriminator(nn.Module):
    """Stride-2 conv stack emitting one logit per receptive-field patch."""

    def __init__(self, rng, channels=3, width=16, n_blocks=3):
        self.temb = TimeEmbedding(rng)
        self.blocks = []
        self.tproj = []
        c_in = channels
        for k in range(n_blocks):
            c_out = width * 2 ** k
            self.blocks.append(nn.Conv2d(c_in, c_out, 4, rng, stride=2, padding=1))
            self.tproj.append(nn.Linear(self.temb.hidden, c_out, rng))
            c_in = c_out
        self.head = nn.Conv2d(c_in, 1, 3, rng)

    def forward(self, x, t):
        x = T.as_tensor(x)
        emb = self.temb(t, x.shape[0])
        h = x
        for conv, proj in zip(self.blocks, self.tproj):
            h = T.leaky_relu(conv(h) + _block_bias(proj, emb))
        return self.head(h)


def patch_discriminator_forward(x, t, net):
    return net(x, t)


class GlobalDiscriminator(nn.Module):
    """Linear head on the normalized embedding of a frozen encoder."""

    def __init__(self, rng, encoder=None):
        self.encoder = encoder or ToyEncoder()
        self.head = nn.Linear(self.encoder.dim, 1, rng)

    def forward(self, x):
        e = self.encoder.embed(x)
        e = e / T.sqrt(T.sum(T.square(e), axis=1, keepdims=True) + 1e-12)
        return T.reshape(self.head(e), (-1,))


def global_discriminator_forward(x, net):
    return net(x)


class PointDiscriminator(nn.Module):
    """Time-conditioned MLP critic for 2-D points."""

    def __init__(self, rng, dim=2, hidden=128):
        self.temb = TimeEmbedding(rng)
        self.l1 = nn.Linear(dim, hidden, rng)
        self.t1 = nn.Linear(self.temb.hidden, hidden, rng)
        self.l2 = nn.Linear(hidden, hidden, rng)
        self.l3 = nn.Linear(hidden, 1, rng)

    def forward(self, x, t):
        x = T.as_tensor(x)
        emb = self.temb(t, x.shape[0])
        h = T.leaky_relu(self.l1(x) + self.t1(emb))
        h = T.leaky_relu(self.l2(h))
        return T.reshape(self.l3(h), (-1,))
