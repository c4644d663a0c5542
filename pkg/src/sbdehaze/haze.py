"""Atmospheric scattering, dark-channel estimation and the physical prior loss.

Images are channel-first float arrays in [0, 1]: ``(3, H, W)`` for one image,
``(N, 3, H, W)`` for a batch. Transmission maps are ``(H, W)`` or
``(N, 1, H, W)``. Atmospheric light is a length-3 vector (or a scalar).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import minimum_filter

from . import nn
from . import tensor as T
from .errors import ContractError
from .tensor import Tensor

OMEGA = 0.95
PATCH = 15
T_MIN = 0.1


@dataclass
class AsmParams:
    atmospheric_light: np.ndarray
    transmission: np.ndarray
    omega: float = OMEGA
    patch: int = PATCH
    t_min: float = T_MIN

    def __post_init__(self):
        if not 0 < self.omega <= 1:
            raise ContractError(f"omega must be in (0, 1], got {self.omega}")
        if self.patch < 1 or self.patch % 2 == 0:
            raise ContractError(f"patch must be a positive odd integer, got {self.patch}")
        self.transmission = np.clip(self.transmission, self.t_min, 1.0)


@dataclass
class DcpResult:
    dehazed: np.ndarray
    transmission: np.ndarray
    atmospheric_light: np.ndarray


def _light(A, ndim):
    A = np.asarray(A, dtype=float)
    if A.ndim == 0:
        return A
    if ndim == 3:
        return A.reshape(3, 1, 1)
    return A.reshape(-1, 3, 1, 1)


def _trans(t, ndim):
    t = np.asarray(t, dtype=float)
    if t.ndim == 2:
        return t[None] if ndim == 3 else t[None, None]
    return t


def apply_asm(J, t, A):
    """Hazy image ``J t + A (1 - t)``, clamped to [0, 1]."""
    J = np.asarray(J, dtype=float)
    t = _trans(t, J.ndim)
    return np.clip(J * t + _light(A, J.ndim) * (1.0 - t), 0.0, 1.0)


def dark_channel(I, patch=PATCH):
    """Per-pixel minimum over channels, then over a ``patch`` x ``patch`` window."""
    if patch < 1 or patch % 2 == 0:
        raise ContractError(f"patch must be a positive odd integer, got {patch}")
    I = np.asarray(I, dtype=float)
    m = I.min(axis=-3)
    size = (1,) * (m.ndim - 2) + (patch, patch)
    return minimum_filter(m, size=size, mode="nearest")


def estimate_atmospheric_light(I, dark):
    """Mean colour of the pixels holding the top 0.1% (at least one) dark-channel values."""
    I = np.asarray(I, dtype=float)
    dark = np.asarray(dark)
    k = max(1, int(np.ceil(dark.size * 0.001)))
    top = np.argsort(-dark.ravel(), kind="stable")[:k]
    return I.reshape(I.shape[0], -1)[:, top].mean(axis=1)


def estimate_transmission(I, A, omega=OMEGA, patch=PATCH, t_min=T_MIN):
    """Coarse transmission ``1 - omega * dark_channel(I / A)`` clamped to [t_min, 1]."""
    I = np.asarray(I, dtype=float)
    A = np.asarray(A, dtype=float)
    if np.any(A <= 0):
        raise ContractError("atmospheric light must be positive")
    t = 1.0 - omega * dark_channel(I / _light(A, I.ndim), patch)
    return np.clip(t, t_min, 1.0)


def dcp_dehaze(I, omega=OMEGA, patch=PATCH, t_min=T_MIN):
    """Dark-channel dehazing of a single (3, H, W) image."""
    I = np.asarray(I, dtype=float)
    A = estimate_atmospheric_light(I, dark_channel(I, patch))
    A = np.maximum(A, 1e-6)
    t = estimate_transmission(I, A, omega, patch, t_min)
    a = A[:, None, None]
    J = (I - a) / np.maximum(t, t_min)[None] + a
    return DcpResult(np.clip(J, 0.0, 1.0), t, A)


def dcp_batch(images, omega=OMEGA, patch=PATCH, t_min=T_MIN):
    """Atmospheric light (N, 3) and coarse transmission (N, 1, H, W) for a batch."""
    lights, maps = [], []
    for img in np.asarray(images):
        res = dcp_dehaze(img, omega, patch, t_min)
        lights.append(res.atmospheric_light)
        maps.append(res.transmission[None])
    return np.stack(lights), np.stack(maps)


class TransmissionRefiner(nn.Module):
    """Two-scale encoder-decoder mapping a coarse transmission map into [t_min, 1].

    The network predicts a correction to the logit of the input map and its
    output layer starts at zero, so a fresh refiner returns its input (up to
    the clamp of the logit at the range ends).
    """

    def __init__(self, rng, width=8, t_min=T_MIN):
        self.t_min = t_min
        self.enc = nn.Conv2d(1, width, 3, rng)
        self.down = nn.Conv2d(width, 2 * width, 3, rng, stride=2)
        self.mid = nn.Conv2d(2 * width, 2 * width, 3, rng)
        self.dec = nn.Conv2d(2 * width, width, 3, rng)
        self.out = nn.Conv2d(width, 1, 3, rng, zero=True)

    def forward(self, t):
        t = T.as_tensor(t)
        u = T.clip((t - self.t_min) / (1.0 - self.t_min), 1e-4, 1.0 - 1e-4)
        base = T.log(u) - T.log(1.0 - u)
        h1 = T.leaky_relu(self.enc(t))
        h2 = T.leaky_relu(self.down(h1))
        h2 = T.leaky_relu(self.mid(h2))
        up = T.leaky_relu(self.dec(T.upsample_nearest(h2, 2)))
        logits = base + self.out(up + h1)
        return self.t_min + (1.0 - self.t_min) * T.sigmoid(logits)


def refine_transmission(t, refiner):
    """Refined map in [t_min, 1]; ``t`` is (H, W) or (N, 1, H, W)."""
    t = T.as_tensor(t)
    if t.ndim == 2:
        return T.reshape(refiner(T.reshape(t, (1, 1) + t.shape)), t.shape)
    return refiner(t)


def pretrain_refiner_identity(refiner, maps, steps=300, lr=2e-3, batch=16, seed=0):
    """Fit ``refiner`` to reproduce its input on a set of (N, 1, H, W) maps."""
    rng = np.random.default_rng(seed)
    opt = nn.Adam(refiner.parameters(), lr=lr, betas=(0.9, 0.999))
    maps = np.asarray(maps)
    loss = None
    for _ in range(steps):
        idx = rng.choice(len(maps), size=min(batch, len(maps)), replace=False)
        target = Tensor(maps[idx])
        loss = T.mean(T.square(refiner(target) - target))
        opt.zero_grad()
        loss.backward()
        opt.step()
    return None if loss is None else float(loss.data)


class RandomFeatureDistance:
    """Perceptual-style distance on a frozen, seed-fixed random conv stack.

    Three stages (stride 1, 2, 2) with ReLU; at each stage feature vectors are
    unit-normalized over channels and the squared difference is averaged over
    positions. The result is the mean over stages.
    """

    def __init__(self, seed=1234, widths=(8, 16, 32)):
        rng = np.random.default_rng(seed)
        self.weights = []
        c_in = 3
        for i, c_out in enumerate(widths):
            w = rng.standard_normal((c_out, c_in, 3, 3)) * np.sqrt(2.0 / (9 * c_in))
            self.weights.append((w, 1 if i == 0 else 2))
            c_in = c_out

    def features(self, x):
        feats = []
        h = T.as_tensor(x)
        for w, stride in self.weights:
            h = T.relu(T.conv2d(h, Tensor(w), stride=stride, padding=1))
            norm = T.sqrt(T.sum(T.square(h), axis=1, keepdims=True) + 1e-10)
            feats.append(h / norm)
        return feats

    def __call__(self, a, b):
        fa, fb = self.features(a), self.features(b)
        terms = [T.mean(T.sum(T.square(x - y), axis=1)) for x, y in zip(fa, fb)]
        total = terms[0]
        for term in terms[1:]:
            total = total + term
        return total / len(terms)


def physical_prior_loss(I, J_gen, t_ref, A, perceptual=None):
    """L1 plus perceptual distance between ``I`` and the re-hazed ``J_gen``.

    ``I`` and ``J_gen`` are (N, 3, H, W); ``t_ref`` is (N, 1, H, W); ``A`` is
    (N, 3) or (3,).
    """
    I, J_gen, t_ref = T.as_tensor(I), T.as_tensor(J_gen), T.as_tensor(t_ref)
    A = np.asarray(A.data if isinstance(A, Tensor) else A, dtype=I.dtype)
    a = A.reshape(-1, 3, 1, 1) if A.ndim == 2 else A.reshape(1, 3, 1, 1)
    I_phy = J_gen * t_ref + a * (1.0 - t_ref)
    loss = T.mean(T.tabs(I - I_phy))
    if perceptual is not None:
        loss = loss + perceptual(I, I_phy)
    return loss
