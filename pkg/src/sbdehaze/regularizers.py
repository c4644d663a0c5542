"""Detail-preserving losses: PatchNCE, DFT amplitude, SSIM and Sobel gradients.

Image arguments are (N, C, H, W) Tensors or arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Tensor

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


@dataclass
class PatchFeatureSet:
    """Per-layer patch features of shape (N, L, C) taken at shared locations."""

    layers: list
    locations: list
    temperature: float = 0.07


@dataclass
class HfdConfig:
    window: int = 7
    sigma: float = 1.5
    c1: float = 0.01 ** 2
    c2: float = 0.03 ** 2
    sobel: tuple = field(default=(SOBEL_X, SOBEL_Y), repr=False)
    dft_norm: str = "ortho"
    w_dft: float = 1.0
    w_ssim: float = 1.0
    w_sobel: float = 1.0

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ContractError("SSIM constants must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise ContractError(f"SSIM window must be odd, got {self.window}")


def sample_patch_features(feature_maps, n_locations, rng=None, locations=None, temperature=0.07):
    """Gather features at ``n_locations`` random pixels of each (N, C, H, W) map.

    Pass the ``locations`` of an earlier call to sample a second set at the
    same positions.
    """
    if locations is None:
        locations = []
        for fmap in feature_maps:
            hw = fmap.shape[2] * fmap.shape[3]
            k = min(n_locations, hw)
            locations.append(np.sort(rng.choice(hw, size=k, replace=False)))
    layers = []
    for fmap, ids in zip(feature_maps, locations):
        n, c = fmap.shape[:2]
        flat = T.reshape(fmap, (n, c, -1))
        layers.append(T.transpose(T.take(flat, ids, axis=2), (0, 2, 1)))
    return PatchFeatureSet(layers, locations, temperature)


def _normalize(x, axis=-1):
    return x / T.sqrt(T.sum(T.square(x), axis=axis, keepdims=True) + 1e-12)


def patch_nce_loss(feats_in, feats_out):
    """Contrastive loss tying each output patch to its same-location input patch.

    For every query (output patch) the positive is the input patch at the same
    location; the negatives are the input patches at the other locations of
    the same image. Averaged over locations, images and layers.
    """
    if len(feats_in.layers) != len(feats_out.layers):
        raise ContractError("feature sets have different numbers of layers")
    total = None
    for f_in, f_out, ids_in, ids_out in zip(feats_in.layers, feats_out.layers,
                                            feats_in.locations, feats_out.locations):
        if f_in.shape != f_out.shape or not np.array_equal(ids_in, ids_out):
            raise ContractError("feature sets disagree in shape or locations")
        q = _normalize(T.as_tensor(f_out))
        k = _normalize(T.as_tensor(f_in))
        logits = T.matmul(q, T.transpose(k, (0, 2, 1))) / feats_out.temperature
        eye = np.eye(logits.shape[-1], dtype=logits.dtype)
        positive = T.sum(logits * eye, axis=-1)
        term = T.mean(T.logsumexp(logits, axis=-1) - positive)
        total = term if total is None else total + term
    return total / len(feats_in.layers)


def _dft_mats(n, dtype):
    k = np.arange(n)
    ang = 2.0 * np.pi * np.outer(k, k) / n
    return np.cos(ang).astype(dtype), np.sin(ang).astype(dtype)


def dft_amplitude(x, norm="ortho"):
    """Amplitude of the 2-D DFT over the last two axes."""
    x = T.as_tensor(x)
    h, w = x.shape[-2:]
    ch, sh = _dft_mats(h, x.dtype)
    cw, sw = _dft_mats(w, x.dtype)
    real = T.matmul(T.matmul(ch, x), cw) - T.matmul(T.matmul(sh, x), sw)
    imag = T.matmul(T.matmul(sh, x), cw) + T.matmul(T.matmul(ch, x), sw)
    amp = T.sqrt(T.square(real) + T.square(imag) + 1e-12)
    if norm == "ortho":
        amp = amp / np.sqrt(h * w)
    return amp


def dft_loss(a, b, norm="ortho"):
    """Mean absolute difference of per-channel DFT amplitude spectra."""
    return T.mean(T.tabs(dft_amplitude(a, norm) - dft_amplitude(b, norm)))


def gaussian_window(size, sigma):
    ax = np.arange(size) - size // 2
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _per_channel_filter(x, kernels):
    """Filter each channel with each 2-D kernel (edge-replicated borders).

    Returns shape (N*C, K, H, W).
    """
    x = T.as_tensor(x)
    n, c, h, w = x.shape
    k = kernels.shape[-1]
    flat = T.reshape(x, (n * c, 1, h, w))
    padded = T.pad2d(flat, k // 2, mode="edge")
    weight = Tensor(kernels.reshape(-1, 1, k, k).astype(x.dtype))
    return T.conv2d(padded, weight)


def ssim(a, b, cfg=None):
    """Mean local SSIM with a Gaussian window (edge-replicated borders)."""
    cfg = cfg or HfdConfig()
    a, b = T.as_tensor(a), T.as_tensor(b)
    if a.shape != b.shape:
        raise ContractError(f"ssim shape mismatch {a.shape} vs {b.shape}")
    win = gaussian_window(cfg.window, cfg.sigma)[None]
    mu_a = _per_channel_filter(a, win)
    mu_b = _per_channel_filter(b, win)
    saa = _per_channel_filter(a * a, win) - mu_a * mu_a
    sbb = _per_channel_filter(b * b, win) - mu_b * mu_b
    sab = _per_channel_filter(a * b, win) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + cfg.c1) * (2.0 * sab + cfg.c2)
    den = (mu_a * mu_a + mu_b * mu_b + cfg.c1) * (saa + sbb + cfg.c2)
    return T.mean(num / den)


def ssim_loss(a, b, cfg=None):
    return 1.0 - ssim(a, b, cfg)


def sobel_magnitude(x, kernels=(SOBEL_X, SOBEL_Y)):
    """Per-channel Sobel gradient magnitude, shape (N*C, 1, H, W)."""
    g = _per_channel_filter(x, np.stack(kernels))
    gx, gy = g[:, 0:1], g[:, 1:2]
    return T.sqrt(T.square(gx) + T.square(gy) + 1e-12)


def sobel_loss(a, b, kernels=(SOBEL_X, SOBEL_Y)):
    """L1 distance between Sobel gradient-magnitude maps."""
    return T.mean(T.tabs(sobel_magnitude(a, kernels) - sobel_magnitude(b, kernels)))


def hfd_loss(a, b, cfg=None):
    """Weighted sum of the DFT, SSIM and Sobel losses."""
    cfg = cfg or HfdConfig()
    total = Tensor(0.0)
    if cfg.w_dft:
        total = total + cfg.w_dft * dft_loss(a, b, cfg.dft_norm)
    if cfg.w_ssim:
        total = total + cfg.w_ssim * ssim_loss(a, b, cfg)
    if cfg.w_sobel:
        total = total + cfg.w_sobel * sobel_loss(a, b, cfg.sobel)
    return total
