"""Haze-aware prompt learning in a frozen image-embedding space.

The prompt is a single learnable vector living directly in the embedding
space of a frozen image encoder. Given two images, the probability that the
first one is the hazy one is the two-way softmax of their cosine
similarities to the prompt.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import tensor as T
from .errors import ContractError
from .regularizers import sobel_magnitude
from .tensor import Tensor

N_BINS = 8
_SOBEL_EPS = np.sqrt(1e-12)


class ToyEncoder:
    """Frozen encoder built from hand-picked haze statistics.

    Features: channel means and variances, an 8-bin soft histogram of the
    dark channel, mean Sobel magnitude and mean local contrast. They are
    centred, scaled and sent through a fixed random projection to ``dim``.
    Every step is differentiable with respect to the image, but the encoder
    has no trainable parameters.
    """

    tag = "toy-statistics-v1"
    n_features = 6 + N_BINS + 2

    def __init__(self, dim=32, seed=7, dark_patch=3):
        rng = np.random.default_rng(seed)
        self.dim = dim
        self.dark_patch = dark_patch
        self.projection = rng.standard_normal((self.n_features, dim)) / np.sqrt(self.n_features)
        self.offset = np.concatenate([np.full(3, 0.5), np.zeros(3), np.full(N_BINS, 1.0 / N_BINS), np.zeros(2)])
        self.scale = np.concatenate([np.full(3, 2.0), np.full(3, 10.0), np.full(N_BINS, 4.0), [4.0, 8.0]])

    def statistics(self, x):
        """Raw (N, n_features) statistics of an (N, 3, H, W) batch."""
        x = T.as_tensor(x)
        n = x.shape[0]
        means = T.mean(x, axis=(2, 3))
        var = T.mean(T.square(x - T.reshape(means, (n, 3, 1, 1))), axis=(2, 3))
        dark = T.window_min(T.tmin(x, axis=1), self.dark_patch)
        centers = (np.arange(N_BINS) + 0.5) / N_BINS
        d = T.clip(T.reshape(dark, (n, -1, 1)), centers[0], centers[-1])
        weights = T.relu(1.0 - T.tabs(d - centers) * N_BINS)
        hist = T.mean(weights, axis=1)
        sobel = T.reshape(T.mean(sobel_magnitude(x) - _SOBEL_EPS, axis=(1, 2, 3)), (n, 3))
        sobel = T.mean(sobel, axis=1, keepdims=True)
        gray = T.mean(x, axis=1, keepdims=True)
        box = T.conv2d(T.pad2d(gray, 1, mode="edge"), Tensor(np.full((1, 1, 3, 3), 1.0 / 9.0)))
        contrast = T.mean(T.tabs(gray - box), axis=(1, 2, 3))
        return T.concat([means, var, hist, sobel, T.reshape(contrast, (n, 1))], axis=1)

    def embed(self, x):
        """Differentiable (N, dim) embeddings of an (N, 3, H, W) batch."""
        feats = (self.statistics(x) - self.offset) * self.scale
        return T.matmul(feats, self.projection.astype(feats.dtype))


def encode_image(I, enc):
    """Embedding of one (3, H, W) image or a batch, as a numpy array."""
    I = np.asarray(I.data if isinstance(I, Tensor) else I)
    single = I.ndim == 3
    with T.no_grad():
        e = enc.embed(I[None] if single else I).data
    return e[0] if single else e


@dataclass
class PromptState:
    vector: np.ndarray
    encoder_tag: str = ToyEncoder.tag
    steps: int = 0
    final_loss: float = float("nan")
    history: list = field(default_factory=list, repr=False)


def init_prompt(dim, seed=0, encoder_tag=ToyEncoder.tag):
    rng = np.random.default_rng(seed)
    return PromptState(rng.standard_normal(dim), encoder_tag)


def cosine_to_prompt(e, prompt_vec):
    """Cosine similarity of each row of ``e`` with the prompt vector."""
    e = T.as_tensor(e)
    p = T.as_tensor(prompt_vec)
    p = p / T.sqrt(T.sum(T.square(p)))
    norm = T.sqrt(T.sum(T.square(e), axis=-1) + 1e-12)
    return T.matmul(e, p) / norm


def _two_way(cos_first, cos_second):
    """Softmax weight of the first entry of each pair."""
    return T.sigmoid(cos_first - cos_second)


def prompt_probability(I, I_other, prompt, enc):
    """Probability that ``I`` (not ``I_other``) is the hazy image."""
    e = encode_image(np.stack([np.asarray(I), np.asarray(I_other)]), enc)
    cos = cosine_to_prompt(e, prompt.vector).data
    return float(np.exp(cos[0]) / (np.exp(cos[0]) + np.exp(cos[1])))


def prompt_bce_loss(y, y_hat):
    """Binary cross-entropy with ``y_hat`` clamped to [1e-7, 1 - 1e-7]."""
    y_hat = T.clip(T.as_tensor(y_hat), 1e-7, 1.0 - 1e-7)
    y = np.asarray(y, dtype=y_hat.dtype)
    return -(y * T.log(y_hat) + (1.0 - y) * T.log(1.0 - y_hat))


def _pair_loss(cos_hazy, cos_clear):
    y_h = _two_way(cos_hazy, cos_clear)
    y_c = _two_way(cos_clear, cos_hazy)
    return prompt_bce_loss(1.0, y_h) + prompt_bce_loss(0.0, y_c)


def train_prompt(hazy_set, clear_set, enc, steps=500, lr=1e-2, seed=0, prompt=None):
    """Optimize only the prompt vector on one random hazy/clear pair per step."""
    rng = np.random.default_rng(seed)
    e_h = encode_image(np.asarray(hazy_set), enc)
    e_c = encode_image(np.asarray(clear_set), enc)
    if prompt is None:
        prompt = init_prompt(enc.dim, seed=seed, encoder_tag=getattr(enc, "tag", "external"))
    vec = Tensor(np.array(prompt.vector, dtype=np.float64), requires_grad=True)
    opt = nn.Adam([vec], lr=lr, betas=(0.9, 0.999))
    history = list(prompt.history)
    loss_value = prompt.final_loss
    for _ in range(steps):
        i, j = rng.integers(len(e_h)), rng.integers(len(e_c))
        cos = cosine_to_prompt(np.stack([e_h[i], e_c[j]]), vec)
        loss = _pair_loss(cos[0], cos[1])
        opt.zero_grad()
        loss.backward()
        opt.step()
        loss_value = float(loss.data)
        history.append(loss_value)
    return PromptState(np.array(vec.data), prompt.encoder_tag, prompt.steps + steps, loss_value, history)


def prompt_pair_loss(hazy_set, clear_set, prompt, enc):
    """Mean pair loss over all hazy x clear combinations (for monitoring)."""
    ch = cosine_to_prompt(encode_image(np.asarray(hazy_set), enc), prompt.vector).data
    cc = cosine_to_prompt(encode_image(np.asarray(clear_set), enc), prompt.vector).data
    diff = ch[:, None] - cc[None, :]
    return float(np.mean(2.0 * np.log1p(np.exp(-diff))))


def prompt_accuracy(hazy_set, clear_set, prompt, enc):
    """Fraction of hazy x clear pairs where the hazy image gets probability > 0.5."""
    ch = cosine_to_prompt(encode_image(np.asarray(hazy_set), enc), prompt.vector).data
    cc = cosine_to_prompt(encode_image(np.asarray(clear_set), enc), prompt.vector).data
    return float(np.mean(ch[:, None] > cc[None, :]))


def prompt_guidance_loss(I_hazy, I_dehazed, prompt, enc, terms="both"):
    """Push dehazed images away from the prompt relative to their hazy inputs.

    Batch mean of the BCE of the pair (hazy: label 1, dehazed: label 0).
    ``terms="both"`` sums the two label terms, ``"dehazed"`` keeps only the
    dehazed one.
    """
    with T.no_grad():
        e_h = enc.embed(I_hazy).data
    e_d = enc.embed(I_dehazed)
    cos_h = cosine_to_prompt(e_h, prompt.vector)
    cos_d = cosine_to_prompt(e_d, prompt.vector)
    loss = prompt_bce_loss(0.0, _two_way(cos_d, cos_h))
    if terms == "both":
        loss = loss + prompt_bce_loss(1.0, _two_way(cos_h, cos_d))
    elif terms != "dehazed":
        raise ContractError(f"terms must be 'both' or 'dehazed', got {terms!r}")
    return T.mean(loss)
