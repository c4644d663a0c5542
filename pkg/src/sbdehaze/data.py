"""Datasets: 2-D toy distributions, procedural clear scenes, synthetic haze, image files."""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy.ndimage import zoom

from .errors import ConfigError
from .haze import apply_asm

TOY2D = ("two-moons", "ring", "gaussians")
RING_RADIUS = 1.0


def toy2d_dataset(name, n, seed=0):
    """``n`` samples of a named 2-D distribution, shape (n, 2)."""
    if name not in TOY2D:
        raise ConfigError(f"unknown toy distribution {name!r}; choose from {TOY2D}")
    if n < 100:
        raise ConfigError(f"toy datasets need n >= 100, got {n}")
    rng = np.random.default_rng(seed)
    if name == "two-moons":
        upper = rng.random(n) < 0.5
        theta = rng.uniform(0.0, np.pi, n)
        x = np.where(upper, np.cos(theta), 1.0 - np.cos(theta))
        y = np.where(upper, np.sin(theta), 0.5 - np.sin(theta))
        pts = np.stack([x - 0.5, y - 0.25], axis=1)
        return pts + 0.02 * rng.standard_normal((n, 2))
    if name == "ring":
        theta = rng.uniform(0.0, 2.0 * np.pi, n)
        r = RING_RADIUS + 0.05 * rng.standard_normal(n)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    centers = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    return centers[rng.integers(0, 4, n)] + 0.1 * rng.standard_normal((n, 2))


# -- procedural clear scenes -----------------------------------------------------------

def _saturated_colour(rng):
    """Random colour with one channel near zero (dark-channel friendly)."""
    c = rng.uniform(0.25, 1.0, 3)
    c[rng.integers(3)] = rng.uniform(0.0, 0.05)
    return c


def clear_scene(rng, size=32):
    """A (3, size, size) outdoor-like scene: bright sky over coloured objects."""
    img = np.empty((3, size, size))
    yy, xx = np.mgrid[0:size, 0:size] / size
    ground = _saturated_colour(rng)[:, None, None] * (0.6 + 0.4 * yy)[None]
    img[:] = ground
    horizon = int(size * rng.uniform(0.2, 0.4))
    sky_top, sky_bottom = rng.uniform(0.75, 0.95), rng.uniform(0.85, 1.0)
    tint = np.array([rng.uniform(0.85, 0.95), rng.uniform(0.9, 1.0), 1.0])
    ramp = (np.arange(horizon) / horizon)[:, None] * np.ones((1, size))
    img[:, :horizon] = (sky_top + (sky_bottom - sky_top) * ramp)[None] * tint[:, None, None]
    for _ in range(rng.integers(3, 7)):
        colour = _saturated_colour(rng)
        cy = rng.uniform(0.3, 1.0)
        cx = rng.uniform(0.0, 1.0)
        if rng.random() < 0.5:
            h, w = rng.uniform(0.1, 0.35, 2)
            mask = (np.abs(yy - cy) < h / 2) & (np.abs(xx - cx) < w / 2)
        else:
            r = rng.uniform(0.06, 0.2)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r ** 2
        img[:, mask] = colour[:, None]
    stripes = rng.random() < 0.5
    if stripes:
        period = rng.integers(3, 6)
        band = (np.arange(size) // period) % 2 == 0
        region = np.zeros((size, size), bool)
        region[int(size * 0.75):, :] = band[None, :]
        img[:, region] *= 0.4
    img += 0.02 * rng.standard_normal(img.shape)
    return np.clip(img, 0.0, 1.0)


def clear_scenes(n, seed=0, size=32):
    rng = np.random.default_rng(seed)
    return np.stack([clear_scene(rng, size) for _ in range(n)])


def smooth_transmission(rng, size, mean, spread=0.15, coarse=4):
    """Spatially smooth map: bilinear upsampling of coarse noise around ``mean``."""
    low = mean + spread * rng.uniform(-1.0, 1.0, (coarse, coarse))
    t = zoom(low, size / coarse, order=1, mode="nearest", grid_mode=True)
    return np.clip(t - t.mean() + mean, 0.05, 1.0)


@dataclass
class UnpairedDataset:
    """Hazy and clear training pools drawn from disjoint source images."""

    hazy: np.ndarray
    clear: np.ndarray
    hazy_source: np.ndarray
    clear_source: np.ndarray
    test_hazy: np.ndarray = None
    test_clear: np.ndarray = None
    test_source: np.ndarray = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        overlap = set(np.asarray(self.hazy_source).tolist()) & set(np.asarray(self.clear_source).tolist())
        if overlap:
            raise ConfigError(f"hazy and clear pools share sources {sorted(overlap)[:5]}")

    @property
    def has_test_pairs(self):
        return self.test_hazy is not None

    def batches(self, batch, seed=0):
        """Endless stream of (hazy, clear, hazy_ids, clear_ids) unpaired batches."""
        rng = np.random.default_rng(seed)
        while True:
            hi = rng.choice(len(self.hazy), size=batch, replace=len(self.hazy) < batch)
            ci = rng.choice(len(self.clear), size=batch, replace=len(self.clear) < batch)
            yield self.hazy[hi], self.clear[ci], self.hazy_source[hi], self.clear_source[ci]


def synth_haze_dataset(clear_images, A_range=(0.75, 1.0), t_range=(0.35, 0.7), seed=0,
                       test_fraction=0.25):
    """Split ``clear_images`` in two halves and haze one of them.

    The hazed half is further split: a ``test_fraction`` share keeps its
    ground truth as held-out pairs and never enters training.
    """
    for name, (lo, hi) in (("A_range", A_range), ("t_range", t_range)):
        if not (0.0 < lo <= hi <= 1.0):
            raise ConfigError(f"{name} must lie in (0, 1], got {(lo, hi)}")
    clear_images = np.asarray(clear_images, dtype=float)
    n = len(clear_images)
    if n < 4:
        raise ConfigError("need at least 4 clear images")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    haze_ids, clear_ids = np.sort(order[: n // 2]), np.sort(order[n // 2:])
    size = clear_images.shape[-1]
    hazy, lights, means = [], [], []
    for k in haze_ids:
        A = rng.uniform(*A_range)
        t_mean = rng.uniform(*t_range)
        t = smooth_transmission(rng, size, t_mean) if t_range[0] < 1.0 else np.ones((size, size))
        hazy.append(apply_asm(clear_images[k], t, A))
        lights.append(A)
        means.append(t_mean)
    hazy = np.stack(hazy)
    n_test = int(round(len(haze_ids) * test_fraction))
    perm = rng.permutation(len(haze_ids))
    test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    return UnpairedDataset(
        hazy=hazy[train_idx], clear=clear_images[clear_ids],
        hazy_source=haze_ids[train_idx], clear_source=clear_ids,
        test_hazy=hazy[test_idx] if n_test else None,
        test_clear=clear_images[haze_ids[test_idx]] if n_test else None,
        test_source=haze_ids[test_idx] if n_test else None,
        params={"A": np.array(lights), "t_mean": np.array(means), "haze_ids": haze_ids},
    )


# -- image files -------------------------------------------------------------------------

IMAGE_EXTENSIONS = (".png", ".ppm")


def read_image(path):
    """(3, H, W) float image in [0, 1] from a PNG or binary PPM file."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def write_image(path, img):
    arr = np.clip(np.asarray(img).transpose(1, 2, 0), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(path)


def list_images(directory):
    return sorted(f for f in os.listdir(directory) if f.lower().endswith(IMAGE_EXTENSIONS))


def read_dir(directory):
    names = list_images(directory)
    return names, np.stack([read_image(os.path.join(directory, f)) for f in names]) if names else None


def image_grid(images, ncol=8):
    """Tile (N, 3, H, W) images into one (3, rows*H, ncol*W) image."""
    images = np.asarray(images)
    n, c, h, w = images.shape
    nrow = -(-n // ncol)
    grid = np.ones((c, nrow * h, ncol * w))
    for k in range(n):
        r, q = divmod(k, ncol)
        grid[:, r * h:(r + 1) * h, q * w:(q + 1) * w] = images[k]
    return grid
