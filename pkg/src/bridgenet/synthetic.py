"""Procedural RGB-D scenes for smoke tests and desk-scale runs.

Depth is a tilted background plane with a few fronto-parallel or slanted
rectangles and discs in front of it. The colour image shares the object
boundaries but adds texture stripes that have no depth counterpart.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from .data import RGBDSample


def make_scene(h, w, rng, n_objects=4):
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    gx, gy = rng.uniform(-0.3, 0.3, size=2)
    depth = 0.6 + gx * (xx - 0.5) + gy * (yy - 0.5)
    base = rng.uniform(0.2, 0.8, size=3)
    rgb = np.broadcast_to(base, (h, w, 3)) * (0.7 + 0.3 * depth[..., None])

    for _ in range(n_objects):
        cy, cx = rng.uniform(0.1, 0.9, size=2) * (h / max(h, w), w / max(h, w))
        ry, rx = rng.uniform(0.05, 0.25, size=2)
        if rng.random() < 0.5:
            inside = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
        level = rng.uniform(0.15, 0.55)
        slope = rng.uniform(-0.2, 0.2)
        depth = np.where(inside, level + slope * (xx - cx), depth)
        colour = rng.uniform(0.0, 1.0, size=3)
        rgb = np.where(inside[..., None], colour * (0.8 + 0.2 * level), rgb)

    # Texture with no depth counterpart.
    freq = rng.uniform(20, 60)
    stripes = 0.08 * np.sin(2 * np.pi * freq * (xx + 0.3 * yy))
    rgb = rgb + stripes[..., None]
    return np.clip(rgb, 0.0, 1.0), np.clip(depth, 0.0, 1.0)


def make_sample(h, w, seed, sample_id=None, bits=8):
    rng = np.random.default_rng(seed)
    rgb, depth = make_scene(h, w, rng)
    maxval = 255.0 if bits == 8 else 65535.0
    # Quantise like a real PNG so in-memory samples match written ones.
    depth = np.round(depth * maxval) / maxval
    rgb = np.round(rgb * 255.0) / 255.0
    return RGBDSample(rgb=rgb, depth_hr=depth, native_scale=maxval,
                      sample_id=sample_id or f"synth{seed:04d}",
                      valid_mask=np.ones((h, w), dtype=bool))


def write_sample(sample, directory, bits=8):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rgb = np.round(sample.rgb * 255.0).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(directory / f"{sample.sample_id}_rgb.png")
    if bits == 8:
        depth = Image.fromarray(np.round(sample.depth_hr * 255.0).astype(np.uint8), mode="L")
    else:
        depth = Image.fromarray(np.round(sample.depth_hr * 65535.0).astype(np.uint16))
    depth.save(directory / f"{sample.sample_id}_depth.png")


def write_dataset(root, n_train, n_test, size=(128, 128), bits=8, seed=0):
    """Write a Middlebury-style ``train/``/``test/`` tree of synthetic scenes."""
    root = Path(root)
    h, w = size
    for part, n, offset in (("train", n_train, 0), ("test", n_test, n_train)):
        for k in range(n):
            s = make_sample(h, w, seed * 10007 + offset + k, sample_id=f"{part}{k:03d}", bits=bits)
            write_sample(s, root / part, bits=bits)
    return root
