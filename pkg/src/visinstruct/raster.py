"""Saving latent grids as viewable PNGs plus raw ``.npy`` dumps."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .diffusion import LatentGrid

UPSCALE = 16


def _projection(channels: int) -> np.ndarray:
    # fixed per channel count, so colors are comparable across runs and tasks
    rng = np.random.default_rng([channels, 0xC0108])
    return rng.normal(0.0, 1.0 / np.sqrt(channels), (channels, 3))


def to_rgb(image: LatentGrid, upscale: int = UPSCALE) -> np.ndarray:
    rgb = 0.5 + 0.5 * np.tanh(image.tokens @ _projection(image.channels))
    px = np.round(rgb * 255.0).astype(np.uint8).reshape(image.height, image.width, 3)
    if upscale > 1:
        px = px.repeat(upscale, axis=0).repeat(upscale, axis=1)
    return px


def save_image(image: LatentGrid, stem) -> dict:
    """Write ``<stem>.png`` and ``<stem>.npy``; returns both file names."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    png, npy = stem.with_suffix(".png"), stem.with_suffix(".npy")
    Image.fromarray(to_rgb(image), mode="RGB").save(png, format="PNG")
    np.save(npy, np.ascontiguousarray(image.tokens, dtype="<f8"))
    return {"png": png.name, "npy": npy.name}


def load_image(path, height: int | None = None, width: int | None = None) -> LatentGrid:
    """Load a raw dump; grid shape defaults to square."""
    tokens = np.load(Path(path).with_suffix(".npy"))
    if height is None:
        side = int(round(np.sqrt(tokens.shape[0])))
        height = width = side
    return LatentGrid(tokens, height, width)
