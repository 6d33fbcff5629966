"""Raster input and output through Pillow (PNG, PPM and anything else it reads)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


def read_image(path) -> np.ndarray:
    """``(H, W, 3)`` float64 RGB in [0, 1]; grey images are replicated, alpha dropped."""
    try:
        with Image.open(path) as im:
            im.load()
            rgb = im.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"cannot decode image {path}: {exc}") from None
    return np.asarray(rgb, dtype=np.float64) / 255.0


def write_image(path, img: np.ndarray) -> None:
    """Write an ``(H, W, 3)`` array in [0, 1]; the format follows the suffix."""
    arr = np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(Path(path))
