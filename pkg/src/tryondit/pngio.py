"""PNG boundaries: 8-bit RGB images and single-channel masks.

Files use [0, 255]; the model uses [-1, 1] for images and {0, 1} for
masks (any stored value >= 128 counts as 1). The uint8 -> float -> uint8
roundtrip is exact.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .core import check_image, check_mask


def load_image(path: str | Path) -> np.ndarray:
    """Read an RGB PNG into a (3, H, W) float32 array in [-1, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return np.ascontiguousarray(arr.transpose(2, 0, 1)) / 255.0 * 2.0 - 1.0


def save_image(path: str | Path, image: np.ndarray) -> None:
    check_image(image)
    pix = np.clip((image + 1.0) / 2.0 * 255.0, 0, 255)
    pix = np.rint(pix).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(pix, mode="RGB").save(path, format="PNG")


def load_mask(path: str | Path) -> np.ndarray:
    """Read a grayscale PNG into a binary (1, H, W) float32 mask."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr >= 128).astype(np.float32)[None]


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    check_mask(mask)
    pix = (mask[0] * 255).astype(np.uint8)
    Image.fromarray(pix, mode="L").save(path, format="PNG")
