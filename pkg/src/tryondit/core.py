"""Pixel- and latent-space data conventions and the exact spatial algebra.

Array conventions used throughout the package:

* image:  float array of shape ``(3, H, W)``, values in ``[-1, 1]``
* mask:   float array of shape ``(1, H, W)``, values exactly 0 or 1,
          where 1 marks the region to be regenerated
* latent: float array of shape ``(c, h, w)`` produced by a codec
* tokens: :class:`PackedTokens` — a ``(n_tokens, token_dim)`` matrix plus
          the latent grid shape needed to invert the packing

Every operation here is a pure function; the block-to-channel ordering of
``space_to_depth`` and ``pack`` is channel-major with row-major traversal
of each block (source channel ``c``, block offset ``(dr, dc)`` maps to
output channel ``c * r**2 + dr * r + dc``), so checkpoints and token
streams are portable across machines.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PackedTokens:
    """2x2-packed latent grid in token form.

    values has shape (token_count, token_dim); grid_shape is the latent
    (height, width) the tokens were packed from, retained for unpacking.
    """

    values: np.ndarray
    grid_shape: tuple[int, int]

    @property
    def token_count(self) -> int:
        return self.values.shape[0]

    @property
    def token_dim(self) -> int:
        return self.values.shape[1]


def check_image(x: np.ndarray, name: str = "image") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValueError(f"{name} must have shape (3, H, W); got {x.shape}")
    return x


def check_mask(m: np.ndarray, name: str = "mask") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 3 or m.shape[0] != 1:
        raise ValueError(f"{name} must have shape (1, H, W); got {m.shape}")
    bad = ~((m == 0) | (m == 1))
    if bad.any():
        raise ValueError(f"{name} must be binary (0/1); found {int(bad.sum())} other values")
    return m


def concat_width(garment: np.ndarray, person: np.ndarray) -> np.ndarray:
    """Place garment and person side by side: (3,H,W)+(3,H,W) -> (3,H,2W)."""
    garment = check_image(garment, "garment")
    person = check_image(person, "person")
    if garment.shape != person.shape:
        raise ValueError(
            f"garment and person dimensions differ: {garment.shape} vs {person.shape}"
        )
    return np.concatenate([garment, person], axis=2)


def build_pair_mask(person_mask: np.ndarray) -> np.ndarray:
    """Prefix the person mask with an all-zero garment-side mask: (1,H,W) -> (1,H,2W)."""
    person_mask = check_mask(person_mask, "person_mask")
    zeros = np.zeros_like(person_mask)
    return np.concatenate([zeros, person_mask], axis=2)


def apply_mask(pair: np.ndarray, pair_mask: np.ndarray) -> np.ndarray:
    """Zero out the masked region: pair * (1 - mask), mask broadcast over channels."""
    pair = check_image(pair, "pair")
    pair_mask = check_mask(pair_mask, "pair_mask")
    if pair.shape[1:] != pair_mask.shape[1:]:
        raise ValueError(
            f"pair spatial dims {pair.shape[1:]} do not match mask {pair_mask.shape[1:]}"
        )
    return pair * (1.0 - pair_mask)


def space_to_depth(x: np.ndarray, r: int) -> np.ndarray:
    """Fold r x r spatial blocks into channels: (c,H,W) -> (c*r^2, H/r, W/r)."""
    x = np.asarray(x)
    c, h, w = x.shape
    if h % r or w % r:
        raise ValueError(f"spatial dims ({h}, {w}) not divisible by r={r}")
    x = x.reshape(c, h // r, r, w // r, r)
    x = x.transpose(0, 2, 4, 1, 3)  # (c, r, r, H/r, W/r)
    return np.ascontiguousarray(x.reshape(c * r * r, h // r, w // r))


def depth_to_space(y: np.ndarray, r: int) -> np.ndarray:
    """Inverse of :func:`space_to_depth`, bit-exact."""
    y = np.asarray(y)
    cr, h, w = y.shape
    if cr % (r * r):
        raise ValueError(f"channel count {cr} not divisible by r^2={r * r}")
    c = cr // (r * r)
    y = y.reshape(c, r, r, h, w)
    y = y.transpose(0, 3, 1, 4, 2)  # (c, h, r, w, r)
    return np.ascontiguousarray(y.reshape(c, h * r, w * r))


def pack(latent: np.ndarray) -> PackedTokens:
    """Stack 2x2 latent blocks along channels and flatten the grid row-major.

    (c, h, w) -> tokens of shape (h/2 * w/2, 4c).
    """
    latent = np.asarray(latent)
    c, h, w = latent.shape
    if h % 2 or w % 2:
        raise ValueError(f"latent dims ({h}, {w}) must be even to pack")
    folded = space_to_depth(latent, 2)  # (4c, h/2, w/2)
    values = folded.reshape(4 * c, (h // 2) * (w // 2)).T
    return PackedTokens(values=np.ascontiguousarray(values), grid_shape=(h, w))


def unpack(tokens: PackedTokens) -> np.ndarray:
    """Inverse of :func:`pack`, bit-exact."""
    h, w = tokens.grid_shape
    n, d = tokens.values.shape
    if n != (h // 2) * (w // 2):
        raise ValueError(f"token count {n} inconsistent with grid {tokens.grid_shape}")
    folded = tokens.values.T.reshape(d, h // 2, w // 2)
    return depth_to_space(folded, 2)


def crop_right_half(pair: np.ndarray) -> np.ndarray:
    """Return the right half (the person side) of a width-concatenated image."""
    pair = check_image(pair, "pair")
    w = pair.shape[2]
    if w % 2:
        raise ValueError(f"width {w} is odd; cannot split a concatenated pair")
    return pair[:, :, w // 2 :]
