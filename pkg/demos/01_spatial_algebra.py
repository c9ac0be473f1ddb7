#!/usr/bin/env python3
"""Walk through the spatial algebra the pipeline is built on.

Shows width concatenation, pair-mask construction, masking, the exact
space-to-depth/pack roundtrips, and the channel bookkeeping that turns a
3-channel pixel pair into transformer tokens.
"""
import numpy as np

from tryondit.core import (
    apply_mask,
    build_pair_mask,
    concat_width,
    crop_right_half,
    depth_to_space,
    pack,
    space_to_depth,
    unpack,
)
from tryondit.dataset import SynthConfig, render_sample

sample = render_sample(SynthConfig(n_samples=1, seed=7), 0)
garment, person, mask = sample.garment_image, sample.person_image, sample.mask
H, W = person.shape[1:]
print(f"person {person.shape}, garment {garment.shape}, mask {mask.shape}")

pair = concat_width(garment, person)
print(f"width-concatenated pair: {pair.shape}  (garment left, person right)")
assert np.array_equal(crop_right_half(pair), person)

pair_mask = build_pair_mask(mask)
print(f"pair mask: {pair_mask.shape}; garment side is never masked:",
      bool((pair_mask[:, :, :W] == 0).all()))

masked = apply_mask(pair, pair_mask)
zeroed = int((masked == 0).sum() - (pair == 0).sum())
print(f"masking zeroed ~{zeroed} values; unmasked values untouched:",
      bool(np.array_equal(masked[:, :, :W], pair[:, :, :W])))

# the mask is "interpolated" to latent resolution by folding 8x8 blocks
# into channels: 1 channel -> 64 channels, lossless and invertible
folded = space_to_depth(pair_mask, 8)
print(f"mask space-to-depth r=8: {pair_mask.shape} -> {folded.shape}")
assert np.array_equal(depth_to_space(folded, 8), pair_mask)

# packing stacks 2x2 latent blocks into token features
latent = np.random.default_rng(0).standard_normal((16, H // 8, 2 * W // 8))
tokens = pack(latent)
print(f"pack: latent {latent.shape} -> {tokens.token_count} tokens of dim {tokens.token_dim}")
assert np.array_equal(unpack(tokens), latent)
print("pack/unpack and space-to-depth roundtrips are bit-exact")

print("channel chain at f=8: 16-ch latent -> 64-dim tokens;"
      " 1-ch mask -> 64 ch -> 256-dim tokens:",
      pack(np.zeros((16, 8, 12))).token_dim,
      pack(space_to_depth(np.zeros((1, 64, 96)), 8)).token_dim)
