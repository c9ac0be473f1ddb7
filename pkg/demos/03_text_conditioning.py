#!/usr/bin/env python3
"""Integrated captions, hash tokenization, and caption dropout."""
import numpy as np

from tryondit.text import (
    EMPTY_CAPTION,
    TextEncoder,
    build_integrated_caption,
    drop_caption,
    parse_integrated_caption,
    tokenize,
)

cap = build_integrated_caption("a striped red top", "standing, front view")
print("integrated caption:")
print(" ", cap.text)
print("parsed back:", parse_integrated_caption(cap))

ids = tokenize(cap, vocab_size=512, max_tokens=32)
print(f"\ntoken ids (hashed words, 0 pads): {ids[:14]} ... {int((ids != 0).sum())} real tokens")

encoder = TextEncoder(vocab_size=512, max_tokens=32, d_text=64, seed=0)
enc = encoder.encode(ids)
print(f"sequence {enc.sequence.shape}, pooled {enc.pooled.shape}, length {enc.length}")
print("padding rows are zero:", bool(not enc.sequence[enc.length:].any()))

null = encoder.encode_caption(EMPTY_CAPTION)
print("empty caption -> zero pooled vector:", bool(not null.pooled.any()))

rng = np.random.default_rng(0)
drops = sum(drop_caption(cap, 0.1, rng) == EMPTY_CAPTION for _ in range(10_000))
print(f"\ncaption dropout at p=0.1 over 10k draws: {drops / 10_000:.4f}")
